#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace jeca {

// Reverse-mode autodiff over dense double matrices (row-major).
//
// Nodes are evaluated eagerly; every backward rule is itself expressed in
// terms of graph ops, so gradients are ordinary nodes and can be
// differentiated again. The attack objective needs this: the attention
// proxy is built from gradients of the detection loss, and the outer
// optimization differentiates through that construction.
//
// Reductions accumulate strictly in row-major index order; tests rely on
// bit-exact agreement with straightforward loop implementations.

class Tensor;

struct TensorNode {
    int rows = 0;
    int cols = 0;
    std::vector<double> v;
    bool needs_grad = false;
    std::vector<Tensor>* inputs = nullptr;  // owned, null for leaves/constants
    // Appends adjoints for inputs that need them; entries for frozen inputs
    // are left empty. `self` is a handle to this node, passed in by the
    // backward pass so rules like exp/softmax can reuse their output without
    // the closure owning its own node (which would leak the graph).
    std::function<void(const Tensor& self, const Tensor& g, std::vector<Tensor>& out)> vjp;
    TensorNode();
    ~TensorNode();

    int numel() const { return rows * cols; }

    // Live-node count; lets tests assert that dropped graphs actually free.
    static long live_count();
};

class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::shared_ptr<TensorNode> n) : node_(std::move(n)) {}

    bool defined() const { return node_ != nullptr; }
    TensorNode* get() const { return node_.get(); }
    int rows() const { return node_->rows; }
    int cols() const { return node_->cols; }
    int numel() const { return node_->numel(); }
    bool needs_grad() const { return node_->needs_grad; }
    const std::vector<double>& data() const { return node_->v; }
    double at(int i) const { return node_->v[static_cast<size_t>(i)]; }
    double at(int r, int c) const { return node_->v[static_cast<size_t>(r) * node_->cols + c]; }
    double item() const {
        if (node_->numel() != 1) throw std::logic_error("item() on non-scalar tensor");
        return node_->v[0];
    }

private:
    std::shared_ptr<TensorNode> node_;
};

// ---- construction ----------------------------------------------------------
Tensor constant(int rows, int cols, std::vector<double> v);
Tensor constant_scalar(double x);
Tensor zeros(int rows, int cols);
Tensor leaf(int rows, int cols, std::vector<double> v);  // differentiable input

// ---- elementwise and scalar ------------------------------------------------
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);
Tensor add_scalar(const Tensor& a, double c);
Tensor neg(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor abs_t(const Tensor& a);
Tensor exp_t(const Tensor& a);
Tensor log_t(const Tensor& a);
Tensor sqrt_t(const Tensor& a);
Tensor recip(const Tensor& a);
Tensor erf_t(const Tensor& a);
Tensor sigmoid_t(const Tensor& a);
Tensor clamp01(const Tensor& a);

// ---- structure -------------------------------------------------------------
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor reshape(const Tensor& a, int rows, int cols);
Tensor slice_rows(const Tensor& a, int r0, int r1);
Tensor pad_rows(const Tensor& a, int r0, int total_rows);
Tensor slice_cols(const Tensor& a, int c0, int c1);
Tensor pad_cols(const Tensor& a, int c0, int total_cols);
Tensor concat_rows(const std::vector<Tensor>& parts);
// Flat row-major gather/scatter; idx shared so adjoint ops reuse it.
Tensor gather(const Tensor& a, std::shared_ptr<const std::vector<int>> idx);
Tensor scatter(const Tensor& a, std::shared_ptr<const std::vector<int>> idx, int rows, int cols);

// ---- reductions / broadcasts -----------------------------------------------
Tensor sum(const Tensor& a);       // 1x1
Tensor row_sum(const Tensor& a);   // m x 1
Tensor col_sum(const Tensor& a);   // 1 x n
Tensor spread(const Tensor& scalar, int rows, int cols);
Tensor broadcast_col(const Tensor& v, int cols);  // m x 1 -> m x n
Tensor broadcast_row(const Tensor& v, int rows);  // 1 x n -> m x n

// ---- composites -------------------------------------------------------------
Tensor mean(const Tensor& a);
Tensor row_mean(const Tensor& a);
Tensor softmax_rows(const Tensor& a);
Tensor layer_norm_rows(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                       double eps = 1e-5);
Tensor gelu(const Tensor& x);
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);  // x*w + b(1xn)
Tensor scale_by(const Tensor& x, const Tensor& s);                 // s is 1x1
Tensor sum_squares(const Tensor& x);
Tensor cross_entropy_with_logits(const Tensor& logits_row, int target);

// Adjoints of `out` (a scalar) with respect to each tensor in `wrt`.
// Returned tensors are graph nodes and can be differentiated again.
// Tensors unreachable from `out` yield zeros of matching shape.
std::vector<Tensor> grad(const Tensor& out, const std::vector<Tensor>& wrt);

// y += op(a) helpers used by kernels and tests.
void matmul_raw(const double* a, const double* b, double* c, int m, int k, int n);

}  // namespace jeca
