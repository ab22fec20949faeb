#include "jeca/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <unordered_map>
#include <unordered_set>

#ifdef __GLIBC__
#include <malloc.h>
#endif

namespace jeca {

namespace {

// Graph construction churns through short-lived multi-KB buffers; without
// raised thresholds glibc serves them via mmap/munmap and the syscall cost
// dominates the math.
struct MallocTuning {
    MallocTuning() {
#ifdef __GLIBC__
        mallopt(M_MMAP_THRESHOLD, 64 * 1024 * 1024);
        mallopt(M_TRIM_THRESHOLD, 64 * 1024 * 1024);
#endif
    }
};
const MallocTuning malloc_tuning;

}  // namespace

namespace {
std::atomic<long> g_live_nodes{0};
}

TensorNode::TensorNode() { g_live_nodes.fetch_add(1, std::memory_order_relaxed); }

TensorNode::~TensorNode() {
    delete inputs;
    g_live_nodes.fetch_sub(1, std::memory_order_relaxed);
}

long TensorNode::live_count() { return g_live_nodes.load(std::memory_order_relaxed); }

namespace {

using Vjp = std::function<void(const Tensor&, const Tensor&, std::vector<Tensor>&)>;

std::shared_ptr<TensorNode> make_node(int rows, int cols) {
    auto n = std::make_shared<TensorNode>();
    n->rows = rows;
    n->cols = cols;
    n->v.assign(static_cast<size_t>(rows) * cols, 0.0);
    return n;
}

bool any_needs_grad(const std::vector<Tensor>& ins) {
    for (const auto& t : ins)
        if (t.needs_grad()) return true;
    return false;
}

// Wires inputs + vjp only when some input is differentiable; constant
// subgraphs stay closure-free.
Tensor finish(std::shared_ptr<TensorNode> n, std::vector<Tensor> ins, Vjp vjp) {
    if (any_needs_grad(ins)) {
        n->needs_grad = true;
        n->inputs = new std::vector<Tensor>(std::move(ins));
        n->vjp = std::move(vjp);
    }
    return Tensor(std::move(n));
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw std::invalid_argument(std::string(op) + ": shape mismatch");
}

}  // namespace

// ---- construction ----------------------------------------------------------

Tensor constant(int rows, int cols, std::vector<double> v) {
    if (static_cast<size_t>(rows) * cols != v.size())
        throw std::invalid_argument("constant: size mismatch");
    auto n = std::make_shared<TensorNode>();
    n->rows = rows;
    n->cols = cols;
    n->v = std::move(v);
    return Tensor(std::move(n));
}

Tensor constant_scalar(double x) { return constant(1, 1, {x}); }

Tensor zeros(int rows, int cols) { return Tensor(make_node(rows, cols)); }

Tensor leaf(int rows, int cols, std::vector<double> v) {
    Tensor t = constant(rows, cols, std::move(v));
    t.get()->needs_grad = true;
    return t;
}

// ---- elementwise -----------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "add");
    auto n = make_node(a.rows(), a.cols());
    const auto& av = a.data();
    const auto& bv = b.data();
    for (size_t i = 0; i < n->v.size(); ++i) n->v[i] = av[i] + bv[i];
    return finish(std::move(n), {a, b}, [a, b](const Tensor&, const Tensor& g, std::vector<Tensor>& out) {
        out.push_back(a.needs_grad() ? g : Tensor());
        out.push_back(b.needs_grad() ? g : Tensor());
    });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "sub");
    auto n = make_node(a.rows(), a.cols());
    const auto& av = a.data();
    const auto& bv = b.data();
    for (size_t i = 0; i < n->v.size(); ++i) n->v[i] = av[i] - bv[i];
    return finish(std::move(n), {a, b}, [a, b](const Tensor&, const Tensor& g, std::vector<Tensor>& out) {
        out.push_back(a.needs_grad() ? g : Tensor());
        out.push_back(b.needs_grad() ? neg(g) : Tensor());
    });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "mul");
    auto n = make_node(a.rows(), a.cols());
    const auto& av = a.data();
    const auto& bv = b.data();
    for (size_t i = 0; i < n->v.size(); ++i) n->v[i] = av[i] * bv[i];
    return finish(std::move(n), {a, b}, [a, b](const Tensor&, const Tensor& g, std::vector<Tensor>& out) {
        out.push_back(a.needs_grad() ? mul(g, b) : Tensor());
        out.push_back(b.needs_grad() ? mul(g, a) : Tensor());
    });
}

Tensor scale(const Tensor& a, double c) {
    auto n = make_node(a.rows(), a.cols());
    const auto& av = a.data();
    for (size_t i = 0; i < n->v.size(); ++i) n->v[i] = av[i] * c;
    return finish(std::move(n), {a}, [c](const Tensor&, const Tensor& g, std::vector<Tensor>& out) {
        out.push_back(scale(g, c));
    });
}

Tensor add_scalar(const Tensor& a, double c) {
    auto n = make_node(a.rows(), a.cols());
    const auto& av = a.data();
    for (size_t i = 0; i < n->v.size(); ++i) n->v[i] = av[i] + c;
    return finish(std::move(n), {a}, [](const Tensor&, const Tensor& g, std::vector<Tensor>& out) {
        out.push_back(g);
    });
}

Tensor neg(const Tensor& a) { return scale(a, -1.0); }

namespace {

// Unary op whose derivative is a constant elementwise mask of the input
// (relu / abs / clamp gates). The mask has zero second derivative, which is
// the correct a.e. behaviour for these kinks.
Tensor masked_unary(const Tensor& a, double (*f)(double), double (*df)(double)) {
    auto n = make_node(a.rows(), a.cols());
    const auto& av = a.data();
    std::vector<double> mask(n->v.size());
    for (size_t i = 0; i < n->v.size(); ++i) {
        n->v[i] = f(av[i]);
        mask[i] = df(av[i]);
    }
    Tensor mask_t = constant(a.rows(), a.cols(), std::move(mask));
    return finish(std::move(n), {a}, [mask_t](const Tensor&, const Tensor& g, std::vector<Tensor>& out) {
        out.push_back(mul(g, mask_t));
    });
}

}  // namespace

Tensor relu(const Tensor& a) {
    return masked_unary(
        a, [](double x) { return x > 0.0 ? x : 0.0; },
        [](double x) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor abs_t(const Tensor& a) {
    return masked_unary(
        a, [](double x) { return std::fabs(x); },
        [](double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}

Tensor clamp01(const Tensor& a) {
    return masked_unary(
        a, [](double x) { return x < 0.0 ? 0.0 : (x > 1.0 ? 1.0 : x); },
        [](double x) { return (x > 0.0 && x < 1.0) ? 1.0 : 0.0; });
}

Tensor exp_t(const Tensor& a) {
    auto n = make_node(a.rows(), a.cols());
    const auto& av = a.data();
    for (size_t i = 0; i < n->v.size(); ++i) n->v[i] = std::exp(av[i]);
    return finish(std::move(n), {a}, [](const Tensor& self, const Tensor& g, std::vector<Tensor>& out) {
        out.push_back(mul(g, self));
    });
}

Tensor log_t(const Tensor& a) {
    auto n = make_node(a.rows(), a.cols());
    const auto& av = a.data();
    for (size_t i = 0; i < n->v.size(); ++i) n->v[i] = std::log(av[i]);
    return finish(std::move(n), {a}, [a](const Tensor&, const Tensor& g, std::vector<Tensor>& out) {
        out.push_back(mul(g, recip(a)));
    });
}

Tensor sqrt_t(const Tensor& a) {
    auto n = make_node(a.rows(), a.cols());
    const auto& av = a.data();
    for (size_t i = 0; i < n->v.size(); ++i) n->v[i] = std::sqrt(av[i]);
    return finish(std::move(n), {a}, [](const Tensor& self, const Tensor& g, std::vector<Tensor>& out) {
        out.push_back(scale(mul(g, recip(self)), 0.5));
    });
}

Tensor recip(const Tensor& a) {
    auto n = make_node(a.rows(), a.cols());
    const auto& av = a.data();
    for (size_t i = 0; i < n->v.size(); ++i) n->v[i] = 1.0 / av[i];
    return finish(std::move(n), {a}, [](const Tensor& self, const Tensor& g, std::vector<Tensor>& out) {
        out.push_back(neg(mul(g, mul(self, self))));
    });
}

Tensor erf_t(const Tensor& a) {
    auto n = make_node(a.rows(), a.cols());
    const auto& av = a.data();
    for (size_t i = 0; i < n->v.size(); ++i) n->v[i] = std::erf(av[i]);
    return finish(std::move(n), {a}, [a](const Tensor&, const Tensor& g, std::vector<Tensor>& out) {
        // d/dx erf(x) = 2/sqrt(pi) * exp(-x^2)
        Tensor d = scale(exp_t(neg(mul(a, a))), 2.0 / std::sqrt(M_PI));
        out.push_back(mul(g, d));
    });
}

Tensor sigmoid_t(const Tensor& a) {
    auto n = make_node(a.rows(), a.cols());
    const auto& av = a.data();
    for (size_t i = 0; i < n->v.size(); ++i) {
        double x = av[i];
        n->v[i] = x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
    }
    return finish(std::move(n), {a}, [](const Tensor& self, const Tensor& g, std::vector<Tensor>& out) {
        Tensor one_minus = add_scalar(neg(self), 1.0);
        out.push_back(mul(g, mul(self, one_minus)));
    });
}

// ---- structure -------------------------------------------------------------

void matmul_raw(const double* a, const double* b, double* c, int m, int k, int n) {
    for (int i = 0; i < m; ++i) {
        const double* __restrict ai = a + static_cast<size_t>(i) * k;
        double* __restrict ci = c + static_cast<size_t>(i) * n;
        for (int kk = 0; kk < k; ++kk) {
            const double aik = ai[kk];
            if (aik == 0.0) continue;
            const double* __restrict bk = b + static_cast<size_t>(kk) * n;
            for (int j = 0; j < n; ++j) ci[j] += aik * bk[j];
        }
    }
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.cols() != b.rows()) throw std::invalid_argument("matmul: inner dim mismatch");
    auto n = make_node(a.rows(), b.cols());
    matmul_raw(a.data().data(), b.data().data(), n->v.data(), a.rows(), a.cols(), b.cols());
    return finish(std::move(n), {a, b}, [a, b](const Tensor&, const Tensor& g, std::vector<Tensor>& out) {
        out.push_back(a.needs_grad() ? matmul(g, transpose(b)) : Tensor());
        out.push_back(b.needs_grad() ? matmul(transpose(a), g) : Tensor());
    });
}

Tensor transpose(const Tensor& a) {
    auto n = make_node(a.cols(), a.rows());
    const auto& av = a.data();
    for (int i = 0; i < a.rows(); ++i)
        for (int j = 0; j < a.cols(); ++j)
            n->v[static_cast<size_t>(j) * a.rows() + i] = av[static_cast<size_t>(i) * a.cols() + j];
    return finish(std::move(n), {a}, [](const Tensor&, const Tensor& g, std::vector<Tensor>& out) {
        out.push_back(transpose(g));
    });
}

Tensor reshape(const Tensor& a, int rows, int cols) {
    if (rows * cols != a.numel()) throw std::invalid_argument("reshape: numel mismatch");
    auto n = make_node(rows, cols);
    n->v = a.data();
    int ar = a.rows(), ac = a.cols();
    return finish(std::move(n), {a}, [ar, ac](const Tensor&, const Tensor& g, std::vector<Tensor>& out) {
        out.push_back(reshape(g, ar, ac));
    });
}

Tensor slice_rows(const Tensor& a, int r0, int r1) {
    if (r0 < 0 || r1 > a.rows() || r0 >= r1) throw std::invalid_argument("slice_rows: bad range");
    auto n = make_node(r1 - r0, a.cols());
    const auto& av = a.data();
    std::copy(av.begin() + static_cast<size_t>(r0) * a.cols(),
              av.begin() + static_cast<size_t>(r1) * a.cols(), n->v.begin());
    int total = a.rows();
    return finish(std::move(n), {a}, [r0, total](const Tensor&, const Tensor& g, std::vector<Tensor>& out) {
        out.push_back(pad_rows(g, r0, total));
    });
}

Tensor pad_rows(const Tensor& a, int r0, int total_rows) {
    auto n = make_node(total_rows, a.cols());
    const auto& av = a.data();
    std::copy(av.begin(), av.end(), n->v.begin() + static_cast<size_t>(r0) * a.cols());
    int r1 = r0 + a.rows();
    return finish(std::move(n), {a}, [r0, r1](const Tensor&, const Tensor& g, std::vector<Tensor>& out) {
        out.push_back(slice_rows(g, r0, r1));
    });
}

Tensor slice_cols(const Tensor& a, int c0, int c1) {
    if (c0 < 0 || c1 > a.cols() || c0 >= c1) throw std::invalid_argument("slice_cols: bad range");
    auto n = make_node(a.rows(), c1 - c0);
    const auto& av = a.data();
    for (int i = 0; i < a.rows(); ++i)
        std::copy(av.begin() + static_cast<size_t>(i) * a.cols() + c0,
                  av.begin() + static_cast<size_t>(i) * a.cols() + c1,
                  n->v.begin() + static_cast<size_t>(i) * (c1 - c0));
    int total = a.cols();
    return finish(std::move(n), {a}, [c0, total](const Tensor&, const Tensor& g, std::vector<Tensor>& out) {
        out.push_back(pad_cols(g, c0, total));
    });
}

Tensor pad_cols(const Tensor& a, int c0, int total_cols) {
    auto n = make_node(a.rows(), total_cols);
    const auto& av = a.data();
    for (int i = 0; i < a.rows(); ++i)
        std::copy(av.begin() + static_cast<size_t>(i) * a.cols(),
                  av.begin() + static_cast<size_t>(i + 1) * a.cols(),
                  n->v.begin() + static_cast<size_t>(i) * total_cols + c0);
    int c1 = c0 + a.cols();
    return finish(std::move(n), {a}, [c0, c1](const Tensor&, const Tensor& g, std::vector<Tensor>& out) {
        out.push_back(slice_cols(g, c0, c1));
    });
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_rows: empty");
    int cols = parts[0].cols();
    int rows = 0;
    for (const auto& p : parts) {
        if (p.cols() != cols) throw std::invalid_argument("concat_rows: col mismatch");
        rows += p.rows();
    }
    auto n = make_node(rows, cols);
    size_t off = 0;
    for (const auto& p : parts) {
        std::copy(p.data().begin(), p.data().end(), n->v.begin() + off);
        off += p.data().size();
    }
    std::vector<int> row_starts;
    std::vector<int> row_counts;
    std::vector<char> needs;
    int r = 0;
    for (const auto& p : parts) {
        row_starts.push_back(r);
        row_counts.push_back(p.rows());
        needs.push_back(p.needs_grad() ? 1 : 0);
        r += p.rows();
    }
    std::vector<Tensor> ins = parts;
    return finish(std::move(n), std::move(ins),
                  [row_starts, row_counts, needs](const Tensor&, const Tensor& g, std::vector<Tensor>& out) {
                      for (size_t i = 0; i < row_starts.size(); ++i)
                          out.push_back(needs[i] ? slice_rows(g, row_starts[i], row_starts[i] + row_counts[i])
                                                 : Tensor());
                  });
}

Tensor gather(const Tensor& a, std::shared_ptr<const std::vector<int>> idx) {
    auto n = make_node(static_cast<int>(idx->size()), 1);
    const auto& av = a.data();
    for (size_t i = 0; i < idx->size(); ++i) n->v[i] = av[static_cast<size_t>((*idx)[i])];
    int ar = a.rows(), ac = a.cols();
    return finish(std::move(n), {a}, [idx, ar, ac](const Tensor&, const Tensor& g, std::vector<Tensor>& out) {
        out.push_back(scatter(g, idx, ar, ac));
    });
}

Tensor scatter(const Tensor& a, std::shared_ptr<const std::vector<int>> idx, int rows, int cols) {
    if (a.numel() != static_cast<int>(idx->size()))
        throw std::invalid_argument("scatter: index count mismatch");
    auto n = make_node(rows, cols);
    const auto& av = a.data();
    for (size_t i = 0; i < idx->size(); ++i) n->v[static_cast<size_t>((*idx)[i])] += av[i];
    return finish(std::move(n), {a}, [idx](const Tensor&, const Tensor& g, std::vector<Tensor>& out) {
        out.push_back(gather(g, idx));
    });
}

// ---- reductions / broadcasts -----------------------------------------------

Tensor sum(const Tensor& a) {
    auto n = make_node(1, 1);
    double acc = 0.0;
    for (double x : a.data()) acc += x;  // strict index order
    n->v[0] = acc;
    int r = a.rows(), c = a.cols();
    return finish(std::move(n), {a}, [r, c](const Tensor&, const Tensor& g, std::vector<Tensor>& out) {
        out.push_back(spread(g, r, c));
    });
}

Tensor row_sum(const Tensor& a) {
    auto n = make_node(a.rows(), 1);
    const auto& av = a.data();
    for (int i = 0; i < a.rows(); ++i) {
        double acc = 0.0;
        for (int j = 0; j < a.cols(); ++j) acc += av[static_cast<size_t>(i) * a.cols() + j];
        n->v[static_cast<size_t>(i)] = acc;
    }
    int c = a.cols();
    return finish(std::move(n), {a}, [c](const Tensor&, const Tensor& g, std::vector<Tensor>& out) {
        out.push_back(broadcast_col(g, c));
    });
}

Tensor col_sum(const Tensor& a) {
    auto n = make_node(1, a.cols());
    const auto& av = a.data();
    for (int i = 0; i < a.rows(); ++i)
        for (int j = 0; j < a.cols(); ++j)
            n->v[static_cast<size_t>(j)] += av[static_cast<size_t>(i) * a.cols() + j];
    int r = a.rows();
    return finish(std::move(n), {a}, [r](const Tensor&, const Tensor& g, std::vector<Tensor>& out) {
        out.push_back(broadcast_row(g, r));
    });
}

Tensor spread(const Tensor& scalar, int rows, int cols) {
    if (scalar.numel() != 1) throw std::invalid_argument("spread: expects scalar");
    auto n = make_node(rows, cols);
    std::fill(n->v.begin(), n->v.end(), scalar.item());
    return finish(std::move(n), {scalar}, [](const Tensor&, const Tensor& g, std::vector<Tensor>& out) {
        out.push_back(sum(g));
    });
}

Tensor broadcast_col(const Tensor& v, int cols) {
    if (v.cols() != 1) throw std::invalid_argument("broadcast_col: expects m x 1");
    auto n = make_node(v.rows(), cols);
    for (int i = 0; i < v.rows(); ++i)
        std::fill(n->v.begin() + static_cast<size_t>(i) * cols,
                  n->v.begin() + static_cast<size_t>(i + 1) * cols, v.at(i));
    return finish(std::move(n), {v}, [](const Tensor&, const Tensor& g, std::vector<Tensor>& out) {
        out.push_back(row_sum(g));
    });
}

Tensor broadcast_row(const Tensor& v, int rows) {
    if (v.rows() != 1) throw std::invalid_argument("broadcast_row: expects 1 x n");
    auto n = make_node(rows, v.cols());
    for (int i = 0; i < rows; ++i)
        std::copy(v.data().begin(), v.data().end(), n->v.begin() + static_cast<size_t>(i) * v.cols());
    return finish(std::move(n), {v}, [](const Tensor&, const Tensor& g, std::vector<Tensor>& out) {
        out.push_back(col_sum(g));
    });
}

// ---- composites --------------------------------------------------------------

Tensor mean(const Tensor& a) { return scale(sum(a), 1.0 / a.numel()); }

Tensor row_mean(const Tensor& a) { return scale(row_sum(a), 1.0 / a.cols()); }

Tensor softmax_rows(const Tensor& a) {
    auto n = make_node(a.rows(), a.cols());
    const auto& av = a.data();
    for (int i = 0; i < a.rows(); ++i) {
        const double* row = av.data() + static_cast<size_t>(i) * a.cols();
        double m = row[0];
        for (int j = 1; j < a.cols(); ++j) m = std::max(m, row[j]);
        double z = 0.0;
        double* outp = n->v.data() + static_cast<size_t>(i) * a.cols();
        for (int j = 0; j < a.cols(); ++j) {
            outp[j] = std::exp(row[j] - m);
            z += outp[j];
        }
        for (int j = 0; j < a.cols(); ++j) outp[j] /= z;
    }
    return finish(std::move(n), {a}, [](const Tensor& self, const Tensor& g, std::vector<Tensor>& out) {
        Tensor gy = mul(g, self);
        Tensor corr = broadcast_col(row_sum(gy), self.cols());
        out.push_back(mul(self, sub(g, corr)));
    });
}

Tensor layer_norm_rows(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
    Tensor mu = row_mean(x);
    Tensor xc = sub(x, broadcast_col(mu, x.cols()));
    Tensor var = row_mean(mul(xc, xc));
    Tensor inv_sd = recip(sqrt_t(add_scalar(var, eps)));
    Tensor norm = mul(xc, broadcast_col(inv_sd, x.cols()));
    return add(mul(norm, broadcast_row(gamma, x.rows())), broadcast_row(beta, x.rows()));
}

Tensor gelu(const Tensor& x) {
    Tensor phi = scale(add_scalar(erf_t(scale(x, 1.0 / std::sqrt(2.0))), 1.0), 0.5);
    return mul(x, phi);
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
    return add(matmul(x, w), broadcast_row(b, x.rows()));
}

Tensor scale_by(const Tensor& x, const Tensor& s) {
    return mul(x, spread(s, x.rows(), x.cols()));
}

Tensor sum_squares(const Tensor& x) { return sum(mul(x, x)); }

Tensor cross_entropy_with_logits(const Tensor& logits_row, int target) {
    if (logits_row.rows() != 1) throw std::invalid_argument("cross_entropy: expects 1 x C");
    double m = logits_row.at(0);
    for (int j = 1; j < logits_row.cols(); ++j) m = std::max(m, logits_row.at(j));
    // Subtracting the constant max leaves the value and gradient unchanged.
    Tensor shifted = add_scalar(logits_row, -m);
    Tensor lse = add_scalar(log_t(sum(exp_t(shifted))), m);
    auto idx = std::make_shared<const std::vector<int>>(std::vector<int>{target});
    return sub(lse, gather(logits_row, idx));
}

// ---- backward ----------------------------------------------------------------

std::vector<Tensor> grad(const Tensor& out, const std::vector<Tensor>& wrt) {
    if (out.numel() != 1) throw std::invalid_argument("grad: output must be scalar");

    // Deterministic post-order topological sort (iterative DFS), collecting a
    // shared handle per node so vjp rules can reference their own output.
    std::vector<TensorNode*> order;
    std::unordered_map<TensorNode*, Tensor> handle;
    std::unordered_set<TensorNode*> seen;
    if (out.needs_grad()) {
        handle[out.get()] = out;
        std::vector<std::pair<TensorNode*, size_t>> stack;
        stack.emplace_back(out.get(), 0);
        while (!stack.empty()) {
            auto& [node, child] = stack.back();
            if (seen.count(node)) {
                stack.pop_back();
                continue;
            }
            std::vector<Tensor>* ins = node->inputs;
            size_t n_in = ins ? ins->size() : 0;
            if (child < n_in) {
                const Tensor& next_t = (*ins)[child];
                ++child;
                TensorNode* next = next_t.get();
                if (next->needs_grad && !seen.count(next)) {
                    handle.emplace(next, next_t);
                    stack.emplace_back(next, 0);
                }
            } else {
                seen.insert(node);
                order.push_back(node);
                stack.pop_back();
            }
        }
    }

    std::unordered_map<TensorNode*, Tensor> adjoint;
    adjoint[out.get()] = constant(1, 1, {1.0});

    std::vector<Tensor> scratch;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        TensorNode* node = *it;
        auto found = adjoint.find(node);
        if (found == adjoint.end() || !node->vjp) continue;
        scratch.clear();
        node->vjp(handle[node], found->second, scratch);
        std::vector<Tensor>& ins = *node->inputs;
        for (size_t i = 0; i < ins.size() && i < scratch.size(); ++i) {
            if (!scratch[i].defined()) continue;
            TensorNode* in = ins[i].get();
            auto cur = adjoint.find(in);
            if (cur == adjoint.end())
                adjoint.emplace(in, scratch[i]);
            else
                cur->second = add(cur->second, scratch[i]);
        }
    }

    std::vector<Tensor> result;
    result.reserve(wrt.size());
    for (const auto& w : wrt) {
        auto found = adjoint.find(w.get());
        result.push_back(found != adjoint.end() ? found->second : zeros(w.rows(), w.cols()));
    }
    return result;
}

}  // namespace jeca
