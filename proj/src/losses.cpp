#include "jeca/losses.hpp"

#include <cmath>
#include <memory>

namespace jeca {

Tensor detection_loss(const Tensor& class_logits, Label target) {
    return cross_entropy_with_logits(class_logits, class_index(target));
}

Tensor mislead_loss(const Tensor& map_pix, const std::vector<double>& decoy_field,
                    const TamperMask& mask, double lambda_s) {
    const int n = mask.numel();
    if (map_pix.numel() != n) throw std::invalid_argument("mislead_loss: map/mask shape mismatch");
    if (decoy_field.size() != static_cast<size_t>(n))
        throw std::invalid_argument("mislead_loss: decoy field shape mismatch");
    int area_t = mask.area();
    int area_bg = n - area_t;
    if (area_t == 0 || area_bg == 0)
        throw DegenerateRegionError("mislead_loss: R_tamper and R_bg must both be nonempty");

    std::vector<double> w(static_cast<size_t>(n));
    const double bg_scale = -1.0 / area_bg;
    const double t_scale = lambda_s / area_t;
    for (int i = 0; i < n; ++i)
        w[static_cast<size_t>(i)] = mask.v[static_cast<size_t>(i)]
                                        ? t_scale
                                        : bg_scale * decoy_field[static_cast<size_t>(i)];
    return sum(mul(reshape(map_pix, n, 1), constant(n, 1, std::move(w))));
}

Tensor hide_loss(const Tensor& adv_flat, int height, int width, const TamperMask& region) {
    if (region.height != height || region.width != width)
        throw std::invalid_argument("hide_loss: mask shape mismatch");
    if (adv_flat.numel() != height * width * ImageTensor::channels)
        throw std::invalid_argument("hide_loss: image shape mismatch");

    auto from = std::make_shared<std::vector<int>>();
    auto to = std::make_shared<std::vector<int>>();
    auto flat = [width](int y, int x, int c) {
        return (y * width + x) * ImageTensor::channels + c;
    };
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            if (!region.at(y, x)) continue;
            if (y + 1 < height)
                for (int c = 0; c < ImageTensor::channels; ++c) {
                    from->push_back(flat(y, x, c));
                    to->push_back(flat(y + 1, x, c));
                }
            if (x + 1 < width)
                for (int c = 0; c < ImageTensor::channels; ++c) {
                    from->push_back(flat(y, x, c));
                    to->push_back(flat(y, x + 1, c));
                }
        }
    }
    if (from->empty()) return constant_scalar(0.0);
    Tensor a = gather(adv_flat, std::shared_ptr<const std::vector<int>>(to));
    Tensor b = gather(adv_flat, std::shared_ptr<const std::vector<int>>(from));
    return sum(abs_t(sub(a, b)));
}

Tensor attention_interference_loss(const Tensor& l_mislead, const Tensor& l_hide, double alpha) {
    if (alpha < 0.0 || alpha > 1.0) throw std::invalid_argument("attention loss: alpha must be in [0,1]");
    return add(scale(l_mislead, alpha), scale(l_hide, 1.0 - alpha));
}

Tensor visual_total_loss(const Tensor& l_det, const Tensor& l_att, const Tensor& delta_flat,
                         double lambda1, double lambda2) {
    return add(add(l_det, scale(l_att, lambda1)), scale(sum_squares(delta_flat), lambda2));
}

Tensor coherence_loss(const Tensor& embedding, const Vocabulary& vocab, int k) {
    if (vocab.size == 0) throw std::invalid_argument("coherence_loss: empty vocabulary");
    if (k > vocab.size) throw std::invalid_argument("coherence_loss: k exceeds vocabulary size");
    if (embedding.cols() != vocab.dim)
        throw std::invalid_argument("coherence_loss: embedding dim mismatch");

    Tensor total = constant_scalar(0.0);
    for (int t = 0; t < embedding.rows(); ++t) {
        const double* e = embedding.data().data() + static_cast<size_t>(t) * embedding.cols();
        int j = nearest_token(vocab, e);
        std::vector<double> row(vocab.row(j), vocab.row(j) + vocab.dim);
        Tensor diff = sub(slice_rows(embedding, t, t + 1), constant(1, vocab.dim, std::move(row)));
        total = add(total, sum_squares(diff));
    }
    return total;
}

Tensor semantic_loss(const Tensor& class_logits, Label target, const Tensor& l_coherence,
                     double beta) {
    return add(cross_entropy_with_logits(class_logits, class_index(target)), scale(l_coherence, beta));
}

}  // namespace jeca
