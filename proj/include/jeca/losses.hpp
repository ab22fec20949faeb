#pragma once

#include <vector>

#include "jeca/core.hpp"
#include "jeca/tensor.hpp"
#include "jeca/vocab.hpp"

namespace jeca {

// Per-iteration loss components. The aggregate fields satisfy, exactly:
//   l_att  = alpha * l_mislead + (1 - alpha) * l_hide
//   l_vis  = l_det + lambda1 * l_att + lambda2 * l_l2
//   l_text = l_semantic_ce + beta * l_coherence
struct LossBreakdown {
    double l_det = 0.0;
    double l_mislead = 0.0;
    double l_hide = 0.0;
    double l_att = 0.0;
    double l_l2 = 0.0;
    double l_vis = 0.0;
    double l_semantic_ce = 0.0;
    double l_coherence = 0.0;
    double l_text = 0.0;
};

struct DegenerateRegionError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Class logit layout used across the project.
constexpr int kRealIndex = 0;
constexpr int kFakeIndex = 1;
inline int class_index(Label l) { return l == Label::Real ? kRealIndex : kFakeIndex; }

// Cross-entropy of softmax(class logits) against the target label.
Tensor detection_loss(const Tensor& class_logits, Label target = Label::Real);

// -(1/|R_bg|) sum_bg M.G  +  lambda_s (1/|R_tamper|) sum_tamper M
// `map_pix` is the flattened H*W attribution map; `decoy_field` the Gaussian
// hotspot evaluated per pixel. Throws DegenerateRegionError when either
// region is empty.
Tensor mislead_loss(const Tensor& map_pix, const std::vector<double>& decoy_field,
                    const TamperMask& mask, double lambda_s);

// Total variation over the masked region of a flattened H*W*3 image:
// per masked pixel, |I(i+1,j)-I(i,j)| + |I(i,j+1)-I(i,j)| summed over
// channels. Terms accumulate in row-major pixel order, vertical before
// horizontal, channels innermost; out-of-bounds neighbors are omitted.
Tensor hide_loss(const Tensor& adv_flat, int height, int width, const TamperMask& region);

// alpha * l_mislead + (1 - alpha) * l_hide
Tensor attention_interference_loss(const Tensor& l_mislead, const Tensor& l_hide, double alpha);

// l_det + lambda1 * l_att + lambda2 * ||delta||_2^2
Tensor visual_total_loss(const Tensor& l_det, const Tensor& l_att, const Tensor& delta_flat,
                         double lambda1, double lambda2);

// Sum over tokens of the squared distance to the nearest vocabulary
// embedding. The minimum over the k-nearest set equals the global
// nearest-neighbor distance, so k acts purely as a search bound; it is
// validated against the vocabulary size.
Tensor coherence_loss(const Tensor& embedding, const Vocabulary& vocab, int k);

// CE(F(I + delta_fixed, E), y_real) + beta * coherence
Tensor semantic_loss(const Tensor& class_logits, Label target, const Tensor& l_coherence,
                     double beta);

}  // namespace jeca
