#pragma once

#include <vector>

#include "jeca/core.hpp"
#include "jeca/detector.hpp"
#include "jeca/tensor.hpp"

namespace jeca {

// Mutable per-attack aggregation state (EMA target smoothing).
struct AggregationState {
    std::vector<double> ema;  // H*W; empty until the first update
    double gamma = 0.9;
};

// Classic Grad-CAM over the final-layer patch feature channels:
//   alpha_k = mean_ij ReLU(d logit_target / d A^k),  M = ReLU(sum_k alpha_k A^k),
// bilinearly upsampled to pixels. Returned tensor stays differentiable with
// respect to the forward pass inputs, including through alpha_k.
Tensor grad_cam(const DetectorForward& fwd, int target_class, const Tensor& upsample);

// Generic form used by the oracle tests: one map stack plus matching gradients.
Tensor grad_cam_from_maps(const std::vector<Tensor>& feature_maps, const std::vector<Tensor>& gradients);

// Head/layer aggregation: within each layer M_l = sum_h w_{l,h} A_{l,h} with
// w_{l,h} = ReLU(spatial mean of the gradient); uniform mean over the selected
// layers. Shapes: maps[l][h] and grads[l][h] agree; layers indexed [lo, hi).
Tensor aggregate_attention(const std::vector<std::vector<Tensor>>& maps,
                           const std::vector<std::vector<Tensor>>& grads, int layer_lo, int layer_hi);

// The attack's attribution proxy M(I; delta): per-layer Grad-CAM over the
// patch-feature channels of the later layers (target: the fake-class logit),
// gradient-weighted within each layer and uniformly averaged across layers,
// then upsampled to pixel resolution. Differentiable end to end — the channel
// weights carry a second-order path.
Tensor attention_proxy(const DetectorForward& fwd, const Tensor& upsample, int layer_lo,
                       int layer_hi);

// EMA smoothing of the optimization target: returns
// (1-gamma) * fresh + gamma * previous as a graph tensor (gradients flow only
// through the fresh term) and advances the stored state. First call passes
// the fresh map through unchanged.
Tensor ema_smooth(AggregationState& state, const Tensor& fresh_pix);

// Numeric EMA update: M_t = gamma * M_{t-1} + (1-gamma) * fresh.
AttentionMap ema_update(AggregationState& state, const AttentionMap& fresh);

// Attention Diversion Score: background attribution mass over total mass.
// Zero total mass is defined as the neutral 0.5.
double ads(const AttentionMap& map, const TamperMask& mask);
double ads(const std::vector<double>& map_pix, const TamperMask& mask);

AttentionMap to_attention_map(const Tensor& map_pix, int height, int width);

}  // namespace jeca
