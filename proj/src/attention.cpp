#include "jeca/attention.hpp"

#include "jeca/losses.hpp"

#include <cmath>
#include <memory>
#include <stdexcept>

namespace jeca {

Tensor grad_cam_from_maps(const std::vector<Tensor>& feature_maps, const std::vector<Tensor>& gradients) {
    if (feature_maps.empty() || feature_maps.size() != gradients.size())
        throw std::invalid_argument("grad_cam: map/gradient stacks must match and be nonempty");
    Tensor acc;
    for (size_t k = 0; k < feature_maps.size(); ++k) {
        Tensor alpha = mean(relu(gradients[k]));
        Tensor term = scale_by(feature_maps[k], alpha);
        acc = acc.defined() ? add(acc, term) : term;
    }
    return relu(acc);
}

Tensor grad_cam(const DetectorForward& fwd, int target_class, const Tensor& upsample) {
    if (!fwd.patch_features.defined()) throw std::invalid_argument("grad_cam: missing forward context");
    auto idx = std::make_shared<const std::vector<int>>(std::vector<int>{target_class});
    Tensor logit = gather(fwd.class_logits, idx);
    Tensor g = grad(logit, {fwd.patch_features})[0];  // P*P x d, graph-building
    // Column means of the ReLU'd gradient give alpha (1 x d); the weighted sum
    // over channels is a matmul with the feature matrix.
    Tensor alpha = scale(col_sum(relu(g)), 1.0 / fwd.patch_features.rows());
    Tensor m_patch = relu(matmul(fwd.patch_features, transpose(alpha)));
    return matmul(upsample, m_patch);
}

Tensor aggregate_attention(const std::vector<std::vector<Tensor>>& maps,
                           const std::vector<std::vector<Tensor>>& grads, int layer_lo, int layer_hi) {
    if (layer_lo >= layer_hi || layer_hi > static_cast<int>(maps.size()))
        throw std::invalid_argument("aggregate_attention: empty or invalid layer range");
    if (maps.size() != grads.size())
        throw std::invalid_argument("aggregate_attention: map/gradient layer counts differ");
    Tensor total;
    for (int l = layer_lo; l < layer_hi; ++l) {
        const auto& layer_maps = maps[static_cast<size_t>(l)];
        const auto& layer_grads = grads[static_cast<size_t>(l)];
        if (layer_maps.empty() || layer_maps.size() != layer_grads.size())
            throw std::invalid_argument("aggregate_attention: head counts differ");
        Tensor layer_sum;
        for (size_t h = 0; h < layer_maps.size(); ++h) {
            Tensor w = relu(mean(layer_grads[h]));
            Tensor term = scale_by(layer_maps[h], w);
            layer_sum = layer_sum.defined() ? add(layer_sum, term) : term;
        }
        total = total.defined() ? add(total, layer_sum) : layer_sum;
    }
    return scale(total, 1.0 / (layer_hi - layer_lo));
}

Tensor attention_proxy(const DetectorForward& fwd, const Tensor& upsample, int layer_lo,
                       int layer_hi) {
    if (fwd.layer_states.empty())
        throw std::invalid_argument("attention_proxy: forward pass lacks feature internals");
    if (layer_lo >= layer_hi || layer_hi > static_cast<int>(fwd.layer_states.size()))
        throw std::invalid_argument("attention_proxy: invalid layer range");

    auto idx = std::make_shared<const std::vector<int>>(std::vector<int>{kFakeIndex});
    Tensor target = gather(fwd.class_logits, idx);
    std::vector<Tensor> states(fwd.layer_states.begin() + layer_lo,
                               fwd.layer_states.begin() + layer_hi);
    std::vector<Tensor> grads = grad(target, states);

    // Element-wise gradient-times-activation per layer on the patch-token
    // rows, then the uniform layer average. Channel-pooled weights wash out
    // here: the shared feature components dominate every patch and the map
    // goes uniform, so the per-location product variant is used for the
    // optimization proxy (the pooled classic form stays available as
    // grad_cam()).
    const int patches = fwd.patch_grid * fwd.patch_grid;
    Tensor total;
    for (size_t k = 0; k < states.size(); ++k) {
        int seq = states[k].rows();
        Tensor feats = slice_rows(states[k], seq - patches, seq);
        Tensor g = slice_rows(grads[k], seq - patches, seq);
        Tensor m_layer = relu(row_sum(mul(g, feats)));
        total = total.defined() ? add(total, m_layer) : m_layer;
    }
    Tensor m_patch = scale(total, 1.0 / (layer_hi - layer_lo));
    return matmul(upsample, m_patch);
}

Tensor ema_smooth(AggregationState& state, const Tensor& fresh_pix) {
    Tensor result;
    if (state.ema.empty()) {
        result = fresh_pix;
    } else {
        if (static_cast<int>(state.ema.size()) != fresh_pix.numel())
            throw std::invalid_argument("ema_smooth: shape mismatch");
        Tensor prior = constant(fresh_pix.rows(), fresh_pix.cols(), state.ema);
        result = add(scale(fresh_pix, 1.0 - state.gamma), scale(prior, state.gamma));
    }
    state.ema = result.data();
    return result;
}

AttentionMap ema_update(AggregationState& state, const AttentionMap& fresh) {
    AttentionMap out(fresh.height, fresh.width);
    if (state.ema.empty()) {
        out.v = fresh.v;
    } else {
        if (state.ema.size() != fresh.v.size()) throw std::invalid_argument("ema_update: shape mismatch");
        for (size_t i = 0; i < fresh.v.size(); ++i)
            out.v[i] = state.gamma * state.ema[i] + (1.0 - state.gamma) * fresh.v[i];
    }
    state.ema = out.v;
    return out;
}

double ads(const std::vector<double>& map_pix, const TamperMask& mask) {
    if (map_pix.size() != mask.v.size()) throw std::invalid_argument("ads: shape mismatch");
    double bg = 0.0, tamper = 0.0;
    for (size_t i = 0; i < map_pix.size(); ++i) {
        if (mask.v[i])
            tamper += map_pix[i];
        else
            bg += map_pix[i];
    }
    double total = bg + tamper;
    if (total <= 0.0) return 0.5;  // a zero map carries no diversion evidence
    return bg / total;
}

double ads(const AttentionMap& map, const TamperMask& mask) { return ads(map.v, mask); }

AttentionMap to_attention_map(const Tensor& map_pix, int height, int width) {
    if (map_pix.numel() != height * width) throw std::invalid_argument("to_attention_map: shape mismatch");
    AttentionMap m(height, width);
    m.v = map_pix.data();
    for (auto& x : m.v) x = std::max(0.0, x);  // guard tiny negative round-off
    return m;
}

}  // namespace jeca
