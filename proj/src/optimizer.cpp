#include "jeca/optimizer.hpp"

#include <algorithm>
#include <cmath>

#include "jeca/losses.hpp"
#include "jeca/metrics.hpp"
#include "jeca/morphology.hpp"
#include "jeca/rng.hpp"

#include <filesystem>

namespace jeca {

AttackMethod attack_method_from_string(const std::string& s) {
    if (s == "jeca2") return AttackMethod::jeca2;
    if (s == "pgd") return AttackMethod::pgd;
    if (s == "fgsm") return AttackMethod::fgsm;
    if (s == "noise") return AttackMethod::noise;
    throw std::invalid_argument("unknown attack method: " + s);
}

const char* to_string(AttackMethod m) {
    switch (m) {
        case AttackMethod::jeca2: return "jeca2";
        case AttackMethod::pgd: return "pgd";
        case AttackMethod::fgsm: return "fgsm";
        case AttackMethod::noise: return "noise";
    }
    return "?";
}

double warmup_scale(int t, int warmup_iters) {
    if (warmup_iters <= 0 || t >= warmup_iters) return 1.0;
    return static_cast<double>(t) / warmup_iters;
}

double clip_gradient_norm(std::vector<double>& g, double max_norm) {
    double sq = 0.0;
    for (double x : g) sq += x * x;
    double norm = std::sqrt(sq);
    if (max_norm > 0.0 && norm > max_norm) {
        double s = max_norm / norm;
        for (double& x : g) x *= s;
    }
    return norm;
}

void pgd_update(Perturbation& delta, const std::vector<double>& g, double step, double eps) {
    if (g.size() != delta.v.size()) throw std::invalid_argument("pgd_update: gradient shape mismatch");
    for (size_t i = 0; i < delta.v.size(); ++i) {
        double s = g[i] > 0.0 ? 1.0 : (g[i] < 0.0 ? -1.0 : 0.0);
        delta.v[i] = std::clamp(delta.v[i] - step * s, -eps, eps);
    }
}

void gd_update(PromptEmbedding& e, const std::vector<double>& g, double step) {
    if (g.size() != e.v.size()) throw std::invalid_argument("gd_update: gradient shape mismatch");
    for (size_t i = 0; i < e.v.size(); ++i) e.v[i] -= step * g[i];
}

const TamperMask& stabilize_mask(MaskState& state, const std::vector<double>& fresh_prob, int t,
                                 const AttackConfig& cfg) {
    auto binarize = [&](const std::vector<double>& prob) {
        TamperMask m(state.current.height, state.current.width, TamperMask::Source::predicted);
        for (size_t i = 0; i < prob.size(); ++i) m.v[i] = prob[i] >= cfg.mask_threshold ? 1 : 0;
        return m;
    };
    if (!cfg.mask_stabilization) {
        state.current = binarize(fresh_prob);
        return state.current;
    }
    if (t <= cfg.mask_freeze_iters) {
        state.current = state.initial;
        return state.current;
    }
    if ((t - cfg.mask_freeze_iters) % cfg.mask_update_interval == 0) {
        for (size_t i = 0; i < state.soft.size(); ++i)
            state.soft[i] = cfg.mask_ema_gamma * state.soft[i] + (1.0 - cfg.mask_ema_gamma) * fresh_prob[i];
        state.current = morphological_close(binarize(state.soft), 3);
    }
    return state.current;
}

namespace {

bool all_finite(const std::vector<double>& v) {
    for (double x : v)
        if (!std::isfinite(x)) return false;
    return true;
}

std::vector<double> sigmoid_values(const Tensor& logits) {
    std::vector<double> p(static_cast<size_t>(logits.numel()));
    for (int i = 0; i < logits.numel(); ++i) {
        double z = logits.at(i);
        p[static_cast<size_t>(i)] = z >= 0.0 ? 1.0 / (1.0 + std::exp(-z))
                                             : std::exp(z) / (1.0 + std::exp(z));
    }
    return p;
}

bool two_regions(const TamperMask& m) {
    int a = m.area();
    return a > 0 && a < m.numel();
}

struct CommonSetup {
    PromptEmbedding e0;
    TamperMask gt;           // metrics reference; falls back to the attack mask
    bool have_gt = false;
    Label clean_label = Label::Real;
    double iou_clean = 0.0;
    double ads_clean = 0.0;
    std::vector<double> clean_mask_prob;
    AttentionMap clean_map;
};

// Clean-image pass shared by every method: prediction, clean attention proxy,
// clean metrics.
CommonSetup clean_pass(const DetectorInterface& det, const AttackInputs& in, const AttackConfig& cfg) {
    CommonSetup s;
    s.e0 = in.init_embedding ? *in.init_embedding : det.default_prompt();

    DetectorForward fwd = det.forward(det.image_node(*in.image, true), det.embedding_node(s.e0));
    DetectorPrediction pred = det.interpret(fwd);
    s.clean_label = pred.label;
    s.clean_mask_prob = pred.mask_prob;

    Tensor proxy = attention_proxy(fwd, det.upsample_matrix(), det.agg_layer_lo(), det.agg_layer_hi());
    s.clean_map = to_attention_map(proxy, in.image->height, in.image->width);

    if (in.metrics_mask) {
        s.gt = *in.metrics_mask;
        s.have_gt = true;
    } else if (cfg.mask_mode == MaskMode::oracle && in.oracle_mask) {
        s.gt = *in.oracle_mask;
        s.have_gt = true;
    }
    if (s.have_gt) {
        s.iou_clean = iou(pred.mask, s.gt);
        s.ads_clean = ads(s.clean_map, s.gt);
    }
    return s;
}

void finalize_record(const DetectorInterface& det, const AttackInputs& in, const CommonSetup& setup,
                     const ImageTensor& adv, const PromptEmbedding& e_final, AttackRecord& rec) {
    DetectorForward fwd = det.forward(det.image_node(adv, true), det.embedding_node(e_final));
    DetectorPrediction pred = det.interpret(fwd);
    rec.attacked_prediction = pred.label;
    rec.explanation = pred.explanation;

    Tensor proxy = attention_proxy(fwd, det.upsample_matrix(), det.agg_layer_lo(), det.agg_layer_hi());
    AttentionMap adv_map = to_attention_map(proxy, adv.height, adv.width);

    if (setup.have_gt) {
        rec.iou_adv = iou(pred.mask, setup.gt);
        rec.ads_adv = ads(adv_map, setup.gt);
    } else {
        rec.flags.push_back("no_ground_truth");
    }
    Perceptual p = perceptual_metrics(*in.image, adv);
    rec.psnr = p.psnr;
    rec.ssim = p.ssim;
    rec.clean_prediction = setup.clean_label;
    rec.iou_clean = setup.iou_clean;
    rec.ads_clean = setup.ads_clean;
    rec.success = rec.recompute_success();
}

}  // namespace

AttackOutcome run_attack(const DetectorInterface& det, const AttackInputs& in, const AttackConfig& cfg,
                         const IterationObserver& observer) {
    validate(cfg);
    if (!in.image) throw std::invalid_argument("run_attack: missing image");
    const ImageTensor& image = *in.image;
    const int hw = image.height * image.width;

    CommonSetup setup = clean_pass(det, in, cfg);

    AttackState state;
    state.delta = Perturbation(image.height, image.width, cfg.epsilon);
    state.embedding = setup.e0;
    state.attention.gamma = cfg.attn_ema_gamma;

    if (cfg.mask_mode == MaskMode::oracle) {
        if (!in.oracle_mask) throw std::invalid_argument("run_attack: oracle mode requires a mask");
        state.mask.current = *in.oracle_mask;
        state.mask.initial = state.mask.current;
    } else {
        state.mask.soft = setup.clean_mask_prob;
        state.mask.initial = TamperMask(image.height, image.width, TamperMask::Source::predicted);
        for (int i = 0; i < hw; ++i)
            state.mask.initial.v[static_cast<size_t>(i)] =
                setup.clean_mask_prob[static_cast<size_t>(i)] >= cfg.mask_threshold ? 1 : 0;
        state.mask.current = state.mask.initial;
    }

    // Decoy selection runs once, from the clean attention map and initial mask.
    DecoyRegion decoy;
    state.mislead_enabled = two_regions(state.mask.initial);
    if (state.mislead_enabled) {
        decoy = select_decoy(image, state.mask.initial, setup.clean_map, cfg.sigma,
                             splitmix_combine(cfg.seed, "decoy:" + in.image_id));
        if (decoy.fallback)
            state.flags.push_back("decoy_fallback:" + std::to_string(decoy.fallback_stage));
    } else {
        state.flags.push_back("degraded_mask");
    }

    AttackRecord rec;
    rec.image_id = in.image_id;
    const Tensor img_const = det.image_node(image);
    bool aborted = false;

    if (!cfg.debug_dump_dir.empty()) {
        std::filesystem::create_directories(cfg.debug_dump_dir);
        if (state.mislead_enabled) {
            AttentionMap field(image.height, image.width);
            field.v = decoy.field;
            save_attention_png(cfg.debug_dump_dir + "/" + in.image_id + "_decoy.png", field);
        }
    }

    for (int t = 1; t <= cfg.iterations && !aborted; ++t) {
        state.t = t;

        // Visual pass: forward at the current delta, freeze E.
        Tensor delta_node = leaf(image.numel(), 1, state.delta.v);
        Tensor adv = clamp01(add(img_const, delta_node));
        DetectorForward fwd = det.forward(adv, det.embedding_node(state.embedding));

        // Predicted-mask schedule consumes this iteration's own prediction.
        if (cfg.mask_mode == MaskMode::predicted)
            stabilize_mask(state.mask, sigmoid_values(fwd.mask_logits), t, cfg);
        const TamperMask& active = state.mask.current;

        Tensor l_det = detection_loss(fwd.class_logits, Label::Real);
        Tensor proxy = attention_proxy(fwd, det.upsample_matrix(), det.agg_layer_lo(), det.agg_layer_hi());
        Tensor m_eff = ema_smooth(state.attention, proxy);

        bool use_mislead = state.mislead_enabled && two_regions(active);
        if (!use_mislead && state.mislead_enabled) {
            // The working mask degenerated mid-run (predicted mode).
            state.mislead_enabled = false;
            state.flags.push_back("degraded_mask");
        }
        Tensor l_mis = use_mislead ? mislead_loss(m_eff, decoy.field, active, cfg.lambda_s)
                                   : constant_scalar(0.0);
        int band_iters = std::max(
            1, (cfg.band_iterations * image.height + cfg.band_reference - 1) / cfg.band_reference);
        TamperMask band = boundary_band(active, cfg.band_kernel, band_iters);
        Tensor l_hide = hide_loss(adv, image.height, image.width, band);
        Tensor l_att = attention_interference_loss(l_mis, l_hide, cfg.alpha);
        Tensor l_l2 = sum_squares(delta_node);
        Tensor l_vis = add(add(l_det, scale(l_att, cfg.lambda1)), scale(l_l2, cfg.lambda2));

        TraceEntry entry;
        entry.t = t;
        entry.losses.l_det = l_det.item();
        entry.losses.l_mislead = l_mis.item();
        entry.losses.l_hide = l_hide.item();
        entry.losses.l_att = l_att.item();
        entry.losses.l_l2 = l_l2.item();
        entry.losses.l_vis = l_vis.item();
        entry.ads = ads(m_eff.data(), active);

        std::vector<double> g = grad(l_vis, {delta_node})[0].data();
        if (!all_finite(g)) {
            state.flags.push_back("aborted");
            aborted = true;
        } else {
            clip_gradient_norm(g, cfg.grad_clip_norm);
            pgd_update(state.delta, g, cfg.eta_v * warmup_scale(t, cfg.warmup_iters), cfg.epsilon);
        }

        // Textual pass: freeze delta, update E (Level II only).
        if (!aborted && cfg.threat_level == ThreatLevel::II) {
            ImageTensor adv_fixed = clip_adversarial(image, state.delta);
            Tensor e_node = det.embedding_node(state.embedding, true);
            DetectorForward fwd_t = det.forward(det.image_node(adv_fixed), e_node);
            Tensor ce = detection_loss(fwd_t.class_logits, Label::Real);
            Tensor l_coh = coherence_loss(e_node, det.vocabulary(), cfg.k_nn);
            Tensor l_text = add(ce, scale(l_coh, cfg.beta));
            entry.losses.l_semantic_ce = ce.item();
            entry.losses.l_coherence = l_coh.item();
            entry.losses.l_text = l_text.item();

            std::vector<double> ge = grad(l_text, {e_node})[0].data();
            if (!all_finite(ge)) {
                state.flags.push_back("aborted");
                aborted = true;
            } else {
                clip_gradient_norm(ge, cfg.grad_clip_norm);
                gd_update(state.embedding, ge, cfg.eta_e * warmup_scale(t, cfg.warmup_iters));
            }
        }

        rec.loss_trace.push_back(entry.losses.l_vis);
        if (cfg.keep_trace) rec.trace.push_back(entry);
        if (!cfg.debug_dump_dir.empty()) {
            char name[64];
            std::snprintf(name, sizeof name, "_attn_t%03d.png", t);
            save_attention_png(cfg.debug_dump_dir + "/" + in.image_id + name,
                               to_attention_map(m_eff, image.height, image.width));
        }
        if (observer) observer(state);
    }

    AttackOutcome out;
    out.adversarial = clip_adversarial(image, state.delta);
    out.embedding = state.embedding;
    rec.flags = state.flags;
    finalize_record(det, in, setup, out.adversarial, state.embedding, rec);
    out.record = std::move(rec);
    return out;
}

AttackOutcome run_baseline(AttackMethod method, const DetectorInterface& det, const AttackInputs& in,
                           const AttackConfig& cfg) {
    validate(cfg);
    if (!in.image) throw std::invalid_argument("run_baseline: missing image");
    if (method == AttackMethod::jeca2) throw std::invalid_argument("run_baseline: not a baseline");
    const ImageTensor& image = *in.image;

    CommonSetup setup = clean_pass(det, in, cfg);
    Perturbation delta(image.height, image.width, cfg.epsilon);
    AttackRecord rec;
    rec.image_id = in.image_id;
    const Tensor img_const = det.image_node(image);
    Tensor e_const = det.embedding_node(setup.e0);

    auto ce_gradient = [&](TraceEntry& entry) {
        Tensor delta_node = leaf(image.numel(), 1, delta.v);
        Tensor adv = clamp01(add(img_const, delta_node));
        DetectorForward fwd = det.forward(adv, e_const);
        Tensor l_det = detection_loss(fwd.class_logits, Label::Real);
        entry.losses.l_det = l_det.item();
        entry.losses.l_vis = entry.losses.l_det;
        return grad(l_det, {delta_node})[0].data();
    };

    switch (method) {
        case AttackMethod::pgd:
            for (int t = 1; t <= cfg.iterations; ++t) {
                TraceEntry entry;
                entry.t = t;
                std::vector<double> g = ce_gradient(entry);
                if (!all_finite(g)) {
                    rec.flags.push_back("aborted");
                    break;
                }
                pgd_update(delta, g, cfg.eta_v, cfg.epsilon);
                rec.loss_trace.push_back(entry.losses.l_vis);
                if (cfg.keep_trace) rec.trace.push_back(entry);
            }
            break;
        case AttackMethod::fgsm: {
            TraceEntry entry;
            entry.t = 1;
            std::vector<double> g = ce_gradient(entry);
            if (!all_finite(g)) {
                rec.flags.push_back("aborted");
            } else {
                pgd_update(delta, g, cfg.epsilon, cfg.epsilon);  // one full-budget sign step
                rec.loss_trace.push_back(entry.losses.l_vis);
                if (cfg.keep_trace) rec.trace.push_back(entry);
            }
            break;
        }
        case AttackMethod::noise: {
            Rng rng(splitmix_combine(cfg.seed, "noise:" + in.image_id));
            for (auto& d : delta.v) d = rng.uniform(-cfg.epsilon, cfg.epsilon);
            break;
        }
        default: break;
    }

    AttackOutcome out;
    out.adversarial = clip_adversarial(image, delta);
    out.embedding = setup.e0;
    finalize_record(det, in, setup, out.adversarial, setup.e0, rec);
    out.record = std::move(rec);
    return out;
}

AttackOutcome run_method(AttackMethod method, const DetectorInterface& det, const AttackInputs& in,
                         const AttackConfig& cfg, const IterationObserver& observer) {
    if (method == AttackMethod::jeca2) return run_attack(det, in, cfg, observer);
    return run_baseline(method, det, in, cfg);
}

}  // namespace jeca
