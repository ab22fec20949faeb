#pragma once

#include <functional>
#include <string>

#include "jeca/attention.hpp"
#include "jeca/core.hpp"
#include "jeca/decoy.hpp"
#include "jeca/detector.hpp"
#include "jeca/record.hpp"

namespace jeca {

enum class AttackMethod { jeca2, pgd, fgsm, noise };
AttackMethod attack_method_from_string(const std::string& s);
const char* to_string(AttackMethod m);

// Predicted-mask schedule state (A-series stabilization): the initial mask is
// frozen for the first `mask_freeze_iters` iterations, then EMA-updated on the
// configured interval, binarized, and morphologically closed.
struct MaskState {
    TamperMask current;
    TamperMask initial;
    std::vector<double> soft;  // EMA'd probability state
};

struct AttackState {
    int t = 0;
    Perturbation delta;
    PromptEmbedding embedding;
    AggregationState attention;
    MaskState mask;
    bool mislead_enabled = true;
    std::vector<std::string> flags;
};

// ---- step primitives -------------------------------------------------------

// Linear warmup factor: t / warmup for the first `warmup` iterations, 1 after.
double warmup_scale(int t, int warmup_iters);

// Scales g in place so its L2 norm is at most max_norm; returns the original norm.
double clip_gradient_norm(std::vector<double>& g, double max_norm);

// delta <- clip(delta - step * sign(g), -eps, eps), with sign(0) = 0.
void pgd_update(Perturbation& delta, const std::vector<double>& g, double step, double eps);

void gd_update(PromptEmbedding& e, const std::vector<double>& g, double step);

// Returns the mask active at iteration t and advances the state, per the
// freeze/EMA/closing schedule. `fresh_prob` is the detector's current mask
// probability map. With stabilization disabled the fresh prediction is
// binarized and adopted every iteration.
const TamperMask& stabilize_mask(MaskState& state, const std::vector<double>& fresh_prob, int t,
                                 const AttackConfig& cfg);

// ---- attack drivers ----------------------------------------------------------

struct AttackInputs {
    const ImageTensor* image = nullptr;
    const TamperMask* oracle_mask = nullptr;   // consumed only in oracle mode
    const TamperMask* metrics_mask = nullptr;  // ground truth for reporting; never optimized against
    const PromptEmbedding* init_embedding = nullptr;  // defaults to the detector prompt
    std::string image_id;
};

struct AttackOutcome {
    ImageTensor adversarial;
    PromptEmbedding embedding;
    AttackRecord record;
};

using IterationObserver = std::function<void(const AttackState&)>;

// Full joint optimization (Algorithm-style alternation). Runs exactly
// cfg.iterations unless a non-finite gradient aborts the attack; a degenerate
// mask disables the mislead term and flags the record instead of failing.
AttackOutcome run_attack(const DetectorInterface& det, const AttackInputs& in, const AttackConfig& cfg,
                         const IterationObserver& observer = {});

// Comparison baselines sharing the record schema: targeted PGD on the
// detection CE only, single-step FGSM, and seeded uniform noise at epsilon.
AttackOutcome run_baseline(AttackMethod method, const DetectorInterface& det, const AttackInputs& in,
                           const AttackConfig& cfg);

AttackOutcome run_method(AttackMethod method, const DetectorInterface& det, const AttackInputs& in,
                         const AttackConfig& cfg, const IterationObserver& observer = {});

}  // namespace jeca
