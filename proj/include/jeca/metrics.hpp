#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "jeca/core.hpp"
#include "jeca/record.hpp"

namespace jeca {

struct UndefinedMetricError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Fraction of the detectable subset (clean == Fake) flipped to Real.
double asr(const std::vector<AttackRecord>& records);

// Intersection over union; both-empty masks agree perfectly (1.0).
double iou(const TamperMask& a, const TamperMask& b);

// Flip AND iou_adv < tau over the detectable subset.
double joint_asr(const std::vector<AttackRecord>& records, double tau = 0.2);

struct Perceptual {
    double psnr = 0.0;  // dB, capped at 100 for MSE < 1e-10
    double ssim = 0.0;
};
Perceptual perceptual_metrics(const ImageTensor& clean, const ImageTensor& adv);

struct Interval {
    double lo = 0.0;
    double hi = 0.0;
};

// Seeded percentile bootstrap over the sample mean.
Interval bootstrap_ci(const std::vector<double>& values, int resamples = 10000, double level = 0.95,
                      uint64_t seed = 20260527);

// Inverse-CDF percentile used by the bootstrap (exposed for the oracle test).
double percentile(std::vector<double> sorted_or_not, double p);

// ---- JEC subset protocols ------------------------------------------------------

enum class JecMode { conditional, fixedN, commonSuccess };
const char* to_string(JecMode m);

struct JecSubsets {
    JecMode requested = JecMode::fixedN;
    JecMode effective = JecMode::fixedN;  // commonSuccess may fall back to fixedN
    int n = 0;                            // per-method ids emitted (fixedN)
    uint64_t seed = 0;
    std::map<std::string, std::vector<std::string>> ids;  // method -> image ids
    std::vector<std::string> notices;
};

// Subset sampling over per-method records. fixedN emits exactly
// min(n, largest common feasible N) ids per method with the given seed;
// commonSuccess intersects success ids and falls back to fixedN when fewer
// than 50 are shared. Methods without successes are excluded with a notice.
JecSubsets jec_subsets(const std::map<std::string, std::vector<AttackRecord>>& by_method,
                       JecMode mode, int n = 100, uint64_t seed = 20260527);

void write_jec_manifest(const std::string& path, const JecSubsets& subsets);

// Pluggable judgment-explanation scorer. The bundled stub is a deterministic
// keyword heuristic for exercising the plumbing; it is not a scientific
// consistency measure.
using JecScorer = std::function<double(const std::string& image_path, Label judgment,
                                       const std::string& explanation)>;
double jec_stub_score(const std::string& image_path, Label judgment, const std::string& explanation);

// ---- summaries -----------------------------------------------------------------

struct EvaluationSummary {
    std::string method;
    int total = 0;
    int detectable = 0;
    double asr = 0.0;
    double j_asr = 0.0;
    double mean_iou_clean = 0.0;
    double mean_iou_adv = 0.0;
    double l_iour = 0.0;  // 1 - mean(iou_adv) / mean(iou_clean)
    double mean_ads_clean = 0.0;
    double mean_ads_adv = 0.0;
    double mean_psnr = 0.0;
    double mean_ssim = 0.0;
    double aux_acc = 0.0;  // attacked-batch accuracy; diagnostic only
    Interval asr_ci;       // bootstrap over success indicators
    std::optional<double> mean_jec;  // when records carry scores
    std::optional<double> lpips;     // schema slot; needs a pretrained perceptual net
    int flagged = 0;
};

// Aggregates a record set; every rate is re-derived by an independent recount
// and the two must agree exactly.
EvaluationSummary summarize(const std::string& method, const std::vector<AttackRecord>& records,
                            double tau = 0.2, int bootstrap_resamples = 10000,
                            uint64_t bootstrap_seed = 20260527);

void write_summary_csv(const std::string& path, const std::vector<EvaluationSummary>& rows);

// Exact two-sided binomial sign test on discordant success pairs.
double sign_test_pvalue(int n_plus, int n_minus);

struct PairedComparison {
    std::string method_a;
    std::string method_b;
    int discordant_a = 0;  // a succeeded, b failed
    int discordant_b = 0;
    double p_value = 1.0;
};
PairedComparison paired_sign_test(const std::string& name_a, const std::vector<AttackRecord>& a,
                                  const std::string& name_b, const std::vector<AttackRecord>& b);

}  // namespace jeca
