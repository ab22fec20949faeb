#include "jeca/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include "jeca/rng.hpp"

namespace jeca {

double asr(const std::vector<AttackRecord>& records) {
    int detectable = 0, flipped = 0;
    for (const auto& r : records) {
        if (r.clean_prediction != Label::Fake) continue;
        ++detectable;
        if (r.attacked_prediction == Label::Real) ++flipped;
    }
    if (detectable == 0) throw UndefinedMetricError("asr: empty detectable subset");
    return static_cast<double>(flipped) / detectable;
}

double iou(const TamperMask& a, const TamperMask& b) {
    if (a.height != b.height || a.width != b.width)
        throw std::invalid_argument("iou: shape mismatch");
    long inter = 0, uni = 0;
    for (size_t i = 0; i < a.v.size(); ++i) {
        bool pa = a.v[i] != 0, pb = b.v[i] != 0;
        inter += pa && pb;
        uni += pa || pb;
    }
    if (uni == 0) return 1.0;  // agreement on "nothing tampered"
    return static_cast<double>(inter) / static_cast<double>(uni);
}

double joint_asr(const std::vector<AttackRecord>& records, double tau) {
    int detectable = 0, joint = 0;
    for (const auto& r : records) {
        if (r.clean_prediction != Label::Fake) continue;
        ++detectable;
        if (r.attacked_prediction == Label::Real && r.iou_adv < tau) ++joint;
    }
    if (detectable == 0) throw UndefinedMetricError("joint_asr: empty detectable subset");
    return static_cast<double>(joint) / detectable;
}

// ---- perceptual -----------------------------------------------------------------

namespace {

// 11x11 Gaussian window, sigma 1.5 (standard SSIM), valid-region filtering.
const std::vector<double>& ssim_window() {
    static const std::vector<double> w = [] {
        std::vector<double> win(121);
        double s = 0.0;
        for (int y = 0; y < 11; ++y)
            for (int x = 0; x < 11; ++x) {
                double dy = y - 5, dx = x - 5;
                win[static_cast<size_t>(y) * 11 + x] = std::exp(-(dy * dy + dx * dx) / (2 * 1.5 * 1.5));
                s += win[static_cast<size_t>(y) * 11 + x];
            }
        for (auto& v : win) v /= s;
        return win;
    }();
    return w;
}

}  // namespace

Perceptual perceptual_metrics(const ImageTensor& clean, const ImageTensor& adv) {
    if (clean.height != adv.height || clean.width != adv.width)
        throw std::invalid_argument("perceptual_metrics: shape mismatch");
    Perceptual out;

    double mse = 0.0;
    for (size_t i = 0; i < clean.v.size(); ++i) {
        double d = clean.v[i] - adv.v[i];
        mse += d * d;
    }
    mse /= static_cast<double>(clean.v.size());
    out.psnr = mse < 1e-10 ? 100.0 : 10.0 * std::log10(1.0 / mse);

    const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;  // unit dynamic range
    const auto& win = ssim_window();
    double ssim_sum = 0.0;
    long ssim_n = 0;
    for (int c = 0; c < ImageTensor::channels; ++c) {
        for (int y = 0; y + 11 <= clean.height; ++y) {
            for (int x = 0; x + 11 <= clean.width; ++x) {
                double mx = 0, my = 0;
                for (int dy = 0; dy < 11; ++dy)
                    for (int dx = 0; dx < 11; ++dx) {
                        double w = win[static_cast<size_t>(dy) * 11 + dx];
                        mx += w * clean.at(y + dy, x + dx, c);
                        my += w * adv.at(y + dy, x + dx, c);
                    }
                double vx = 0, vy = 0, cov = 0;
                for (int dy = 0; dy < 11; ++dy)
                    for (int dx = 0; dx < 11; ++dx) {
                        double w = win[static_cast<size_t>(dy) * 11 + dx];
                        double ax = clean.at(y + dy, x + dx, c) - mx;
                        double ay = adv.at(y + dy, x + dx, c) - my;
                        vx += w * ax * ax;
                        vy += w * ay * ay;
                        cov += w * ax * ay;
                    }
                double s = ((2 * mx * my + c1) * (2 * cov + c2)) /
                           ((mx * mx + my * my + c1) * (vx + vy + c2));
                ssim_sum += s;
                ++ssim_n;
            }
        }
    }
    out.ssim = ssim_n ? ssim_sum / static_cast<double>(ssim_n) : 1.0;
    return out;
}

// ---- bootstrap ------------------------------------------------------------------

double percentile(std::vector<double> values, double p) {
    if (values.empty()) throw std::invalid_argument("percentile: empty sample");
    std::sort(values.begin(), values.end());
    // Inverse empirical CDF: smallest value with CDF >= p.
    size_t k = static_cast<size_t>(std::ceil(p * static_cast<double>(values.size())));
    if (k == 0) k = 1;
    if (k > values.size()) k = values.size();
    return values[k - 1];
}

Interval bootstrap_ci(const std::vector<double>& values, int resamples, double level, uint64_t seed) {
    if (values.empty()) throw std::invalid_argument("bootstrap_ci: empty sample");
    Rng rng = Rng::stream(seed, "bootstrap");
    std::vector<double> means(static_cast<size_t>(resamples));
    const size_t n = values.size();
    for (int r = 0; r < resamples; ++r) {
        double acc = 0.0;
        for (size_t i = 0; i < n; ++i) acc += values[rng.below(n)];
        means[static_cast<size_t>(r)] = acc / static_cast<double>(n);
    }
    double tail = (1.0 - level) / 2.0;
    return {percentile(means, tail), percentile(means, 1.0 - tail)};
}

// ---- JEC subset protocols --------------------------------------------------------

const char* to_string(JecMode m) {
    switch (m) {
        case JecMode::conditional: return "conditional";
        case JecMode::fixedN: return "fixedN";
        case JecMode::commonSuccess: return "commonSuccess";
    }
    return "?";
}

namespace {

std::vector<std::string> success_ids(const std::vector<AttackRecord>& records) {
    std::vector<std::string> ids;
    for (const auto& r : records)
        if (r.success) ids.push_back(r.image_id);
    std::sort(ids.begin(), ids.end());
    return ids;
}

std::vector<std::string> sample_without_replacement(std::vector<std::string> ids, int n, Rng& rng) {
    for (int i = 0; i < n; ++i) {
        size_t j = static_cast<size_t>(i) + rng.below(ids.size() - static_cast<size_t>(i));
        std::swap(ids[static_cast<size_t>(i)], ids[j]);
    }
    ids.resize(static_cast<size_t>(n));
    std::sort(ids.begin(), ids.end());
    return ids;
}

}  // namespace

JecSubsets jec_subsets(const std::map<std::string, std::vector<AttackRecord>>& by_method,
                       JecMode mode, int n, uint64_t seed) {
    JecSubsets out;
    out.requested = mode;
    out.effective = mode;
    out.seed = seed;

    std::map<std::string, std::vector<std::string>> successes;
    for (const auto& [method, records] : by_method) {
        auto ids = success_ids(records);
        if (ids.empty()) {
            out.notices.push_back("method '" + method + "' has zero successes; excluded");
            continue;
        }
        successes[method] = std::move(ids);
    }
    if (successes.empty()) {
        out.notices.push_back("no method has any successful attack");
        return out;
    }

    if (mode == JecMode::conditional) {
        out.ids = successes;
        return out;
    }

    if (mode == JecMode::commonSuccess) {
        std::set<std::string> common(successes.begin()->second.begin(), successes.begin()->second.end());
        for (const auto& [method, ids] : successes) {
            std::set<std::string> next;
            for (const auto& id : ids)
                if (common.count(id)) next.insert(id);
            common = std::move(next);
        }
        if (static_cast<int>(common.size()) >= 50) {
            for (const auto& [method, ids] : successes)
                out.ids[method] = std::vector<std::string>(common.begin(), common.end());
            out.n = static_cast<int>(common.size());
            return out;
        }
        out.notices.push_back("common-success subset has " + std::to_string(common.size()) +
                              " ids (< 50); falling back to fixed-N");
        out.effective = JecMode::fixedN;
    }

    // Fixed-N: the same count per method, the largest common feasible N capped at n.
    int feasible = n;
    for (const auto& [method, ids] : successes)
        feasible = std::min(feasible, static_cast<int>(ids.size()));
    if (feasible < n)
        out.notices.push_back("largest common feasible N is " + std::to_string(feasible));
    out.n = feasible;
    for (const auto& [method, ids] : successes) {
        Rng rng = Rng::stream(seed, "jec-fixedN:" + method);
        out.ids[method] = sample_without_replacement(ids, feasible, rng);
    }
    return out;
}

void write_jec_manifest(const std::string& path, const JecSubsets& s) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw std::runtime_error("jec: cannot write " + path);
    f << "# jec-subset v1 mode=" << to_string(s.effective) << " requested=" << to_string(s.requested)
      << " n=" << s.n << " seed=" << s.seed << "\n";
    for (const auto& notice : s.notices) f << "# notice: " << notice << "\n";
    for (const auto& [method, ids] : s.ids)
        for (const auto& id : ids) f << method << "," << id << "\n";
}

double jec_stub_score(const std::string&, Label judgment, const std::string& explanation) {
    // Keyword heuristic for plumbing tests only; not a consistency measure.
    static const char* kAuthentic[] = {"authentic", "natural", "consistent", "genuine", "no tampering"};
    static const char* kManip[] = {"tamper", "artifact", "inconsisten", "manipulat", "splice"};
    std::string lower;
    lower.reserve(explanation.size());
    for (char c : explanation) lower += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    int pos = 0, neg = 0;
    for (const char* k : kAuthentic)
        if (lower.find(k) != std::string::npos) ++pos;
    for (const char* k : kManip)
        if (lower.find(k) != std::string::npos) ++neg;
    int support = judgment == Label::Real ? pos - neg : neg - pos;
    return std::clamp(3.0 + support, 1.0, 5.0);
}

// ---- summaries --------------------------------------------------------------------

EvaluationSummary summarize(const std::string& method, const std::vector<AttackRecord>& records,
                            double tau, int bootstrap_resamples, uint64_t bootstrap_seed) {
    if (records.empty()) throw UndefinedMetricError("summarize: no records");
    EvaluationSummary s;
    s.method = method;
    s.total = static_cast<int>(records.size());

    std::vector<double> success_ind;
    double iou_c = 0, iou_a = 0, ads_c = 0, ads_a = 0, psnr = 0, ssim = 0;
    double jec_sum = 0;
    int jec_n = 0, kept_fake = 0;
    for (const auto& r : records) {
        validate(r);
        s.flagged += r.flagged() ? 1 : 0;
        psnr += r.psnr;
        ssim += r.ssim;
        if (r.attacked_prediction == Label::Fake) ++kept_fake;
        if (r.clean_prediction != Label::Fake) continue;
        ++s.detectable;
        success_ind.push_back(r.success ? 1.0 : 0.0);
        iou_c += r.iou_clean;
        iou_a += r.iou_adv;
        ads_c += r.ads_clean;
        ads_a += r.ads_adv;
        if (r.jec_score) {
            jec_sum += *r.jec_score;
            ++jec_n;
        }
    }
    if (s.detectable == 0) throw UndefinedMetricError("summarize: empty detectable subset");

    s.asr = asr(records);
    s.j_asr = joint_asr(records, tau);
    s.mean_iou_clean = iou_c / s.detectable;
    s.mean_iou_adv = iou_a / s.detectable;
    s.l_iour = s.mean_iou_clean > 0.0 ? 1.0 - s.mean_iou_adv / s.mean_iou_clean : 0.0;
    s.mean_ads_clean = ads_c / s.detectable;
    s.mean_ads_adv = ads_a / s.detectable;
    s.mean_psnr = psnr / s.total;
    s.mean_ssim = ssim / s.total;
    s.aux_acc = static_cast<double>(kept_fake) / s.total;
    s.asr_ci = bootstrap_ci(success_ind, bootstrap_resamples, 0.95, bootstrap_seed);
    if (jec_n) s.mean_jec = jec_sum / jec_n;

    // Built-in self-check: a plain recount must agree exactly.
    int det = 0, flip = 0, joint = 0;
    for (const auto& r : records) {
        if (r.clean_prediction == Label::Fake) {
            ++det;
            bool f = r.attacked_prediction == Label::Real;
            flip += f;
            joint += f && r.iou_adv < tau;
        }
    }
    if (det != s.detectable || s.asr != static_cast<double>(flip) / det ||
        s.j_asr != static_cast<double>(joint) / det)
        throw std::logic_error("summarize: self-check recount disagreed");
    return s;
}

void write_summary_csv(const std::string& path, const std::vector<EvaluationSummary>& rows) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw std::runtime_error("summary: cannot write " + path);
    f << "method,total,detectable,asr,j_asr,mean_iou_clean,mean_iou_adv,l_iour,"
         "mean_ads_clean,mean_ads_adv,mean_psnr,mean_ssim,lpips,aux_acc,asr_ci_lo,asr_ci_hi,"
         "mean_jec,flagged\n";
    for (const auto& s : rows) {
        f << s.method << "," << s.total << "," << s.detectable << "," << format_double(s.asr) << ","
          << format_double(s.j_asr) << "," << format_double(s.mean_iou_clean) << ","
          << format_double(s.mean_iou_adv) << "," << format_double(s.l_iour) << ","
          << format_double(s.mean_ads_clean) << "," << format_double(s.mean_ads_adv) << ","
          << format_double(s.mean_psnr) << "," << format_double(s.mean_ssim) << ","
          << (s.lpips ? format_double(*s.lpips) : "") << "," << format_double(s.aux_acc) << "," << format_double(s.asr_ci.lo) << ","
          << format_double(s.asr_ci.hi) << "," << (s.mean_jec ? format_double(*s.mean_jec) : "")
          << "," << s.flagged << "\n";
    }
}

double sign_test_pvalue(int n_plus, int n_minus) {
    const int n = n_plus + n_minus;
    if (n == 0) return 1.0;  // no discordant pairs
    // Two-sided exact binomial, p = 0.5: 2 * P(X <= min(k, n-k)), capped at 1.
    int k = std::min(n_plus, n_minus);
    double log_half_n = n * std::log(0.5);
    double tail = 0.0;
    for (int i = 0; i <= k; ++i) {
        double log_c = std::lgamma(n + 1.0) - std::lgamma(i + 1.0) - std::lgamma(n - i + 1.0);
        tail += std::exp(log_c + log_half_n);
    }
    return std::min(1.0, 2.0 * tail);
}

PairedComparison paired_sign_test(const std::string& name_a, const std::vector<AttackRecord>& a,
                                  const std::string& name_b, const std::vector<AttackRecord>& b) {
    PairedComparison out;
    out.method_a = name_a;
    out.method_b = name_b;
    std::map<std::string, bool> success_b;
    for (const auto& r : b)
        if (r.clean_prediction == Label::Fake) success_b[r.image_id] = r.success;
    for (const auto& r : a) {
        if (r.clean_prediction != Label::Fake) continue;
        auto it = success_b.find(r.image_id);
        if (it == success_b.end()) continue;  // shared detectable subset only
        if (r.success && !it->second) ++out.discordant_a;
        if (!r.success && it->second) ++out.discordant_b;
    }
    out.p_value = sign_test_pvalue(out.discordant_a, out.discordant_b);
    return out;
}

}  // namespace jeca
