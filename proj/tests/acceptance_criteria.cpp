// Acceptance suite: one pass/fail line per criterion, covering gradient
// correctness, projection invariants, oracle equivalence, directional attack
// efficacy, attention diversion, mask stabilization, determinism, threat-level
// purity, and the JEC subset protocol.
//
// The pipeline artifacts (dataset, checkpoint, record files) are built under
// JECA2_ACCEPTANCE_DIR (default: ./acceptance_work) and reused when present,
// which keeps reruns fast; training is deterministic so the reuse is exact.

#include <chrono>
#include <cstdarg>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <vector>

#include "jeca/attention.hpp"
#include "jeca/decoy.hpp"
#include "jeca/detector.hpp"
#include "jeca/forgery.hpp"
#include "jeca/losses.hpp"
#include "jeca/metrics.hpp"
#include "jeca/morphology.hpp"
#include "jeca/optimizer.hpp"
#include "jeca/rng.hpp"
#include "jeca/runner.hpp"

using namespace jeca;
using Clock = std::chrono::steady_clock;

namespace {

int g_failures = 0;

void report(int criterion, bool pass, const std::string& what, const std::string& detail) {
    std::printf("[%s] criterion %d: %s (%s)\n", pass ? "PASS" : "FAIL", criterion, what.c_str(),
                detail.c_str());
    std::fflush(stdout);
    if (!pass) ++g_failures;
}

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, ...) {
    char buf[512];
    va_list ap;
    va_start(ap, f);
    std::vsnprintf(buf, sizeof buf, f, ap);
    va_end(ap);
    return buf;
}

// ---- shared pipeline ----------------------------------------------------------

struct Pipeline {
    std::string dir;
    std::string dataset;
    std::string checkpoint;
    DetectorConfig dcfg;
    double trained_accuracy = 0.0;
    double trained_iou = 0.0;
    std::unique_ptr<ToyDetector> detector;

    static constexpr int kImageSize = 48;
    static constexpr int kTrainFakes = 600;
    static constexpr int kTestFakes = 200;
    static constexpr uint64_t kDataSeed = 20260977;
    static constexpr uint64_t kTrainSeed = 5;

    void build() {
        const char* env = std::getenv("JECA2_ACCEPTANCE_DIR");
        dir = env && *env ? env : "acceptance_work";
        dataset = dir + "/dataset";
        checkpoint = dir + "/detector.j2dt";
        std::filesystem::create_directories(dir);

        if (!std::filesystem::exists(dataset + "/manifest.csv")) {
            std::printf("-- generating dataset (%d train / %d test fakes, %dpx)\n", kTrainFakes,
                        kTestFakes, kImageSize);
            std::fflush(stdout);
            DatasetOptions opt;
            opt.size = kImageSize;
            opt.train_fakes = kTrainFakes;
            opt.test_fakes = kTestFakes;
            opt.frac_min = 0.08;
            opt.frac_max = 0.22;
            opt.seed = kDataSeed;
            generate_dataset(dataset, opt);
        }

        dcfg = DetectorConfig{};
        dcfg.image_size = kImageSize;
        if (std::filesystem::exists(checkpoint)) {
            ToyDetectorParams params = load_detector(checkpoint);
            // The accuracy/IoU floor is re-verified below either way.
            detector = std::make_unique<ToyDetector>(std::move(params));
        } else {
            std::printf("-- training the toy detector (deterministic, seed %llu)\n",
                        static_cast<unsigned long long>(kTrainSeed));
            std::fflush(stdout);
            TrainOptions topt;
            topt.epochs = 36;
            topt.batch = 16;
            topt.lr = 2.5e-3;
            topt.seed = kTrainSeed;
            topt.min_accuracy = 0.90;
            topt.min_mask_iou = 0.40;
            TrainReport rep;
            ToyDetectorParams params = train_toy_detector(dataset, topt, dcfg, &rep, nullptr);
            save_detector(checkpoint, params);
            std::ofstream log(checkpoint + ".train.csv");
            for (auto& l : rep.log_lines) log << l << "\n";
            detector = std::make_unique<ToyDetector>(std::move(params));
        }

        // Measured floors for criterion 4's precondition.
        DatasetManifest mf = read_manifest(dataset);
        int correct = 0, total = 0, iou_n = 0;
        double iou_sum = 0.0;
        for (const auto& it : mf.items) {
            if (it.split != "test") continue;
            bool fake = it.kind != "real";
            ImageTensor img = load_image(dataset + (fake ? "/fake/" : "/real/") + it.id + ".png");
            DetectorPrediction pred = detector->predict(img);
            correct += (pred.label == (fake ? Label::Fake : Label::Real));
            ++total;
            if (fake && pred.label == Label::Fake) {
                TamperMask gt = load_mask(dataset + "/masks/" + it.id + ".png");
                iou_sum += iou(pred.mask, gt);
                ++iou_n;
            }
        }
        trained_accuracy = static_cast<double>(correct) / total;
        trained_iou = iou_n ? iou_sum / iou_n : 0.0;
        std::printf("-- detector: accuracy %.3f, clean fake IoU %.3f\n", trained_accuracy, trained_iou);
        std::fflush(stdout);
    }

    AttackConfig base_config(uint64_t seed) const {
        AttackConfig cfg;
        cfg.seed = seed;
        return cfg;
    }

    RecordFile run_batch(const std::string& method, ThreatLevel level, MaskMode mode, uint64_t seed,
                         int limit, const std::string& tag, const BatchObserver& obs = {},
                         bool stabilization = true) const {
        BatchOptions b;
        b.dataset_dir = dataset;
        b.output_dir = dir + "/" + tag;
        b.method = method;
        b.limit = limit;
        b.attack = base_config(seed);
        b.attack.threat_level = level;
        b.attack.mask_mode = mode;
        b.attack.mask_stabilization = stabilization;
        return run_attack_batch(*detector, b, nullptr, obs);
    }
};

// ---- criterion 1: gradient correctness ------------------------------------------

struct FdCase {
    std::string name;
    // Builds the loss from flat inputs; returns (loss node, differentiable leaf).
    std::function<std::pair<Tensor, Tensor>(const std::vector<double>&)> build;
    std::vector<double> point;
};

void criterion_gradients() {
    Clock::time_point t0 = Clock::now();
    DetectorConfig cfg;
    cfg.image_size = 32;
    cfg.patch = 8;
    cfg.dim = 16;
    cfg.layers = 2;
    cfg.heads = 2;
    cfg.mlp_hidden = 32;
    cfg.prompt_tokens = 2;
    cfg.vocab_size = 64;

    const int instances = 20;
    const double step = 1e-5, tol = 1e-4;
    int checked = 0, bad = 0;
    std::string worst;

    for (int inst = 0; inst < instances; ++inst) {
        cfg.seed = 1000 + inst;
        ToyDetectorParams params = init_detector_params(cfg);
        {
            Rng hrng = Rng::stream(cfg.seed, "acc-heads");
            for (auto& np : params.params)
                if (np.name.rfind("head.", 0) == 0)
                    for (auto& x : np.v) x = 0.3 * hrng.normal();
        }
        ToyDetector det(params);
        ImageTensor img(32, 32);
        Rng rng(500 + inst);
        for (auto& v : img.v) v = rng.uniform(0.08, 0.92);
        TamperMask mask(32, 32);
        for (int y = 4; y < 14; ++y)
            for (int x = 6; x < 18; ++x) mask.at(y, x) = 1;
        DecoyRegion decoy = gaussian_hotspot(24, 24, 5.0, 32, 32);
        TamperMask band = boundary_band(mask, 5, 1);
        AttackConfig acfg;
        acfg.k_nn = 32;
        PromptEmbedding e0 = params.prompt;

        auto fwd_at = [&](const std::vector<double>& pix, bool need_grad) {
            Tensor x = need_grad ? leaf(32 * 32 * 3, 1, pix) : constant(32 * 32 * 3, 1, pix);
            DetectorForward f = det.forward(x, det.embedding_node(e0));
            return std::pair<DetectorForward, Tensor>(f, x);
        };
        auto proxy_of = [&](const DetectorForward& f) {
            return attention_proxy(f, det.upsample_matrix(), cfg.agg_layer_lo(), cfg.agg_layer_hi());
        };

        std::vector<FdCase> cases;
        cases.push_back({"L_det", [&](const std::vector<double>& v) {
                             auto [f, x] = fwd_at(v, true);
                             return std::pair<Tensor, Tensor>(detection_loss(f.class_logits), x);
                         },
                         img.v});
        cases.push_back({"L_hide", [&](const std::vector<double>& v) {
                             Tensor x = leaf(32 * 32 * 3, 1, v);
                             return std::pair<Tensor, Tensor>(hide_loss(x, 32, 32, band), x);
                         },
                         img.v});
        cases.push_back({"L_mislead", [&](const std::vector<double>& v) {
                             auto [f, x] = fwd_at(v, true);
                             Tensor m = proxy_of(f);
                             return std::pair<Tensor, Tensor>(
                                 mislead_loss(m, decoy.field, mask, acfg.lambda_s), x);
                         },
                         img.v});
        cases.push_back({"L_vis", [&](const std::vector<double>& v) {
                             auto [f, x] = fwd_at(v, true);
                             Tensor l_det = detection_loss(f.class_logits);
                             Tensor m = proxy_of(f);
                             Tensor l_mis = mislead_loss(m, decoy.field, mask, acfg.lambda_s);
                             Tensor l_hi = hide_loss(x, 32, 32, band);
                             Tensor l_att = attention_interference_loss(l_mis, l_hi, acfg.alpha);
                             Tensor l_vis = visual_total_loss(l_det, l_att, x, acfg.lambda1,
                                                              acfg.lambda2);
                             return std::pair<Tensor, Tensor>(l_vis, x);
                         },
                         img.v});
        cases.push_back({"L_coherence", [&](const std::vector<double>& v) {
                             Tensor e = leaf(e0.tokens, e0.dim, v);
                             return std::pair<Tensor, Tensor>(
                                 coherence_loss(e, params.vocabulary, acfg.k_nn), e);
                         },
                         e0.v});
        cases.push_back({"L_semantic", [&](const std::vector<double>& v) {
                             Tensor e = leaf(e0.tokens, e0.dim, v);
                             DetectorForward f = det.forward(det.image_node(img), e);
                             Tensor coh = coherence_loss(e, params.vocabulary, acfg.k_nn);
                             return std::pair<Tensor, Tensor>(
                                 semantic_loss(f.class_logits, Label::Real, coh, acfg.beta), e);
                         },
                         e0.v});

        for (auto& c : cases) {
            std::vector<double> point = c.point;
            auto [loss, x] = c.build(point);
            Tensor g = grad(loss, {x})[0];
            Rng crng = Rng::stream(9000 + inst, c.name);
            for (int k = 0; k < 4; ++k) {
                size_t i = crng.below(point.size());
                double save = point[i];
                point[i] = save + step;
                double fp = c.build(point).first.item();
                point[i] = save - step;
                double fm = c.build(point).first.item();
                point[i] = save;
                double fd = (fp - fm) / (2 * step);
                double an = g.at(static_cast<int>(i));
                double denom = std::max(std::fabs(fd), std::fabs(an));
                double rel = denom < 1e-9 ? 0.0 : std::fabs(fd - an) / denom;
                ++checked;
                if (rel > tol) {
                    ++bad;
                    worst = fmt("%s inst %d coord %zu rel %.2e", c.name.c_str(), inst, i, rel);
                }
            }
        }
    }
    double secs = seconds_since(t0);
    bool pass = bad == 0 && secs < 120.0;
    report(1, pass, "analytic gradients match central finite differences",
           fmt("%d checks across 6 losses x %d instances, %d failures, %.1fs%s%s", checked,
               instances, bad, secs, worst.empty() ? "" : "; worst: ", worst.c_str()));
}

// ---- criterion 3: oracle equivalence ---------------------------------------------

void criterion_oracles(const std::vector<AttackRecord>& live_records) {
    bool ok = true;
    std::string detail;

    // hide_loss vs brute-force TV on all 8x8 images in a random suite (exact).
    {
        Rng rng(61);
        for (int trial = 0; trial < 30 && ok; ++trial) {
            ImageTensor img(8, 8);
            for (auto& v : img.v) v = rng.uniform(0.0, 1.0);
            TamperMask mask(8, 8);
            for (auto& b : mask.v) b = rng.uniform() < 0.45 ? 1 : 0;
            double oracle = 0.0;
            for (int y = 0; y < 8; ++y)
                for (int x = 0; x < 8; ++x) {
                    if (!mask.at(y, x)) continue;
                    if (y + 1 < 8)
                        for (int c = 0; c < 3; ++c)
                            oracle += std::fabs(img.at(y + 1, x, c) - img.at(y, x, c));
                    if (x + 1 < 8)
                        for (int c = 0; c < 3; ++c)
                            oracle += std::fabs(img.at(y, x + 1, c) - img.at(y, x, c));
                }
            double got = hide_loss(constant(img.numel(), 1, img.v), 8, 8, mask).item();
            if (got != oracle) {
                ok = false;
                detail = fmt("hide_loss trial %d: %.17g vs %.17g", trial, got, oracle);
            }
        }
        if (ok) detail += "hide exact";
    }

    // aggregate_attention vs brute-force double loop within 1e-10.
    if (ok) {
        Rng rng(62);
        const int layers = 4, heads = 4, n = 16;
        std::vector<std::vector<Tensor>> maps(layers), grads(layers);
        std::vector<std::vector<std::vector<double>>> mv(layers), gv(layers);
        for (int l = 0; l < layers; ++l)
            for (int h = 0; h < heads; ++h) {
                std::vector<double> a(n), b(n);
                for (auto& x : a) x = rng.uniform(0, 1);
                for (auto& x : b) x = rng.uniform(-1, 1);
                maps[l].push_back(constant(n, 1, a));
                grads[l].push_back(constant(n, 1, b));
                mv[l].push_back(a);
                gv[l].push_back(b);
            }
        Tensor got = aggregate_attention(maps, grads, 2, 4);
        for (int i = 0; i < n && ok; ++i) {
            double acc = 0.0;
            for (int l = 2; l < 4; ++l)
                for (int h = 0; h < heads; ++h) {
                    double mg = 0.0;
                    for (double x : gv[l][h]) mg += x;
                    mg /= n;
                    acc += std::max(0.0, mg) * mv[l][h][static_cast<size_t>(i)];
                }
            acc /= 2.0;
            if (std::fabs(got.at(i) - acc) > 1e-10) {
                ok = false;
                detail = fmt("aggregate pixel %d off by %.2e", i, std::fabs(got.at(i) - acc));
            }
        }
        if (ok) detail += "; aggregate <=1e-10";
    }

    // asr / j_asr vs an independent recount on hand-built and live records.
    if (ok) {
        std::vector<AttackRecord> hand;
        Rng rng(63);
        for (int i = 0; i < 40; ++i) {
            AttackRecord r;
            r.image_id = "h" + std::to_string(i);
            r.clean_prediction = rng.uniform() < 0.7 ? Label::Fake : Label::Real;
            r.attacked_prediction = rng.uniform() < 0.5 ? Label::Real : Label::Fake;
            r.success = r.recompute_success();
            r.iou_adv = rng.uniform();
            hand.push_back(r);
        }
        std::vector<const std::vector<AttackRecord>*> sets = {&hand, &live_records};
        for (const std::vector<AttackRecord>* rs : sets) {
            int det = 0, flip = 0, joint = 0;
            for (const auto& r : *rs) {
                if (r.clean_prediction != Label::Fake) continue;
                ++det;
                bool f = r.attacked_prediction == Label::Real;
                flip += f;
                joint += f && r.iou_adv < 0.2;
            }
            if (det == 0) continue;
            if (asr(*rs) != static_cast<double>(flip) / det ||
                joint_asr(*rs, 0.2) != static_cast<double>(joint) / det) {
                ok = false;
                detail = "asr/j_asr recount mismatch";
            }
        }
        if (ok) detail += "; asr/j-asr exact";
    }

    // bootstrap percentile bounds vs exhaustive enumeration at n=3 (exact).
    if (ok) {
        std::vector<double> sample = {2.0, 5.0, 11.0};
        std::vector<double> means;
        for (double a : sample)
            for (double b : sample)
                for (double c : sample) means.push_back((a + b + c) / 3.0);
        Interval got = bootstrap_ci(sample, 10000, 0.95, 20260527);
        if (got.lo != percentile(means, 0.025) || got.hi != percentile(means, 0.975)) {
            ok = false;
            detail = "bootstrap bounds differ from the 27-resample enumeration";
        } else {
            detail += "; bootstrap exact";
        }
    }

    report(3, ok, "independent oracles agree with the implementations", detail);
}

// ---- criteria 2/4/5: attack efficacy over the trained pipeline --------------------

struct EfficacyResult {
    RecordFile lvl2, lvl1, pgd, noise;
    bool projection_ok = true;
    int projection_iters = 0;
    int projection_images = 0;
    double runtime_sec = 0.0;
    std::string projection_detail;
};

EfficacyResult run_efficacy(const Pipeline& pipe) {
    EfficacyResult r;
    Clock::time_point t0 = Clock::now();

    const double eps = AttackConfig{}.epsilon;
    BatchObserver obs;
    obs.observe_first = 50;
    obs.on_iteration = [&](int item, const AttackState& st) {
        ++r.projection_iters;
        r.projection_images = std::max(r.projection_images, item + 1);
        if (st.delta.max_abs() > eps + 1e-12 && r.projection_ok) {
            r.projection_ok = false;
            r.projection_detail = fmt("|delta| = %.17g at t=%d", st.delta.max_abs(), st.t);
        }
    };

    std::printf("-- level II attack over %d test fakes\n", Pipeline::kTestFakes);
    std::fflush(stdout);
    r.lvl2 = pipe.run_batch("jeca2", ThreatLevel::II, MaskMode::oracle, 424242, -1, "lvl2", obs);
    std::printf("-- level I attack\n");
    std::fflush(stdout);
    r.lvl1 = pipe.run_batch("jeca2", ThreatLevel::I, MaskMode::oracle, 424242, -1, "lvl1");
    std::printf("-- pgd / noise baselines\n");
    std::fflush(stdout);
    r.pgd = pipe.run_batch("pgd", ThreatLevel::I, MaskMode::oracle, 424242, -1, "pgd");
    r.noise = pipe.run_batch("noise", ThreatLevel::I, MaskMode::oracle, 424242, -1, "noise");
    r.runtime_sec = seconds_since(t0);
    return r;
}

void criterion_projection(const Pipeline& pipe, const EfficacyResult& eff) {
    // The observed level-II run covers 50 images at T=100; outputs themselves
    // are re-checked from the stored adversarial perturbation budget.
    bool pass = eff.projection_ok && eff.projection_images >= 50 &&
                eff.projection_iters >= 50 * AttackConfig{}.iterations;
    std::string detail = fmt("%d iterations observed over %d images", eff.projection_iters,
                             eff.projection_images);
    if (!eff.projection_detail.empty()) detail += "; " + eff.projection_detail;

    // Output range: rerun two attacks and check the produced images directly.
    if (pass) {
        std::vector<BatchItem> items = load_test_fakes(pipe.dataset, 2);
        for (const auto& item : items) {
            AttackInputs in;
            in.image = &item.image;
            in.oracle_mask = &item.gt_mask;
            in.metrics_mask = &item.gt_mask;
            in.image_id = item.id;
            AttackConfig cfg = pipe.base_config(424242);
            AttackOutcome out = run_attack(*pipe.detector, in, cfg);
            for (size_t i = 0; i < out.adversarial.v.size(); ++i) {
                double v = out.adversarial.v[i];
                double d = std::fabs(out.adversarial.v[i] - item.image.v[i]);
                if (v < 0.0 || v > 1.0 || d > cfg.epsilon + 1e-12) {
                    pass = false;
                    detail += fmt("; output violation at %zu", i);
                    break;
                }
            }
        }
    }
    report(2, pass, "projection invariants hold across full attack runs", detail);
}

void criterion_efficacy(const Pipeline& pipe, const EfficacyResult& eff) {
    double asr2 = asr(eff.lvl2.records);
    double asr1 = asr(eff.lvl1.records);
    double asrp = asr(eff.pgd.records);
    double asrn = asr(eff.noise.records);

    bool floors = pipe.trained_accuracy >= 0.90 && pipe.trained_iou >= 0.40;
    bool margin = asr2 > 0.0 && asr2 >= 5.0 * asrn;
    bool ordering = asr2 >= asr1 && asr1 >= asrp;
    bool runtime = eff.runtime_sec < 1800.0;
    report(4, floors && margin && ordering && runtime,
           "directional attack efficacy on the trained toy detector",
           fmt("acc %.3f IoU %.3f | ASR: LvlII %.3f >= LvlI %.3f >= PGD %.3f; noise %.3f; "
               "runtime %.0fs",
               pipe.trained_accuracy, pipe.trained_iou, asr2, asr1, asrp, asrn, eff.runtime_sec));
}

void criterion_diversion(const EfficacyResult& eff) {
    int successes = 0, diverted = 0, detectable = 0;
    double iou_clean = 0.0, iou_adv = 0.0;
    for (const AttackRecord& r : eff.lvl2.records) {
        if (r.clean_prediction != Label::Fake) continue;
        ++detectable;
        iou_clean += r.iou_clean;
        iou_adv += r.iou_adv;
        if (!r.success) continue;
        ++successes;
        diverted += r.ads_adv > r.ads_clean;
    }
    double frac = successes ? static_cast<double>(diverted) / successes : 0.0;
    bool iou_drop = detectable > 0 && iou_adv < iou_clean;
    double l_iour = iou_clean > 0 ? 1.0 - iou_adv / iou_clean : 0.0;
    report(5, successes > 0 && frac >= 0.80 && iou_drop,
           "attention diversion and localization degradation",
           fmt("ADS(adv)>ADS(clean) on %.1f%% of %d successes; mean IoU %.3f -> %.3f (L-IoUR %.3f)",
               100.0 * frac, successes, iou_clean / std::max(1, detectable),
               iou_adv / std::max(1, detectable), l_iour));
}

// ---- criterion 6: mask stabilization ----------------------------------------------

void criterion_stabilization(const Pipeline& pipe) {
    const int images = 30;
    const AttackConfig defaults;
    auto mean_update_change = [&](bool stabilized) {
        std::map<int, std::vector<TamperMask>> masks;  // item -> mask at each iteration
        BatchObserver obs;
        obs.observe_first = images;
        obs.on_iteration = [&](int item, const AttackState& st) {
            masks[item].push_back(st.mask.current);
        };
        pipe.run_batch("jeca2", ThreatLevel::II, MaskMode::predicted, 909090, images,
                       stabilized ? "stab_on" : "stab_off", obs, stabilized);
        // Masks at the schedule's update events; without stabilization every
        // iteration adopts a fresh prediction.
        double total = 0.0;
        int pairs = 0;
        for (auto& [item, seq] : masks) {
            std::vector<const TamperMask*> updates;
            for (size_t i = 0; i < seq.size(); ++i) {
                int t = static_cast<int>(i) + 1;
                bool update_point =
                    !stabilized || t <= 1 ||
                    (t > defaults.mask_freeze_iters &&
                     (t - defaults.mask_freeze_iters) % defaults.mask_update_interval == 0);
                if (update_point) updates.push_back(&seq[i]);
            }
            for (size_t i = 1; i < updates.size(); ++i) {
                total += 1.0 - iou(*updates[i], *updates[i - 1]);
                ++pairs;
            }
        }
        return std::pair<double, int>(pairs ? total / pairs : 0.0, pairs);
    };

    std::printf("-- predicted-mask stabilization study (%d images x 2)\n", images);
    std::fflush(stdout);
    auto [with, with_pairs] = mean_update_change(true);
    auto [without, without_pairs] = mean_update_change(false);
    report(6, with < without,
           "A-series mask stabilization reduces inter-update mask change",
           fmt("mean 1-IoU per update: %.4f (stabilized, %d updates) vs %.4f (raw, %d updates)",
               with, with_pairs, without, without_pairs));
}

// ---- criterion 7: determinism ------------------------------------------------------

void criterion_determinism(const Pipeline& pipe) {
    auto bytes_of = [](const std::string& p) {
        std::ifstream f(p, std::ios::binary);
        std::stringstream ss;
        ss << f.rdbuf();
        return ss.str();
    };
    RecordFile a = pipe.run_batch("jeca2", ThreatLevel::II, MaskMode::oracle, 777, 6, "det_a");
    RecordFile b = pipe.run_batch("jeca2", ThreatLevel::II, MaskMode::oracle, 777, 6, "det_b");
    std::string ba = bytes_of(pipe.dir + "/det_a/records_jeca2.jsonl");
    std::string bb = bytes_of(pipe.dir + "/det_b/records_jeca2.jsonl");
    report(7, !ba.empty() && ba == bb, "identical config+seed produce byte-identical records",
           fmt("%zu bytes compared across %zu records", ba.size(), a.records.size()));
}

// ---- criterion 8: threat-level purity ----------------------------------------------

void criterion_purity(const Pipeline& pipe) {
    std::vector<BatchItem> items = load_test_fakes(pipe.dataset, 10);
    bool pass = true;
    for (const auto& item : items) {
        AttackInputs in;
        in.image = &item.image;
        in.oracle_mask = &item.gt_mask;
        in.metrics_mask = &item.gt_mask;
        in.image_id = item.id;
        AttackConfig cfg = pipe.base_config(31337);
        cfg.threat_level = ThreatLevel::I;
        AttackOutcome out = run_attack(*pipe.detector, in, cfg);
        if (out.embedding.v != pipe.detector->params().prompt.v) pass = false;
    }
    report(8, pass, "level-I runs leave the prompt embedding bit-unchanged",
           fmt("%zu full runs compared bit-exactly", items.size()));
}

// ---- criterion 9: JEC protocol ------------------------------------------------------

void criterion_jec(const EfficacyResult& eff) {
    std::map<std::string, std::vector<AttackRecord>> by_method = {
        {"jeca2-II", eff.lvl2.records},
        {"jeca2-I", eff.lvl1.records},
        {"pgd", eff.pgd.records},
        {"noise", eff.noise.records},
    };
    // Zero-success methods are legal; jec_subsets excludes them with a notice.
    JecSubsets a = jec_subsets(by_method, JecMode::fixedN, 100, 20260527);
    JecSubsets b = jec_subsets(by_method, JecMode::fixedN, 100, 20260527);
    bool reproducible = a.ids == b.ids && a.n == b.n;

    int feasible = 100;
    for (auto& [m, records] : by_method) {
        int s = 0;
        for (auto& r : records) s += r.success;
        if (s > 0) feasible = std::min(feasible, s);
    }
    bool exact_n = a.n == std::min(100, feasible);
    for (auto& [m, ids] : a.ids) exact_n = exact_n && static_cast<int>(ids.size()) == a.n;

    // Fallback trigger below 50 shared successes, on a constructed set.
    std::map<std::string, std::vector<AttackRecord>> small;
    for (int i = 0; i < 60; ++i) {
        AttackRecord r;
        r.image_id = "s" + std::to_string(i);
        r.clean_prediction = Label::Fake;
        r.attacked_prediction = i < 30 ? Label::Real : Label::Fake;
        r.success = r.recompute_success();
        small["m1"].push_back(r);
        AttackRecord q = r;
        q.attacked_prediction = i >= 20 && i < 55 ? Label::Real : Label::Fake;
        q.success = q.recompute_success();
        small["m2"].push_back(q);
    }
    // Common successes: ids 20..29 -> 10 < 50.
    JecSubsets fb = jec_subsets(small, JecMode::commonSuccess, 100, 20260527);
    bool fallback = fb.effective == JecMode::fixedN && !fb.notices.empty();

    // And a >=50 common set sticks with the common subset.
    std::map<std::string, std::vector<AttackRecord>> big;
    for (int i = 0; i < 70; ++i) {
        AttackRecord r;
        r.image_id = "b" + std::to_string(i);
        r.clean_prediction = Label::Fake;
        r.attacked_prediction = i < 60 ? Label::Real : Label::Fake;
        r.success = r.recompute_success();
        big["m1"].push_back(r);
        big["m2"].push_back(r);
    }
    JecSubsets keep = jec_subsets(big, JecMode::commonSuccess, 100, 20260527);
    bool kept = keep.effective == JecMode::commonSuccess && keep.n == 60;

    report(9, reproducible && exact_n && fallback && kept,
           "JEC fixed-N and common-success protocols behave per the published seed",
           fmt("fixed-N n=%d (feasible %d), fallback notice%s, common kept n=%d", a.n,
               std::min(100, feasible), fallback ? " ok" : " MISSING", keep.n));
}

}  // namespace

int main() {
    std::printf("== JECA2 acceptance suite ==\n");
    Clock::time_point t0 = Clock::now();

    Pipeline pipe;
    try {
        pipe.build();
    } catch (const std::exception& e) {
        std::printf("[FAIL] pipeline setup: %s\n", e.what());
        return 1;
    }

    criterion_gradients();
    EfficacyResult eff = run_efficacy(pipe);
    criterion_projection(pipe, eff);
    criterion_oracles(eff.lvl2.records);
    criterion_efficacy(pipe, eff);
    criterion_diversion(eff);
    criterion_stabilization(pipe);
    criterion_determinism(pipe);
    criterion_purity(pipe);
    criterion_jec(eff);

    std::printf("== %s in %.0fs ==\n", g_failures ? "FAILURES" : "all criteria passed",
                seconds_since(t0));
    return g_failures ? 1 : 0;
}
