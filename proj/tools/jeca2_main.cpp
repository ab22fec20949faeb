// jeca2: experiment orchestration for the attention-diversion red-team bench.
// Subcommands: generate-data, train-detector, attack, evaluate, report.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>

#include <CLI11.hpp>
#include <json.hpp>

#include "jeca/detector.hpp"
#include "jeca/forgery.hpp"
#include "jeca/metrics.hpp"
#include "jeca/optimizer.hpp"
#include "jeca/record.hpp"
#include "jeca/runner.hpp"

namespace {

int cmd_generate_data(const std::string& out_dir, const jeca::DatasetOptions& opt) {
    std::filesystem::create_directories(out_dir);
    jeca::DatasetManifest m = jeca::generate_dataset(out_dir, opt);
    std::cout << "wrote " << m.items.size() << " items under " << out_dir << "\n";
    return 0;
}

int cmd_train(const std::string& dataset, const std::string& out_path, jeca::TrainOptions topt,
              jeca::DetectorConfig dcfg) {
    // Infer the image size from the dataset itself.
    jeca::DatasetManifest m = jeca::read_manifest(dataset);
    std::string sub = m.items.front().kind == "real" ? "real" : "fake";
    jeca::ImageTensor probe = jeca::load_image(dataset + "/" + sub + "/" + m.items.front().id + ".png");
    dcfg.image_size = probe.height;

    jeca::TrainReport report;
    jeca::ToyDetectorParams params = jeca::train_toy_detector(dataset, topt, dcfg, &report, &std::cout);
    jeca::save_detector(out_path, params);
    std::ofstream log(out_path + ".train.csv", std::ios::trunc);
    for (const auto& line : report.log_lines) log << line << "\n";
    std::cout << "checkpoint " << out_path << " (accuracy " << report.test_accuracy << ", clean IoU "
              << report.clean_fake_iou << ")\n";
    return 0;
}

int cmd_attack(const jeca::BatchOptions& opt, const std::string& checkpoint) {
    jeca::ToyDetector det(jeca::load_detector(checkpoint));
    jeca::RecordFile rf = jeca::run_attack_batch(det, opt, &std::cout);
    double ok = jeca::unflagged_fraction(rf);
    std::cout << "records: " << jeca::records_path(opt) << " (" << rf.records.size()
              << " images, unflagged " << ok * 100.0 << "%)\n";
    return ok >= 0.99 ? 0 : 2;
}

int cmd_evaluate(const std::vector<std::string>& record_paths, const std::string& out_csv, double tau) {
    std::vector<jeca::EvaluationSummary> rows;
    std::map<std::string, std::vector<jeca::AttackRecord>> by_method;
    for (const auto& p : record_paths) {
        jeca::RecordFile rf = jeca::read_records(p);
        std::string tag = rf.header.method + "/L" + rf.header.threat_level + "/" + rf.header.mask_mode;
        rows.push_back(jeca::summarize(tag, rf.records, tau));
        by_method[tag] = rf.records;
    }
    jeca::write_summary_csv(out_csv, rows);
    std::cout << "summary: " << out_csv << "\n";
    for (const auto& r : rows)
        std::cout << "  " << r.method << ": ASR " << r.asr << " J-ASR " << r.j_asr << " IoU "
                  << r.mean_iou_clean << "->" << r.mean_iou_adv << " ADS " << r.mean_ads_clean << "->"
                  << r.mean_ads_adv << "\n";
    // Paired diagnostics over the shared detectable subset, every method pair.
    std::vector<std::string> names;
    for (const auto& [name, _] : by_method) names.push_back(name);
    for (size_t i = 0; i < names.size(); ++i)
        for (size_t j = i + 1; j < names.size(); ++j) {
            jeca::PairedComparison pc = jeca::paired_sign_test(names[i], by_method[names[i]], names[j],
                                                               by_method[names[j]]);
            std::cout << "  sign test " << pc.method_a << " vs " << pc.method_b << ": +"
                      << pc.discordant_a << "/-" << pc.discordant_b << " p=" << pc.p_value << "\n";
        }
    return 0;
}

// Crude raster plots: loss curve and ADS histogram.
void render_plots(const std::string& dir, const std::vector<jeca::AttackRecord>& records) {
    const int w = 256, h = 160;
    size_t iters = 0;
    for (const auto& r : records) iters = std::max(iters, r.loss_trace.size());
    if (iters > 1) {
        std::vector<double> mean(iters, 0.0);
        std::vector<int> n(iters, 0);
        for (const auto& r : records)
            for (size_t t = 0; t < r.loss_trace.size(); ++t) {
                mean[t] += r.loss_trace[t];
                ++n[t];
            }
        double lo = 1e300, hi = -1e300;
        for (size_t t = 0; t < iters; ++t) {
            mean[t] /= std::max(1, n[t]);
            lo = std::min(lo, mean[t]);
            hi = std::max(hi, mean[t]);
        }
        if (hi <= lo) hi = lo + 1.0;
        jeca::ImageTensor plot(h, w);
        for (auto& v : plot.v) v = 1.0;
        for (int x = 0; x < w; ++x) {
            size_t t = static_cast<size_t>(x) * (iters - 1) / (w - 1);
            int y = static_cast<int>((1.0 - (mean[t] - lo) / (hi - lo)) * (h - 1));
            for (int c = 0; c < 3; ++c) plot.at(std::clamp(y, 0, h - 1), x, c) = c == 2 ? 0.8 : 0.1;
        }
        jeca::save_image(dir + "/loss_curve.png", plot);
    }
    jeca::ImageTensor hist(h, w);
    for (auto& v : hist.v) v = 1.0;
    std::vector<int> bins(16, 0);
    for (const auto& r : records) {
        if (r.clean_prediction != jeca::Label::Fake) continue;
        bins[std::min(15, static_cast<int>(r.ads_adv * 16))]++;
    }
    int peak = 1;
    for (int b : bins) peak = std::max(peak, b);
    for (int b = 0; b < 16; ++b) {
        int bh = bins[b] * (h - 8) / peak;
        for (int y = h - 1; y >= h - bh; --y)
            for (int x = b * (w / 16) + 1; x < (b + 1) * (w / 16) - 1; ++x)
                for (int c = 0; c < 3; ++c) hist.at(y, x, c) = c == 0 ? 0.75 : 0.15;
    }
    jeca::save_image(dir + "/ads_hist.png", hist);
}

int cmd_report(const std::vector<std::string>& record_paths, const std::string& out_dir,
               const std::string& jec_mode, int jec_n, uint64_t jec_seed, bool plots) {
    std::filesystem::create_directories(out_dir);
    std::map<std::string, std::vector<jeca::AttackRecord>> by_method;
    std::vector<jeca::AttackRecord> all;
    for (const auto& p : record_paths) {
        jeca::RecordFile rf = jeca::read_records(p);
        by_method[rf.header.method] = rf.records;
        all.insert(all.end(), rf.records.begin(), rf.records.end());
    }

    jeca::JecMode mode = jeca::JecMode::fixedN;
    if (jec_mode == "conditional") mode = jeca::JecMode::conditional;
    else if (jec_mode == "commonSuccess") mode = jeca::JecMode::commonSuccess;
    else if (jec_mode != "fixedN") throw std::runtime_error("unknown jec mode " + jec_mode);

    jeca::JecSubsets subsets = jeca::jec_subsets(by_method, mode, jec_n, jec_seed);
    jeca::write_jec_manifest(out_dir + "/jec_subset.csv", subsets);

    std::ofstream md(out_dir + "/report.md", std::ios::trunc);
    md << "# Attack report\n\n";
    md << "| method | detectable | ASR | J-ASR | IoU clean->adv | ADS clean->adv "
          "| mean JEC (stub) | JEC>=4 | JEC 95% CI |\n";
    md << "|---|---|---|---|---|---|---|---|---|\n";
    for (auto& [name, records] : by_method) {
        jeca::EvaluationSummary s = jeca::summarize(name, records);
        // Stub scorer over the sampled subset; a placeholder for an external
        // judge, not a scientific consistency measure.
        std::vector<double> scores;
        auto it = subsets.ids.find(name);
        if (it != subsets.ids.end()) {
            for (const auto& r : records) {
                if (!r.explanation) continue;
                if (std::find(it->second.begin(), it->second.end(), r.image_id) == it->second.end())
                    continue;
                scores.push_back(jeca::jec_stub_score("", r.attacked_prediction, *r.explanation));
            }
        }
        double jec = 0.0, high = 0.0;
        for (double x : scores) {
            jec += x;
            high += x >= 4.0;
        }
        std::string jec_cell = "-", high_cell = "-", ci_cell = "-";
        if (!scores.empty()) {
            jec_cell = std::to_string(jec / scores.size());
            high_cell = std::to_string(100.0 * high / scores.size()) + "%";
            jeca::Interval ci = jeca::bootstrap_ci(scores, 10000, 0.95, jec_seed);
            ci_cell = "[" + std::to_string(ci.lo) + ", " + std::to_string(ci.hi) + "]";
        }
        md << "| " << name << " | " << s.detectable << " | " << s.asr << " | " << s.j_asr << " | "
           << s.mean_iou_clean << " -> " << s.mean_iou_adv << " | " << s.mean_ads_clean << " -> "
           << s.mean_ads_adv << " | " << jec_cell << " | " << high_cell << " | " << ci_cell
           << " |\n";
    }
    md << "\nJEC subset: mode=" << to_string(subsets.effective) << " n=" << subsets.n
       << " seed=" << subsets.seed << "\n";
    for (const auto& note : subsets.notices) md << "- " << note << "\n";
    if (plots) render_plots(out_dir, all);
    std::cout << "report under " << out_dir << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"JECA2 toy red-team bench"};
    app.require_subcommand(1);

    // generate-data
    auto* gen = app.add_subcommand("generate-data", "Generate the synthetic forgery dataset");
    std::string gen_out = "dataset";
    jeca::DatasetOptions dopt;
    gen->add_option("--out", gen_out, "Output directory");
    gen->add_option("--size", dopt.size, "Image side length");
    gen->add_option("--train-fakes", dopt.train_fakes, "Tampered images in the train split");
    gen->add_option("--test-fakes", dopt.test_fakes, "Tampered images in the test split");
    gen->add_option("--frac-min", dopt.frac_min, "Minimum tamper region fraction");
    gen->add_option("--frac-max", dopt.frac_max, "Maximum tamper region fraction");
    gen->add_option("--seed", dopt.seed, "Master seed");

    // train-detector
    auto* train = app.add_subcommand("train-detector", "Train the toy forgery detector");
    std::string train_dataset, train_out = "detector.j2dt";
    jeca::TrainOptions topt;
    jeca::DetectorConfig dcfg;
    train->add_option("--dataset", train_dataset, "Dataset directory")->required();
    train->add_option("--out", train_out, "Checkpoint path");
    train->add_option("--epochs", topt.epochs, "Training epochs");
    train->add_option("--batch", topt.batch, "Batch size");
    train->add_option("--lr", topt.lr, "Learning rate");
    train->add_option("--seed", topt.seed, "Training seed");
    train->add_option("--noise-augment", topt.noise_augment, "Uniform pixel noise amplitude");
    train->add_option("--min-accuracy", topt.min_accuracy, "Required held-out accuracy");
    train->add_option("--min-iou", topt.min_mask_iou, "Required clean localization IoU");
    train->add_option("--dim", dcfg.dim, "Embedding dim");
    train->add_option("--layers", dcfg.layers, "Encoder layers");
    train->add_option("--heads", dcfg.heads, "Attention heads");
    train->add_option("--patch", dcfg.patch, "Patch size");
    train->add_option("--mlp-hidden", dcfg.mlp_hidden, "MLP hidden width");
    train->add_option("--prompt-tokens", dcfg.prompt_tokens, "Prompt token count");
    train->add_option("--vocab-size", dcfg.vocab_size, "Vocabulary size");
    train->add_option("--detector-seed", dcfg.seed, "Weight init seed");

    // attack
    auto* atk = app.add_subcommand("attack", "Run attacks over the test fakes");
    jeca::BatchOptions bopt;
    std::string checkpoint;
    // Structured config file: INI/TOML with keys equal to the flag names;
    // explicit flags take precedence.
    atk->set_config("--config", "", "Experiment config file");
    atk->add_option("--dataset", bopt.dataset_dir, "Dataset directory");
    atk->add_option("--checkpoint", checkpoint, "Detector checkpoint")->required();
    atk->add_option("--out", bopt.output_dir, "Output directory");
    atk->add_option("--method", bopt.method, "jeca2 | pgd | fgsm | noise");
    atk->add_option("--workers", bopt.workers, "Worker threads");
    atk->add_option("--limit", bopt.limit, "Attack only the first N test fakes");
    atk->add_flag("--save-adversarial", bopt.save_adversarial, "Write adversarial PNGs and deltas");
    auto& a = bopt.attack;
    auto* seed_opt = atk->add_option("--seed", a.seed, "Attack seed (required)");
    seed_opt->required();
    std::string threat = "II", mask_mode = "oracle";
    atk->add_option("--threat-level", threat, "I | II");
    atk->add_option("--mask-mode", mask_mode, "oracle | predicted");
    atk->add_option("--epsilon", a.epsilon, "L-inf budget");
    atk->add_option("--alpha", a.alpha, "Mislead/hide balance");
    atk->add_option("--beta", a.beta, "Coherence weight");
    atk->add_option("--lambda1", a.lambda1, "Attention loss weight");
    atk->add_option("--lambda2", a.lambda2, "L2 weight");
    atk->add_option("--lambda-s", a.lambda_s, "Suppression weight");
    atk->add_option("--sigma", a.sigma, "Gaussian hotspot spread");
    atk->add_option("--eta-v", a.eta_v, "Visual step size");
    atk->add_option("--eta-e", a.eta_e, "Embedding step size");
    atk->add_option("--iterations", a.iterations, "Optimization iterations T");
    atk->add_option("--k-nn", a.k_nn, "Coherence k-NN bound");
    atk->add_option("--grad-clip-norm", a.grad_clip_norm, "Gradient max-norm");
    atk->add_option("--warmup-iters", a.warmup_iters, "Warmup iterations");
    atk->add_option("--attn-ema-gamma", a.attn_ema_gamma, "Attention EMA gamma");
    atk->add_option("--mask-freeze-iters", a.mask_freeze_iters, "Initial mask freeze window");
    atk->add_option("--mask-ema-gamma", a.mask_ema_gamma, "Mask EMA gamma");
    atk->add_option("--mask-update-interval", a.mask_update_interval, "Mask update interval");
    atk->add_option("--band-kernel", a.band_kernel, "Boundary band dilation kernel");
    atk->add_option("--band-iterations", a.band_iterations, "Boundary band dilation iterations");
    atk->add_option("--mask-threshold", a.mask_threshold, "Mask binarization threshold");
    atk->add_flag("!--no-mask-stabilization", a.mask_stabilization, "Disable the mask schedule");
    atk->add_option("--debug-dump-dir", a.debug_dump_dir, "Write per-iteration attention PNGs here");

    // evaluate
    auto* eval = app.add_subcommand("evaluate", "Summarize record files");
    std::vector<std::string> eval_records;
    std::string eval_out = "summary.csv";
    double tau = 0.2;
    eval->add_option("--records", eval_records, "Record files")->required()->expected(-1);
    eval->add_option("--out", eval_out, "Summary CSV path");
    eval->add_option("--tau", tau, "J-ASR IoU threshold");

    // report
    auto* rep = app.add_subcommand("report", "Emit a markdown report with JEC subsets");
    std::vector<std::string> rep_records;
    std::string rep_out = "report", jec_mode = "fixedN";
    int jec_n = 100;
    uint64_t jec_seed = 20260527;
    bool plots = false;
    rep->add_option("--records", rep_records, "Record files")->required()->expected(-1);
    rep->add_option("--out", rep_out, "Report directory");
    rep->add_option("--jec-mode", jec_mode, "conditional | fixedN | commonSuccess");
    rep->add_option("--jec-n", jec_n, "Fixed-N sample size");
    rep->add_option("--jec-seed", jec_seed, "Subset sampling seed");
    rep->add_flag("--plots", plots, "Render loss/ADS plots");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*gen) return cmd_generate_data(gen_out, dopt);
        if (*train) return cmd_train(train_dataset, train_out, topt, dcfg);
        if (*atk) {
            a.threat_level = jeca::threat_level_from_string(threat);
            a.mask_mode = jeca::mask_mode_from_string(mask_mode);
            if (bopt.dataset_dir.empty()) throw std::runtime_error("attack: --dataset (or config) required");
            if (bopt.output_dir.empty()) bopt.output_dir = "out";
            return cmd_attack(bopt, checkpoint);
        }
        if (*eval) return cmd_evaluate(eval_records, eval_out, tau);
        if (*rep) return cmd_report(rep_records, rep_out, jec_mode, jec_n, jec_seed, plots);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
