#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace jeca {

enum class Label { Real, Fake };

inline const char* to_string(Label l) { return l == Label::Real ? "Real" : "Fake"; }
Label label_from_string(const std::string& s);

// H x W x 3 image, values in [0,1], channel-interleaved row-major.
struct ImageTensor {
    static constexpr int channels = 3;
    int height = 0;
    int width = 0;
    std::vector<double> v;

    ImageTensor() = default;
    ImageTensor(int h, int w) : height(h), width(w), v(static_cast<size_t>(h) * w * channels, 0.0) {}

    double at(int y, int x, int c) const { return v[idx(y, x, c)]; }
    double& at(int y, int x, int c) { return v[idx(y, x, c)]; }
    size_t idx(int y, int x, int c) const {
        return (static_cast<size_t>(y) * width + x) * channels + static_cast<size_t>(c);
    }
    int numel() const { return height * width * channels; }
};

void validate(const ImageTensor& img);  // range + minimum size invariants

// Additive perturbation with an L-inf budget.
struct Perturbation {
    int height = 0;
    int width = 0;
    double epsilon = 0.0;
    std::vector<double> v;

    Perturbation() = default;
    Perturbation(int h, int w, double eps)
        : height(h), width(w), epsilon(eps), v(static_cast<size_t>(h) * w * ImageTensor::channels, 0.0) {}
    double max_abs() const;
};

// Binary tamper map; pixels==1 form R_tamper, the complement is R_bg.
struct TamperMask {
    enum class Source { oracle, predicted };
    int height = 0;
    int width = 0;
    Source source = Source::oracle;
    std::vector<uint8_t> v;

    TamperMask() = default;
    TamperMask(int h, int w, Source s = Source::oracle)
        : height(h), width(w), source(s), v(static_cast<size_t>(h) * w, 0) {}

    uint8_t at(int y, int x) const { return v[static_cast<size_t>(y) * width + x]; }
    uint8_t& at(int y, int x) { return v[static_cast<size_t>(y) * width + x]; }
    int area() const;
    int numel() const { return height * width; }
};

// Nonnegative spatial attribution map.
struct AttentionMap {
    int height = 0;
    int width = 0;
    std::vector<double> v;

    AttentionMap() = default;
    AttentionMap(int h, int w) : height(h), width(w), v(static_cast<size_t>(h) * w, 0.0) {}
    double at(int y, int x) const { return v[static_cast<size_t>(y) * width + x]; }
    double& at(int y, int x) { return v[static_cast<size_t>(y) * width + x]; }
};

void validate(const AttentionMap& m);  // nonnegative + finite

// n x d prompt-token embedding matrix, the Level-II optimization variable.
struct PromptEmbedding {
    int tokens = 0;
    int dim = 0;
    std::vector<double> v;

    PromptEmbedding() = default;
    PromptEmbedding(int n, int d) : tokens(n), dim(d), v(static_cast<size_t>(n) * d, 0.0) {}
    double at(int t, int j) const { return v[static_cast<size_t>(t) * dim + j]; }
    double& at(int t, int j) { return v[static_cast<size_t>(t) * dim + j]; }
};

enum class ThreatLevel { I, II };
enum class MaskMode { oracle, predicted };

ThreatLevel threat_level_from_string(const std::string& s);
MaskMode mask_mode_from_string(const std::string& s);
const char* to_string(ThreatLevel t);
const char* to_string(MaskMode m);

struct AttackConfig {
    double epsilon = 8.0 / 255.0;
    double alpha = 0.7;      // mislead/hide balance
    double beta = 0.1;       // coherence weight
    double lambda1 = 1.0;    // attention loss weight
    double lambda2 = 0.01;   // L2 regularization
    double lambda_s = 1.0;   // tamper suppression weight
    double sigma = 15.0;     // Gaussian hotspot spread, pixels
    double eta_v = 1.0 / 255.0;
    double eta_e = 0.01;
    int iterations = 100;
    int k_nn = 100;
    ThreatLevel threat_level = ThreatLevel::II;
    MaskMode mask_mode = MaskMode::oracle;
    uint64_t seed = 0;

    // Optimization stabilizers, exposed for sensitivity studies.
    double grad_clip_norm = 1.0;
    int warmup_iters = 10;
    double attn_ema_gamma = 0.9;
    int mask_freeze_iters = 50;
    double mask_ema_gamma = 0.8;
    int mask_update_interval = 10;
    int band_kernel = 5;
    int band_iterations = 5;     // 5x5 kernel iterated to span the 10 px band
    int band_reference = 512;    // band width scales with image size, like the
                                 // decoy distance constraints
    double mask_threshold = 0.5;
    bool mask_stabilization = true;
    bool keep_trace = true;
    // When set, per-iteration attention maps and the decoy field are written
    // there as grayscale PNGs.
    std::string debug_dump_dir;
};

void validate(const AttackConfig& cfg);

// ---- operations ---------------------------------------------------------------

// Reads an 8-bit RGB PNG and scales to [0,1] by dividing by 255.
ImageTensor load_image(const std::string& path);
// Quantizes to 8-bit (round) and writes RGB PNG.
void save_image(const std::string& path, const ImageTensor& img);

// Masks are single-channel PNGs with values {0, 255}.
TamperMask load_mask(const std::string& path, TamperMask::Source source = TamperMask::Source::oracle);
void save_mask(const std::string& path, const TamperMask& mask);

// Grayscale visualization of an attention map, normalized to its own maximum.
void save_attention_png(const std::string& path, const AttentionMap& map);

// clamp(I + clamp(delta, -eps, eps), 0, 1), elementwise.
ImageTensor clip_adversarial(const ImageTensor& image, const Perturbation& delta);

}  // namespace jeca
