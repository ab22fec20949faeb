#include "jeca/core.hpp"

#include <algorithm>
#include <cmath>

#include "jeca/png.hpp"

namespace jeca {

Label label_from_string(const std::string& s) {
    if (s == "Real") return Label::Real;
    if (s == "Fake") return Label::Fake;
    throw std::invalid_argument("unknown label: " + s);
}

ThreatLevel threat_level_from_string(const std::string& s) {
    if (s == "I" || s == "1") return ThreatLevel::I;
    if (s == "II" || s == "2") return ThreatLevel::II;
    throw std::invalid_argument("unknown threat level: " + s);
}

MaskMode mask_mode_from_string(const std::string& s) {
    if (s == "oracle") return MaskMode::oracle;
    if (s == "predicted") return MaskMode::predicted;
    throw std::invalid_argument("unknown mask mode: " + s);
}

const char* to_string(ThreatLevel t) { return t == ThreatLevel::I ? "I" : "II"; }
const char* to_string(MaskMode m) { return m == MaskMode::oracle ? "oracle" : "predicted"; }

void validate(const ImageTensor& img) {
    if (img.height < 32 || img.width < 32)
        throw std::invalid_argument("image: height and width must be >= 32");
    for (double x : img.v)
        if (!(x >= 0.0 && x <= 1.0)) throw std::invalid_argument("image: values must lie in [0,1]");
}

void validate(const AttentionMap& m) {
    for (double x : m.v)
        if (!std::isfinite(x) || x < 0.0)
            throw std::invalid_argument("attention map: values must be finite and nonnegative");
}

void validate(const AttackConfig& cfg) {
    if (cfg.epsilon <= 0.0) throw std::invalid_argument("config: epsilon must be positive");
    if (cfg.alpha < 0.0 || cfg.alpha > 1.0) throw std::invalid_argument("config: alpha must be in [0,1]");
    if (cfg.beta < 0.0 || cfg.lambda1 < 0.0 || cfg.lambda2 < 0.0 || cfg.lambda_s < 0.0)
        throw std::invalid_argument("config: loss weights must be nonnegative");
    if (cfg.eta_v <= 0.0 || cfg.eta_e <= 0.0) throw std::invalid_argument("config: step sizes must be positive");
    if (cfg.sigma <= 0.0) throw std::invalid_argument("config: sigma must be positive");
    if (cfg.iterations < 1) throw std::invalid_argument("config: iterations must be >= 1");
    if (cfg.k_nn < 1) throw std::invalid_argument("config: k_nn must be >= 1");
}

double Perturbation::max_abs() const {
    double m = 0.0;
    for (double x : v) m = std::max(m, std::fabs(x));
    return m;
}

int TamperMask::area() const {
    int n = 0;
    for (uint8_t b : v) n += b ? 1 : 0;
    return n;
}

ImageTensor load_image(const std::string& path) {
    png::Raster r = png::read_png(path);
    if (r.channels != 3) throw std::runtime_error("load_image: expected 8-bit RGB: " + path);
    ImageTensor img(r.height, r.width);
    for (size_t i = 0; i < r.pixels.size(); ++i) img.v[i] = r.pixels[i] / 255.0;
    return img;
}

void save_image(const std::string& path, const ImageTensor& img) {
    png::Raster r;
    r.width = img.width;
    r.height = img.height;
    r.channels = 3;
    r.pixels.resize(img.v.size());
    for (size_t i = 0; i < img.v.size(); ++i) {
        double q = std::round(std::clamp(img.v[i], 0.0, 1.0) * 255.0);
        r.pixels[i] = static_cast<uint8_t>(q);
    }
    png::write_png(path, r);
}

TamperMask load_mask(const std::string& path, TamperMask::Source source) {
    png::Raster r = png::read_png(path);
    if (r.channels != 1) throw std::runtime_error("load_mask: expected single-channel PNG: " + path);
    TamperMask m(r.height, r.width, source);
    for (size_t i = 0; i < r.pixels.size(); ++i) m.v[i] = r.pixels[i] >= 128 ? 1 : 0;
    return m;
}

void save_mask(const std::string& path, const TamperMask& mask) {
    png::Raster r;
    r.width = mask.width;
    r.height = mask.height;
    r.channels = 1;
    r.pixels.resize(mask.v.size());
    for (size_t i = 0; i < mask.v.size(); ++i) r.pixels[i] = mask.v[i] ? 255 : 0;
    png::write_png(path, r);
}

void save_attention_png(const std::string& path, const AttentionMap& map) {
    double peak = 0.0;
    for (double x : map.v) peak = std::max(peak, x);
    png::Raster r;
    r.width = map.width;
    r.height = map.height;
    r.channels = 1;
    r.pixels.resize(map.v.size());
    for (size_t i = 0; i < map.v.size(); ++i) {
        double x = peak > 0.0 ? map.v[i] / peak : 0.0;
        r.pixels[i] = static_cast<uint8_t>(std::round(std::clamp(x, 0.0, 1.0) * 255.0));
    }
    png::write_png(path, r);
}

ImageTensor clip_adversarial(const ImageTensor& image, const Perturbation& delta) {
    if (image.height != delta.height || image.width != delta.width)
        throw std::invalid_argument("clip_adversarial: shape mismatch");
    ImageTensor out(image.height, image.width);
    const double eps = delta.epsilon;
    for (size_t i = 0; i < image.v.size(); ++i) {
        double d = std::clamp(delta.v[i], -eps, eps);
        out.v[i] = std::clamp(image.v[i] + d, 0.0, 1.0);
    }
    return out;
}

}  // namespace jeca
