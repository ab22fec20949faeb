#include "jeca/decoy.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "jeca/rng.hpp"

namespace jeca {

DecoyRegion gaussian_hotspot(int center_x, int center_y, double sigma, int height, int width) {
    if (center_x < 0 || center_x >= width || center_y < 0 || center_y >= height)
        throw std::invalid_argument("gaussian_hotspot: center out of bounds");
    if (sigma <= 0.0) throw std::invalid_argument("gaussian_hotspot: sigma must be positive");
    DecoyRegion r;
    r.center_x = center_x;
    r.center_y = center_y;
    r.sigma = sigma;
    r.height = height;
    r.width = width;
    r.field.resize(static_cast<size_t>(height) * width);
    const double inv = 1.0 / (2.0 * sigma * sigma);
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x) {
            double d2 = static_cast<double>(y - center_y) * (y - center_y) +
                        static_cast<double>(x - center_x) * (x - center_x);
            r.field[static_cast<size_t>(y) * width + x] = std::exp(-d2 * inv);
        }
    return r;
}

double entropy_bits(const std::vector<int>& counts) {
    long total = 0;
    for (int c : counts) total += c;
    if (total <= 0) return 0.0;
    double h = 0.0;
    for (int c : counts) {
        if (c <= 0) continue;
        double p = static_cast<double>(c) / static_cast<double>(total);
        h -= p * std::log2(p);
    }
    return h;
}

namespace {

// Channel-mean intensity gradient magnitude, central differences with
// clamped image borders.
double gradient_magnitude(const ImageTensor& img, int y, int x) {
    auto intensity = [&](int yy, int xx) {
        yy = std::clamp(yy, 0, img.height - 1);
        xx = std::clamp(xx, 0, img.width - 1);
        return (img.at(yy, xx, 0) + img.at(yy, xx, 1) + img.at(yy, xx, 2)) / 3.0;
    };
    double gx = (intensity(y, x + 1) - intensity(y, x - 1)) * 0.5;
    double gy = (intensity(y + 1, x) - intensity(y - 1, x)) * 0.5;
    return std::sqrt(gx * gx + gy * gy);
}

}  // namespace

double texture_entropy(const ImageTensor& img, int y0, int x0, int patch, int bins) {
    if (y0 < 0 || x0 < 0 || y0 + patch > img.height || x0 + patch > img.width)
        throw std::invalid_argument("texture_entropy: patch must lie fully inside the image");
    std::vector<double> mags(static_cast<size_t>(patch) * patch);
    double gmax = 0.0;
    for (int dy = 0; dy < patch; ++dy)
        for (int dx = 0; dx < patch; ++dx) {
            double g = gradient_magnitude(img, y0 + dy, x0 + dx);
            mags[static_cast<size_t>(dy) * patch + dx] = g;
            gmax = std::max(gmax, g);
        }
    if (gmax <= 0.0) return 0.0;  // constant patch: single-bin histogram
    std::vector<int> hist(static_cast<size_t>(bins), 0);
    for (double g : mags) {
        int b = std::min(bins - 1, static_cast<int>(g / gmax * bins));
        hist[static_cast<size_t>(b)]++;
    }
    return entropy_bits(hist);
}

double decoy_response(const AttentionMap& attention, const TamperMask& mask, int center_x,
                      int center_y, double sigma) {
    const double inv = 1.0 / (2.0 * sigma * sigma);
    double acc = 0.0;
    for (int y = 0; y < mask.height; ++y)
        for (int x = 0; x < mask.width; ++x) {
            if (mask.at(y, x)) continue;
            double d2 = static_cast<double>(y - center_y) * (y - center_y) +
                        static_cast<double>(x - center_x) * (x - center_x);
            acc += attention.at(y, x) * std::exp(-d2 * inv);
        }
    return acc;
}

std::vector<int> admissible_decoy_centers(const ImageTensor& image, const TamperMask& mask,
                                          const AttentionMap& attention, int stage,
                                          const DecoyParams& p) {
    const int h = image.height, w = image.width;
    const int border = (h * p.border_distance_ref + p.reference_size - 1) / p.reference_size;
    const long tamper_d = (h * p.tamper_distance_ref + p.reference_size - 1) / p.reference_size;
    const long tamper_d2 = tamper_d * tamper_d;

    double peak = 0.0;
    for (double x : attention.v) peak = std::max(peak, x);

    // Squared distance to the nearest tampered pixel (exact, brute force over
    // the tamper boundary).
    std::vector<std::pair<int, int>> boundary;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            if (!mask.at(y, x)) continue;
            bool edge = y == 0 || y == h - 1 || x == 0 || x == w - 1 || !mask.at(y - 1, x) ||
                        !mask.at(y + 1, x) || !mask.at(y, x - 1) || !mask.at(y, x + 1);
            if (edge) boundary.emplace_back(y, x);
        }

    std::vector<int> out;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            if (mask.at(y, x)) continue;  // never relaxed
            if (stage < 3 && peak > 0.0 && attention.at(y, x) / peak >= p.saliency_threshold) continue;
            if (stage < 2) {
                int bd = std::min(std::min(y, h - 1 - y), std::min(x, w - 1 - x));
                if (bd < border) continue;
                long best = tamper_d2 + 1;
                for (auto [by, bx] : boundary) {
                    long dy = y - by, dx = x - bx;
                    long d2 = dy * dy + dx * dx;
                    if (d2 < best) best = d2;
                    if (best <= tamper_d2) break;
                }
                if (best <= tamper_d2) continue;
            }
            if (stage < 1) {
                int py = std::clamp(y - p.entropy_patch / 2, 0, h - p.entropy_patch);
                int px = std::clamp(x - p.entropy_patch / 2, 0, w - p.entropy_patch);
                double e = texture_entropy(image, py, px, p.entropy_patch, p.histogram_bins);
                if (e < p.entropy_lo || e > p.entropy_hi) continue;
            }
            out.push_back(y * w + x);
        }
    }
    return out;
}

DecoyRegion select_decoy(const ImageTensor& image, const TamperMask& mask,
                         const AttentionMap& attention, double sigma, uint64_t seed,
                         const DecoyParams& params) {
    if (mask.area() == mask.numel())
        throw std::invalid_argument("select_decoy: R_bg is empty");

    int stage = 0;
    std::vector<int> admissible;
    for (; stage <= 3; ++stage) {
        admissible = admissible_decoy_centers(image, mask, attention, stage, params);
        if (!admissible.empty()) break;
    }
    if (admissible.empty()) throw std::logic_error("select_decoy: no background pixels");

    // Seeded sample of K distinct candidates (all of them when fewer exist).
    Rng rng = Rng::stream(seed, "decoy-candidates");
    std::vector<int> pool = admissible;
    int k = std::min<int>(params.candidates, static_cast<int>(pool.size()));
    for (int i = 0; i < k; ++i) {
        size_t j = static_cast<size_t>(i) + rng.below(pool.size() - static_cast<size_t>(i));
        std::swap(pool[static_cast<size_t>(i)], pool[j]);
    }

    int best = -1;
    double best_score = 0.0;
    for (int i = 0; i < k; ++i) {
        int c = pool[static_cast<size_t>(i)];
        double s = decoy_response(attention, mask, c % image.width, c / image.width, sigma);
        if (best < 0 || s > best_score) {
            best = c;
            best_score = s;
        }
    }
    DecoyRegion r = gaussian_hotspot(best % image.width, best / image.width, sigma, image.height,
                                     image.width);
    r.fallback = stage > 0;
    r.fallback_stage = stage;
    return r;
}

}  // namespace jeca
