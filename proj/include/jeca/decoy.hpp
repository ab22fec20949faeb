#pragma once

#include <cstdint>
#include <vector>

#include "jeca/core.hpp"

namespace jeca {

// Gaussian pseudo-hotspot: G = exp(-((i-y0)^2+(j-x0)^2) / (2 sigma^2)),
// strictly positive with an exact peak of 1 at the center.
struct DecoyRegion {
    int center_x = 0;  // column
    int center_y = 0;  // row
    double sigma = 0.0;
    int height = 0;
    int width = 0;
    std::vector<double> field;  // H*W
    bool fallback = false;
    int fallback_stage = 0;  // 1 = entropy relaxed, 2 = distances relaxed, 3 = saliency relaxed

    double at(int y, int x) const { return field[static_cast<size_t>(y) * width + x]; }
};

DecoyRegion gaussian_hotspot(int center_x, int center_y, double sigma, int height, int width);

struct DecoyParams {
    double saliency_threshold = 0.5;
    double entropy_lo = 4.0;  // bits
    double entropy_hi = 6.0;
    int entropy_patch = 32;
    int candidates = 3;  // K
    // Reference-resolution distances; scaled as ceil(d * H / 512).
    int border_distance_ref = 50;
    int tamper_distance_ref = 100;
    int reference_size = 512;
    int histogram_bins = 64;
};

// Shannon entropy in bits of a count histogram.
double entropy_bits(const std::vector<int>& counts);

// Gradient-magnitude histogram entropy of the 32x32 patch with top-left
// (y0, x0); central differences with clamped borders, 64 bins over
// [0, max magnitude in patch].
double texture_entropy(const ImageTensor& img, int y0, int x0, int patch = 32, int bins = 64);

// Three-stage selection: saliency filter on the normalized clean attention
// map, texture-entropy window, scaled spatial constraints; K seeded candidates
// scored by the Gaussian-weighted background attention response. Falls back by
// relaxing entropy, then distances, then saliency; never admits R_tamper.
DecoyRegion select_decoy(const ImageTensor& image, const TamperMask& mask,
                         const AttentionMap& attention, double sigma, uint64_t seed,
                         const DecoyParams& params = {});

// Exposed for the brute-force equivalence tests: all admissible centers at the
// given relaxation stage (0 = strict), in row-major order.
std::vector<int> admissible_decoy_centers(const ImageTensor& image, const TamperMask& mask,
                                          const AttentionMap& attention, int stage,
                                          const DecoyParams& params = {});

// Gaussian-weighted background attention response for a candidate center.
double decoy_response(const AttentionMap& attention, const TamperMask& mask, int center_x,
                      int center_y, double sigma);

}  // namespace jeca
