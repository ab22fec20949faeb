#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "jeca/core.hpp"

namespace jeca {

enum class ForgeryKind { splice_rect, copy_move, blend_ellipse };

const char* to_string(ForgeryKind k);
ForgeryKind forgery_kind_from_string(const std::string& s);

struct ForgerySpec {
    ForgeryKind kind = ForgeryKind::splice_rect;
    double region_fraction = 0.25;  // (0, 0.5] for these single-region kinds
    int blend_width = 3;            // feather width for blend_ellipse, pixels
    uint64_t rng_seed = 0;
};

void validate(const ForgerySpec& spec);

// Procedural natural-statistics image: multi-octave smooth noise plus
// spatially varying fine texture, so background patches span a useful
// gradient-entropy range. Deterministic per (seed, size).
ImageTensor generate_real(uint64_t seed, int size);

// Applies the forgery; the returned mask is exactly the set of pixels whose
// values differ from `base` (unmodified pixels are bit-equal to the base).
std::pair<ImageTensor, TamperMask> generate_forgery(const ImageTensor& base, const ForgerySpec& spec);

struct DatasetItem {
    std::string id;
    std::string kind;  // "real" or a forgery kind
    uint64_t seed = 0;
    std::string split;  // "train" or "test"
};

struct DatasetManifest {
    std::vector<DatasetItem> items;
};

struct DatasetOptions {
    int size = 64;
    int train_fakes = 2000;
    int test_fakes = 500;
    double frac_min = 0.08;
    double frac_max = 0.25;
    uint64_t seed = 0;
};

// Writes real/, fake/, masks/ and manifest.csv under `dir`; equal numbers of
// reals and fakes per split. Fully reproducible from the master seed.
DatasetManifest generate_dataset(const std::string& dir, const DatasetOptions& opt);

DatasetManifest read_manifest(const std::string& dir);

}  // namespace jeca
