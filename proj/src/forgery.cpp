#include "jeca/forgery.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "jeca/rng.hpp"

namespace jeca {

const char* to_string(ForgeryKind k) {
    switch (k) {
        case ForgeryKind::splice_rect: return "splice-rect";
        case ForgeryKind::copy_move: return "copy-move";
        case ForgeryKind::blend_ellipse: return "blend-ellipse";
    }
    return "?";
}

ForgeryKind forgery_kind_from_string(const std::string& s) {
    if (s == "splice-rect") return ForgeryKind::splice_rect;
    if (s == "copy-move") return ForgeryKind::copy_move;
    if (s == "blend-ellipse") return ForgeryKind::blend_ellipse;
    throw std::invalid_argument("unknown forgery kind: " + s);
}

void validate(const ForgerySpec& spec) {
    if (spec.region_fraction <= 0.0 || spec.region_fraction > 0.5)
        throw std::invalid_argument("forgery: region fraction must be in (0, 0.5]");
    if (spec.blend_width < 1) throw std::invalid_argument("forgery: blend width must be >= 1");
}

namespace {

// Bilinear value-noise octave on a coarse lattice.
void add_octave(std::vector<double>& field, int size, int cell, double amplitude, Rng& rng) {
    int knots = size / cell + 2;
    std::vector<double> lattice(static_cast<size_t>(knots) * knots);
    for (auto& x : lattice) x = rng.uniform(-1.0, 1.0);
    for (int y = 0; y < size; ++y) {
        double gy = static_cast<double>(y) / cell;
        int y0 = static_cast<int>(gy);
        double fy = gy - y0;
        for (int x = 0; x < size; ++x) {
            double gx = static_cast<double>(x) / cell;
            int x0 = static_cast<int>(gx);
            double fx = gx - x0;
            double v00 = lattice[static_cast<size_t>(y0) * knots + x0];
            double v01 = lattice[static_cast<size_t>(y0) * knots + x0 + 1];
            double v10 = lattice[static_cast<size_t>(y0 + 1) * knots + x0];
            double v11 = lattice[static_cast<size_t>(y0 + 1) * knots + x0 + 1];
            double v = (1 - fy) * ((1 - fx) * v00 + fx * v01) + fy * ((1 - fx) * v10 + fx * v11);
            field[static_cast<size_t>(y) * size + x] += amplitude * v;
        }
    }
}

std::vector<double> smooth_field(int size, Rng& rng, std::initializer_list<std::pair<int, double>> octaves) {
    std::vector<double> f(static_cast<size_t>(size) * size, 0.0);
    for (auto [cell, amp] : octaves) add_octave(f, size, std::max(2, cell), amp, rng);
    return f;
}

// Forces a visible difference from `base` so the mask is exactly the set of
// modified pixels even after blending.
double displaced(double candidate, double base) {
    const double min_gap = 0.02;
    if (std::fabs(candidate - base) >= min_gap) return candidate;
    double moved = base + (base < 0.5 ? min_gap : -min_gap);
    return std::clamp(moved, 0.0, 1.0);
}

struct Rect {
    int y0 = 0, x0 = 0, h = 0, w = 0;
    bool contains(int y, int x) const { return y >= y0 && y < y0 + h && x >= x0 && x < x0 + w; }
};

Rect random_rect(Rng& rng, int size, double fraction) {
    int h = std::max(4, static_cast<int>(std::lround(size * std::sqrt(fraction))));
    int w = h;
    h = std::min(h, size - 2);
    w = std::min(w, size - 2);
    Rect r;
    r.h = h;
    r.w = w;
    r.y0 = 1 + static_cast<int>(rng.below(static_cast<uint64_t>(size - h - 1)));
    r.x0 = 1 + static_cast<int>(rng.below(static_cast<uint64_t>(size - w - 1)));
    return r;
}

}  // namespace

namespace {

// Shared generator core. Donor imagery (the content pasted into forgeries)
// carries a stronger fine-texture signature and a mild chroma bias so
// tampered regions have the kind of statistical mismatch forgery detectors
// key on.
ImageTensor procedural_image(uint64_t seed, int size, bool donor) {
    if (size < 32) throw std::invalid_argument("generate_real: size must be >= 32");
    Rng rng = Rng::stream(seed, donor ? "donor-image" : "real-image");
    ImageTensor img(size, size);

    auto lum = smooth_field(size, rng, {{size / 4, 0.38}, {size / 8, 0.22}, {size / 16, 0.12}});
    std::vector<std::vector<double>> tint(3);
    for (auto& t : tint) t = smooth_field(size, rng, {{size / 3, 0.07}, {size / 6, 0.04}});
    // Spatially varying fine-texture amplitude keeps gradient entropy diverse.
    auto tex_amp = smooth_field(size, rng, {{size / 3, 1.0}});
    const double amp_base = 0.01;
    const double amp_span = 0.04;
    const double chroma = donor ? 0.10 : 0.0;
    const double lift = donor ? 0.06 : 0.0;
    for (int y = 0; y < size; ++y) {
        for (int x = 0; x < size; ++x) {
            size_t i = static_cast<size_t>(y) * size + x;
            double amp = amp_base + amp_span * std::clamp(0.5 + 0.75 * tex_amp[i], 0.0, 1.0);
            double fine = amp * rng.uniform(-1.0, 1.0);
            for (int c = 0; c < 3; ++c) {
                double v = 0.5 + lift + lum[i] + tint[static_cast<size_t>(c)][i] + fine +
                           (c == 0 ? chroma : (c == 2 ? -chroma : 0.0));
                img.at(y, x, c) = std::clamp(v, 0.02, 0.98);
            }
        }
    }
    return img;
}

}  // namespace

ImageTensor generate_real(uint64_t seed, int size) { return procedural_image(seed, size, false); }

std::pair<ImageTensor, TamperMask> generate_forgery(const ImageTensor& base, const ForgerySpec& spec) {
    validate(spec);
    const int size = base.height;
    if (base.width != size) throw std::invalid_argument("generate_forgery: expects square images");
    int max_side = static_cast<int>(std::lround(size * std::sqrt(spec.region_fraction)));
    if (max_side < 4) throw std::invalid_argument("generate_forgery: region fraction too small for image");

    Rng rng = Rng::stream(spec.rng_seed, "forgery");
    ImageTensor out = base;
    TamperMask mask(size, size, TamperMask::Source::oracle);

    switch (spec.kind) {
        case ForgeryKind::splice_rect: {
            Rect r = random_rect(rng, size, spec.region_fraction);
            uint64_t donor_seed = spec.rng_seed;
            ImageTensor donor = procedural_image(splitmix64(donor_seed) ^ 0x5u, size, true);
            for (int y = r.y0; y < r.y0 + r.h; ++y)
                for (int x = r.x0; x < r.x0 + r.w; ++x) {
                    for (int c = 0; c < 3; ++c)
                        out.at(y, x, c) = displaced(donor.at(y, x, c), base.at(y, x, c));
                    mask.at(y, x) = 1;
                }
            break;
        }
        case ForgeryKind::copy_move: {
            Rect dst = random_rect(rng, size, spec.region_fraction);
            // Two disjoint copies must fit wherever the destination landed.
            int side_cap = (size - 2) / 3;
            if (side_cap < 4)
                throw std::invalid_argument("generate_forgery: region fraction incompatible with size");
            if (dst.h > side_cap) {
                dst.h = dst.w = side_cap;
                dst.y0 = 1 + static_cast<int>(rng.below(static_cast<uint64_t>(size - dst.h - 1)));
                dst.x0 = 1 + static_cast<int>(rng.below(static_cast<uint64_t>(size - dst.w - 1)));
            }
            Rect src;
            src.h = dst.h;
            src.w = dst.w;
            auto disjoint = [&] {
                return src.y0 + src.h <= dst.y0 || dst.y0 + dst.h <= src.y0 ||
                       src.x0 + src.w <= dst.x0 || dst.x0 + dst.w <= src.x0;
            };
            bool placed = false;
            for (int tries = 0; tries < 64 && !placed; ++tries) {
                src.y0 = 1 + static_cast<int>(rng.below(static_cast<uint64_t>(size - src.h - 1)));
                src.x0 = 1 + static_cast<int>(rng.below(static_cast<uint64_t>(size - src.w - 1)));
                placed = disjoint();
            }
            if (!placed) {
                // Corner diagonally opposite the destination; disjoint by the cap.
                src.y0 = dst.y0 >= size / 2 ? 1 : size - src.h - 1;
                src.x0 = dst.x0 >= size / 2 ? 1 : size - src.w - 1;
                if (!disjoint())
                    throw std::invalid_argument("generate_forgery: region fraction incompatible with size");
            }
            // Moved blocks carry the same processing signature as donor
            // content (re-encoded chroma/luminance), so every forgery kind is
            // detectable from its local statistics.
            for (int dy = 0; dy < dst.h; ++dy)
                for (int dx = 0; dx < dst.w; ++dx) {
                    int y = dst.y0 + dy, x = dst.x0 + dx;
                    for (int c = 0; c < 3; ++c) {
                        double shift = 0.06 + (c == 0 ? 0.10 : (c == 2 ? -0.10 : 0.0));
                        double moved = std::clamp(base.at(src.y0 + dy, src.x0 + dx, c) + shift, 0.0, 1.0);
                        out.at(y, x, c) = displaced(moved, base.at(y, x, c));
                    }
                    mask.at(y, x) = 1;
                }
            break;
        }
        case ForgeryKind::blend_ellipse: {
            double target_area = spec.region_fraction * size * size;
            double ry = std::sqrt(target_area / M_PI);
            double rx = ry;
            int cy = static_cast<int>(ry) + 1 +
                     static_cast<int>(rng.below(static_cast<uint64_t>(std::max(1, size - 2 * (static_cast<int>(ry) + 1)))));
            int cx = static_cast<int>(rx) + 1 +
                     static_cast<int>(rng.below(static_cast<uint64_t>(std::max(1, size - 2 * (static_cast<int>(rx) + 1)))));
            uint64_t donor_seed = spec.rng_seed;
            ImageTensor donor = procedural_image(splitmix64(donor_seed) ^ 0x9u, size, true);
            const double feather = std::max(1, spec.blend_width) / ry;
            for (int y = 0; y < size; ++y)
                for (int x = 0; x < size; ++x) {
                    double d = std::sqrt(((y - cy) * (y - cy) + (x - cx) * (x - cx)) / (ry * rx));
                    if (d >= 1.0) continue;
                    double a = std::min(1.0, (1.0 - d) / feather);
                    if (a < 0.05) continue;  // keep the support bit-identifiable
                    for (int c = 0; c < 3; ++c) {
                        double b = base.at(y, x, c);
                        double s = displaced(donor.at(y, x, c), b);
                        out.at(y, x, c) = (1.0 - a) * b + a * s;
                    }
                    mask.at(y, x) = 1;
                }
            break;
        }
    }
    if (mask.area() == 0) throw std::invalid_argument("generate_forgery: produced empty region");
    return {std::move(out), std::move(mask)};
}

namespace {

std::string item_id(const std::string& split, const std::string& group, int index) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%s_%s_%05d", split.c_str(), group.c_str(), index);
    return buf;
}

}  // namespace

DatasetManifest generate_dataset(const std::string& dir, const DatasetOptions& opt) {
    namespace fs = std::filesystem;
    fs::create_directories(dir + "/real");
    fs::create_directories(dir + "/fake");
    fs::create_directories(dir + "/masks");

    DatasetManifest manifest;
    const ForgeryKind kinds[3] = {ForgeryKind::splice_rect, ForgeryKind::copy_move,
                                  ForgeryKind::blend_ellipse};

    auto emit_split = [&](const std::string& split, int fakes, uint64_t salt) {
        for (int i = 0; i < fakes; ++i) {
            uint64_t item_seed = splitmix64(salt) + 2 * static_cast<uint64_t>(i);
            ImageTensor real = generate_real(item_seed, opt.size);
            std::string rid = item_id(split, "real", i);
            save_image(dir + "/real/" + rid + ".png", real);
            manifest.items.push_back({rid, "real", item_seed, split});

            uint64_t fake_seed = item_seed + 1;
            Rng frac_rng = Rng::stream(fake_seed, "fraction");
            ForgerySpec spec;
            spec.kind = kinds[i % 3];
            spec.region_fraction = frac_rng.uniform(opt.frac_min, opt.frac_max);
            spec.rng_seed = fake_seed;
            ImageTensor fake_base = generate_real(splitmix64(fake_seed) ^ 0x777u, opt.size);
            auto [fake, mask] = generate_forgery(fake_base, spec);
            std::string fid = item_id(split, "fake", i);
            save_image(dir + "/fake/" + fid + ".png", fake);
            save_mask(dir + "/masks/" + fid + ".png", mask);
            manifest.items.push_back({fid, to_string(spec.kind), fake_seed, split});
        }
    };
    emit_split("train", opt.train_fakes, opt.seed * 2654435761u + 1);
    emit_split("test", opt.test_fakes, opt.seed * 2654435761u + 2);

    std::ofstream f(dir + "/manifest.csv", std::ios::trunc);
    if (!f) throw std::runtime_error("dataset: cannot write manifest in " + dir);
    f << "id,kind,seed,split\n";
    for (const auto& it : manifest.items)
        f << it.id << "," << it.kind << "," << it.seed << "," << it.split << "\n";
    return manifest;
}

DatasetManifest read_manifest(const std::string& dir) {
    std::ifstream f(dir + "/manifest.csv");
    if (!f) throw std::runtime_error("dataset: cannot open manifest in " + dir);
    DatasetManifest m;
    std::string line;
    std::getline(f, line);
    if (line != "id,kind,seed,split") throw std::runtime_error("dataset: unexpected manifest header");
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        DatasetItem item;
        std::string seed;
        std::getline(ss, item.id, ',');
        std::getline(ss, item.kind, ',');
        std::getline(ss, seed, ',');
        std::getline(ss, item.split, ',');
        item.seed = std::stoull(seed);
        m.items.push_back(std::move(item));
    }
    return m;
}

}  // namespace jeca
