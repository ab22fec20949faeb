#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "jeca/decoy.hpp"
#include "jeca/forgery.hpp"
#include "jeca/metrics.hpp"
#include "test_support.hpp"

using namespace jeca;

namespace {

TamperMask diff_mask(const ImageTensor& a, const ImageTensor& b) {
    TamperMask m(a.height, a.width);
    for (int y = 0; y < a.height; ++y)
        for (int x = 0; x < a.width; ++x)
            for (int c = 0; c < 3; ++c)
                if (a.at(y, x, c) != b.at(y, x, c)) {
                    m.at(y, x) = 1;
                    break;
                }
    return m;
}

}  // namespace

TEST_CASE("generate_real is deterministic and shaped") {
    ImageTensor a = generate_real(123, 64);
    ImageTensor b = generate_real(123, 64);
    CHECK(a.v == b.v);
    CHECK(a.height == 64);
    CHECK(a.width == 64);
    for (double v : a.v) CHECK((v >= 0.0 && v <= 1.0));
    ImageTensor c = generate_real(124, 64);
    CHECK(a.v != c.v);
    CHECK_THROWS(generate_real(1, 16));
}

TEST_CASE("most seeds produce a mid-entropy 32x32 patch") {
    // Brute-force entropy scan; the decoy stage needs this texture range.
    int hits = 0;
    const int seeds = 1000;
    for (int s = 0; s < seeds; ++s) {
        ImageTensor img = generate_real(5000 + s, 64);
        bool any = false;
        for (int y = 0; y + 32 <= 64 && !any; y += 8)
            for (int x = 0; x + 32 <= 64; x += 8)
                if (double e = texture_entropy(img, y, x); e >= 4.0 && e <= 6.0) {
                    any = true;
                    break;
                }
        hits += any;
    }
    CHECK(hits >= seeds * 9 / 10);
}

TEST_CASE("splice-rect mask area follows the requested fraction") {
    ImageTensor base = generate_real(9, 64);
    ForgerySpec spec;
    spec.kind = ForgeryKind::splice_rect;
    spec.region_fraction = 0.25;
    spec.rng_seed = 4;
    auto [img, mask] = generate_forgery(base, spec);
    // Chosen rectangle is round(64*sqrt(0.25)) on each side.
    CHECK(mask.area() == 32 * 32);
}

TEST_CASE("forgery masks are exactly the changed pixels") {
    for (ForgeryKind kind :
         {ForgeryKind::splice_rect, ForgeryKind::copy_move, ForgeryKind::blend_ellipse}) {
        for (uint64_t seed = 1; seed <= 6; ++seed) {
            ImageTensor base = generate_real(seed * 31, 48);
            ForgerySpec spec;
            spec.kind = kind;
            spec.region_fraction = 0.15;
            spec.rng_seed = seed;
            auto [img, mask] = generate_forgery(base, spec);
            CHECK(mask.area() > 0);
            // IoU between the stored mask and a recomputed pixel-difference
            // mask must be exactly 1.
            CHECK(iou(mask, diff_mask(img, base)) == 1.0);
            // Complement pixels bit-equal to the base.
            for (int y = 0; y < 48; ++y)
                for (int x = 0; x < 48; ++x)
                    if (!mask.at(y, x))
                        for (int c = 0; c < 3; ++c) CHECK(img.at(y, x, c) == base.at(y, x, c));
        }
    }
}

TEST_CASE("forgery spec validation") {
    ForgerySpec bad;
    bad.region_fraction = 0.75;
    CHECK_THROWS(validate(bad));
    bad.region_fraction = 0.0;
    CHECK_THROWS(validate(bad));
    ImageTensor base = generate_real(3, 48);
    ForgerySpec tiny;
    tiny.region_fraction = 0.001;  // rectangle would be under 4 px
    CHECK_THROWS(generate_forgery(base, tiny));
}

TEST_CASE("dataset generation is reproducible and complete") {
    std::string d1 = testing::scratch_dir("ds_a");
    std::string d2 = testing::scratch_dir("ds_b");
    DatasetOptions opt;
    opt.size = 48;
    opt.train_fakes = 6;
    opt.test_fakes = 3;
    opt.seed = 21;
    DatasetManifest m1 = generate_dataset(d1, opt);
    DatasetManifest m2 = generate_dataset(d2, opt);
    REQUIRE(m1.items.size() == m2.items.size());
    CHECK(m1.items.size() == 2 * (6 + 3));  // equal reals and fakes
    for (size_t i = 0; i < m1.items.size(); ++i) {
        CHECK(m1.items[i].id == m2.items[i].id);
        CHECK(m1.items[i].seed == m2.items[i].seed);
        CHECK(m1.items[i].kind == m2.items[i].kind);
    }
    // Byte-identical imagery across runs.
    for (const char* rel : {"/fake/train_fake_00000.png", "/masks/test_fake_00001.png",
                            "/real/test_real_00002.png"}) {
        std::ifstream f1(d1 + rel, std::ios::binary), f2(d2 + rel, std::ios::binary);
        REQUIRE(f1);
        REQUIRE(f2);
        std::string s1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
        std::string s2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
        CHECK(s1 == s2);
    }
    // Manifest round trip.
    DatasetManifest back = read_manifest(d1);
    CHECK(back.items.size() == m1.items.size());
    CHECK(back.items[1].kind == m1.items[1].kind);
}
