#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <sstream>

#include "jeca/png.hpp"

#include "jeca/morphology.hpp"
#include "jeca/optimizer.hpp"
#include "jeca/rng.hpp"
#include "test_support.hpp"

using namespace jeca;

TEST_CASE("morphology against brute force on 7x7 grids") {
    Rng rng(3);
    for (int trial = 0; trial < 20; ++trial) {
        TamperMask m(7, 7);
        for (auto& b : m.v) b = rng.uniform() < 0.3 ? 1 : 0;
        for (int kernel : {3, 5}) {
            int r = kernel / 2;
            TamperMask d = dilate(m, kernel), e = erode(m, kernel);
            for (int y = 0; y < 7; ++y)
                for (int x = 0; x < 7; ++x) {
                    bool any = false, all = true;
                    for (int dy = -r; dy <= r; ++dy)
                        for (int dx = -r; dx <= r; ++dx) {
                            int yy = y + dy, xx = x + dx;
                            bool in = yy >= 0 && yy < 7 && xx >= 0 && xx < 7 && m.at(yy, xx);
                            any |= in;
                            all &= in;
                        }
                    CHECK(d.at(y, x) == (any ? 1 : 0));
                    CHECK(e.at(y, x) == (all ? 1 : 0));
                }
        }
        // Closing is idempotent.
        TamperMask c1 = morphological_close(m, 3);
        TamperMask c2 = morphological_close(c1, 3);
        CHECK(c1.v == c2.v);
    }
}

TEST_CASE("boundary band closed forms") {
    TamperMask empty(7, 7);
    CHECK(boundary_band(empty, 5, 1).area() == 0);

    TamperMask single(7, 7);
    single.at(3, 3) = 1;
    TamperMask band = boundary_band(single, 5, 1);
    CHECK(band.area() == 24);  // 5x5 block minus the seed pixel
    CHECK(band.at(3, 3) == 0);

    TamperMask full = testing::rect_mask(7, 0, 0, 7, 7);
    CHECK(boundary_band(full, 5, 5).area() == 0);

    // Iterated dilation widens the band.
    TamperMask rect = testing::rect_mask(48, 20, 20, 8, 8);
    CHECK(boundary_band(rect, 5, 5).area() > boundary_band(rect, 5, 1).area());
}

TEST_CASE("warmup scale and gradient clipping") {
    CHECK(warmup_scale(1, 10) == doctest::Approx(0.1));
    CHECK(warmup_scale(5, 10) == doctest::Approx(0.5));
    CHECK(warmup_scale(10, 10) == 1.0);
    CHECK(warmup_scale(50, 10) == 1.0);
    CHECK(warmup_scale(3, 0) == 1.0);

    std::vector<double> g = {3.0, 4.0};  // norm 5
    double norm = clip_gradient_norm(g, 1.0);
    CHECK(norm == doctest::Approx(5.0));
    CHECK(g[0] == doctest::Approx(0.6).epsilon(1e-12));
    CHECK(g[1] == doctest::Approx(0.8).epsilon(1e-12));
    std::vector<double> small = {0.1, 0.2};
    clip_gradient_norm(small, 1.0);
    CHECK(small[0] == 0.1);  // under the cap: untouched
}

TEST_CASE("pgd update sign conventions and projection") {
    const double eps = 8.0 / 255.0;
    Perturbation d(32, 32, eps);
    std::vector<double> zero(d.v.size(), 0.0);
    pgd_update(d, zero, 1.0 / 255.0, eps);
    for (double v : d.v) CHECK(v == 0.0);  // sign(0) = 0

    std::vector<double> up(d.v.size(), 2.5);
    for (auto& v : d.v) v = -eps;  // descending from the boundary stays inside
    pgd_update(d, up, 1.0 / 255.0, eps);
    for (double v : d.v) CHECK(v == -eps);

    for (auto& v : d.v) v = 0.0;
    pgd_update(d, up, 1.0 / 255.0, eps);
    for (double v : d.v) CHECK(v == -1.0 / 255.0);
    for (int i = 0; i < 20; ++i) pgd_update(d, up, 1.0 / 255.0, eps);
    for (double v : d.v) CHECK(v == -eps);  // projection holds under iteration
}

TEST_CASE("gd update arithmetic") {
    PromptEmbedding e(1, 3);
    e.v = {1.0, 2.0, 3.0};
    gd_update(e, {0.5, -0.5, 0.0}, 0.01);
    CHECK(e.v[0] == 1.0 - 0.005);
    CHECK(e.v[1] == 2.0 + 0.005);
    CHECK(e.v[2] == 3.0);
}

TEST_CASE("mask stabilization schedule") {
    AttackConfig cfg;
    const int n = 16;
    MaskState st;
    st.initial = testing::rect_mask(n, 2, 2, 6, 6);
    st.current = st.initial;
    st.soft.assign(static_cast<size_t>(n) * n, 0.0);
    for (int y = 2; y < 8; ++y)
        for (int x = 2; x < 8; ++x) st.soft[static_cast<size_t>(y) * n + x] = 1.0;

    // Freeze window returns the initial mask whatever the fresh prediction.
    std::vector<double> everything(static_cast<size_t>(n) * n, 1.0);
    const TamperMask& frozen = stabilize_mask(st, everything, 25, cfg);
    CHECK(frozen.v == st.initial.v);

    // EMA fixed point: prior == fresh leaves the (already closed) mask alone.
    std::vector<double> same = st.soft;
    const TamperMask& fixed = stabilize_mask(st, same, 60, cfg);
    CHECK(fixed.v == st.initial.v);

    // Off-interval iterations retain the prior mask.
    const TamperMask& held = stabilize_mask(st, everything, 61, cfg);
    CHECK(held.v == st.initial.v);

    // An on-interval update moves toward the fresh prediction.
    MaskState st2 = st;
    std::vector<double> fresh(static_cast<size_t>(n) * n, 0.0);
    for (int y = 9; y < 15; ++y)
        for (int x = 9; x < 15; ++x) fresh[static_cast<size_t>(y) * n + x] = 1.0;
    for (int t = 60; t <= 100; t += 10) stabilize_mask(st2, fresh, t, cfg);
    // After repeated EMA updates the soft state decays below threshold in the
    // old region: 0.8^5 < 0.5.
    CHECK(st2.current.at(4, 4) == 0);
    CHECK(st2.current.at(11, 11) == 1);

    // Stabilization disabled adopts the fresh prediction immediately.
    AttackConfig off = cfg;
    off.mask_stabilization = false;
    MaskState st3 = st;
    const TamperMask& raw = stabilize_mask(st3, fresh, 1, off);
    CHECK(raw.at(11, 11) == 1);
    CHECK(raw.at(4, 4) == 0);
}

namespace {

struct TinyRig {
    ToyDetector det;
    ImageTensor image;
    TamperMask mask;
    AttackConfig cfg;

    explicit TinyRig(uint64_t seed = 9)
        : det(testing::tiny_params(seed)),
          image(testing::random_image(seed + 1, 32, 0.1, 0.9)),
          mask(testing::rect_mask(32, 4, 4, 10, 10)) {
        cfg.iterations = 6;
        cfg.seed = 1234;
        cfg.sigma = 6.0;
        cfg.k_nn = 16;  // tiny vocabulary
    }

    AttackInputs inputs() const {
        AttackInputs in;
        in.image = &image;
        in.oracle_mask = &mask;
        in.metrics_mask = &mask;
        in.image_id = "tiny";
        return in;
    }
};

}  // namespace

TEST_CASE("level-I runs leave the embedding bit-unchanged") {
    TinyRig rig;
    rig.cfg.threat_level = ThreatLevel::I;
    AttackOutcome out = run_attack(rig.det, rig.inputs(), rig.cfg);
    CHECK(out.embedding.v == rig.det.params().prompt.v);
    CHECK(out.record.loss_trace.size() == 6);
}

TEST_CASE("level-II updates the embedding and keeps the projection invariant") {
    TinyRig rig;
    std::vector<double> max_abs;
    AttackOutcome out = run_attack(rig.det, rig.inputs(), rig.cfg, [&](const AttackState& st) {
        max_abs.push_back(st.delta.max_abs());
        // Deltas stay within budget at every iteration boundary.
        CHECK(st.delta.max_abs() <= rig.cfg.epsilon + 1e-12);
    });
    CHECK(max_abs.size() == 6);
    CHECK(out.embedding.v != rig.det.params().prompt.v);
    for (double v : out.adversarial.v) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }
    // Adversarial image respects the budget against the clean image.
    for (size_t i = 0; i < out.adversarial.v.size(); ++i)
        CHECK(std::fabs(out.adversarial.v[i] - rig.image.v[i]) <= rig.cfg.epsilon + 1e-12);
}

TEST_CASE("attack runs are deterministic for a fixed seed") {
    TinyRig rig;
    AttackOutcome a = run_attack(rig.det, rig.inputs(), rig.cfg);
    AttackOutcome b = run_attack(rig.det, rig.inputs(), rig.cfg);
    CHECK(a.adversarial.v == b.adversarial.v);
    CHECK(a.embedding.v == b.embedding.v);
    CHECK(a.record.loss_trace == b.record.loss_trace);
    CHECK(a.record.ads_adv == b.record.ads_adv);
}

TEST_CASE("degenerate masks disable the mislead term and flag the record") {
    TinyRig rig;
    TamperMask empty(32, 32);
    AttackInputs in = rig.inputs();
    in.oracle_mask = &empty;
    in.metrics_mask = &empty;
    AttackOutcome out = run_attack(rig.det, in, rig.cfg);
    bool flagged = false;
    for (auto& f : out.record.flags) flagged |= f == "degraded_mask";
    CHECK(flagged);
    for (auto& e : out.record.trace) CHECK(e.losses.l_mislead == 0.0);
}

TEST_CASE("oracle mode requires a mask") {
    TinyRig rig;
    AttackInputs in = rig.inputs();
    in.oracle_mask = nullptr;
    CHECK_THROWS(run_attack(rig.det, in, rig.cfg));
}

TEST_CASE("predicted mode never reads the oracle mask") {
    TinyRig rig;
    rig.cfg.mask_mode = MaskMode::predicted;
    rig.cfg.iterations = 4;

    AttackInputs with_gt = rig.inputs();
    with_gt.oracle_mask = nullptr;  // unavailable, as deployed
    AttackOutcome a = run_attack(rig.det, with_gt, rig.cfg);

    AttackInputs no_gt = rig.inputs();
    no_gt.oracle_mask = nullptr;
    no_gt.metrics_mask = nullptr;  // metrics-only mask cannot steer the attack
    AttackOutcome b = run_attack(rig.det, no_gt, rig.cfg);
    CHECK(a.adversarial.v == b.adversarial.v);
    CHECK(a.embedding.v == b.embedding.v);
    bool noted = false;
    for (auto& f : b.record.flags) noted |= f == "no_ground_truth";
    CHECK(noted);
}

TEST_CASE("baseline attacks share the record schema") {
    TinyRig rig;
    for (AttackMethod m : {AttackMethod::pgd, AttackMethod::fgsm, AttackMethod::noise}) {
        AttackOutcome out = run_baseline(m, rig.det, rig.inputs(), rig.cfg);
        CHECK(out.record.image_id == "tiny");
        CHECK(out.embedding.v == rig.det.params().prompt.v);
        for (size_t i = 0; i < out.adversarial.v.size(); ++i)
            CHECK(std::fabs(out.adversarial.v[i] - rig.image.v[i]) <= rig.cfg.epsilon + 1e-12);
        CHECK_NOTHROW(validate(out.record));
    }
    // Noise is seeded per image id.
    AttackOutcome n1 = run_baseline(AttackMethod::noise, rig.det, rig.inputs(), rig.cfg);
    AttackOutcome n2 = run_baseline(AttackMethod::noise, rig.det, rig.inputs(), rig.cfg);
    CHECK(n1.adversarial.v == n2.adversarial.v);
    CHECK_THROWS(run_baseline(AttackMethod::jeca2, rig.det, rig.inputs(), rig.cfg));
}

TEST_CASE("trace breakdown satisfies the aggregate identities") {
    TinyRig rig;
    AttackOutcome out = run_attack(rig.det, rig.inputs(), rig.cfg);
    REQUIRE(!out.record.trace.empty());
    for (const TraceEntry& e : out.record.trace) {
        const LossBreakdown& l = e.losses;
        // Each product is rounded separately so FMA contraction cannot skew
        // the comparison; these identities hold exactly.
        double am = rig.cfg.alpha * l.l_mislead;
        double ah = (1 - rig.cfg.alpha) * l.l_hide;
        CHECK(l.l_att == am + ah);
        double t1 = rig.cfg.lambda1 * l.l_att;
        double t2 = rig.cfg.lambda2 * l.l_l2;
        double vis = l.l_det + t1;
        CHECK(l.l_vis == vis + t2);
        double bc = rig.cfg.beta * l.l_coherence;
        CHECK(l.l_text == l.l_semantic_ce + bc);
        CHECK(e.ads >= 0.0);
        CHECK(e.ads <= 1.0);
    }
}

TEST_CASE("debug dump writes attention and decoy PNGs") {
    TinyRig rig;
    rig.cfg.iterations = 2;
    rig.cfg.debug_dump_dir = testing::scratch_dir("opt_dump");
    run_attack(rig.det, rig.inputs(), rig.cfg);
    CHECK(std::filesystem::exists(rig.cfg.debug_dump_dir + "/tiny_attn_t001.png"));
    CHECK(std::filesystem::exists(rig.cfg.debug_dump_dir + "/tiny_attn_t002.png"));
    CHECK(std::filesystem::exists(rig.cfg.debug_dump_dir + "/tiny_decoy.png"));
    AttentionMap back(32, 32);
    png::Raster r = png::read_png(rig.cfg.debug_dump_dir + "/tiny_decoy.png");
    CHECK(r.channels == 1);
    CHECK(r.width == 32);
}

TEST_CASE("visual step is independent of the later text step") {
    // Alternation purity: the first visual update precedes any embedding
    // update, so it must agree bit-exactly between threat levels.
    TinyRig rig;
    rig.cfg.iterations = 1;
    std::vector<double> delta_l1, delta_l2;
    AttackConfig c1 = rig.cfg;
    c1.threat_level = ThreatLevel::I;
    run_attack(rig.det, rig.inputs(), c1,
               [&](const AttackState& st) { delta_l1 = st.delta.v; });
    AttackConfig c2 = rig.cfg;
    c2.threat_level = ThreatLevel::II;
    run_attack(rig.det, rig.inputs(), c2,
               [&](const AttackState& st) { delta_l2 = st.delta.v; });
    CHECK(delta_l1 == delta_l2);
}

TEST_CASE("predicted masks stay frozen through the freeze window") {
    TinyRig rig;
    rig.cfg.mask_mode = MaskMode::predicted;
    rig.cfg.iterations = 12;
    rig.cfg.mask_freeze_iters = 8;
    rig.cfg.mask_update_interval = 2;
    std::vector<std::vector<uint8_t>> per_iter;
    TamperMask initial;
    AttackInputs in = rig.inputs();
    in.oracle_mask = nullptr;
    run_attack(rig.det, in, rig.cfg, [&](const AttackState& st) {
        per_iter.push_back(st.mask.current.v);
        initial = st.mask.initial;
    });
    REQUIRE(per_iter.size() == 12);
    for (int t = 1; t <= 8; ++t) CHECK(per_iter[static_cast<size_t>(t - 1)] == initial.v);
}
