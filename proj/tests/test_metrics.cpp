#include <doctest.h>

#include <cmath>
#include <fstream>

#include "jeca/metrics.hpp"
#include "jeca/rng.hpp"
#include "test_support.hpp"

using namespace jeca;

namespace {

AttackRecord rec(const std::string& id, Label clean, Label attacked, double iou_adv = 0.0) {
    AttackRecord r;
    r.image_id = id;
    r.clean_prediction = clean;
    r.attacked_prediction = attacked;
    r.success = r.recompute_success();
    r.iou_adv = iou_adv;
    r.iou_clean = 0.5;
    return r;
}

}  // namespace

TEST_CASE("asr recount on a hand-built record set") {
    std::vector<AttackRecord> rs;
    // 6 detectable (clean Fake), 3 flipped; 4 undetectable.
    for (int i = 0; i < 3; ++i) rs.push_back(rec("f" + std::to_string(i), Label::Fake, Label::Real));
    for (int i = 0; i < 3; ++i) rs.push_back(rec("k" + std::to_string(i), Label::Fake, Label::Fake));
    for (int i = 0; i < 4; ++i) rs.push_back(rec("r" + std::to_string(i), Label::Real, Label::Real));
    CHECK(asr(rs) == 0.5);

    std::vector<AttackRecord> none = {rec("a", Label::Fake, Label::Fake)};
    CHECK(asr(none) == 0.0);
    std::vector<AttackRecord> undetectable = {rec("a", Label::Real, Label::Real)};
    CHECK_THROWS_AS(asr(undetectable), UndefinedMetricError);
}

TEST_CASE("iou closed forms and symmetry") {
    TamperMask a = testing::rect_mask(32, 0, 0, 4, 4);
    CHECK(iou(a, a) == 1.0);
    TamperMask b = testing::rect_mask(32, 10, 10, 4, 4);
    CHECK(iou(a, b) == 0.0);
    TamperMask e1(32, 32), e2(32, 32);
    CHECK(iou(e1, e2) == 1.0);  // agreement on "nothing tampered"

    // 2x2 masks overlapping in 1 of 3 union pixels.
    TamperMask m1(2, 2), m2(2, 2);
    m1.at(0, 0) = 1;
    m1.at(0, 1) = 1;
    m2.at(0, 0) = 1;
    m2.at(1, 0) = 1;
    CHECK(iou(m1, m2) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
    CHECK(iou(m1, m2) == iou(m2, m1));
    CHECK_THROWS(iou(a, m1));
}

TEST_CASE("joint asr thresholds and monotonicity") {
    std::vector<AttackRecord> rs;
    rs.push_back(rec("a", Label::Fake, Label::Real, 0.05));
    rs.push_back(rec("b", Label::Fake, Label::Real, 0.35));
    rs.push_back(rec("c", Label::Fake, Label::Fake, 0.01));
    rs.push_back(rec("d", Label::Fake, Label::Real, 0.95));
    CHECK(joint_asr(rs, 0.2) == doctest::Approx(0.25).epsilon(1e-15));
    CHECK(joint_asr(rs, 1.0) == asr(rs));  // saturation when every IoU < 1

    double prev = 0.0;
    for (double tau : {0.01, 0.1, 0.2, 0.4, 0.8, 1.0}) {
        double j = joint_asr(rs, tau);
        CHECK(j >= prev);
        CHECK(j <= asr(rs));
        prev = j;
    }
}

TEST_CASE("psnr and ssim reference values") {
    ImageTensor img = testing::random_image(3, 48);
    Perceptual same = perceptual_metrics(img, img);
    CHECK(same.psnr == 100.0);
    CHECK(same.ssim == doctest::Approx(1.0).epsilon(1e-12));

    // Uniform offset 8/255: closed-form PSNR.
    ImageTensor shifted = img;
    for (auto& v : shifted.v) v = std::clamp(v + 8.0 / 255.0, 0.0, 1.0);
    ImageTensor base(48, 48), offs(48, 48);
    for (auto& v : base.v) v = 0.3;
    for (auto& v : offs.v) v = 0.3 + 8.0 / 255.0;
    Perceptual p = perceptual_metrics(base, offs);
    double expect = 10.0 * std::log10(1.0 / ((8.0 / 255.0) * (8.0 / 255.0)));
    CHECK(p.psnr == doctest::Approx(expect).epsilon(1e-12));
    CHECK(expect == doctest::Approx(30.07).epsilon(1e-3));

    // Constant images: SSIM reduces to the luminance term.
    double mx = 0.3, my = 0.3 + 8.0 / 255.0, c1 = 1e-4;
    double lum = (2 * mx * my + c1) / (mx * mx + my * my + c1);
    CHECK(p.ssim == doctest::Approx(lum).epsilon(1e-9));

    // PSNR strictly decreasing in MSE.
    ImageTensor worse = base;
    for (auto& v : worse.v) v = 0.3 + 20.0 / 255.0;
    CHECK(perceptual_metrics(base, worse).psnr < p.psnr);
}

TEST_CASE("bootstrap percentile bounds against exhaustive enumeration at n=3") {
    std::vector<double> sample = {1.0, 4.0, 10.0};
    // All 27 equally likely resamples of size 3.
    std::vector<double> means;
    for (double a : sample)
        for (double b : sample)
            for (double c : sample) means.push_back((a + b + c) / 3.0);
    double lo = percentile(means, 0.025);
    double hi = percentile(means, 0.975);
    Interval got = bootstrap_ci(sample, 10000, 0.95, 20260527);
    CHECK(got.lo == lo);
    CHECK(got.hi == hi);

    Interval degenerate = bootstrap_ci({2.5, 2.5, 2.5, 2.5}, 10000, 0.95, 1);
    CHECK(degenerate.lo == 2.5);
    CHECK(degenerate.hi == 2.5);
    CHECK_THROWS(bootstrap_ci({}, 100, 0.95, 1));

    // Same seed, same interval.
    Interval again = bootstrap_ci(sample, 10000, 0.95, 20260527);
    CHECK(again.lo == got.lo);
    CHECK(again.hi == got.hi);
}

TEST_CASE("jec subset protocols") {
    std::map<std::string, std::vector<AttackRecord>> by_method;
    auto mk = [&](const std::string& method, std::vector<std::string> ids) {
        for (auto& id : ids) by_method[method].push_back(rec(id, Label::Fake, Label::Real));
    };
    mk("m1", {"a", "b", "c"});
    mk("m2", {"b", "c", "d"});
    by_method["m2"].push_back(rec("x", Label::Fake, Label::Fake));  // failure

    // Common-success: {b, c}, below 50 -> falls back to fixed-N.
    JecSubsets cs = jec_subsets(by_method, JecMode::commonSuccess, 100, 20260527);
    CHECK(cs.effective == JecMode::fixedN);
    REQUIRE(!cs.notices.empty());
    CHECK(cs.notices[0].find("< 50") != std::string::npos);

    // Fixed-N emits exactly min(n, feasible) per method.
    JecSubsets fx = jec_subsets(by_method, JecMode::fixedN, 100, 20260527);
    CHECK(fx.n == 3);
    for (const auto& [m, ids] : fx.ids) CHECK(static_cast<int>(ids.size()) == 3);
    JecSubsets fx2 = jec_subsets(by_method, JecMode::fixedN, 2, 20260527);
    CHECK(fx2.n == 2);

    // Reproducible for a fixed seed.
    JecSubsets fx3 = jec_subsets(by_method, JecMode::fixedN, 2, 20260527);
    CHECK(fx2.ids == fx3.ids);

    // Conditional keeps all successes; zero-success methods are excluded.
    by_method["dud"].push_back(rec("z", Label::Fake, Label::Fake));
    JecSubsets cond = jec_subsets(by_method, JecMode::conditional, 100, 20260527);
    CHECK(cond.ids.count("dud") == 0);
    CHECK(cond.ids.at("m1").size() == 3);
    bool noticed = false;
    for (auto& n : cond.notices) noticed |= n.find("dud") != std::string::npos;
    CHECK(noticed);
}

TEST_CASE("jec stub scorer is deterministic and bounded") {
    double s1 = jec_stub_score("", Label::Real, "The image appears authentic; texture is natural.");
    double s2 = jec_stub_score("", Label::Real, "The image appears authentic; texture is natural.");
    CHECK(s1 == s2);
    CHECK(s1 >= 4.0);
    double s3 = jec_stub_score("", Label::Real, "Manipulation artifacts and tampering everywhere.");
    CHECK(s3 <= 2.0);
    for (const char* text : {"", "plain", "authentic tamper artifact natural"}) {
        double s = jec_stub_score("", Label::Fake, text);
        CHECK(s >= 1.0);
        CHECK(s <= 5.0);
    }
}

TEST_CASE("sign test matches exact binomial values") {
    CHECK(sign_test_pvalue(0, 0) == 1.0);
    CHECK(sign_test_pvalue(3, 0) == doctest::Approx(0.25).epsilon(1e-12));       // 2 * (1/8)
    CHECK(sign_test_pvalue(5, 1) == doctest::Approx(2.0 * 7.0 / 64.0).epsilon(1e-12));
    CHECK(sign_test_pvalue(4, 4) == doctest::Approx(1.0).epsilon(1e-12));

    std::vector<AttackRecord> a = {rec("x", Label::Fake, Label::Real), rec("y", Label::Fake, Label::Fake)};
    PairedComparison same = paired_sign_test("a", a, "b", a);
    CHECK(same.p_value == 1.0);  // no discordant pairs
    CHECK(same.discordant_a == 0);
}

TEST_CASE("summary invariants on random record sets") {
    Rng rng(23);
    for (int trial = 0; trial < 10; ++trial) {
        std::vector<AttackRecord> rs;
        int n = 20 + static_cast<int>(rng.below(30));
        for (int i = 0; i < n; ++i) {
            Label clean = rng.uniform() < 0.8 ? Label::Fake : Label::Real;
            Label attacked = rng.uniform() < 0.6 ? Label::Real : Label::Fake;
            AttackRecord r = rec("img" + std::to_string(i), clean, attacked, rng.uniform());
            r.iou_clean = rng.uniform(0.2, 1.0);
            r.ads_clean = rng.uniform();
            r.ads_adv = rng.uniform();
            r.psnr = rng.uniform(20, 50);
            r.ssim = rng.uniform(0.8, 1.0);
            rs.push_back(r);
        }
        bool has_detectable = false;
        for (auto& r : rs) has_detectable |= r.clean_prediction == Label::Fake;
        if (!has_detectable) continue;
        EvaluationSummary s = summarize("t", rs, 0.2, 500, 9);
        CHECK(s.j_asr <= s.asr);
        double expect_liour = s.mean_iou_clean > 0 ? 1.0 - s.mean_iou_adv / s.mean_iou_clean : 0.0;
        CHECK(s.l_iour == doctest::Approx(expect_liour).epsilon(1e-12));
        CHECK(s.asr_ci.lo <= s.asr);
        CHECK(s.asr_ci.hi >= s.asr);
    }
}

TEST_CASE("summary csv and jec manifest write") {
    std::string dir = testing::scratch_dir("metrics_csv");
    std::vector<AttackRecord> rs = {rec("a", Label::Fake, Label::Real, 0.1),
                                    rec("b", Label::Fake, Label::Fake, 0.6)};
    EvaluationSummary s = summarize("demo", rs, 0.2, 200, 1);
    write_summary_csv(dir + "/s.csv", {s});
    std::ifstream f(dir + "/s.csv");
    std::string header;
    std::getline(f, header);
    CHECK(header.find("method,total,detectable,asr") == 0);
    std::string row;
    std::getline(f, row);
    CHECK(row.find("demo,2,2,0.5") == 0);

    JecSubsets js = jec_subsets({{"demo", rs}}, JecMode::conditional, 100, 20260527);
    write_jec_manifest(dir + "/jec.csv", js);
    std::ifstream jf(dir + "/jec.csv");
    std::string first;
    std::getline(jf, first);
    CHECK(first.find("# jec-subset v1 mode=conditional") == 0);
}
