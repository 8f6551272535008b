#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <filesystem>

#include "attzoom/attzoom.hpp"
#include "attzoom/ops.hpp"
#include "oracles.hpp"

using namespace az;
using attzoom::AttZoomConfig;

namespace {

Tensor randt(Rng& rng, i64 n, i64 c, i64 h, i64 w, double scale = 1.0) {
    Tensor t(n, c, h, w);
    for (i64 i = 0; i < t.numel(); ++i) t[i] = scale * rng.normal();
    return t;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
    REQUIRE(a.same_shape(b));
    double mx = 0.0;
    for (i64 i = 0; i < a.numel(); ++i) mx = std::max(mx, std::abs(a[i] - b[i]));
    return mx;
}

// Run the layer eagerly on plain tensors.
Tensor run_layer(const Tensor& f, const attzoom::AttZoomParams& p, const AttZoomConfig& cfg,
                 attzoom::AttentionRecord* record = nullptr) {
    ad::Tape tape;
    auto nodes = attzoom::make_nodes(tape, p, cfg, false, "z");
    auto fn = tape.leaf(f, false);
    return attzoom::forward(tape, fn, nodes, cfg, record)->value;
}

}  // namespace

TEST_CASE("config validation") {
    AttZoomConfig cfg;
    CHECK_NOTHROW(cfg.validate());
    AttZoomConfig bad = cfg;
    bad.threshold = 1.5;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = cfg;
    bad.zoom = 1;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = cfg;
    bad.enhance_stride = 3;  // neither 1 nor zoom
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = cfg;
    bad.attention_kh = 4;  // even kernels cannot preserve extents
    CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("config json round-trip") {
    AttZoomConfig cfg;
    cfg.zoom = 3;
    cfg.threshold = 0.25;
    cfg.enhance_stride = 3;
    cfg.enhance_out_channels = 5;
    cfg.straight_through = true;
    AttZoomConfig back = AttZoomConfig::from_json(cfg.to_json());
    CHECK(back.zoom == 3);
    CHECK(back.threshold == 0.25);
    CHECK(back.enhance_stride == 3);
    CHECK(back.enhance_out_channels == 5);
    CHECK(back.straight_through);
}

TEST_CASE("attention map fixtures") {
    AttZoomConfig cfg;
    Rng rng(41);
    Tensor f = randt(rng, 1, 2, 4, 4);

    // zero weights and bias -> zero map
    attzoom::AttZoomParams p = attzoom::init_params(cfg, 2, rng);
    for (i64 i = 0; i < p.W_A.numel(); ++i) p.W_A[i] = 0.0;
    p.b_A[0] = 0.0;
    ad::Tape tape;
    auto nodes = attzoom::make_nodes(tape, p, cfg, false, "z");
    auto a = attzoom::attention_map(tape, tape.leaf(f, false), nodes, cfg);
    CHECK(a->value.max_abs() == 0.0);

    // C=1, 1x1 identity kernel -> map equals the single channel
    AttZoomConfig c1 = cfg;
    c1.attention_kh = c1.attention_kw = 1;
    Rng rng2(42);
    attzoom::AttZoomParams p1 = attzoom::init_params(c1, 1, rng2);
    p1.W_A[0] = 1.0;
    p1.b_A[0] = 0.0;
    Tensor f1 = randt(rng2, 1, 1, 3, 3);
    ad::Tape tape2;
    auto nodes1 = attzoom::make_nodes(tape2, p1, c1, false, "z");
    auto a1 = attzoom::attention_map(tape2, tape2.leaf(f1, false), nodes1, c1);
    CHECK(a1->value.equals(f1));
}

TEST_CASE("gate value fixtures") {
    ad::Tape tape;
    Tensor a(1, 1, 1, 3);
    a[0] = 0.0;   // sigmoid = 0.5 >= 0.5 -> clamps to 1
    a[1] = -1.0;  // sigmoid(-1)
    a[2] = 5.0;   // clamps
    auto g = ad::gate(tape, tape.leaf(a, false), 0.5);
    CHECK(g->value[0] == 1.0);
    CHECK(g->value[1] == doctest::Approx(0.268941421369995).epsilon(1e-12));
    CHECK(g->value[2] == 1.0);

    // threshold near 1: gate equals sigmoid except extreme positives
    auto g2 = ad::gate(tape, tape.leaf(a, false), 0.999999);
    CHECK(g2->value[0] == 0.5);
    CHECK(g2->value[1] == doctest::Approx(0.268941421369995).epsilon(1e-12));

    // range invariant: outputs in (0, 1], exact ones iff clamped
    Rng rng(43);
    Tensor r = randt(rng, 1, 1, 6, 6, 3.0);
    auto gr = ad::gate(tape, tape.leaf(r, false), 0.5);
    for (i64 i = 0; i < r.numel(); ++i) {
        double v = gr->value[i];
        CHECK(v > 0.0);
        CHECK(v <= 1.0);
        if (ops::sigmoid1(r[i]) >= 0.5) {
            CHECK(v == 1.0);
        } else {
            CHECK(v == ops::sigmoid1(r[i]));
        }
    }
}

TEST_CASE("saturated-open gate with a center-tap enhance kernel reduces to upsample_zeros") {
    AttZoomConfig cfg;  // zoom 2, stride 1
    Rng rng(44);
    i64 c = 2;
    Tensor f = randt(rng, 1, c, 4, 4);
    for (i64 i = 0; i < f.numel(); ++i) f[i] = std::abs(f[i]) + 0.1;  // positive input

    attzoom::AttZoomParams p = attzoom::init_params(cfg, c, rng);
    for (i64 i = 0; i < p.W_A.numel(); ++i) p.W_A[i] = 50.0;  // gate saturates to 1
    p.b_A[0] = 0.0;
    for (i64 i = 0; i < p.W_E.numel(); ++i) p.W_E[i] = 0.0;
    for (i64 o = 0; o < c; ++o) p.W_E.at(o, o, 1, 1) = 1.0;  // 1-sparse center tap
    for (i64 i = 0; i < p.b_E.numel(); ++i) p.b_E[i] = 0.0;

    attzoom::AttentionRecord rec;
    Tensor out = run_layer(f, p, cfg, &rec);
    CHECK(out.equals(ops::upsample_zeros(f, 2)));
    CHECK(rec.clamp_mask.sum() == static_cast<double>(rec.clamp_mask.numel()));
    for (i64 i = 0; i < rec.gated.numel(); ++i) CHECK(rec.gated[i] == 1.0);
}

TEST_CASE("saturated-closed gate bounds the output by the max gate value") {
    AttZoomConfig cfg;
    Rng rng(45);
    i64 c = 2;
    Tensor f = randt(rng, 1, c, 4, 4);
    for (i64 i = 0; i < f.numel(); ++i) f[i] = std::abs(f[i]) + 0.1;
    attzoom::AttZoomParams p = attzoom::init_params(cfg, c, rng);
    for (i64 i = 0; i < p.W_A.numel(); ++i) p.W_A[i] = -50.0;
    p.b_A[0] = -50.0;
    for (i64 i = 0; i < p.b_E.numel(); ++i) p.b_E[i] = 0.0;

    attzoom::AttentionRecord rec;
    Tensor out = run_layer(f, p, cfg, &rec);
    double eps = 0.0;
    for (i64 i = 0; i < rec.gated.numel(); ++i) eps = std::max(eps, rec.gated[i]);
    double w1 = 0.0;
    for (i64 i = 0; i < p.W_E.numel(); ++i) w1 += std::abs(p.W_E[i]);
    CHECK(rec.clamp_mask.sum() == 0.0);
    CHECK(out.max_abs() <= w1 * eps * f.max_abs() + 1e-15);
}

TEST_CASE("forward matches the step-by-step composed oracle") {
    Rng rng(46);
    for (int it = 0; it < 40; ++it) {
        AttZoomConfig cfg;
        cfg.zoom = rng.uniform_int(2, 3);
        cfg.enhance_stride = rng.bernoulli(0.5) ? 1 : cfg.zoom;
        i64 c = rng.uniform_int(1, 3);
        i64 n = rng.uniform_int(1, 2);
        i64 hw = rng.uniform_int(3, 6);
        Tensor f = randt(rng, n, c, hw, hw);
        attzoom::AttZoomParams p = attzoom::init_params(cfg, c, rng);

        Tensor out = run_layer(f, p, cfg);
        std::vector<double> be;
        for (i64 i = 0; i < p.b_E.numel(); ++i) be.push_back(p.b_E[i]);
        Tensor ref = oracle::attzoom_forward(f, p.W_A, p.b_A[0], p.W_E, be, cfg.threshold,
                                             cfg.zoom, cfg.enhance_stride);
        CHECK(max_abs_diff(out, ref) <= 1e-12);
    }
}

TEST_CASE("output shape law: H' = mH/stride geometry") {
    Rng rng(47);
    Tensor f = randt(rng, 1, 2, 5, 5);
    AttZoomConfig cfg;  // zoom 2, stride 1
    attzoom::AttZoomParams p = attzoom::init_params(cfg, 2, rng);
    Tensor out1 = run_layer(f, p, cfg);
    CHECK(out1.h() == 10);
    CHECK(out1.w() == 10);

    cfg.enhance_stride = 2;
    Tensor out2 = run_layer(f, p, cfg);
    CHECK(out2.h() == 5);
    CHECK(out2.w() == 5);
}

TEST_CASE("param_count fixtures") {
    AttZoomConfig cfg;
    CHECK(attzoom::param_count(cfg, 3) == 112);
    CHECK(attzoom::param_count(cfg, 64) == 37505);

    AttZoomConfig tiny;
    tiny.attention_kh = tiny.attention_kw = 1;
    tiny.enhance_kh = tiny.enhance_kw = 1;
    tiny.enhance_out_channels = 1;
    tiny.has_bias = false;
    CHECK(attzoom::param_count(tiny, 1) == 2);

    Rng rng(48);
    attzoom::AttZoomParams p = attzoom::init_params(cfg, 3, rng);
    i64 actual = p.W_A.numel() + p.b_A.numel() + p.W_E.numel() + p.b_E.numel();
    CHECK(actual == 112);
}

TEST_CASE("params save/load round-trip") {
    AttZoomConfig cfg;
    cfg.zoom = 3;
    Rng rng(49);
    attzoom::AttZoomParams p = attzoom::init_params(cfg, 2, rng);
    std::string dir = "attzoom_params_rt";
    std::filesystem::create_directories(dir);
    attzoom::save_params(dir, p, cfg);
    attzoom::AttZoomParams back = attzoom::load_params(dir, cfg);
    CHECK(back.W_A.equals(p.W_A));
    CHECK(back.b_A.equals(p.b_A));
    CHECK(back.W_E.equals(p.W_E));
    CHECK(back.b_E.equals(p.b_E));
    std::filesystem::remove_all(dir);
}

TEST_CASE("record matches a recomputed forward") {
    AttZoomConfig cfg;
    Rng rng(50);
    Tensor f = randt(rng, 2, 2, 4, 4);
    attzoom::AttZoomParams p = attzoom::init_params(cfg, 2, rng);
    attzoom::AttentionRecord r1, r2;
    Tensor o1 = run_layer(f, p, cfg, &r1);
    Tensor o2 = run_layer(f, p, cfg, &r2);
    CHECK(o1.equals(o2));
    CHECK(r1.raw.equals(r2.raw));
    CHECK(r1.gated.equals(r2.gated));
    CHECK(r1.clamp_mask.equals(r2.clamp_mask));
}
