// Release gate: one pass/fail line per top-level requirement. Exits nonzero
// if any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "attzoom/attzoom.hpp"
#include "attzoom/backbones.hpp"
#include "attzoom/data.hpp"
#include "attzoom/interpret.hpp"
#include "attzoom/ops.hpp"
#include "attzoom/optim.hpp"
#include "attzoom/selfcheck.hpp"
#include "oracles.hpp"

using namespace az;

namespace {

// Reference-run observations for the attention-localization criterion
// (3 seeds, tiny_cnn + stage-1 AttZoom, synthetic localization set). The
// measured medians were inside/outside gate ratio 1.95 and Grad-CAM quadrant
// mass 0.42; the pinned bounds leave margin below them while staying strictly
// above the minimum requirements (ratio > 1, mass > 0.25 chance).
constexpr double kMinGateRatio = 1.1;
constexpr double kMinCamMassFraction = 0.30;

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void require(bool cond, const std::string& msg) {
    if (!cond) throw std::runtime_error(msg);
}

Tensor randt(Rng& rng, i64 n, i64 c, i64 h, i64 w, double scale = 1.0) {
    Tensor t(n, c, h, w);
    for (i64 i = 0; i < t.numel(); ++i) t[i] = scale * rng.normal();
    return t;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
    require(a.same_shape(b), "shape mismatch in comparison");
    double mx = 0.0;
    for (i64 i = 0; i < a.numel(); ++i) mx = std::max(mx, std::abs(a[i] - b[i]));
    return mx;
}

// ------------------------------------------------------------ criterion 1 --

void criterion_gradient_fidelity(std::ostringstream& detail) {
    auto t0 = std::chrono::steady_clock::now();
    auto entries = ad::gradient_selfcheck();
    require(entries.size() >= 15, "self-check covers too few ops");
    double worst = 0.0;
    std::string worst_name;
    bool saw_layer = false;
    for (const auto& e : entries) {
        if (e.report.max_rel_error > worst) {
            worst = e.report.max_rel_error;
            worst_name = e.name;
        }
        if (e.name == "attzoom_layer") saw_layer = true;
        require(e.report.max_rel_error <= 1e-6,
                e.name + " max rel error " + std::to_string(e.report.max_rel_error));
    }
    require(saw_layer, "full-layer gradient check missing");
    double elapsed = seconds_since(t0);
    require(elapsed < 120.0, "exceeded the 2 minute budget");
    detail << "worst " << worst_name << " " << worst;
}

// ------------------------------------------------------------ criterion 2 --

void criterion_oracle_equivalence(std::ostringstream& detail) {
    auto t0 = std::chrono::steady_clock::now();
    Rng rng(2026);
    int instances = 0;
    double worst = 0.0;

    // conv2d on random small geometry
    for (int it = 0; it < 90; ++it) {
        i64 n = rng.uniform_int(1, 3), c = rng.uniform_int(1, 3);
        i64 h = rng.uniform_int(1, 7), w = rng.uniform_int(1, 7);
        i64 o = rng.uniform_int(1, 3);
        i64 kh = rng.uniform_int(1, std::min<i64>(3, h));
        i64 kw = rng.uniform_int(1, std::min<i64>(3, w));
        i64 stride = rng.uniform_int(1, 2);
        i64 pad = rng.uniform_int(0, 1);
        if ((h + 2 * pad - kh) / stride + 1 < 1 || (w + 2 * pad - kw) / stride + 1 < 1) {
            continue;
        }
        Tensor x = randt(rng, n, c, h, w);
        Tensor wt = randt(rng, o, c, kh, kw);
        std::vector<double> bias;
        for (i64 i = 0; i < o; ++i) bias.push_back(rng.normal());
        Tensor bt(o, 1, 1, 1);
        for (i64 i = 0; i < o; ++i) bt[i] = bias[static_cast<size_t>(i)];
        ops::ConvSpec spec{o, kh, kw, stride, pad, true};
        worst = std::max(worst, max_abs_diff(ops::conv2d(x, wt, &bt, spec),
                                             oracle::conv2d(x, wt, bias, stride, pad)));
        ++instances;
    }

    // SE block: library op chain vs definition
    for (int it = 0; it < 60; ++it) {
        i64 n = rng.uniform_int(1, 3), c = rng.uniform_int(1, 3);
        i64 h = rng.uniform_int(1, 7), w = rng.uniform_int(1, 7);
        i64 hidden = rng.uniform_int(1, 3);
        Tensor f = randt(rng, n, c, h, w);
        Tensor w1 = randt(rng, hidden, c, 1, 1);
        Tensor w2 = randt(rng, c, hidden, 1, 1);
        std::vector<double> b1, b2;
        Tensor b1t(hidden, 1, 1, 1), b2t(c, 1, 1, 1);
        for (i64 i = 0; i < hidden; ++i) b1.push_back(b1t[i] = rng.normal());
        for (i64 i = 0; i < c; ++i) b2.push_back(b2t[i] = rng.normal());
        Tensor lib = ops::scale_channels(
            f, ops::sigmoid(ops::dense(
                   ops::relu(ops::dense(ops::global_avg_pool(f), w1, &b1t)), w2, &b2t)));
        worst = std::max(worst, max_abs_diff(lib, oracle::se_block(f, w1, b1, w2, b2)));
        ++instances;
    }

    // AttZoom forward
    for (int it = 0; it < 60; ++it) {
        attzoom::AttZoomConfig cfg;
        cfg.zoom = rng.uniform_int(2, 3);
        cfg.enhance_stride = rng.bernoulli(0.5) ? 1 : cfg.zoom;
        i64 n = rng.uniform_int(1, 3), c = rng.uniform_int(1, 3);
        i64 hw = rng.uniform_int(3, 7);
        Tensor f = randt(rng, n, c, hw, hw);
        attzoom::AttZoomParams p = attzoom::init_params(cfg, c, rng);
        ad::Tape tape;
        auto nodes = attzoom::make_nodes(tape, p, cfg, false, "z");
        Tensor out = attzoom::forward(tape, tape.leaf(f, false), nodes, cfg)->value;
        std::vector<double> be;
        for (i64 i = 0; i < p.b_E.numel(); ++i) be.push_back(p.b_E[i]);
        worst = std::max(worst, max_abs_diff(out, oracle::attzoom_forward(
                                                      f, p.W_A, p.b_A[0], p.W_E, be,
                                                      cfg.threshold, cfg.zoom,
                                                      cfg.enhance_stride)));
        ++instances;
    }

    require(instances >= 200, "only " + std::to_string(instances) + " instances");
    require(worst <= 1e-12, "max abs deviation " + std::to_string(worst));
    require(seconds_since(t0) < 60.0, "exceeded the 1 minute budget");
    detail << instances << " instances, max abs dev " << worst;
}

// ------------------------------------------------------------ criterion 3 --

void criterion_structural_laws(std::ostringstream& detail) {
    // exact-placement fixture [[1,2],[3,4]] -> 4x4
    Tensor in(1, 1, 2, 2);
    in[0] = 1;
    in[1] = 2;
    in[2] = 3;
    in[3] = 4;
    Tensor up = ops::upsample_zeros(in, 2);
    require(up.h() == 4 && up.w() == 4, "fixture shape");
    for (i64 y = 0; y < 4; ++y) {
        for (i64 x = 0; x < 4; ++x) {
            double expect = (y % 2 == 0 && x % 2 == 0) ? in.at(0, 0, y / 2, x / 2) : 0.0;
            require(up.at(0, 0, y, x) == expect, "fixture placement");
        }
    }

    // randomized m in {2,3,4}
    Rng rng(31);
    for (int it = 0; it < 30; ++it) {
        i64 m = rng.uniform_int(2, 4);
        i64 n = rng.uniform_int(1, 2), c = rng.uniform_int(1, 3);
        i64 h = rng.uniform_int(1, 5), w = rng.uniform_int(1, 5);
        Tensor x = randt(rng, n, c, h, w);
        Tensor y = ops::upsample_zeros(x, m);
        require(y.h() == m * h && y.w() == m * w, "shape law H' = mH, W' = mW");
        for (i64 nn = 0; nn < n; ++nn) {
            for (i64 cc = 0; cc < c; ++cc) {
                for (i64 yy = 0; yy < m * h; ++yy) {
                    for (i64 xx = 0; xx < m * w; ++xx) {
                        double expect = (yy % m == 0 && xx % m == 0)
                                            ? x.at(nn, cc, yy / m, xx / m)
                                            : 0.0;
                        require(y.at(nn, cc, yy, xx) == expect, "placement law");
                    }
                }
            }
        }
    }

    // gate range + exact clamp law + mask pass-through where clamped
    ad::Tape tape;
    Tensor a = randt(rng, 2, 1, 6, 6, 3.0);
    auto gate = ad::gate(tape, tape.leaf(a, false), 0.5);
    Tensor f = randt(rng, 2, 3, 6, 6);
    Tensor masked = ops::mul_broadcast(f, gate->value);
    for (i64 i = 0; i < a.numel(); ++i) {
        double g = gate->value[i];
        require(g > 0.0 && g <= 1.0, "gate outside (0,1]");
        bool clamped = ops::sigmoid1(a[i]) >= 0.5;
        require((g == 1.0) == clamped, "exact 1 iff sigmoid >= threshold");
    }
    for (i64 n = 0; n < 2; ++n) {
        for (i64 c = 0; c < 3; ++c) {
            for (i64 y = 0; y < 6; ++y) {
                for (i64 x = 0; x < 6; ++x) {
                    if (gate->value.at(n, 0, y, x) == 1.0) {
                        require(masked.at(n, c, y, x) == f.at(n, c, y, x),
                                "mask must pass clamped positions through exactly");
                    }
                }
            }
        }
    }
    detail << "all exact";
}

// ------------------------------------------------------------ criterion 4 --

void criterion_training_determinism(std::ostringstream& detail) {
    data::SyntheticLocalizationSpec sspec;
    sspec.classes = 2;
    sspec.image_size = 16;
    sspec.patch_size = 4;
    sspec.samples = 80;
    sspec.seed = 5;
    data::Dataset full = data::generate_synthetic(sspec);
    auto [train_set, val_set] = data::split(full, 0.2, 9);

    model::ModelSpec mspec;
    mspec.arch = model::Arch::TinyCnn;
    mspec.num_classes = 2;
    mspec.in_h = mspec.in_w = 16;
    mspec.seed = 40;
    mspec.insertions.push_back({1, {}});

    optim::TrainConfig tcfg;
    tcfg.batch_size = 32;
    tcfg.learning_rate = 3e-3;
    tcfg.max_epochs = 3;
    tcfg.seed = 17;

    model::Model m1 = model::Model::build(mspec);
    model::Model m2 = model::Model::build(mspec);
    optim::TrainResult r1 = optim::train(m1, train_set, val_set, tcfg);
    optim::TrainResult r2 = optim::train(m2, train_set, val_set, tcfg);
    require(r1.log == r2.log, "identical runs produced different TrainLogs");
    require(r1.log.to_ldjson() == r2.log.to_ldjson(), "serialized logs differ");
    for (const auto& [name, t] : r1.best_params) {
        require(t.equals(r2.best_params.at(name)), "best params differ at " + name);
    }
    for (const auto& e : r1.log.epochs) {
        require(e.val_top5 >= e.val_top1, "top5 < top1 in an epoch record");
    }

    // patience-5 rule on a constructed worsening trace
    optim::EarlyStopper stopper(5);
    std::vector<double> trace = {0.2, 0.4, 0.6, 0.5, 0.5, 0.6, 0.55, 0.5};
    int stop_epoch = 0;
    for (size_t i = 0; i < trace.size(); ++i) {
        if (stopper.update(static_cast<int>(i) + 1, trace[i])) {
            stop_epoch = static_cast<int>(i) + 1;
            break;
        }
    }
    require(stop_epoch == 8, "patience-5 stop fired at epoch " + std::to_string(stop_epoch));
    require(stopper.best_epoch == 3, "ties must keep the earliest best epoch");
    detail << "bitwise logs, stop at epoch 8";
}

// ------------------------------------------------------- criteria 5 and 6 --

struct SmokeRun {
    double top1 = 0.0;
    model::Model model;              // trained attzoom-arm model
    data::NormStats norm;
    double gate_ratio = 0.0;         // mean gated attention inside / outside quadrant
    double cam_mass = 0.0;           // Grad-CAM mass fraction inside quadrant
};

struct SmokeState {
    bool ran = false;
    std::vector<double> baseline_top1;
    std::vector<SmokeRun> attzoom_runs;
    double max_arm_seconds = 0.0;
};

SmokeState g_smoke;

double median3(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    return v[1];
}

double best_top1(const optim::TrainLog& log) {
    double best = 0.0;
    for (const auto& e : log.epochs) best = std::max(best, e.val_top1);
    return best;
}

void run_smoke_trainings() {
    data::SyntheticLocalizationSpec sspec;  // 4 classes, 32x32
    sspec.samples = 2400;
    sspec.seed = 100;
    data::Dataset full = data::generate_synthetic(sspec);
    auto [train_set, val_set] = data::split(full, 400.0 / 2400.0, 100);
    require(train_set.size() == 2000 && val_set.size() == 400, "bad split sizes");

    optim::TrainConfig tcfg;
    tcfg.batch_size = 64;
    tcfg.learning_rate = 1e-3;
    tcfg.max_epochs = 15;
    tcfg.augment = false;

    for (std::uint64_t seed : {1ull, 2ull, 3ull}) {
        model::ModelSpec base;
        base.arch = model::Arch::TinyCnn;
        base.num_classes = 4;
        base.seed = seed;
        model::ModelSpec att = base;
        att.insertions.push_back({1, {}});
        tcfg.seed = seed;

        auto t0 = std::chrono::steady_clock::now();
        model::Model mb = model::Model::build(base);
        optim::TrainResult rb = optim::train(mb, train_set, val_set, tcfg);
        g_smoke.max_arm_seconds = std::max(g_smoke.max_arm_seconds, seconds_since(t0));
        g_smoke.baseline_top1.push_back(best_top1(rb.log));

        t0 = std::chrono::steady_clock::now();
        SmokeRun run;
        run.model = model::Model::build(att);
        optim::TrainResult ra = optim::train(run.model, train_set, val_set, tcfg);
        g_smoke.max_arm_seconds = std::max(g_smoke.max_arm_seconds, seconds_since(t0));
        run.top1 = best_top1(ra.log);
        run.norm = ra.norm;

        // attention localization measurements on the val split
        i64 n_eval = 100;
        std::vector<i64> idx;
        for (i64 i = 0; i < n_eval; ++i) idx.push_back(i);
        auto [imgs, labels] = data::take(val_set, idx);
        Tensor normed = run.norm.apply(imgs);
        ad::Tape tape;
        auto fwd = run.model.forward(tape, normed, false, true);
        const Tensor& gated = fwd.attention.front().gated;
        i64 gh = gated.h(), gw = gated.w();
        double in_sum = 0.0, out_sum = 0.0;
        i64 in_count = 0, out_count = 0;
        for (i64 i = 0; i < n_eval; ++i) {
            int q = val_set.quadrants[static_cast<size_t>(i)];
            i64 qy = (q / 2) * (gh / 2), qx = (q % 2) * (gw / 2);
            for (i64 y = 0; y < gh; ++y) {
                for (i64 x = 0; x < gw; ++x) {
                    bool inside = y >= qy && y < qy + gh / 2 && x >= qx && x < qx + gw / 2;
                    double v = gated.at(i, 0, y, x);
                    if (inside) {
                        in_sum += v;
                        ++in_count;
                    } else {
                        out_sum += v;
                        ++out_count;
                    }
                }
            }
        }
        run.gate_ratio = (in_sum / in_count) / (out_sum / out_count);

        i64 n_cam = 40;
        std::string layer = run.model.default_cam_layer();
        double mass_total = 0.0;
        i64 mass_samples = 0;
        for (i64 i = 0; i < n_cam; ++i) {
            auto [img, lab] = data::take(val_set, {i});
            interpret::SaliencyMap cam =
                interpret::grad_cam(run.model, run.norm.apply(img), lab[0], layer);
            double total = cam.values.sum();
            if (total <= 0.0) continue;  // degenerate all-zero map
            int q = val_set.quadrants[static_cast<size_t>(i)];
            i64 h = cam.values.h(), w = cam.values.w();
            i64 qy = (q / 2) * (h / 2), qx = (q % 2) * (w / 2);
            double inside = 0.0;
            for (i64 y = qy; y < qy + h / 2; ++y) {
                for (i64 x = qx; x < qx + w / 2; ++x) inside += cam.values.at(0, 0, y, x);
            }
            mass_total += inside / total;
            ++mass_samples;
        }
        require(mass_samples > 0, "all Grad-CAM maps degenerate");
        run.cam_mass = mass_total / static_cast<double>(mass_samples);
        g_smoke.attzoom_runs.push_back(std::move(run));
    }
    g_smoke.ran = true;
}

void criterion_learning_smoke(std::ostringstream& detail) {
    if (!g_smoke.ran) run_smoke_trainings();
    std::vector<double> att_top1;
    for (const auto& r : g_smoke.attzoom_runs) att_top1.push_back(r.top1);
    double base_med = median3(g_smoke.baseline_top1);
    double att_med = median3(att_top1);
    require(base_med >= 0.90, "baseline median top1 " + std::to_string(base_med));
    require(att_med >= 0.90, "attzoom median top1 " + std::to_string(att_med));
    require(att_med >= base_med - 0.03,
            "attzoom trails baseline by more than 3 points");
    require(g_smoke.max_arm_seconds < 600.0, "an arm exceeded the 10 minute budget");
    detail << "baseline " << base_med << ", attzoom " << att_med << ", slowest arm "
           << g_smoke.max_arm_seconds << "s";
}

void criterion_attention_localization(std::ostringstream& detail) {
    if (!g_smoke.ran) run_smoke_trainings();
    std::vector<double> ratios, masses;
    for (const auto& r : g_smoke.attzoom_runs) {
        ratios.push_back(r.gate_ratio);
        masses.push_back(r.cam_mass);
    }
    double ratio_med = median3(ratios);
    double mass_med = median3(masses);
    require(ratio_med > kMinGateRatio,
            "median gate inside/outside ratio " + std::to_string(ratio_med));
    require(mass_med > kMinCamMassFraction,
            "median Grad-CAM quadrant mass " + std::to_string(mass_med));
    detail << "gate ratio " << ratio_med << ", cam mass " << mass_med;
}

// ------------------------------------------------------------ criterion 7 --

void criterion_loader_bit_exactness(std::ostringstream& detail) {
    // round-trip through real files, byte for byte
    std::vector<unsigned char> bytes;
    unsigned state = 4242;
    for (int rec = 0; rec < 4; ++rec) {
        bytes.push_back(static_cast<unsigned char>(rec % 20));
        bytes.push_back(static_cast<unsigned char>((rec * 31) % 100));
        for (int i = 0; i < 3072; ++i) {
            state = state * 1664525u + 1013904223u;
            bytes.push_back(static_cast<unsigned char>(state >> 24));
        }
    }
    std::string in = "acc_cifar_in.bin", out = "acc_cifar_out.bin";
    {
        std::FILE* f = std::fopen(in.c_str(), "wb");
        std::fwrite(bytes.data(), 1, bytes.size(), f);
        std::fclose(f);
    }
    data::Dataset ds = data::load_cifar_binary(in, data::CifarVariant::Cifar100);
    data::write_cifar_binary(out, ds, data::CifarVariant::Cifar100);
    std::vector<unsigned char> back(bytes.size());
    {
        std::FILE* f = std::fopen(out.c_str(), "rb");
        size_t got = std::fread(back.data(), 1, back.size() + 1, f);
        std::fclose(f);
        require(got == bytes.size(), "round-trip changed the file length");
    }
    require(back == bytes, "round-trip not byte identical");
    std::remove(in.c_str());
    std::remove(out.c_str());

    // exactly one sample from a 3074-byte file
    std::vector<unsigned char> one(3074, 0);
    one[1] = 3;
    {
        std::FILE* f = std::fopen(in.c_str(), "wb");
        std::fwrite(one.data(), 1, one.size(), f);
        std::fclose(f);
    }
    data::Dataset single = data::load_cifar_binary(in, data::CifarVariant::Cifar100);
    require(single.size() == 1, "3074 bytes must parse to one sample");
    require(single.images.c() == 3 && single.images.h() == 32 && single.images.w() == 32,
            "sample must be 3x32x32");
    std::remove(in.c_str());

    // malformed length rejected with the documented error
    std::vector<unsigned char> bad(3000, 0);
    {
        std::FILE* f = std::fopen(in.c_str(), "wb");
        std::fwrite(bad.data(), 1, bad.size(), f);
        std::fclose(f);
    }
    bool threw = false;
    try {
        data::load_cifar_binary(in, data::CifarVariant::Cifar100);
    } catch (const FormatError& e) {
        threw = std::string(e.what()).find("3074") != std::string::npos;
    }
    std::remove(in.c_str());
    require(threw, "malformed length not rejected with the documented error");
    detail << "byte identical";
}

// ------------------------------------------------------------ criterion 8 --

void criterion_interpretability_contracts(std::ostringstream& detail) {
    Rng rng(808);
    Tensor img = randt(rng, 1, 3, 8, 8, 0.5);
    interpret::SaliencyMap sal;
    sal.values = Tensor(1, 1, 8, 8);
    for (i64 i = 0; i < 64; ++i) sal.values[i] = rng.uniform();

    auto [id0, g0] = interpret::warp_image(img, sal, 0.0);
    require(id0.equals(img), "lambda 0 warp is not the exact identity");

    interpret::SaliencyMap uniform;
    uniform.values = Tensor(1, 1, 8, 8, 0.42);
    auto [idu, gu] = interpret::warp_image(img, uniform, 1.0);
    require(idu.equals(img), "uniform saliency warp is not the identity");

    for (int it = 0; it < 100; ++it) {
        i64 h = rng.uniform_int(4, 12), w = rng.uniform_int(4, 12);
        interpret::SaliencyMap s;
        s.values = Tensor(1, 1, h, w);
        for (i64 i = 0; i < s.values.numel(); ++i) s.values[i] = rng.uniform();
        Tensor im(1, 1, h, w, 0.5);
        auto [outp, grid] = interpret::warp_image(im, s, rng.uniform());
        for (size_t j = 1; j < grid.src_x.size(); ++j) {
            require(grid.src_x[j] > grid.src_x[j - 1], "grid x not strictly monotone");
        }
        for (size_t j = 1; j < grid.src_y.size(); ++j) {
            require(grid.src_y[j] > grid.src_y[j - 1], "grid y not strictly monotone");
        }
    }

    // 2x2 black/white PPM byte payload
    Tensor bw(1, 3, 2, 2);
    for (i64 c = 0; c < 3; ++c) {
        bw.at(0, c, 0, 1) = 1.0;
        bw.at(0, c, 1, 1) = 1.0;
    }
    std::string path = "acc_bw.ppm";
    interpret::write_image(bw, path);
    std::vector<unsigned char> got;
    {
        std::FILE* f = std::fopen(path.c_str(), "rb");
        unsigned char buf[64];
        size_t n = std::fread(buf, 1, sizeof(buf), f);
        got.assign(buf, buf + n);
        std::fclose(f);
    }
    std::remove(path.c_str());
    std::string header = "P6\n2 2\n255\n";
    unsigned char payload[12] = {0, 0, 0, 255, 255, 255, 0, 0, 0, 255, 255, 255};
    require(got.size() == header.size() + 12, "PPM file size");
    require(std::string(got.begin(), got.begin() + static_cast<long>(header.size())) == header,
            "PPM header");
    for (size_t i = 0; i < 12; ++i) {
        require(got[header.size() + i] == payload[i], "PPM payload byte");
    }
    detail << "all contracts hold";
}

// ------------------------------------------------------------ criterion 9 --

void criterion_parameter_overhead(std::ostringstream& detail) {
    attzoom::AttZoomConfig cfg;
    i64 layer = attzoom::param_count(cfg, 64);
    require(layer == 37505, "param_count(C=64) = " + std::to_string(layer));

    model::ModelSpec spec;
    spec.arch = model::Arch::MiniResnet;
    spec.num_classes = 10;
    spec.seed = 1;
    model::Model m = model::Model::build(spec);
    i64 total = m.param_count();
    require(total == 2627722, "mini_resnet total = " + std::to_string(total));
    double frac = static_cast<double>(layer) / static_cast<double>(total);
    require(frac < 0.02, "overhead fraction " + std::to_string(frac));
    detail << "37505 params, " << 100.0 * frac << "% of mini_resnet";
}

}  // namespace

int main() {
    struct Criterion {
        int id;
        const char* name;
        std::function<void(std::ostringstream&)> body;
    };
    std::vector<Criterion> criteria = {
        {1, "gradient fidelity", criterion_gradient_fidelity},
        {2, "oracle equivalence", criterion_oracle_equivalence},
        {3, "structural laws", criterion_structural_laws},
        {4, "training determinism and protocol", criterion_training_determinism},
        {5, "desk-scale learning smoke", criterion_learning_smoke},
        {6, "attention localization", criterion_attention_localization},
        {7, "loader bit-exactness", criterion_loader_bit_exactness},
        {8, "interpretability contracts", criterion_interpretability_contracts},
        {9, "parameter overhead", criterion_parameter_overhead},
    };

    int failures = 0;
    for (const auto& c : criteria) {
        auto t0 = std::chrono::steady_clock::now();
        std::ostringstream detail;
        try {
            c.body(detail);
            std::printf("PASS  %d  %-36s (%.1fs) %s\n", c.id, c.name, seconds_since(t0),
                        detail.str().c_str());
        } catch (const std::exception& e) {
            ++failures;
            std::printf("FAIL  %d  %-36s (%.1fs) %s\n", c.id, c.name, seconds_since(t0),
                        e.what());
        }
        std::fflush(stdout);
    }
    if (failures > 0) {
        std::printf("%d of 9 criteria failed\n", failures);
        return 1;
    }
    std::printf("all 9 criteria passed\n");
    return 0;
}
