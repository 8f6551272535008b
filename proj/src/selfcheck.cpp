#include "attzoom/selfcheck.hpp"

#include <cmath>

#include "attzoom/attzoom.hpp"
#include "attzoom/rng.hpp"

namespace az::ad {

namespace {

Tensor random_tensor(Rng& rng, i64 n, i64 c, i64 h, i64 w, double scale = 1.0) {
    Tensor t(n, c, h, w);
    for (i64 i = 0; i < t.numel(); ++i) t[i] = scale * rng.normal();
    return t;
}

// Keep every element at least `margin` away from the given point.
void push_away(Tensor& t, double point, double margin) {
    for (i64 i = 0; i < t.numel(); ++i) {
        double d = t[i] - point;
        if (std::abs(d) < margin) t[i] = point + (d >= 0.0 ? margin : -margin) * 2.0;
    }
}

// A values whose sigmoid stays `margin` away from the threshold.
void push_gate_margin(Tensor& a, double threshold, double margin) {
    for (i64 i = 0; i < a.numel(); ++i) {
        double s = ops::sigmoid1(a[i]);
        if (std::abs(s - threshold) < margin) {
            double target = s >= threshold ? threshold + 2.0 * margin : threshold - 2.0 * margin;
            a[i] = std::log(target / (1.0 - target));
        }
    }
}

// Separate 2x2 pooling windows so finite differences cannot flip the argmax.
void separate_pool_ties(Tensor& t, double margin) {
    for (i64 n = 0; n < t.n(); ++n) {
        for (i64 c = 0; c < t.c(); ++c) {
            for (i64 h = 0; h + 1 < t.h(); h += 2) {
                for (i64 w = 0; w + 1 < t.w(); w += 2) {
                    double bump = 0.0;
                    for (i64 dh = 0; dh < 2; ++dh) {
                        for (i64 dw = 0; dw < 2; ++dw) {
                            t.at(n, c, h + dh, w + dw) += bump;
                            bump += 4.0 * margin;
                        }
                    }
                }
            }
        }
    }
}

}  // namespace

std::vector<SelfCheckEntry> gradient_selfcheck(std::uint64_t seed) {
    std::vector<SelfCheckEntry> out;
    Rng rng(seed);
    const double margin = 1e-3;

    auto check = [&](const std::string& name, const std::map<std::string, Tensor>& params,
                     const ForwardFn& fn) {
        out.push_back({name, grad_check(fn, params)});
    };

    {
        Tensor x = random_tensor(rng, 1, 2, 3, 3);
        check("sum_square", {{"x", x}}, [](Tape& t, const std::map<std::string, NodePtr>& p) {
            auto x = p.at("x");
            return sum(t, mul(t, x, x));
        });
    }
    {
        std::map<std::string, Tensor> p{{"x", random_tensor(rng, 1, 2, 5, 5)},
                                        {"w", random_tensor(rng, 3, 2, 3, 3, 0.5)},
                                        {"b", random_tensor(rng, 3, 1, 1, 1, 0.2)}};
        check("conv2d_same", p, [](Tape& t, const std::map<std::string, NodePtr>& p) {
            auto y = conv2d(t, p.at("x"), p.at("w"), p.at("b"), ops::same_conv(3, 3, 3));
            return sum(t, mul(t, y, y));
        });
        check("conv2d_strided", p, [](Tape& t, const std::map<std::string, NodePtr>& p) {
            ops::ConvSpec spec{3, 3, 3, 2, 0, true};
            auto y = conv2d(t, p.at("x"), p.at("w"), p.at("b"), spec);
            return sum(t, mul(t, y, y));
        });
    }
    {
        Tensor x = random_tensor(rng, 2, 1, 3, 3, 2.0);
        check("sigmoid", {{"x", x}}, [](Tape& t, const std::map<std::string, NodePtr>& p) {
            return sum(t, mul(t, sigmoid(t, p.at("x")), sigmoid(t, p.at("x"))));
        });
    }
    {
        Tensor x = random_tensor(rng, 1, 2, 4, 4);
        push_away(x, 0.0, margin);
        check("relu", {{"x", x}}, [](Tape& t, const std::map<std::string, NodePtr>& p) {
            auto y = relu(t, p.at("x"));
            return sum(t, mul(t, y, y));
        });
    }
    {
        Tensor a = random_tensor(rng, 1, 1, 4, 4, 2.0);
        push_gate_margin(a, 0.5, margin);
        check("gate", {{"a", a}}, [](Tape& t, const std::map<std::string, NodePtr>& p) {
            auto y = gate(t, p.at("a"), 0.5);
            return sum(t, mul(t, y, y));
        });
    }
    {
        std::map<std::string, Tensor> p{{"f", random_tensor(rng, 1, 3, 3, 3)},
                                        {"m", random_tensor(rng, 1, 1, 3, 3)}};
        check("mul_broadcast", p, [](Tape& t, const std::map<std::string, NodePtr>& p) {
            auto y = mul_broadcast(t, p.at("f"), p.at("m"));
            return sum(t, mul(t, y, y));
        });
    }
    {
        std::map<std::string, Tensor> p{{"f", random_tensor(rng, 1, 3, 3, 3)},
                                        {"s", random_tensor(rng, 1, 3, 1, 1)}};
        check("scale_channels", p, [](Tape& t, const std::map<std::string, NodePtr>& p) {
            auto y = scale_channels(t, p.at("f"), p.at("s"));
            return sum(t, mul(t, y, y));
        });
    }
    {
        Tensor x = random_tensor(rng, 1, 2, 3, 3);
        check("upsample_zeros_m2", {{"x", x}},
              [](Tape& t, const std::map<std::string, NodePtr>& p) {
                  auto y = upsample_zeros(t, p.at("x"), 2);
                  return sum(t, mul(t, y, y));
              });
        check("upsample_zeros_m3", {{"x", x}},
              [](Tape& t, const std::map<std::string, NodePtr>& p) {
                  auto y = upsample_zeros(t, p.at("x"), 3);
                  return sum(t, mul(t, y, y));
              });
    }
    {
        Tensor x = random_tensor(rng, 1, 2, 4, 4);
        separate_pool_ties(x, margin);
        check("max_pool2", {{"x", x}}, [](Tape& t, const std::map<std::string, NodePtr>& p) {
            auto y = max_pool2(t, p.at("x"));
            return sum(t, mul(t, y, y));
        });
    }
    {
        Tensor x = random_tensor(rng, 2, 3, 4, 4);
        check("global_avg_pool", {{"x", x}},
              [](Tape& t, const std::map<std::string, NodePtr>& p) {
                  auto y = global_avg_pool(t, p.at("x"));
                  return sum(t, mul(t, y, y));
              });
    }
    {
        std::map<std::string, Tensor> p{{"x", random_tensor(rng, 2, 4, 1, 1)},
                                        {"w", random_tensor(rng, 3, 4, 1, 1, 0.5)},
                                        {"b", random_tensor(rng, 3, 1, 1, 1, 0.2)}};
        check("dense", p, [](Tape& t, const std::map<std::string, NodePtr>& p) {
            auto y = dense(t, p.at("x"), p.at("w"), p.at("b"));
            return sum(t, mul(t, y, y));
        });
    }
    {
        Tensor x = random_tensor(rng, 3, 4, 1, 1);
        check("softmax_cross_entropy", {{"x", x}},
              [](Tape& t, const std::map<std::string, NodePtr>& p) {
                  return softmax_cross_entropy(t, p.at("x"), {0, 2, 3});
              });
    }
    {
        Tensor x = random_tensor(rng, 1, 2, 3, 3);
        check("fanout_add", {{"x", x}}, [](Tape& t, const std::map<std::string, NodePtr>& p) {
            auto y = add(t, p.at("x"), p.at("x"));
            return sum(t, mul(t, y, y));
        });
    }
    {
        // Full AttZoom layer; resample until the gate input clears the
        // threshold boundary by the margin.
        attzoom::AttZoomConfig cfg;
        std::map<std::string, Tensor> p;
        for (int attempt = 0; attempt < 50; ++attempt) {
            p = {{"F", random_tensor(rng, 1, 2, 4, 4)},
                 {"W_A", random_tensor(rng, 1, 2, 3, 3, 0.5)},
                 {"b_A", random_tensor(rng, 1, 1, 1, 1, 0.3)},
                 {"W_E", random_tensor(rng, 2, 2, 3, 3, 0.5)},
                 {"b_E", random_tensor(rng, 2, 1, 1, 1, 0.2)}};
            Tensor a = ops::conv2d(p.at("F"), p.at("W_A"), &p.at("b_A"),
                                   ops::same_conv(1, 3, 3));
            bool ok = true;
            for (i64 i = 0; i < a.numel(); ++i) {
                if (std::abs(ops::sigmoid1(a[i]) - cfg.threshold) <= margin) ok = false;
            }
            if (ok) break;
        }
        check("attzoom_layer", p, [cfg](Tape& t, const std::map<std::string, NodePtr>& p) {
            attzoom::AttZoomNodes nodes{p.at("W_A"), p.at("b_A"), p.at("W_E"), p.at("b_E"),
                                        nullptr};
            auto y = attzoom::forward(t, p.at("F"), nodes, cfg);
            return sum(t, mul(t, y, y));
        });
    }
    return out;
}

}  // namespace az::ad
