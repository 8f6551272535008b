#include "attzoom/ops.hpp"

#include <algorithm>
#include <cmath>

#include "attzoom/kernels.hpp"

namespace az::ops {

void ConvSpec::validate() const {
    if (out_channels <= 0) throw ConfigError("conv out_channels must be positive");
    if (kernel_h <= 0 || kernel_w <= 0) throw ConfigError("conv kernel extents must be positive");
    if (stride <= 0) throw ConfigError("conv stride must be positive");
    if (padding < 0) throw ConfigError("conv padding must be non-negative");
}

ConvSpec same_conv(i64 out_channels, i64 kh, i64 kw, bool has_bias) {
    if (kh % 2 == 0 || kw % 2 == 0) throw ConfigError("same-padding conv needs odd kernels");
    return ConvSpec{out_channels, kh, kw, 1, (kh - 1) / 2, has_bias};
}

namespace {

kernels::ConvDims conv_dims(const Tensor& input, const Tensor& weights, const ConvSpec& spec) {
    spec.validate();
    if (input.h() == 0 || input.w() == 0) {
        throw ShapeError("conv2d on empty spatial input " + input.shape_str());
    }
    if (weights.c() != input.c()) {
        throw ShapeError("conv2d channel mismatch: input " + input.shape_str() + " vs weights " +
                         weights.shape_str());
    }
    if (weights.n() != spec.out_channels || weights.h() != spec.kernel_h ||
        weights.w() != spec.kernel_w) {
        throw ShapeError("conv2d weights " + weights.shape_str() + " inconsistent with spec");
    }
    i64 ho = spec.out_h(input.h());
    i64 wo = spec.out_w(input.w());
    if (ho <= 0 || wo <= 0) {
        throw ShapeError("conv2d output would be empty for input " + input.shape_str());
    }
    return kernels::ConvDims{input.n(), input.c(), input.h(), input.w(),
                             spec.out_channels, spec.kernel_h, spec.kernel_w,
                             spec.stride, spec.padding, ho, wo, spec.has_bias};
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& weights, const Tensor* bias,
              const ConvSpec& spec) {
    auto d = conv_dims(input, weights, spec);
    if (spec.has_bias) {
        if (bias == nullptr || bias->numel() != spec.out_channels) {
            throw ShapeError("conv2d bias missing or wrong length");
        }
    }
    Tensor out(d.N, d.O, d.HO, d.WO);
    kernels::active().conv2d_forward(input.data(), weights.data(),
                                     bias != nullptr ? bias->data() : nullptr, out.data(), d);
    return out;
}

double sigmoid1(double x) {
    // Stable both directions: never exponentiates a large positive value.
    if (x >= 0.0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    double e = std::exp(x);
    return e / (1.0 + e);
}

Tensor sigmoid(const Tensor& x) {
    Tensor y = x;
    for (i64 i = 0; i < y.numel(); ++i) y[i] = sigmoid1(y[i]);
    return y;
}

Tensor relu(const Tensor& x) {
    Tensor y(x.n(), x.c(), x.h(), x.w());
    kernels::active().relu(x.data(), y.data(), static_cast<size_t>(x.numel()));
    return y;
}

Tensor mul_broadcast(const Tensor& feature, const Tensor& map) {
    if (map.c() != 1) throw ShapeError("mul_broadcast map must have one channel, got " +
                                       map.shape_str());
    if (map.n() != feature.n() || map.h() != feature.h() || map.w() != feature.w()) {
        throw ShapeError("mul_broadcast spatial mismatch: " + feature.shape_str() + " vs " +
                         map.shape_str());
    }
    Tensor out(feature.n(), feature.c(), feature.h(), feature.w());
    i64 plane = feature.h() * feature.w();
    for (i64 n = 0; n < feature.n(); ++n) {
        const double* mp = map.data() + n * plane;
        for (i64 c = 0; c < feature.c(); ++c) {
            const double* fp = feature.data() + (n * feature.c() + c) * plane;
            double* op = out.data() + (n * feature.c() + c) * plane;
            kernels::active().mul(fp, mp, op, static_cast<size_t>(plane));
        }
    }
    return out;
}

Tensor scale_channels(const Tensor& feature, const Tensor& scale) {
    if (scale.n() != feature.n() || scale.c() != feature.c() || scale.h() != 1 ||
        scale.w() != 1) {
        throw ShapeError("scale_channels expects [N,C,1,1] scale, got " + scale.shape_str());
    }
    Tensor out(feature.n(), feature.c(), feature.h(), feature.w());
    i64 plane = feature.h() * feature.w();
    for (i64 n = 0; n < feature.n(); ++n) {
        for (i64 c = 0; c < feature.c(); ++c) {
            double s = scale.at(n, c, 0, 0);
            const double* fp = feature.data() + (n * feature.c() + c) * plane;
            double* op = out.data() + (n * feature.c() + c) * plane;
            for (i64 i = 0; i < plane; ++i) op[i] = s * fp[i];
        }
    }
    return out;
}

Tensor upsample_zeros(const Tensor& x, i64 m) {
    if (m < 2) throw ConfigError("zoom multiplier must be >= 2");
    Tensor out(x.n(), x.c(), x.h() * m, x.w() * m);
    for (i64 n = 0; n < x.n(); ++n) {
        for (i64 c = 0; c < x.c(); ++c) {
            for (i64 h = 0; h < x.h(); ++h) {
                for (i64 w = 0; w < x.w(); ++w) {
                    out.at(n, c, m * h, m * w) = x.at(n, c, h, w);
                }
            }
        }
    }
    return out;
}

Tensor global_avg_pool(const Tensor& x) {
    if (x.h() == 0 || x.w() == 0) {
        throw ShapeError("global_avg_pool on empty spatial input " + x.shape_str());
    }
    Tensor out(x.n(), x.c(), 1, 1);
    i64 plane = x.h() * x.w();
    for (i64 n = 0; n < x.n(); ++n) {
        for (i64 c = 0; c < x.c(); ++c) {
            const double* p = x.data() + (n * x.c() + c) * plane;
            double s = 0.0;
            for (i64 i = 0; i < plane; ++i) s += p[i];
            out.at(n, c, 0, 0) = s / static_cast<double>(plane);
        }
    }
    return out;
}

Tensor max_pool2(const Tensor& x, std::vector<i64>* argmax) {
    i64 ho = x.h() / 2, wo = x.w() / 2;
    if (ho == 0 || wo == 0) throw ShapeError("max_pool2 input too small: " + x.shape_str());
    Tensor out(x.n(), x.c(), ho, wo);
    if (argmax != nullptr) argmax->assign(static_cast<size_t>(out.numel()), 0);
    i64 oi = 0;
    for (i64 n = 0; n < x.n(); ++n) {
        for (i64 c = 0; c < x.c(); ++c) {
            for (i64 h = 0; h < ho; ++h) {
                for (i64 w = 0; w < wo; ++w, ++oi) {
                    double best = -INFINITY;
                    i64 best_idx = 0;
                    for (i64 dh = 0; dh < 2; ++dh) {
                        for (i64 dw = 0; dw < 2; ++dw) {
                            i64 ih = 2 * h + dh, iw = 2 * w + dw;
                            i64 flat = ((n * x.c() + c) * x.h() + ih) * x.w() + iw;
                            double v = x[flat];
                            if (v > best) {
                                best = v;
                                best_idx = flat;
                            }
                        }
                    }
                    out[oi] = best;
                    if (argmax != nullptr) (*argmax)[static_cast<size_t>(oi)] = best_idx;
                }
            }
        }
    }
    return out;
}

Tensor dense(const Tensor& input, const Tensor& weights, const Tensor* bias) {
    i64 in_features = input.c() * input.h() * input.w();
    i64 out_features = weights.n();
    if (weights.c() != in_features || weights.h() != 1 || weights.w() != 1) {
        throw ShapeError("dense weights " + weights.shape_str() + " vs input features " +
                         std::to_string(in_features));
    }
    if (bias != nullptr && bias->numel() != out_features) {
        throw ShapeError("dense bias wrong length");
    }
    Tensor out(input.n(), out_features, 1, 1);
    for (i64 n = 0; n < input.n(); ++n) {
        const double* xp = input.data() + n * in_features;
        for (i64 o = 0; o < out_features; ++o) {
            const double* wp = weights.data() + o * in_features;
            double acc = bias != nullptr ? (*bias)[o] : 0.0;
            for (i64 i = 0; i < in_features; ++i) acc += wp[i] * xp[i];
            out.at(n, o, 0, 0) = acc;
        }
    }
    return out;
}

double softmax_cross_entropy(const Tensor& logits, const std::vector<int>& labels,
                             Tensor* probs) {
    i64 n = logits.n(), k = logits.c();
    if (logits.h() != 1 || logits.w() != 1) {
        throw ShapeError("softmax_cross_entropy expects [N,K,1,1] logits, got " +
                         logits.shape_str());
    }
    if (static_cast<i64>(labels.size()) != n) throw ShapeError("label count mismatch");
    Tensor p(n, k, 1, 1);
    double loss = 0.0;
    for (i64 i = 0; i < n; ++i) {
        int label = labels[static_cast<size_t>(i)];
        if (label < 0 || label >= k) {
            throw DataError("label " + std::to_string(label) + " out of range [0," +
                            std::to_string(k) + ")");
        }
        const double* lp = logits.data() + i * k;
        double mx = *std::max_element(lp, lp + k);
        double denom = 0.0;
        for (i64 j = 0; j < k; ++j) denom += std::exp(lp[j] - mx);
        double log_denom = std::log(denom);
        for (i64 j = 0; j < k; ++j) p.at(i, j, 0, 0) = std::exp(lp[j] - mx) / denom;
        loss += -(lp[label] - mx - log_denom);
    }
    if (probs != nullptr) *probs = p;
    return loss / static_cast<double>(n);
}

Tensor add(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) {
        throw ShapeError("add shape mismatch: " + a.shape_str() + " vs " + b.shape_str());
    }
    Tensor out = a;
    for (i64 i = 0; i < out.numel(); ++i) out[i] += b[i];
    return out;
}

Tensor bilinear_resize(const Tensor& x, i64 out_h, i64 out_w) {
    Tensor out(x.n(), x.c(), out_h, out_w);
    double sh = static_cast<double>(x.h()) / static_cast<double>(out_h);
    double sw = static_cast<double>(x.w()) / static_cast<double>(out_w);
    for (i64 n = 0; n < x.n(); ++n) {
        for (i64 c = 0; c < x.c(); ++c) {
            for (i64 oh = 0; oh < out_h; ++oh) {
                double fy = (static_cast<double>(oh) + 0.5) * sh - 0.5;
                fy = std::clamp(fy, 0.0, static_cast<double>(x.h() - 1));
                i64 y0 = static_cast<i64>(std::floor(fy));
                i64 y1 = std::min(y0 + 1, x.h() - 1);
                double wy = fy - static_cast<double>(y0);
                for (i64 ow = 0; ow < out_w; ++ow) {
                    double fx = (static_cast<double>(ow) + 0.5) * sw - 0.5;
                    fx = std::clamp(fx, 0.0, static_cast<double>(x.w() - 1));
                    i64 x0 = static_cast<i64>(std::floor(fx));
                    i64 x1 = std::min(x0 + 1, x.w() - 1);
                    double wx = fx - static_cast<double>(x0);
                    double v = (1.0 - wy) * ((1.0 - wx) * x.at(n, c, y0, x0) +
                                             wx * x.at(n, c, y0, x1)) +
                               wy * ((1.0 - wx) * x.at(n, c, y1, x0) +
                                     wx * x.at(n, c, y1, x1));
                    out.at(n, c, oh, ow) = v;
                }
            }
        }
    }
    return out;
}

}  // namespace az::ops
