#include <algorithm>
#include <cmath>

#include "attzoom/kernels.hpp"

// Scalar reference kernels. These define the accumulation order every other
// variant must reproduce: per output element, the reduction runs over
// (c, kh, kw) (forward) or (o, kh, kw) (backward-input) sequentially.

namespace az::kernels {

namespace {

inline i64 idx4(i64 a, i64 b, i64 c, i64 d, i64 B, i64 C, i64 D) {
    return ((a * B + b) * C + c) * D + d;
}

void conv2d_forward_scalar(const double* x, const double* w, const double* bias, double* y,
                           const ConvDims& d) {
    for (i64 n = 0; n < d.N; ++n) {
        for (i64 o = 0; o < d.O; ++o) {
            for (i64 ho = 0; ho < d.HO; ++ho) {
                for (i64 wo = 0; wo < d.WO; ++wo) {
                    double acc = d.has_bias ? bias[o] : 0.0;
                    for (i64 c = 0; c < d.C; ++c) {
                        for (i64 kh = 0; kh < d.KH; ++kh) {
                            i64 ih = ho * d.stride - d.pad + kh;
                            if (ih < 0 || ih >= d.H) continue;
                            for (i64 kw = 0; kw < d.KW; ++kw) {
                                i64 iw = wo * d.stride - d.pad + kw;
                                if (iw < 0 || iw >= d.W) continue;
                                acc += w[idx4(o, c, kh, kw, d.C, d.KH, d.KW)] *
                                       x[idx4(n, c, ih, iw, d.C, d.H, d.W)];
                            }
                        }
                    }
                    y[idx4(n, o, ho, wo, d.O, d.HO, d.WO)] = acc;
                }
            }
        }
    }
}

void conv2d_backward_input_scalar(const double* gy, const double* w, double* gx,
                                  const ConvDims& d) {
    for (i64 n = 0; n < d.N; ++n) {
        for (i64 c = 0; c < d.C; ++c) {
            for (i64 ih = 0; ih < d.H; ++ih) {
                for (i64 iw = 0; iw < d.W; ++iw) {
                    double acc = 0.0;
                    for (i64 o = 0; o < d.O; ++o) {
                        for (i64 kh = 0; kh < d.KH; ++kh) {
                            i64 hs = ih + d.pad - kh;
                            if (hs < 0 || hs % d.stride != 0) continue;
                            i64 ho = hs / d.stride;
                            if (ho >= d.HO) continue;
                            for (i64 kw = 0; kw < d.KW; ++kw) {
                                i64 ws = iw + d.pad - kw;
                                if (ws < 0 || ws % d.stride != 0) continue;
                                i64 wo = ws / d.stride;
                                if (wo >= d.WO) continue;
                                acc += w[idx4(o, c, kh, kw, d.C, d.KH, d.KW)] *
                                       gy[idx4(n, o, ho, wo, d.O, d.HO, d.WO)];
                            }
                        }
                    }
                    gx[idx4(n, c, ih, iw, d.C, d.H, d.W)] += acc;
                }
            }
        }
    }
}

void conv2d_backward_weights_scalar(const double* x, const double* gy, double* gw, double* gb,
                                    const ConvDims& d) {
    for (i64 o = 0; o < d.O; ++o) {
        for (i64 c = 0; c < d.C; ++c) {
            for (i64 kh = 0; kh < d.KH; ++kh) {
                for (i64 kw = 0; kw < d.KW; ++kw) {
                    double acc = 0.0;
                    for (i64 n = 0; n < d.N; ++n) {
                        for (i64 ho = 0; ho < d.HO; ++ho) {
                            i64 ih = ho * d.stride - d.pad + kh;
                            if (ih < 0 || ih >= d.H) continue;
                            for (i64 wo = 0; wo < d.WO; ++wo) {
                                i64 iw = wo * d.stride - d.pad + kw;
                                if (iw < 0 || iw >= d.W) continue;
                                acc += x[idx4(n, c, ih, iw, d.C, d.H, d.W)] *
                                       gy[idx4(n, o, ho, wo, d.O, d.HO, d.WO)];
                            }
                        }
                    }
                    gw[idx4(o, c, kh, kw, d.C, d.KH, d.KW)] += acc;
                }
            }
        }
    }
    if (d.has_bias) {
        for (i64 o = 0; o < d.O; ++o) {
            double acc = 0.0;
            for (i64 n = 0; n < d.N; ++n) {
                for (i64 ho = 0; ho < d.HO; ++ho) {
                    for (i64 wo = 0; wo < d.WO; ++wo) {
                        acc += gy[idx4(n, o, ho, wo, d.O, d.HO, d.WO)];
                    }
                }
            }
            gb[o] += acc;
        }
    }
}

void relu_scalar(const double* x, double* y, size_t n) {
    for (size_t i = 0; i < n; ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void relu_backward_scalar(const double* x, const double* gy, double* gx, size_t n) {
    for (size_t i = 0; i < n; ++i) {
        if (x[i] > 0.0) gx[i] += gy[i];
    }
}

void mul_scalar(const double* a, const double* b, double* y, size_t n) {
    for (size_t i = 0; i < n; ++i) y[i] = a[i] * b[i];
}

void axpy_scalar(double a, const double* x, double* y, size_t n) {
    for (size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

void sgd_update_scalar(double* p, double* v, const double* g, double lr, double mu, double wd,
                       size_t n) {
    for (size_t i = 0; i < n; ++i) {
        double gi = g[i] + wd * p[i];
        v[i] = mu * v[i] + gi;
        p[i] -= lr * v[i];
    }
}

void adam_update_scalar(double* p, double* m, double* v, const double* g, double lr, double b1,
                        double b2, double eps, double wd, double bc1, double bc2, size_t n) {
    for (size_t i = 0; i < n; ++i) {
        double gi = g[i] + wd * p[i];
        m[i] = b1 * m[i] + (1.0 - b1) * gi;
        v[i] = b2 * v[i] + (1.0 - b2) * gi * gi;
        double mhat = m[i] / bc1;
        double vhat = v[i] / bc2;
        p[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
}

}  // namespace

const Kernels& scalar() {
    static const Kernels k{
        conv2d_forward_scalar,  conv2d_backward_input_scalar, conv2d_backward_weights_scalar,
        relu_scalar,            relu_backward_scalar,         mul_scalar,
        axpy_scalar,            sgd_update_scalar,            adam_update_scalar,
    };
    return k;
}

}  // namespace az::kernels
