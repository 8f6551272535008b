#include "attzoom/kernels.hpp"

#if defined(__x86_64__)

#include <immintrin.h>

#include <cmath>

// AVX2 variants. Vector lanes run over the output-width axis, which is not
// part of the per-element reduction, so forward and backward-input keep the
// scalar accumulation order exactly (mul+add, no FMA) and match the scalar
// kernels bitwise. backward-weights reduces over output width with 4 partial
// sums and is equivalence-tested against the scalar reference at 1e-12.

namespace az::kernels {

namespace {

inline i64 idx4(i64 a, i64 b, i64 c, i64 d, i64 B, i64 C, i64 D) {
    return ((a * B + b) * C + c) * D + d;
}

inline double conv_fwd_one(const double* x, const double* w, const ConvDims& d, i64 n, i64 o,
                           i64 ho, i64 wo, double init) {
    double acc = init;
    for (i64 c = 0; c < d.C; ++c) {
        for (i64 kh = 0; kh < d.KH; ++kh) {
            i64 ih = ho - d.pad + kh;
            if (ih < 0 || ih >= d.H) continue;
            for (i64 kw = 0; kw < d.KW; ++kw) {
                i64 iw = wo - d.pad + kw;
                if (iw < 0 || iw >= d.W) continue;
                acc += w[idx4(o, c, kh, kw, d.C, d.KH, d.KW)] *
                       x[idx4(n, c, ih, iw, d.C, d.H, d.W)];
            }
        }
    }
    return acc;
}

void conv2d_forward_avx2(const double* x, const double* w, const double* bias, double* y,
                         const ConvDims& d) {
    if (d.stride != 1) {
        scalar().conv2d_forward(x, w, bias, y, d);
        return;
    }
    // Interior columns: all kw taps in bounds for 4 consecutive wo.
    i64 wo_lo = d.pad;
    i64 wo_hi = d.W - d.KW + d.pad - 3;  // inclusive block start bound
    if (wo_hi > d.WO - 4) wo_hi = d.WO - 4;
    for (i64 n = 0; n < d.N; ++n) {
        for (i64 o = 0; o < d.O; ++o) {
            double b = d.has_bias ? bias[o] : 0.0;
            for (i64 ho = 0; ho < d.HO; ++ho) {
                double* yrow = y + idx4(n, o, ho, 0, d.O, d.HO, d.WO);
                i64 wo = 0;
                for (; wo < wo_lo && wo < d.WO; ++wo) {
                    yrow[wo] = conv_fwd_one(x, w, d, n, o, ho, wo, b);
                }
                for (; wo >= wo_lo && wo <= wo_hi; wo += 4) {
                    __m256d acc = _mm256_set1_pd(b);
                    for (i64 c = 0; c < d.C; ++c) {
                        for (i64 kh = 0; kh < d.KH; ++kh) {
                            i64 ih = ho - d.pad + kh;
                            if (ih < 0 || ih >= d.H) continue;
                            const double* xrow = x + idx4(n, c, ih, 0, d.C, d.H, d.W);
                            const double* wrow = w + idx4(o, c, kh, 0, d.C, d.KH, d.KW);
                            for (i64 kw = 0; kw < d.KW; ++kw) {
                                __m256d xv = _mm256_loadu_pd(xrow + wo - d.pad + kw);
                                __m256d wv = _mm256_set1_pd(wrow[kw]);
                                acc = _mm256_add_pd(acc, _mm256_mul_pd(wv, xv));
                            }
                        }
                    }
                    _mm256_storeu_pd(yrow + wo, acc);
                }
                for (; wo < d.WO; ++wo) {
                    yrow[wo] = conv_fwd_one(x, w, d, n, o, ho, wo, b);
                }
            }
        }
    }
}

inline double conv_bwd_in_one(const double* gy, const double* w, const ConvDims& d, i64 n, i64 c,
                              i64 ih, i64 iw) {
    double acc = 0.0;
    for (i64 o = 0; o < d.O; ++o) {
        for (i64 kh = 0; kh < d.KH; ++kh) {
            i64 ho = ih + d.pad - kh;
            if (ho < 0 || ho >= d.HO) continue;
            for (i64 kw = 0; kw < d.KW; ++kw) {
                i64 wo = iw + d.pad - kw;
                if (wo < 0 || wo >= d.WO) continue;
                acc += w[idx4(o, c, kh, kw, d.C, d.KH, d.KW)] *
                       gy[idx4(n, o, ho, wo, d.O, d.HO, d.WO)];
            }
        }
    }
    return acc;
}

void conv2d_backward_input_avx2(const double* gy, const double* w, double* gx,
                                const ConvDims& d) {
    if (d.stride != 1) {
        scalar().conv2d_backward_input(gy, w, gx, d);
        return;
    }
    i64 iw_lo = d.KW - 1 - d.pad;
    if (iw_lo < 0) iw_lo = 0;
    i64 iw_hi = d.WO - 1 - d.pad - 3;  // inclusive block start bound
    if (iw_hi > d.W - 4) iw_hi = d.W - 4;
    for (i64 n = 0; n < d.N; ++n) {
        for (i64 c = 0; c < d.C; ++c) {
            for (i64 ih = 0; ih < d.H; ++ih) {
                double* gxrow = gx + idx4(n, c, ih, 0, d.C, d.H, d.W);
                i64 iw = 0;
                for (; iw < iw_lo && iw < d.W; ++iw) {
                    gxrow[iw] += conv_bwd_in_one(gy, w, d, n, c, ih, iw);
                }
                for (; iw >= iw_lo && iw <= iw_hi; iw += 4) {
                    __m256d acc = _mm256_setzero_pd();
                    for (i64 o = 0; o < d.O; ++o) {
                        for (i64 kh = 0; kh < d.KH; ++kh) {
                            i64 ho = ih + d.pad - kh;
                            if (ho < 0 || ho >= d.HO) continue;
                            const double* gyrow = gy + idx4(n, o, ho, 0, d.O, d.HO, d.WO);
                            const double* wrow = w + idx4(o, c, kh, 0, d.C, d.KH, d.KW);
                            for (i64 kw = 0; kw < d.KW; ++kw) {
                                __m256d gv = _mm256_loadu_pd(gyrow + iw + d.pad - kw);
                                __m256d wv = _mm256_set1_pd(wrow[kw]);
                                acc = _mm256_add_pd(acc, _mm256_mul_pd(wv, gv));
                            }
                        }
                    }
                    __m256d cur = _mm256_loadu_pd(gxrow + iw);
                    _mm256_storeu_pd(gxrow + iw, _mm256_add_pd(cur, acc));
                }
                for (; iw < d.W; ++iw) {
                    gxrow[iw] += conv_bwd_in_one(gy, w, d, n, c, ih, iw);
                }
            }
        }
    }
}

inline double hsum(__m256d v) {
    __m128d lo = _mm256_castpd256_pd128(v);
    __m128d hi = _mm256_extractf128_pd(v, 1);
    lo = _mm_add_pd(lo, hi);
    return _mm_cvtsd_f64(lo) + _mm_cvtsd_f64(_mm_unpackhi_pd(lo, lo));
}

void conv2d_backward_weights_avx2(const double* x, const double* gy, double* gw, double* gb,
                                  const ConvDims& d) {
    if (d.stride != 1) {
        scalar().conv2d_backward_weights(x, gy, gw, gb, d);
        return;
    }
    for (i64 o = 0; o < d.O; ++o) {
        for (i64 c = 0; c < d.C; ++c) {
            for (i64 kh = 0; kh < d.KH; ++kh) {
                for (i64 kw = 0; kw < d.KW; ++kw) {
                    i64 wo_lo = d.pad - kw;
                    if (wo_lo < 0) wo_lo = 0;
                    i64 wo_hi = d.W - 1 - kw + d.pad;  // inclusive last valid wo
                    if (wo_hi > d.WO - 1) wo_hi = d.WO - 1;
                    __m256d acc4 = _mm256_setzero_pd();
                    double tail = 0.0;
                    for (i64 n = 0; n < d.N; ++n) {
                        for (i64 ho = 0; ho < d.HO; ++ho) {
                            i64 ih = ho - d.pad + kh;
                            if (ih < 0 || ih >= d.H) continue;
                            const double* xrow = x + idx4(n, c, ih, 0, d.C, d.H, d.W);
                            const double* gyrow = gy + idx4(n, o, ho, 0, d.O, d.HO, d.WO);
                            i64 wo = wo_lo;
                            for (; wo + 3 <= wo_hi; wo += 4) {
                                __m256d xv = _mm256_loadu_pd(xrow + wo - d.pad + kw);
                                __m256d gv = _mm256_loadu_pd(gyrow + wo);
                                acc4 = _mm256_add_pd(acc4, _mm256_mul_pd(xv, gv));
                            }
                            for (; wo <= wo_hi; ++wo) {
                                tail += xrow[wo - d.pad + kw] * gyrow[wo];
                            }
                        }
                    }
                    gw[idx4(o, c, kh, kw, d.C, d.KH, d.KW)] += hsum(acc4) + tail;
                }
            }
        }
    }
    if (d.has_bias) {
        for (i64 o = 0; o < d.O; ++o) {
            __m256d acc4 = _mm256_setzero_pd();
            double tail = 0.0;
            for (i64 n = 0; n < d.N; ++n) {
                const double* plane = gy + idx4(n, o, 0, 0, d.O, d.HO, d.WO);
                i64 sz = d.HO * d.WO;
                i64 i = 0;
                for (; i + 3 < sz; i += 4) acc4 = _mm256_add_pd(acc4, _mm256_loadu_pd(plane + i));
                for (; i < sz; ++i) tail += plane[i];
            }
            gb[o] += hsum(acc4) + tail;
        }
    }
}

void relu_avx2(const double* x, double* y, size_t n) {
    __m256d z = _mm256_setzero_pd();
    size_t i = 0;
    for (; i + 3 < n; i += 4) {
        _mm256_storeu_pd(y + i, _mm256_max_pd(_mm256_loadu_pd(x + i), z));
    }
    for (; i < n; ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void relu_backward_avx2(const double* x, const double* gy, double* gx, size_t n) {
    __m256d z = _mm256_setzero_pd();
    size_t i = 0;
    for (; i + 3 < n; i += 4) {
        __m256d mask = _mm256_cmp_pd(_mm256_loadu_pd(x + i), z, _CMP_GT_OQ);
        __m256d add = _mm256_and_pd(mask, _mm256_loadu_pd(gy + i));
        _mm256_storeu_pd(gx + i, _mm256_add_pd(_mm256_loadu_pd(gx + i), add));
    }
    for (; i < n; ++i) {
        if (x[i] > 0.0) gx[i] += gy[i];
    }
}

void mul_avx2(const double* a, const double* b, double* y, size_t n) {
    size_t i = 0;
    for (; i + 3 < n; i += 4) {
        _mm256_storeu_pd(y + i, _mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
    }
    for (; i < n; ++i) y[i] = a[i] * b[i];
}

void axpy_avx2(double a, const double* x, double* y, size_t n) {
    __m256d av = _mm256_set1_pd(a);
    size_t i = 0;
    for (; i + 3 < n; i += 4) {
        __m256d t = _mm256_mul_pd(av, _mm256_loadu_pd(x + i));
        _mm256_storeu_pd(y + i, _mm256_add_pd(_mm256_loadu_pd(y + i), t));
    }
    for (; i < n; ++i) y[i] += a * x[i];
}

void sgd_update_avx2(double* p, double* v, const double* g, double lr, double mu, double wd,
                     size_t n) {
    __m256d lrv = _mm256_set1_pd(lr), muv = _mm256_set1_pd(mu), wdv = _mm256_set1_pd(wd);
    size_t i = 0;
    for (; i + 3 < n; i += 4) {
        __m256d pv = _mm256_loadu_pd(p + i);
        __m256d gv = _mm256_add_pd(_mm256_loadu_pd(g + i), _mm256_mul_pd(wdv, pv));
        __m256d vv = _mm256_add_pd(_mm256_mul_pd(muv, _mm256_loadu_pd(v + i)), gv);
        _mm256_storeu_pd(v + i, vv);
        _mm256_storeu_pd(p + i, _mm256_sub_pd(pv, _mm256_mul_pd(lrv, vv)));
    }
    for (; i < n; ++i) {
        double gi = g[i] + wd * p[i];
        v[i] = mu * v[i] + gi;
        p[i] -= lr * v[i];
    }
}

void adam_update_avx2(double* p, double* m, double* v, const double* g, double lr, double b1,
                      double b2, double eps, double wd, double bc1, double bc2, size_t n) {
    __m256d b1v = _mm256_set1_pd(b1), b2v = _mm256_set1_pd(b2);
    __m256d ob1 = _mm256_set1_pd(1.0 - b1), ob2 = _mm256_set1_pd(1.0 - b2);
    __m256d lrv = _mm256_set1_pd(lr), epsv = _mm256_set1_pd(eps), wdv = _mm256_set1_pd(wd);
    __m256d bc1v = _mm256_set1_pd(bc1), bc2v = _mm256_set1_pd(bc2);
    size_t i = 0;
    for (; i + 3 < n; i += 4) {
        __m256d pv = _mm256_loadu_pd(p + i);
        __m256d gv = _mm256_add_pd(_mm256_loadu_pd(g + i), _mm256_mul_pd(wdv, pv));
        __m256d mv = _mm256_add_pd(_mm256_mul_pd(b1v, _mm256_loadu_pd(m + i)),
                                   _mm256_mul_pd(ob1, gv));
        __m256d vv = _mm256_add_pd(_mm256_mul_pd(b2v, _mm256_loadu_pd(v + i)),
                                   _mm256_mul_pd(_mm256_mul_pd(ob2, gv), gv));
        _mm256_storeu_pd(m + i, mv);
        _mm256_storeu_pd(v + i, vv);
        __m256d mhat = _mm256_div_pd(mv, bc1v);
        __m256d vhat = _mm256_div_pd(vv, bc2v);
        __m256d upd = _mm256_div_pd(_mm256_mul_pd(lrv, mhat),
                                    _mm256_add_pd(_mm256_sqrt_pd(vhat), epsv));
        _mm256_storeu_pd(p + i, _mm256_sub_pd(pv, upd));
    }
    for (; i < n; ++i) {
        double gi = g[i] + wd * p[i];
        m[i] = b1 * m[i] + (1.0 - b1) * gi;
        v[i] = b2 * v[i] + (1.0 - b2) * gi * gi;
        p[i] -= lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + eps);
    }
}

}  // namespace

const Kernels& avx2() {
    static const Kernels k{
        conv2d_forward_avx2,  conv2d_backward_input_avx2, conv2d_backward_weights_avx2,
        relu_avx2,            relu_backward_avx2,         mul_avx2,
        axpy_avx2,            sgd_update_avx2,            adam_update_avx2,
    };
    return k;
}

}  // namespace az::kernels

#endif  // __x86_64__
