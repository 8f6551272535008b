#pragma once

#include <cstddef>
#include <cstdint>

namespace az::kernels {

using i64 = std::int64_t;

// Geometry for a cross-correlation. HO/WO are precomputed output extents.
struct ConvDims {
    i64 N, C, H, W;       // input
    i64 O, KH, KW;        // kernel
    i64 stride, pad;
    i64 HO, WO;           // output
    bool has_bias;
};

// Table of data-parallel inner loops. Every variant of a kernel accumulates
// each output element in the same sequential order as the scalar reference,
// except conv2d_backward_weights_blocked (see below), so scalar and SIMD
// results are bitwise identical element for element.
struct Kernels {
    // y[n,o,ho,wo] = bias[o] + sum_{c,kh,kw} w[o,c,kh,kw] * x[n,c,ho*s-p+kh, wo*s-p+kw]
    void (*conv2d_forward)(const double* x, const double* w, const double* bias, double* y,
                           const ConvDims& d);
    // gx += adjoint of conv2d_forward w.r.t. x
    void (*conv2d_backward_input)(const double* gy, const double* w, double* gx,
                                  const ConvDims& d);
    // gw += adjoint w.r.t. weights; gb += adjoint w.r.t. bias. The SIMD variant
    // uses 4-lane partial sums over the output-width reduction, so it matches
    // the scalar reference to rounding (<=1e-12 on test scales), not bitwise.
    void (*conv2d_backward_weights)(const double* x, const double* gy, double* gw, double* gb,
                                    const ConvDims& d);

    void (*relu)(const double* x, double* y, size_t n);
    void (*relu_backward)(const double* x, const double* gy, double* gx, size_t n);  // gx +=
    void (*mul)(const double* a, const double* b, double* y, size_t n);
    void (*axpy)(double a, const double* x, double* y, size_t n);  // y += a*x

    // grad is pre-decay; wd folds L2 into the gradient in-place semantics:
    //   g' = g + wd*p;  v = mu*v + g';  p -= lr*v
    void (*sgd_update)(double* p, double* v, const double* g, double lr, double mu, double wd,
                       size_t n);
    //   g' = g + wd*p;  m = b1*m + (1-b1)g';  v = b2*v + (1-b2)g'^2
    //   p -= lr * (m/bc1) / (sqrt(v/bc2) + eps)
    void (*adam_update)(double* p, double* m, double* v, const double* g, double lr, double b1,
                        double b2, double eps, double wd, double bc1, double bc2, size_t n);
};

const Kernels& scalar();
bool avx2_supported();
const Kernels& avx2();  // valid only if avx2_supported()

// Selected once at first use: AVX2 when the CPU supports it, overridable via
// ATTZOOM_SIMD={scalar,avx2}.
const Kernels& active();
const char* active_name();

}  // namespace az::kernels
