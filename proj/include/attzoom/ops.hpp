#pragma once

#include <optional>
#include <vector>

#include "attzoom/tensor.hpp"

namespace az::ops {

// Cross-correlation geometry. Odd kernels with stride 1 and pad (k-1)/2
// preserve spatial extents.
struct ConvSpec {
    i64 out_channels = 0;
    i64 kernel_h = 0;
    i64 kernel_w = 0;
    i64 stride = 1;
    i64 padding = 0;
    bool has_bias = true;

    void validate() const;
    i64 out_h(i64 in_h) const { return (in_h + 2 * padding - kernel_h) / stride + 1; }
    i64 out_w(i64 in_w) const { return (in_w + 2 * padding - kernel_w) / stride + 1; }
};

ConvSpec same_conv(i64 out_channels, i64 kh, i64 kw, bool has_bias = true);

// weights: [O, C, KH, KW]; bias: [O,1,1,1] or null.
Tensor conv2d(const Tensor& input, const Tensor& weights, const Tensor* bias,
              const ConvSpec& spec);

Tensor sigmoid(const Tensor& x);
double sigmoid1(double x);

Tensor relu(const Tensor& x);

// feature [N,C,H,W] * map [N,1,H,W], map broadcast over channels.
Tensor mul_broadcast(const Tensor& feature, const Tensor& map);

// feature [N,C,H,W] * scale [N,C,1,1], scale broadcast over space.
Tensor scale_channels(const Tensor& feature, const Tensor& scale);

// Zero-insertion: out(n,c,m*h,m*w) = in(n,c,h,w), zeros elsewhere.
Tensor upsample_zeros(const Tensor& x, i64 m);

Tensor global_avg_pool(const Tensor& x);

// 2x2 max pooling, stride 2; odd trailing row/col dropped.
// If argmax is non-null it receives the flat input index of each output max.
Tensor max_pool2(const Tensor& x, std::vector<i64>* argmax = nullptr);

// input flattened to [N, C*H*W]; weights [out, in] stored as Tensor[out,in,1,1];
// bias [out,1,1,1] or null. Output [N,out,1,1].
Tensor dense(const Tensor& input, const Tensor& weights, const Tensor* bias);

// logits [N,K,1,1]; mean cross-entropy over the batch. If probs is non-null
// it receives the softmax probabilities (needed by the backward rule).
double softmax_cross_entropy(const Tensor& logits, const std::vector<int>& labels,
                             Tensor* probs = nullptr);

Tensor add(const Tensor& a, const Tensor& b);

// Bilinear resize of a [N,C,H,W] tensor to (out_h, out_w), half-pixel centers.
Tensor bilinear_resize(const Tensor& x, i64 out_h, i64 out_w);

}  // namespace az::ops
