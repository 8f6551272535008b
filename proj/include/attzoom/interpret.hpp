#pragma once

#include <string>
#include <vector>

#include "attzoom/attzoom.hpp"
#include "attzoom/backbones.hpp"
#include "attzoom/tensor.hpp"

namespace az::interpret {

// Non-negative map, max-normalized to [0,1] (all-zero maps stay zero).
struct SaliencyMap {
    Tensor values;  // [1,1,h,w]
    std::string layer;
    int target_class = -1;
};

// Per output pixel, a source coordinate pair in [0,1]^2. Coordinates are
// strictly increasing along each axis line.
struct WarpGrid {
    i64 h = 0, w = 0;
    std::vector<double> src_x;  // w entries, shared across rows (separable)
    std::vector<double> src_y;  // h entries
};

// Standard Grad-CAM at the named activation: channel weights are the
// spatially averaged gradients of the target logit, map is the ReLU'd
// weighted channel sum, max-normalized, bilinearly upsampled to input size.
SaliencyMap grad_cam(const model::Model& model, const Tensor& input, int target_class,
                     const std::string& layer);

SaliencyMap attention_heatmap(const attzoom::AttentionRecord& record);

// Axis-separable mass-redistribution warp: cumulative attention per axis
// (plus a uniform floor of 0.05) defines the inverse sampling map; lambda
// interpolates between identity (0) and full redistribution (1).
std::pair<Tensor, WarpGrid> warp_image(const Tensor& image, const SaliencyMap& saliency,
                                       double lambda);

// Binary PPM (P6), 8-bit, linear [0,1] -> [0,255]. Grayscale inputs are
// replicated across RGB.
void write_image(const Tensor& image, const std::string& path);

// Saliency rendered through the fixed 256-entry black-red-yellow-white ramp.
void write_saliency(const SaliencyMap& map, const std::string& path);
void color_ramp(double t, unsigned char rgb[3]);

Tensor read_ppm(const std::string& path);  // values in [0,1]

}  // namespace az::interpret
