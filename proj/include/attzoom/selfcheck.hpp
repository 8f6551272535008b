#pragma once

#include <string>
#include <vector>

#include "attzoom/gradcheck.hpp"

namespace az::ad {

struct SelfCheckEntry {
    std::string name;
    GradCheckReport report;
};

// Gradient checks for every differentiable op plus the full AttZoom layer.
// Inputs are sampled away from non-smooth boundaries (gate threshold, relu
// kink, pooling ties) by margin 1e-3.
std::vector<SelfCheckEntry> gradient_selfcheck(std::uint64_t seed = 7);

}  // namespace az::ad
