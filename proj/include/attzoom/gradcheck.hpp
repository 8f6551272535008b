#pragma once

#include <functional>
#include <map>
#include <string>

#include "attzoom/autodiff.hpp"

namespace az::ad {

// Forward builder: given a tape and leaf nodes for every named parameter,
// return the scalar loss node. Must be deterministic.
using ForwardFn =
    std::function<NodePtr(Tape&, const std::map<std::string, NodePtr>&)>;

struct GradCheckReport {
    double max_rel_error = 0.0;
    std::string worst_param;
    i64 worst_index = -1;
    double analytic = 0.0;
    double numeric = 0.0;
    i64 elements_checked = 0;
    bool ok(double tol) const { return max_rel_error <= tol; }
};

// Compares analytic gradients against central finite differences
// (eps = 1e-5). Relative error: |a-n| / max(|a|,|n|,1e-8).
// Throws DeterminismError if two forward evaluations disagree.
GradCheckReport grad_check(const ForwardFn& forward,
                           const std::map<std::string, Tensor>& params,
                           double eps = 1e-5);

}  // namespace az::ad
