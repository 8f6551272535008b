#include "attzoom/gradcheck.hpp"

#include <cmath>

#include "attzoom/errors.hpp"

namespace az::ad {

namespace {

double eval_loss(const ForwardFn& forward, const std::map<std::string, Tensor>& params) {
    Tape tape;
    std::map<std::string, NodePtr> nodes;
    for (const auto& [name, value] : params) {
        nodes[name] = tape.leaf(value, false, name);
    }
    NodePtr loss = forward(tape, nodes);
    if (loss->value.numel() != 1) throw ShapeError("grad_check forward must return a scalar");
    return loss->value[0];
}

}  // namespace

GradCheckReport grad_check(const ForwardFn& forward,
                           const std::map<std::string, Tensor>& params, double eps) {
    // Analytic pass.
    Tape tape;
    std::map<std::string, NodePtr> nodes;
    for (const auto& [name, value] : params) {
        nodes[name] = tape.leaf(value, true, name);
    }
    NodePtr loss = forward(tape, nodes);
    if (loss->value.numel() != 1) throw ShapeError("grad_check forward must return a scalar");
    double base = loss->value[0];
    if (eval_loss(forward, params) != base) {
        throw DeterminismError("forward pass is not deterministic");
    }
    tape.backward(loss);

    GradCheckReport report;
    std::map<std::string, Tensor> work = params;
    for (auto& [name, value] : work) {
        const NodePtr& pn = nodes.at(name);
        for (i64 i = 0; i < value.numel(); ++i) {
            double orig = value[i];
            value[i] = orig + eps;
            double up = eval_loss(forward, work);
            value[i] = orig - eps;
            double down = eval_loss(forward, work);
            value[i] = orig;
            double numeric = (up - down) / (2.0 * eps);
            double analytic = pn->grad_alloc ? pn->grad[i] : 0.0;
            double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
            double rel = std::abs(analytic - numeric) / denom;
            ++report.elements_checked;
            if (rel > report.max_rel_error) {
                report.max_rel_error = rel;
                report.worst_param = name;
                report.worst_index = i;
                report.analytic = analytic;
                report.numeric = numeric;
            }
        }
    }
    return report;
}

}  // namespace az::ad
