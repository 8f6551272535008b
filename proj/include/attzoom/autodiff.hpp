#pragma once

#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "attzoom/ops.hpp"
#include "attzoom/tensor.hpp"

namespace az::ad {

struct Node;
using NodePtr = std::shared_ptr<Node>;

// One record on the tape: a forward value plus the rule that pushes its
// output-gradient into its parents.
struct Node {
    Tensor value;
    Tensor grad;  // allocated on demand, same shape as value
    bool needs_grad = false;
    bool grad_alloc = false;
    std::string name;
    std::vector<NodePtr> parents;
    std::function<void(Node&)> backward_fn;

    Tensor& ensure_grad() {
        if (!grad_alloc) {
            grad = Tensor(value.n(), value.c(), value.h(), value.w());
            grad_alloc = true;
        }
        return grad;
    }
};

// Creation-order tape; creation order is a topological order, backward walks
// it in reverse. Single-threaded per instance.
class Tape {
  public:
    NodePtr leaf(Tensor value, bool requires_grad, std::string name = "");
    NodePtr make(Tensor value, std::vector<NodePtr> parents,
                 std::function<void(Node&)> backward_fn);

    // loss must be scalar (1x1x1x1). Seeds its gradient with 1 and propagates.
    void backward(const NodePtr& loss);

    size_t size() const { return nodes_.size(); }

  private:
    std::vector<NodePtr> nodes_;
};

// Accumulate src into dst's gradient if dst participates in differentiation.
inline void accum(const NodePtr& dst, const Tensor& src) {
    if (!dst->needs_grad) return;
    Tensor& g = dst->ensure_grad();
    for (i64 i = 0; i < g.numel(); ++i) g[i] += src[i];
}

// --- differentiable ops over tape nodes ---

NodePtr conv2d(Tape& t, const NodePtr& x, const NodePtr& w, const NodePtr& b,
               const ops::ConvSpec& spec);
NodePtr sigmoid(Tape& t, const NodePtr& x);
NodePtr relu(Tape& t, const NodePtr& x);

// The threshold gate: 1 where sigmoid(a) >= threshold, else sigmoid(a).
// Exact subgradient: clamped branch contributes zero. straight_through
// instead passes sigmoid' everywhere.
NodePtr gate(Tape& t, const NodePtr& a, double threshold, bool straight_through = false);

NodePtr mul_broadcast(Tape& t, const NodePtr& feature, const NodePtr& map);
NodePtr scale_channels(Tape& t, const NodePtr& feature, const NodePtr& scale);
NodePtr upsample_zeros(Tape& t, const NodePtr& x, i64 m);
NodePtr max_pool2(Tape& t, const NodePtr& x);
NodePtr global_avg_pool(Tape& t, const NodePtr& x);
NodePtr dense(Tape& t, const NodePtr& x, const NodePtr& w, const NodePtr& b);
NodePtr add(Tape& t, const NodePtr& a, const NodePtr& b);
NodePtr mul(Tape& t, const NodePtr& a, const NodePtr& b);  // hadamard, same shape
NodePtr sum(Tape& t, const NodePtr& x);                    // scalar
NodePtr softmax_cross_entropy(Tape& t, const NodePtr& logits, std::vector<int> labels);
// Scalar node selecting logits[sample, cls] (Grad-CAM target).
NodePtr select_logit(Tape& t, const NodePtr& logits, i64 sample, i64 cls);

}  // namespace az::ad
