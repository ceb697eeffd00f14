#pragma once

// Building blocks for ops with hand-written reverse passes. Used by the core
// op set and by fused ops in other modules (pixel mutual learning, the
// differentiable splat compositor).

#include "gsedit/numerics/tensor.hpp"

#include <functional>
#include <memory>
#include <vector>

namespace gsedit::numerics::detail {

struct Node {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad;  // empty until something flows into it
    bool requires_grad = false;
    bool is_leaf = true;
    bool consumed = false;
    std::vector<std::shared_ptr<Node>> parents;
    // Reads this->grad and accumulates into parents' grads.
    std::function<void(Node&)> backward;

    std::vector<double>& ensure_grad() {
        if (grad.empty()) grad.assign(data.size(), 0.0);
        return grad;
    }
};

/// Wraps forward output into a DTensor and records a backward closure when
/// any input requires grad and recording is enabled. The closure receives
/// the output node (whose grad is populated) and must accumulate into the
/// parent nodes through ensure_grad(). Output data is rounded to the current
/// precision.
DTensor make_op(Shape shape,
                std::vector<double> data,
                const std::vector<DTensor>& inputs,
                std::function<void(Node&)> backward_fn);

/// Accumulate into a parent's grad when that parent participates in autodiff.
inline bool wants_grad(const std::shared_ptr<Node>& n) { return n && n->requires_grad; }

} // namespace gsedit::numerics::detail
