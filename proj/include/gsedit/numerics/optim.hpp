#pragma once

#include "gsedit/numerics/tensor.hpp"

#include <vector>

namespace gsedit::numerics {

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct AdamState {
    std::vector<std::vector<double>> m;
    std::vector<std::vector<double>> v;
    long step = 0;
};

/// One bias-corrected Adam update of every tensor in params, in place.
/// Throws GraphError if a parameter has no gradient.
void adam_step(std::vector<DTensor>& params, const AdamConfig& cfg, AdamState& state);

} // namespace gsedit::numerics
