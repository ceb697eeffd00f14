#pragma once

#include "gsedit/numerics/tensor.hpp"

#include <functional>
#include <vector>

namespace gsedit::numerics {

/// Max over coordinates of |analytic - central difference| /
/// max(|analytic|, |cd|, 1e-8). All forward passes run at f64 precision.
double grad_check(const std::function<DTensor(const DTensor&)>& f, const DTensor& x, double h);

/// Same check over several leaf tensors that `f` closes over. Values of the
/// leaves are perturbed in place and restored.
double grad_check(const std::function<DTensor()>& f, std::vector<DTensor> params, double h);

} // namespace gsedit::numerics
