#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace gsedit::cimln {

struct GradCheckCase {
    std::string name;
    double rel_error = 0.0;
};

/// Central finite-difference checks of every op on the CIMLN path plus the
/// full forward and forward+loss, on 1x8x8 depth / 3x8x8 RGB inputs with a
/// 4-feature model. Each case reduces its output with random weights.
std::vector<GradCheckCase> run_gradient_checks(std::uint64_t seed, double h = 1e-6);

} // namespace gsedit::cimln
