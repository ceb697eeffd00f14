#pragma once

#include "gsedit/numerics/tensor.hpp"
#include "gsedit/splat/scene.hpp"

#include <vector>

namespace gsedit::splat {

struct TargetView {
    Camera camera;
    numerics::DTensor rgb;  // [3 x H x W]
};

struct RefitConfig {
    int steps = 300;
    double lr = 0.02;
};

struct RefitResult {
    GaussianScene scene;
    double initial_loss = 0.0;
    double final_loss = 0.0;  // loss of the returned scene
    std::vector<double> loss_history;
};

/// Adam on per-Gaussian colors and opacities against the mean squared
/// render error over all views; geometry stays fixed. Colors and opacities
/// are clamped to [0,1] after each step and the lowest-loss iterate is
/// returned.
RefitResult refit_scene(const GaussianScene& scene, const std::vector<TargetView>& views, const RefitConfig& cfg);

/// Mean over views of mean((render - target)^2).
double render_loss(const GaussianScene& scene, const std::vector<TargetView>& views);

} // namespace gsedit::splat
