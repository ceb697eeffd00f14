#pragma once

#include "gsedit/numerics/tensor.hpp"
#include "gsedit/splat/scene.hpp"

#include <Eigen/Core>

#include <vector>

namespace gsedit::splat {

inline constexpr double kNearPlane = 0.01;
inline constexpr double kCovarianceRegularizer = 0.3;
inline constexpr double kTransmittanceCutoff = 1e-4;

struct ProjectedGaussian {
    Eigen::Vector2d mean2d;
    Eigen::Matrix2d cov2d;
    Eigen::Vector3d conic;  // inverse cov2d as (a, b, c): a dx^2 + 2 b dx dy + c dy^2
    double depth = 0.0;
    double opacity = 0.0;
    Eigen::Vector3d color;
    std::size_t index = 0;  // position in the source scene
    // Pixel box outside of which the Gaussian weight is below exp(-40).
    int x0 = 0, x1 = -1, y0 = 0, y1 = -1;

    /// exp(-0.5 d^T cov2d^-1 d) at pixel (px, py).
    double falloff(double px, double py) const;
};

/// Culls Gaussians with camera-space z <= kNearPlane. Output order follows the scene.
std::vector<ProjectedGaussian> project(const GaussianScene& scene, const Camera& cam);

struct RenderResult {
    numerics::DTensor rgb;    // [3 x H x W]
    numerics::DTensor depth;  // [1 x H x W]
    numerics::DTensor alpha;  // [1 x H x W]
};

/// Front-to-back compositing of depth-sorted 2D Gaussians. Pixel (row r,
/// column c) samples screen point (c, r). Background is black, zero depth.
RenderResult render(const GaussianScene& scene, const Camera& cam);

/// RGB render whose colors [N x 3] and opacities [N] come from tensors, so
/// that the graph carries gradients back to them. Geometry is taken from
/// `geometry` and treated as constant.
numerics::DTensor render_rgb(const GaussianScene& geometry, const numerics::DTensor& colors,
                             const numerics::DTensor& opacities, const Camera& cam);

} // namespace gsedit::splat
