#pragma once

#include "gsedit/numerics/tensor.hpp"

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace gsedit::splat {

struct Gaussian {
    double opacity = 1.0;
    Eigen::Vector3d mean = Eigen::Vector3d::Zero();
    Eigen::Vector3d scale = Eigen::Vector3d::Constant(0.1);
    std::array<double, 4> rotation{1.0, 0.0, 0.0, 0.0};  // w, x, y, z
    Eigen::Vector3d color = Eigen::Vector3d::Constant(0.5);

    Eigen::Matrix3d rotation_matrix() const;
    /// R diag(scale^2) R^T
    Eigen::Matrix3d covariance() const;
};

struct GaussianScene {
    std::vector<Gaussian> gaussians;

    std::size_t size() const { return gaussians.size(); }
    bool empty() const { return gaussians.empty(); }
    /// Throws std::invalid_argument naming the first offending Gaussian.
    void validate() const;
};

struct Camera {
    double fx = 1.0, fy = 1.0, cx = 0.0, cy = 0.0;
    int width = 1, height = 1;
    // x right, y down, z forward.
    Eigen::Matrix4d world_to_camera = Eigen::Matrix4d::Identity();

    void validate() const;
    Eigen::Matrix3d rotation() const { return world_to_camera.topLeftCorner<3, 3>(); }
    Eigen::Vector3d translation() const { return world_to_camera.topRightCorner<3, 1>(); }

    static Camera look_at(const Eigen::Vector3d& eye, const Eigen::Vector3d& target, const Eigen::Vector3d& up,
                          double fx, double fy, int width, int height);
};

} // namespace gsedit::splat
