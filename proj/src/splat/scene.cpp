#include "gsedit/splat/scene.hpp"

#include <fmt/format.h>

#include <Eigen/Geometry>

#include <cmath>
#include <stdexcept>

namespace gsedit::splat {

Eigen::Matrix3d Gaussian::rotation_matrix() const {
    Eigen::Quaterniond q(rotation[0], rotation[1], rotation[2], rotation[3]);
    return q.normalized().toRotationMatrix();
}

Eigen::Matrix3d Gaussian::covariance() const {
    const Eigen::Matrix3d r = rotation_matrix();
    return r * scale.cwiseAbs2().asDiagonal() * r.transpose();
}

void GaussianScene::validate() const {
    for (std::size_t i = 0; i < gaussians.size(); ++i) {
        const auto& g = gaussians[i];
        auto fail = [i](const std::string& what) {
            throw std::invalid_argument(fmt::format("gaussian {}: {}", i, what));
        };
        if (!(g.opacity >= 0.0 && g.opacity <= 1.0)) fail("opacity outside [0,1]");
        if (!g.mean.allFinite()) fail("non-finite mean");
        if (!(g.scale.array() > 0.0).all() || !g.scale.allFinite()) fail("scale must be positive");
        const double qn = std::sqrt(g.rotation[0] * g.rotation[0] + g.rotation[1] * g.rotation[1] +
                                    g.rotation[2] * g.rotation[2] + g.rotation[3] * g.rotation[3]);
        if (!(std::fabs(qn - 1.0) <= 1e-6)) fail("rotation quaternion is not unit length");
        if (!((g.color.array() >= 0.0).all() && (g.color.array() <= 1.0).all())) fail("color outside [0,1]");
    }
}

void Camera::validate() const {
    if (!(fx > 0 && fy > 0)) throw std::invalid_argument("camera focal lengths must be positive");
    if (width < 1 || height < 1) throw std::invalid_argument("camera size must be at least 1x1");
    if (!world_to_camera.allFinite()) throw std::invalid_argument("camera pose is not finite");
    const Eigen::Matrix3d r = rotation();
    if (((r * r.transpose()) - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() > 1e-5) {
        throw std::invalid_argument("camera rotation block is not orthonormal");
    }
}

Camera Camera::look_at(const Eigen::Vector3d& eye, const Eigen::Vector3d& target, const Eigen::Vector3d& up,
                       double fx, double fy, int width, int height) {
    const Eigen::Vector3d z = (target - eye).normalized();
    const Eigen::Vector3d x = z.cross(up).normalized();
    const Eigen::Vector3d y = z.cross(x);
    Camera cam;
    cam.fx = fx;
    cam.fy = fy;
    cam.cx = 0.5 * width;
    cam.cy = 0.5 * height;
    cam.width = width;
    cam.height = height;
    Eigen::Matrix3d r;
    r.row(0) = x.transpose();
    r.row(1) = y.transpose();
    r.row(2) = z.transpose();
    cam.world_to_camera.setIdentity();
    cam.world_to_camera.topLeftCorner<3, 3>() = r;
    cam.world_to_camera.topRightCorner<3, 1>() = -r * eye;
    return cam;
}

} // namespace gsedit::splat
