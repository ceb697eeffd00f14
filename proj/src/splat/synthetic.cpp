#include "gsedit/splat/synthetic.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>

namespace gsedit::splat {

Layout parse_layout(const std::string& name) {
    if (name == "cluster") return Layout::cluster;
    if (name == "shell") return Layout::shell;
    if (name == "boxes") return Layout::boxes;
    throw std::invalid_argument("unknown layout '" + name + "' (expected cluster, shell or boxes)");
}

std::string layout_name(Layout layout) {
    switch (layout) {
    case Layout::cluster: return "cluster";
    case Layout::shell: return "shell";
    case Layout::boxes: return "boxes";
    }
    return "?";
}

namespace {

Eigen::Vector3d random_direction(std::mt19937_64& rng) {
    std::normal_distribution<double> n(0.0, 1.0);
    Eigen::Vector3d v;
    do {
        v = {n(rng), n(rng), n(rng)};
    } while (v.norm() < 1e-9);
    return v.normalized();
}

struct Box {
    Eigen::Vector3d center;
    Eigen::Vector3d half;
};

Eigen::Vector3d point_on_box(const Box& b, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    // face chosen proportionally to its area
    const double areas[3] = {b.half.y() * b.half.z(), b.half.x() * b.half.z(), b.half.x() * b.half.y()};
    std::uniform_real_distribution<double> pick(0.0, areas[0] + areas[1] + areas[2]);
    double r = pick(rng);
    int axis = 0;
    while (axis < 2 && r > areas[axis]) r -= areas[axis++];
    Eigen::Vector3d local(u(rng), u(rng), u(rng));
    local[axis] = u(rng) < 0 ? -1.0 : 1.0;
    return b.center + local.cwiseProduct(b.half);
}

} // namespace

SyntheticScene make_synthetic_scene(std::uint64_t seed, std::size_t n, Layout layout, const SyntheticOptions& opts) {
    if (n < 1) throw std::invalid_argument("synthetic scene needs at least one Gaussian");
    if (opts.num_cameras < 1) throw std::invalid_argument("synthetic scene needs at least one camera");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> normal(0.0, 1.0);

    const double r = opts.radius;
    // Splat size shrinks with count so the silhouette stays covered.
    const double base_scale = std::clamp(r * 1.8 / std::sqrt(static_cast<double>(n)), 0.04 * r, 1.3 * r);

    std::vector<Box> boxes;
    if (layout == Layout::boxes) {
        const int count = 3;
        for (int i = 0; i < count; ++i) {
            const double angle = 2.0 * std::numbers::pi * (i + 0.3 * unit(rng)) / count;
            Box b;
            b.center = {0.45 * r * std::cos(angle), 0.3 * r * (unit(rng) - 0.5), 0.45 * r * std::sin(angle)};
            b.half = Eigen::Vector3d(0.25 + 0.2 * unit(rng), 0.25 + 0.2 * unit(rng), 0.25 + 0.2 * unit(rng)) * r;
            boxes.push_back(b);
        }
    }

    SyntheticScene out;
    auto& gs = out.scene.gaussians;
    gs.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        Gaussian g;
        switch (layout) {
        case Layout::cluster: {
            Eigen::Vector3d p(normal(rng), normal(rng), normal(rng));
            p *= 0.4 * r;
            if (p.norm() > r) p *= r / p.norm();
            g.mean = p;
            break;
        }
        case Layout::shell: g.mean = random_direction(rng) * r; break;
        case Layout::boxes: g.mean = point_on_box(boxes[i % boxes.size()], rng); break;
        }
        g.scale = Eigen::Vector3d(0.6 + 0.8 * unit(rng), 0.6 + 0.8 * unit(rng), 0.6 + 0.8 * unit(rng)) * base_scale;
        Eigen::Quaterniond q(normal(rng), normal(rng), normal(rng), normal(rng));
        q.normalize();
        g.rotation = {q.w(), q.x(), q.y(), q.z()};
        g.opacity = 0.7 + 0.3 * unit(rng);
        // Smooth color field over position plus per-splat jitter.
        const Eigen::Vector3d dir = g.mean.norm() > 1e-9 ? Eigen::Vector3d(g.mean.normalized()) : Eigen::Vector3d::UnitY();
        for (int ch = 0; ch < 3; ++ch) {
            const double base = 0.5 + 0.35 * dir[ch];
            g.color[ch] = std::clamp(base + 0.15 * (unit(rng) - 0.5), 0.0, 1.0);
        }
        gs.push_back(g);
    }

    out.centroid = Eigen::Vector3d::Zero();
    for (const auto& g : gs) out.centroid += g.mean;
    out.centroid /= static_cast<double>(n);

    const double focal = 0.5 * opts.width / std::tan(0.5 * opts.fov_degrees * std::numbers::pi / 180.0);
    for (int k = 0; k < opts.num_cameras; ++k) {
        const double theta = 2.0 * std::numbers::pi * k / opts.num_cameras;
        const Eigen::Vector3d offset(std::cos(opts.elevation) * std::cos(theta), std::sin(opts.elevation),
                                     std::cos(opts.elevation) * std::sin(theta));
        out.orbit_cameras.push_back(Camera::look_at(out.centroid + opts.camera_distance * offset, out.centroid,
                                                    Eigen::Vector3d::UnitY(), focal, focal, opts.width,
                                                    opts.height));
    }
    return out;
}

} // namespace gsedit::splat
