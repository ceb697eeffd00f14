#pragma once

#include "gsedit/splat/scene.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace gsedit::splat {

enum class Layout { cluster, shell, boxes };

Layout parse_layout(const std::string& name);
std::string layout_name(Layout layout);

struct SyntheticOptions {
    double radius = 1.0;
    int num_cameras = 8;
    int width = 64;
    int height = 64;
    double camera_distance = 4.0;
    double elevation = 0.35;  // radians above the orbit plane
    double fov_degrees = 45.0;
};

struct SyntheticScene {
    GaussianScene scene;
    std::vector<Camera> orbit_cameras;
    Eigen::Vector3d centroid;
};

/// Deterministic for a fixed seed. Cameras orbit the centroid and look at it.
SyntheticScene make_synthetic_scene(std::uint64_t seed, std::size_t n, Layout layout,
                                    const SyntheticOptions& opts = {});

} // namespace gsedit::splat
