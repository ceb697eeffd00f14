#include "gsedit/splat/render.hpp"
#include "gsedit/numerics/autograd.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <tuple>

namespace gsedit::splat {

using numerics::DTensor;

double ProjectedGaussian::falloff(double px, double py) const {
    const double dx = px - mean2d.x();
    const double dy = py - mean2d.y();
    const double power = -0.5 * (conic.x() * dx * dx + 2.0 * conic.y() * dx * dy + conic.z() * dy * dy);
    return std::exp(std::min(power, 0.0));
}

std::vector<ProjectedGaussian> project(const GaussianScene& scene, const Camera& cam) {
    cam.validate();
    const Eigen::Matrix3d w = cam.rotation();
    const Eigen::Vector3d t = cam.translation();
    std::vector<ProjectedGaussian> out;
    out.reserve(scene.size());
    for (std::size_t i = 0; i < scene.size(); ++i) {
        const auto& g = scene.gaussians[i];
        const Eigen::Vector3d p = w * g.mean + t;
        if (p.z() <= kNearPlane) continue;
        ProjectedGaussian pg;
        pg.index = i;
        pg.depth = p.z();
        pg.opacity = g.opacity;
        pg.color = g.color;
        pg.mean2d = {cam.fx * p.x() / p.z() + cam.cx, cam.fy * p.y() / p.z() + cam.cy};
        Eigen::Matrix<double, 2, 3> jac;
        jac << cam.fx / p.z(), 0.0, -cam.fx * p.x() / (p.z() * p.z()), 0.0, cam.fy / p.z(),
            -cam.fy * p.y() / (p.z() * p.z());
        const Eigen::Matrix<double, 2, 3> jw = jac * w;
        pg.cov2d = jw * g.covariance() * jw.transpose() + kCovarianceRegularizer * Eigen::Matrix2d::Identity();
        const double a = pg.cov2d(0, 0), b = pg.cov2d(0, 1), c = pg.cov2d(1, 1);
        const double det = a * c - b * b;
        pg.conic = {c / det, -b / det, a / det};
        const double mid = 0.5 * (a + c);
        const double lambda_max = mid + std::sqrt(std::max(mid * mid - det, 0.0));
        const double radius = std::ceil(std::sqrt(80.0 * lambda_max));
        pg.x0 = static_cast<int>(std::max(std::floor(pg.mean2d.x() - radius), -1.0));
        pg.x1 = static_cast<int>(std::min(std::ceil(pg.mean2d.x() + radius), static_cast<double>(cam.width)));
        pg.y0 = static_cast<int>(std::max(std::floor(pg.mean2d.y() - radius), -1.0));
        pg.y1 = static_cast<int>(std::min(std::ceil(pg.mean2d.y() + radius), static_cast<double>(cam.height)));
        out.push_back(pg);
    }
    return out;
}

namespace {

// Per-Gaussian appearance used by the compositor, indexed like the scene.
struct Appearance {
    std::vector<double> opacity;
    std::vector<Eigen::Vector3d> color;
};

// Depth first; the remaining keys make the order independent of how the
// scene happens to be listed.
std::vector<std::size_t> depth_order(const std::vector<ProjectedGaussian>& splats, const Appearance& app) {
    std::vector<std::size_t> order(splats.size());
    std::iota(order.begin(), order.end(), 0);
    auto key = [&](std::size_t k) {
        const auto& s = splats[k];
        const auto& c = app.color[s.index];
        return std::make_tuple(s.depth, s.mean2d.x(), s.mean2d.y(), app.opacity[s.index], c.x(), c.y(), c.z(),
                               s.cov2d(0, 0), s.cov2d(0, 1), s.cov2d(1, 1));
    };
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return key(a) < key(b); });
    return order;
}

struct Sample {
    std::size_t splat;  // index into the projected list
    double weight;      // 2D falloff
    double alpha;
    double transmittance;  // before this sample
};

// Walks one pixel front to back and records every sample that contributed.
void walk_pixel(const std::vector<ProjectedGaussian>& splats, const std::vector<std::size_t>& order,
                const Appearance& app, int px, int py, std::vector<Sample>& samples) {
    samples.clear();
    double trans = 1.0;
    for (std::size_t k : order) {
        const auto& s = splats[k];
        if (px < s.x0 || px > s.x1 || py < s.y0 || py > s.y1) continue;
        const double w = s.falloff(px, py);
        const double alpha = std::clamp(app.opacity[s.index] * w, 0.0, 1.0);
        samples.push_back({k, w, alpha, trans});
        trans *= 1.0 - alpha;
        if (trans < kTransmittanceCutoff) break;
    }
}

Appearance scene_appearance(const GaussianScene& scene) {
    Appearance app;
    for (const auto& g : scene.gaussians) {
        app.opacity.push_back(g.opacity);
        app.color.push_back(g.color);
    }
    return app;
}

} // namespace

RenderResult render(const GaussianScene& scene, const Camera& cam) {
    const auto splats = project(scene, cam);
    const Appearance app = scene_appearance(scene);
    const auto order = depth_order(splats, app);
    const std::size_t h = static_cast<std::size_t>(cam.height), w = static_cast<std::size_t>(cam.width);
    std::vector<double> rgb(3 * h * w, 0.0), depth(h * w, 0.0), alpha(h * w, 0.0);
    std::vector<Sample> samples;
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
            walk_pixel(splats, order, app, static_cast<int>(x), static_cast<int>(y), samples);
            Eigen::Vector3d c = Eigen::Vector3d::Zero();
            double d = 0.0, trans = 1.0;
            for (const auto& s : samples) {
                const auto& pg = splats[s.splat];
                const double contrib = s.alpha * s.transmittance;
                c += contrib * app.color[pg.index];
                d += contrib * pg.depth;
                trans = s.transmittance * (1.0 - s.alpha);
            }
            const std::size_t p = y * w + x;
            for (std::size_t ch = 0; ch < 3; ++ch) rgb[ch * h * w + p] = c[static_cast<Eigen::Index>(ch)];
            depth[p] = d;
            alpha[p] = 1.0 - trans;
        }
    return {DTensor::from({3, h, w}, std::move(rgb)), DTensor::from({1, h, w}, std::move(depth)),
            DTensor::from({1, h, w}, std::move(alpha))};
}

DTensor render_rgb(const GaussianScene& geometry, const DTensor& colors, const DTensor& opacities, const Camera& cam) {
    const std::size_t n = geometry.size();
    if (colors.shape() != numerics::Shape{n, 3} || opacities.numel() != n) {
        throw numerics::ShapeError(fmt::format("render_rgb: colors {} / opacities {} do not match {} Gaussians",
                                               numerics::shape_str(colors.shape()),
                                               numerics::shape_str(opacities.shape()), n));
    }
    auto splats = project(geometry, cam);
    Appearance app;
    for (std::size_t i = 0; i < n; ++i) {
        app.opacity.push_back(opacities.values()[i]);
        app.color.emplace_back(colors.values()[3 * i], colors.values()[3 * i + 1], colors.values()[3 * i + 2]);
    }
    auto order = depth_order(splats, app);
    const std::size_t h = static_cast<std::size_t>(cam.height), w = static_cast<std::size_t>(cam.width);
    std::vector<double> rgb(3 * h * w, 0.0);
    std::vector<Sample> samples;
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
            walk_pixel(splats, order, app, static_cast<int>(x), static_cast<int>(y), samples);
            for (const auto& s : samples) {
                const auto& col = app.color[splats[s.splat].index];
                for (std::size_t ch = 0; ch < 3; ++ch)
                    rgb[ch * h * w + y * w + x] += s.alpha * s.transmittance * col[static_cast<Eigen::Index>(ch)];
            }
        }

    return numerics::detail::make_op(
        {3, h, w}, std::move(rgb), {colors, opacities},
        [splats = std::move(splats), order = std::move(order), app = std::move(app), h,
         w](numerics::detail::Node& self) {
            auto& pc = self.parents[0];
            auto& po = self.parents[1];
            const bool want_c = numerics::detail::wants_grad(pc);
            const bool want_o = numerics::detail::wants_grad(po);
            double* gc = want_c ? pc->ensure_grad().data() : nullptr;
            double* go = want_o ? po->ensure_grad().data() : nullptr;
            std::vector<Sample> samples;
            for (std::size_t y = 0; y < h; ++y)
                for (std::size_t x = 0; x < w; ++x) {
                    walk_pixel(splats, order, app, static_cast<int>(x), static_cast<int>(y), samples);
                    Eigen::Vector3d g;
                    for (std::size_t ch = 0; ch < 3; ++ch)
                        g[static_cast<Eigen::Index>(ch)] = self.grad[ch * h * w + y * w + x];
                    // suffix: color composited behind the current sample, seen
                    // through the samples strictly between.
                    Eigen::Vector3d suffix = Eigen::Vector3d::Zero();
                    for (std::size_t k = samples.size(); k-- > 0;) {
                        const auto& s = samples[k];
                        const std::size_t gi = splats[s.splat].index;
                        const Eigen::Vector3d& col = app.color[gi];
                        if (want_c) {
                            for (std::size_t ch = 0; ch < 3; ++ch)
                                gc[3 * gi + ch] += g[static_cast<Eigen::Index>(ch)] * s.alpha * s.transmittance;
                        }
                        if (want_o) {
                            const double raw = app.opacity[gi] * s.weight;
                            if (raw > 0.0 && raw < 1.0) {
                                go[gi] += g.dot(col - suffix) * s.transmittance * s.weight;
                            }
                        }
                        suffix = s.alpha * col + (1.0 - s.alpha) * suffix;
                    }
                }
        });
}

} // namespace gsedit::splat
