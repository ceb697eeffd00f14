#include "gsedit/numerics/gradcheck.hpp"
#include "gsedit/numerics/ops.hpp"
#include "gsedit/splat/refit.hpp"
#include "gsedit/splat/render.hpp"
#include "gsedit/splat/scene_io.hpp"
#include "gsedit/splat/synthetic.hpp"
#include "splat_oracle.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

using namespace gsedit;
using namespace gsedit::splat;
using numerics::DTensor;
namespace tu = gsedit::testing;
using tu::to_vec;

namespace {

Camera axis_camera(double f = 100.0, int size = 64) {
    Camera cam;
    cam.fx = cam.fy = f;
    cam.cx = cam.cy = size / 2;
    cam.width = cam.height = size;
    return cam;
}

Gaussian at(double x, double y, double z, double opacity, double s = 0.1) {
    Gaussian g;
    g.mean = {x, y, z};
    g.opacity = opacity;
    g.scale = Eigen::Vector3d::Constant(s);
    g.color = {0.2, 0.6, 0.9};
    return g;
}

double psnr(const DTensor& a, const DTensor& b) {
    double mse = 0;
    for (std::size_t i = 0; i < a.numel(); ++i) mse += std::pow(a.values()[i] - b.values()[i], 2);
    return 10 * std::log10(1.0 / (mse / a.numel()));
}

} // namespace

TEST(Project, OnAxisGaussian) {
    GaussianScene scene{{at(0, 0, 2, 1.0)}};
    auto p = project(scene, axis_camera(100, 64));
    ASSERT_EQ(p.size(), 1u);
    EXPECT_DOUBLE_EQ(p[0].mean2d.x(), 32.0);
    EXPECT_DOUBLE_EQ(p[0].mean2d.y(), 32.0);
    EXPECT_DOUBLE_EQ(p[0].depth, 2.0);
}

TEST(Project, BehindCameraIsCulled) {
    GaussianScene scene{{at(0, 0, -1, 1.0), at(0, 0, 0.005, 1.0), at(0, 0, 3, 1.0)}};
    auto p = project(scene, axis_camera());
    ASSERT_EQ(p.size(), 1u);
    EXPECT_EQ(p[0].index, 2u);
}

TEST(Project, IsotropicCovarianceOnAxis) {
    const double s = 0.07, d = 2.5, fx = 100;
    GaussianScene scene{{at(0, 0, d, 1.0, s)}};
    auto p = project(scene, axis_camera(fx));
    const double expected = std::pow(fx * s / d, 2) + 0.3;
    EXPECT_NEAR(p[0].cov2d(0, 0), expected, 1e-12);
    EXPECT_NEAR(p[0].cov2d(1, 1), expected, 1e-12);
    EXPECT_NEAR(p[0].cov2d(0, 1), 0.0, 1e-12);
}

TEST(Render, SingleOpaqueGaussianDepthAndColor) {
    GaussianScene scene{{at(0, 0, 4.2, 1.0)}};
    auto r = render(scene, axis_camera());
    EXPECT_NEAR(r.depth.at({0, 32, 32}), 4.2, 1e-5);
    EXPECT_NEAR(r.rgb.at({0, 32, 32}), 0.2, 1e-6);
    EXPECT_NEAR(r.rgb.at({1, 32, 32}), 0.6, 1e-6);
    EXPECT_NEAR(r.rgb.at({2, 32, 32}), 0.9, 1e-6);
}

TEST(Render, TwoLayerDepthComposite) {
    GaussianScene scene{{at(0, 0, 5.0, 1.0), at(0, 0, 2.0, 0.5)}};
    auto r = render(scene, axis_camera());
    EXPECT_NEAR(r.depth.at({0, 32, 32}), 3.5, 1e-5);
    EXPECT_NEAR(r.alpha.at({0, 32, 32}), 1.0, 1e-7);
}

TEST(Render, EmptySceneIsBlack) {
    auto r = render(GaussianScene{}, axis_camera(50, 8));
    for (auto* t : {&r.rgb, &r.depth, &r.alpha})
        for (double v : t->values()) EXPECT_EQ(v, 0.0);
    EXPECT_EQ(r.rgb.shape(), (numerics::Shape{3, 8, 8}));
}

TEST(Render, MatchesBruteForceOracle) {
    std::mt19937_64 rng(2024);
    for (int trial = 0; trial < 60; ++trial) {
        auto [scene, cam] = tu::random_small_scene(rng, 10);
        auto r = render(scene, cam);
        auto o = tu::brute_force_render(scene, cam);
        EXPECT_LE(tu::max_abs_diff(r.rgb, o.rgb), 1e-5) << "trial " << trial;
        EXPECT_LE(tu::max_abs_diff(r.depth, o.depth), 1e-5) << "trial " << trial;
        EXPECT_LE(tu::max_abs_diff(r.alpha, o.alpha), 1e-5) << "trial " << trial;
    }
}

TEST(Render, PermutationInvariantBitwise) {
    auto synth = make_synthetic_scene(5, 120, Layout::cluster, {.width = 32, .height = 32});
    auto shuffled = synth.scene;
    std::mt19937_64 rng(9);
    std::shuffle(shuffled.gaussians.begin(), shuffled.gaussians.end(), rng);
    for (const auto& cam : synth.orbit_cameras) {
        auto a = render(synth.scene, cam);
        auto b = render(shuffled, cam);
        EXPECT_EQ(to_vec(a.rgb), to_vec(b.rgb));
        EXPECT_EQ(to_vec(a.depth), to_vec(b.depth));
    }
}

TEST(Render, AlphaInUnitInterval) {
    std::mt19937_64 rng(77);
    for (int trial = 0; trial < 10; ++trial) {
        auto [scene, cam] = tu::random_small_scene(rng, 10);
        const auto r = render(scene, cam);
        for (double a : r.alpha.values()) {
            EXPECT_GE(a, 0.0);
            EXPECT_LE(a, 1.0);
        }
    }
}

TEST(Render, DifferentiableRenderMatchesForward) {
    auto synth = make_synthetic_scene(3, 40, Layout::shell, {.width = 24, .height = 24});
    std::vector<double> c, o;
    for (const auto& g : synth.scene.gaussians) {
        c.insert(c.end(), {g.color.x(), g.color.y(), g.color.z()});
        o.push_back(g.opacity);
    }
    auto rgb = render_rgb(synth.scene, DTensor::from({40, 3}, c), DTensor::from({40}, o), synth.orbit_cameras[0]);
    EXPECT_LE(tu::max_abs_diff(rgb.values(), render(synth.scene, synth.orbit_cameras[0]).rgb.values()), 1e-6);
}

TEST(Render, ColorAndOpacityGradientsMatchFiniteDifferences) {
    using namespace numerics;
    std::mt19937_64 rng(101);
    for (int trial = 0; trial < 5; ++trial) {
        auto [scene, cam] = tu::random_small_scene(rng, 6, 12);
        const std::size_t n = scene.size();
        std::vector<double> c, o;
        std::uniform_real_distribution<double> u(0.1, 0.9);
        for (std::size_t i = 0; i < n; ++i) {
            c.insert(c.end(), {u(rng), u(rng), u(rng)});
            o.push_back(u(rng));
        }
        auto colors = DTensor::from({n, 3}, c);
        auto opac = DTensor::from({n}, o);
        auto weights = tu::random_tensor({3, 12, 12}, rng);
        auto f = [&] { return sum(mul(render_rgb(scene, colors, opac, cam), weights)); };
        EXPECT_LE(grad_check(f, {colors, opac}, 1e-6), 1e-3) << "trial " << trial;
    }
}

TEST(Synthetic, DeterministicForSeed) {
    auto a = make_synthetic_scene(7, 200, Layout::boxes);
    auto b = make_synthetic_scene(7, 200, Layout::boxes);
    EXPECT_EQ(scene_to_json(a.scene).dump(), scene_to_json(b.scene).dump());
    EXPECT_EQ(cameras_to_json(a.orbit_cameras).dump(), cameras_to_json(b.orbit_cameras).dump());
    auto c = make_synthetic_scene(8, 200, Layout::boxes);
    EXPECT_NE(scene_to_json(a.scene).dump(), scene_to_json(c.scene).dump());
}

TEST(Synthetic, ShellMeansNearRadius) {
    SyntheticOptions opts;
    opts.radius = 1.5;
    auto s = make_synthetic_scene(1, 500, Layout::shell, opts);
    double max_scale = 0;
    for (const auto& g : s.scene.gaussians) max_scale = std::max(max_scale, g.scale.maxCoeff());
    for (const auto& g : s.scene.gaussians) EXPECT_NEAR(g.mean.norm(), 1.5, 3 * max_scale);
    s.scene.validate();
}

TEST(Synthetic, EveryOrbitCameraSeesCoverage) {
    for (auto layout : {Layout::cluster, Layout::shell, Layout::boxes})
        for (std::size_t n : {1u, 2u, 3u, 7u, 20u, 60u, 300u, 1000u}) {
            auto s = make_synthetic_scene(n * 3 + 1, n, layout, {.width = 32, .height = 32});
            for (const auto& cam : s.orbit_cameras) {
                auto r = render(s.scene, cam);
                const auto covered = std::count_if(r.alpha.values().begin(), r.alpha.values().end(),
                                                   [](double a) { return a > 0.5; });
                EXPECT_GE(covered, 0.2 * 32 * 32) << layout_name(layout) << " n=" << n;
            }
        }
}

TEST(Synthetic, OrbitCamerasFaceCentroid) {
    auto s = make_synthetic_scene(4, 50, Layout::cluster);
    for (const auto& cam : s.orbit_cameras) {
        const Eigen::Vector3d p = cam.rotation() * s.centroid + cam.translation();
        EXPECT_NEAR(p.x(), 0.0, 1e-9);
        EXPECT_NEAR(p.y(), 0.0, 1e-9);
        EXPECT_GT(p.z(), 0.0);
    }
}

TEST(SceneIo, JsonRoundTripIsExact) {
    auto s = make_synthetic_scene(11, 30, Layout::shell);
    auto back = scene_from_json(nlohmann::json::parse(scene_to_json(s.scene).dump()));
    auto cams = cameras_from_json(nlohmann::json::parse(cameras_to_json(s.orbit_cameras).dump()));
    EXPECT_EQ(to_vec(render(s.scene, s.orbit_cameras[2]).rgb), to_vec(render(back, cams[2]).rgb));
}

TEST(SceneIo, RejectsInvalidScene) {
    auto j = scene_to_json(GaussianScene{{at(0, 0, 1, 0.5)}});
    j["gaussians"][0]["opacity"] = 1.5;
    EXPECT_THROW(scene_from_json(j), std::invalid_argument);
    j["gaussians"][0]["opacity"] = 0.5;
    j["gaussians"][0]["rotation"] = {1.0, 1.0, 0.0, 0.0};
    EXPECT_THROW(scene_from_json(j), std::invalid_argument);
}

TEST(Camera, RejectsBadIntrinsics) {
    Camera cam = axis_camera();
    cam.fx = 0;
    EXPECT_THROW(cam.validate(), std::invalid_argument);
    cam = axis_camera();
    cam.world_to_camera(0, 0) = 2.0;
    EXPECT_THROW(cam.validate(), std::invalid_argument);
}

namespace {

std::vector<TargetView> views_of(const GaussianScene& scene, const std::vector<Camera>& cams,
                                 const std::function<Eigen::Vector3d(Eigen::Vector3d)>& edit) {
    std::vector<TargetView> views;
    for (const auto& cam : cams) {
        auto rgb = render(scene, cam).rgb;
        std::vector<double> v(rgb.values().begin(), rgb.values().end());
        const std::size_t plane = v.size() / 3;
        for (std::size_t p = 0; p < plane; ++p) {
            Eigen::Vector3d c = edit({v[p], v[plane + p], v[2 * plane + p]});
            for (int ch = 0; ch < 3; ++ch) v[ch * plane + p] = c[ch];
        }
        views.push_back({cam, DTensor::from(rgb.shape(), v)});
    }
    return views;
}

} // namespace

TEST(Refit, NoOpEditKeepsLoss) {
    auto s = make_synthetic_scene(21, 60, Layout::cluster, {.num_cameras = 3, .width = 24, .height = 24});
    auto views = views_of(s.scene, s.orbit_cameras, [](Eigen::Vector3d c) { return c; });
    auto r = refit_scene(s.scene, views, {.steps = 20, .lr = 0.02});
    EXPECT_LE(std::fabs(r.final_loss - r.initial_loss), 1e-6);
    EXPECT_LE(r.initial_loss, 1e-10);
}

TEST(Refit, RedShiftRaisesRedChannel) {
    auto s = make_synthetic_scene(22, 60, Layout::cluster, {.num_cameras = 3, .width = 24, .height = 24});
    auto views = views_of(s.scene, s.orbit_cameras, [](Eigen::Vector3d c) {
        return Eigen::Vector3d(std::min(1.0, c.x() + 0.3), c.y() * 0.8, c.z() * 0.8);
    });
    auto r = refit_scene(s.scene, views, {.steps = 60, .lr = 0.03});
    double before = 0, after = 0;
    for (std::size_t i = 0; i < s.scene.size(); ++i) {
        before += s.scene.gaussians[i].color.x();
        after += r.scene.gaussians[i].color.x();
    }
    EXPECT_GT(after, before);
    EXPECT_LT(r.final_loss, r.initial_loss);
    r.scene.validate();
}

TEST(Refit, ImprovesPsnrOnHueShift) {
    auto s = make_synthetic_scene(23, 80, Layout::shell, {.num_cameras = 3, .width = 24, .height = 24});
    auto views = views_of(s.scene, s.orbit_cameras, [](Eigen::Vector3d c) { return Eigen::Vector3d(c.y(), c.z(), c.x()); });
    auto r = refit_scene(s.scene, views, {.steps = 100, .lr = 0.03});
    const double before = psnr(render(s.scene, views[0].camera).rgb, views[0].rgb);
    const double after = psnr(render(r.scene, views[0].camera).rgb, views[0].rgb);
    EXPECT_GE(after, before + 5.0);
    for (std::size_t i = 1; i < r.loss_history.size(); ++i) EXPECT_TRUE(std::isfinite(r.loss_history[i]));
}

TEST(Refit, RejectsMismatchedTargets) {
    auto s = make_synthetic_scene(24, 10, Layout::cluster, {.num_cameras = 1, .width = 16, .height = 16});
    std::vector<TargetView> views{{s.orbit_cameras[0], DTensor::zeros({3, 8, 8})}};
    EXPECT_THROW(refit_scene(s.scene, views, {}), numerics::ShapeError);
    EXPECT_THROW(refit_scene(s.scene, {}, {}), std::invalid_argument);
}
