// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fail.

#include "gsedit/cimln/gradcheck_suite.hpp"
#include "gsedit/cimln/train.hpp"
#include "gsedit/diffusion/edit_loop.hpp"
#include "gsedit/io/files.hpp"
#include "gsedit/numerics/ops.hpp"
#include "gsedit/pipeline/edit_scene.hpp"
#include "gsedit/pipeline/metrics.hpp"
#include "gsedit/splat/refit.hpp"
#include "gsedit/splat/render.hpp"
#include "gsedit/splat/scene_io.hpp"
#include "gsedit/splat/synthetic.hpp"
#include "gsedit/wavelet/wavelet.hpp"
#include "../unit/splat_oracle.hpp"
#include "../unit/test_util.hpp"

#include <fmt/core.h>
#include <spdlog/spdlog.h>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <functional>
#include <random>

using namespace gsedit;
using numerics::DTensor;
namespace fs = std::filesystem;
namespace tu = gsedit::testing;

namespace {

struct Outcome {
    bool pass;
    std::string detail;
};

int failures = 0;

void criterion(const char* id, double limit_s, const std::function<Outcome()>& body) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o{false, ""};
    try {
        o = body();
    } catch (const std::exception& e) {
        o = {false, fmt::format("exception: {}", e.what())};
    }
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_time = s < limit_s;
    const bool pass = o.pass && in_time;
    failures += !pass;
    fmt::print("{} {} {} [{:.1f}s / {:.0f}s{}]\n", id, pass ? "PASS" : "FAIL", o.detail, s, limit_s,
               in_time ? "" : " over budget");
    std::fflush(stdout);
}

double sum_sq(std::span<const double> v) {
    double s = 0;
    for (double x : v) s += x * x;
    return s;
}

double rmse(const DTensor& a, const DTensor& b) {
    double s = 0;
    for (std::size_t i = 0; i < a.numel(); ++i) s += std::pow(a.values()[i] - b.values()[i], 2);
    return std::sqrt(s / static_cast<double>(a.numel()));
}

std::vector<cimln::RenderPair> render_pairs(std::uint64_t seed, std::size_t n, int cams) {
    auto s = splat::make_synthetic_scene(seed, n, splat::Layout::boxes, {.num_cameras = cams, .width = 32, .height = 32});
    std::vector<cimln::RenderPair> out;
    for (const auto& c : s.orbit_cameras) {
        auto r = splat::render(s.scene, c);
        out.push_back({r.depth, r.rgb});
    }
    return out;
}

Outcome a1_renderer_oracle() {
    std::mt19937_64 rng(2024);
    double worst = 0;
    const int trials = 60;
    for (int t = 0; t < trials; ++t) {
        auto [scene, cam] = tu::random_small_scene(rng, 10, 16);
        auto r = splat::render(scene, cam);
        auto o = tu::brute_force_render(scene, cam);
        worst = std::max({worst, tu::max_abs_diff(r.rgb, o.rgb), tu::max_abs_diff(r.depth, o.depth),
                          tu::max_abs_diff(r.alpha, o.alpha)});
    }
    return {worst <= 1e-5, fmt::format("{} scenes, max-abs {:.2e} (<= 1e-5)", trials, worst)};
}

Outcome a2_gradients() {
    auto cases = cimln::run_gradient_checks(0);
    double worst = 0;
    std::string worst_name;
    for (const auto& c : cases)
        if (!(c.rel_error <= worst) || worst_name.empty()) worst = c.rel_error, worst_name = c.name;
    return {worst <= 1e-3, fmt::format("{} checks, worst rel err {:.2e} at {} (<= 1e-3)", cases.size(), worst, worst_name)};
}

Outcome a3_cimln_learns() {
    auto train = render_pairs(1, 300, 8);
    auto held = render_pairs(99, 300, 4);
    cimln::TrainConfig cfg;  // 200 steps
    auto r = cimln::train_self_supervised(train, cfg);
    const double ratio = r.best_loss / r.initial_loss;
    double enhanced = 0, baseline = 0;
    for (const auto& p : held) {
        auto in = cimln::degrade_depth(p.depth, cfg.downsample_factor);
        auto out = cimln::enhance_depth(r.model, in, p.rgb);
        enhanced += std::pow(rmse(out, p.depth), 2);
        baseline += std::pow(rmse(in, p.depth), 2);
    }
    enhanced = std::sqrt(enhanced / held.size());
    baseline = std::sqrt(baseline / held.size());
    return {ratio <= 0.5 && enhanced <= baseline,
            fmt::format("loss {:.4g} -> {:.4g} (ratio {:.3f} <= 0.5); held-out rmse {:.5f} vs bilinear {:.5f}",
                        r.initial_loss, r.best_loss, ratio, enhanced, baseline)};
}

Outcome a4_wavelet() {
    std::mt19937_64 rng(44);
    std::uniform_int_distribution<int> ch(1, 3), half(1, 32);
    double recon = 0, parseval = 0;
    for (int t = 0; t < 100; ++t) {
        const std::size_t c = ch(rng), h = 2 * half(rng), w = 2 * half(rng);
        auto x = t == 0 ? tu::random_tensor({3, 64, 64}, rng) : tu::random_tensor({c, h, w}, rng);
        auto p = wavelet::dwt2(x);
        auto y = wavelet::idwt2(p);
        recon = std::max(recon, tu::max_abs_diff(y.values(), x.values()));
        double bands = 0;
        for (int b = 0; b < 4; ++b) bands += sum_sq(p.band(b).values());
        const double e = sum_sq(x.values());
        parseval = std::max(parseval, std::fabs(bands - e) / e);
    }
    // Blend endpoints.
    auto self = tu::random_tensor({3, 8, 8}, rng), a = tu::random_tensor({3, 8, 8}, rng),
         b = tu::random_tensor({3, 8, 8}, rng);
    auto one = wavelet::blend_attention(self, {a, b}, 1.0);
    auto zero_single = wavelet::blend_attention(self, {a}, 0.0);
    auto zero_pair = wavelet::blend_attention(self, {a, b}, 0.0);
    const bool self_exact = tu::to_vec(one) == tu::to_vec(self);
    const bool cross_exact = tu::to_vec(zero_single) == tu::to_vec(a);
    std::vector<double> mean(a.numel());
    for (std::size_t i = 0; i < mean.size(); ++i) mean[i] = (a.values()[i] + b.values()[i]) / 2;
    const double pair_err = tu::max_abs_diff(zero_pair, mean);
    const bool pass = recon <= 1e-5 && parseval <= 1e-4 && self_exact && cross_exact && pair_err <= 1e-6;
    return {pass, fmt::format("100 images: recon {:.2e} (<= 1e-5), energy rel {:.2e} (<= 1e-4); "
                              "lambda=1 exact {}, lambda=0 exact {} (mean of two {:.1e})",
                              recon, parseval, self_exact, cross_exact, pair_err)};
}

Outcome a5_wca_consistency() {
    std::string detail;
    bool pass = true;
    auto sched = diffusion::make_schedule();
    for (std::uint64_t seed : {1, 2, 3}) {
        auto s = splat::make_synthetic_scene(seed, 200, splat::Layout::boxes, {.num_cameras = 4, .width = 32, .height = 32});
        diffusion::LatentState st;
        std::vector<diffusion::Condition> conds;
        for (const auto& c : s.orbit_cameras) {
            auto r = splat::render(s.scene, c);
            st.z.push_back(r.rgb);
            conds.push_back({r.depth, "hue_shift"});
        }
        auto pred = diffusion::toy_predictor({diffusion::EditKind::hue_shift, 0.3}, sched, seed);
        double spread[2];
        int k = 0;
        for (double lambda : {0.5, 1.0}) {
            diffusion::EditLoopConfig cfg;
            cfg.lambda = lambda;
            auto out = diffusion::run_edit_loop(st, *pred, conds, sched, cfg);
            for (auto& z : out.z) z = numerics::clamp(z, 0.0, 1.0);
            spread[k++] = pipeline::cross_view_consistency(out.z);
        }
        pass = pass && spread[0] < spread[1];
        detail += fmt::format("{}seed {}: {:.4f} < {:.4f}", detail.empty() ? "" : "; ", seed, spread[0], spread[1]);
    }
    return {pass, "consistency lambda=0.5 vs 1: " + detail};
}

Outcome a6_ddim_round_trip() {
    auto sched = diffusion::make_schedule(50);
    auto pred = diffusion::toy_predictor({diffusion::EditKind::identity, 0.0}, sched, 5);
    std::mt19937_64 rng(6);
    double worst = 0;
    for (int trial = 0; trial < 10; ++trial) {
        auto z0 = tu::random_tensor({3, 8, 8}, rng);
        diffusion::Condition cond{DTensor::full({1, 8, 8}, 1.0), ""};
        auto z = z0;
        for (int t = 0; t < sched.steps; ++t) z = diffusion::ddim_invert_step(z, pred->predict(z, t, cond), t, sched);
        for (int t = sched.steps; t >= 1; --t) z = diffusion::ddim_denoise_step(z, pred->predict(z, t, cond), t, sched);
        worst = std::max(worst, tu::max_abs_diff(z.values(), z0.values()));
    }
    return {worst <= 1e-4, fmt::format("T=50, 10 latents 3x8x8: max-abs {:.2e} (<= 1e-4)", worst)};
}

struct PipelineRun {
    pipeline::EditResult result;
    std::vector<std::string> files;
};

PipelineRun run_pipeline(const fs::path& root, const std::string& name, const std::string& edit, double lambda) {
    auto s = splat::make_synthetic_scene(8, 200, splat::Layout::cluster, {.num_cameras = 4, .width = 32, .height = 32});
    const auto dir = root / name;
    fs::create_directories(dir);
    splat::save_scene(dir / "scene.json", s.scene);
    splat::save_cameras(dir / "cameras.json", s.orbit_cameras);
    pipeline::EditJob job;
    job.scene_path = dir / "scene.json";
    job.cameras_path = dir / "cameras.json";
    job.edit = diffusion::parse_edit(edit);
    job.lambda = lambda;
    job.output_dir = dir / "out";
    job.seed = 11;
    PipelineRun run{pipeline::edit_scene(job), {}};
    for (std::size_t i = 0; i < 4; ++i)
        for (auto stem : {"view", "rerender"}) run.files.push_back(io::read_file(job.output_dir / fmt::format("{}_{:03}.png", stem, i)));
    run.files.push_back(io::read_file(job.output_dir / "scene_edited.json"));
    return run;
}

Outcome a7_end_to_end() {
    const auto root = fs::temp_directory_path() / "gsedit_acceptance_a7";
    fs::remove_all(root);
    auto id1 = run_pipeline(root, "identity_1", "identity", 1.0);
    auto id2 = run_pipeline(root, "identity_2", "identity", 1.0);
    auto dk1 = run_pipeline(root, "darken_1", "darken:0.5", 0.5);
    auto dk2 = run_pipeline(root, "darken_2", "darken:0.5", 0.5);
    fs::remove_all(root);
    double lum_orig = 0, lum_re = 0;
    for (std::size_t i = 0; i < dk1.result.original.size(); ++i) {
        lum_orig += pipeline::mean_luminance(dk1.result.original[i]);
        lum_re += pipeline::mean_luminance(dk1.result.rerender[i]);
    }
    lum_orig /= dk1.result.original.size();
    lum_re /= dk1.result.original.size();
    const double psnr = id1.result.report.psnr_db;
    const bool repro = id1.files == id2.files && dk1.files == dk2.files;
    return {psnr >= 40.0 && lum_re < lum_orig && repro,
            fmt::format("identity psnr {:.1f} dB (>= 40); darken luminance {:.4f} -> {:.4f}; bitwise repeat {}", psnr,
                        lum_orig, lum_re, repro)};
}

Outcome a8_refit() {
    auto s = splat::make_synthetic_scene(12, 200, splat::Layout::cluster, {.num_cameras = 3, .width = 32, .height = 32});
    auto sched = diffusion::make_schedule();
    diffusion::ToyPredictor hue({diffusion::EditKind::hue_shift, 0.3}, sched, 0);
    std::vector<splat::TargetView> views;
    std::vector<DTensor> targets, before;
    for (const auto& c : s.orbit_cameras) {
        auto r = splat::render(s.scene, c);
        auto target = numerics::clamp(numerics::add(r.rgb, hue.edit_delta(r.rgb, {r.depth, "hue_shift"})), 0.0, 1.0);
        views.push_back({c, target});
        targets.push_back(target);
        before.push_back(r.rgb);
    }
    auto fit = splat::refit_scene(s.scene, views, {.steps = 300, .lr = 0.02});
    std::vector<DTensor> after;
    for (const auto& c : s.orbit_cameras) after.push_back(splat::render(fit.scene, c).rgb);
    auto pooled_psnr = [&](const std::vector<DTensor>& xs) {
        double mse = 0;
        for (std::size_t i = 0; i < xs.size(); ++i) mse += std::pow(rmse(xs[i], targets[i]), 2);
        return 10 * std::log10(1.0 / (mse / xs.size()));
    };
    const double p0 = pooled_psnr(before), p1 = pooled_psnr(after);
    return {p1 >= p0 + 5.0, fmt::format("200 Gaussians, 3 views, 300 steps: psnr {:.2f} -> {:.2f} dB (gain {:.2f} >= 5)",
                                        p0, p1, p1 - p0)};
}

} // namespace

int main() {
    spdlog::set_level(spdlog::level::warn);
    criterion("A1", 10, a1_renderer_oracle);
    criterion("A2", 60, a2_gradients);
    criterion("A3", 300, a3_cimln_learns);
    criterion("A4", 10, a4_wavelet);
    criterion("A5", 120, a5_wca_consistency);
    criterion("A6", 5, a6_ddim_round_trip);
    criterion("A7", 300, a7_end_to_end);
    criterion("A8", 180, a8_refit);
    fmt::print("{} of 8 criteria failed\n", failures);
    return failures ? 1 : 0;
}
