#include "gsedit/pipeline/edit_scene.hpp"

#include "gsedit/cimln/checkpoint.hpp"
#include "gsedit/diffusion/edit_loop.hpp"
#include "gsedit/io/files.hpp"
#include "gsedit/io/png.hpp"
#include "gsedit/io/rten.hpp"
#include "gsedit/numerics/ops.hpp"
#include "gsedit/splat/refit.hpp"
#include "gsedit/splat/render.hpp"
#include "gsedit/splat/scene_io.hpp"

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>

namespace gsedit::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;
using numerics::DTensor;

void EditJob::validate() const {
    if (scene_path.empty()) throw std::invalid_argument("job needs a scene path");
    if (cameras_path.empty()) throw std::invalid_argument("job needs a camera list path");
    if (output_dir.empty()) throw std::invalid_argument("job needs an output directory");
    if (reference_ids.empty()) throw std::invalid_argument("job needs at least one reference view");
    for (int r : reference_ids)
        if (r < 0) throw std::invalid_argument(fmt::format("reference view id {} is negative", r));
    if (!(lambda >= 0.0 && lambda <= 1.0)) throw std::invalid_argument("lambda must be in [0,1]");
    if (!std::isfinite(edit.strength)) throw std::invalid_argument("edit strength must be finite");
    if (diffusion_steps < 1) throw std::invalid_argument("diffusion steps must be >= 1");
    if (refit_steps < 0) throw std::invalid_argument("refit steps must be >= 0");
    if (!(refit_lr > 0)) throw std::invalid_argument("refit lr must be positive");
    for (int t : save_latents_at)
        if (t < 0 || t > diffusion_steps) throw std::invalid_argument(fmt::format("latent step {} out of range", t));
}

EditJob job_from_json(const json& j, const fs::path& base_dir) {
    auto path = [&](const std::string& key) {
        fs::path p = j.at(key).get<std::string>();
        return p.is_absolute() || base_dir.empty() ? p : base_dir / p;
    };
    static const std::vector<std::string> known{"scene",       "cameras",   "edit",      "refs",
                                                "lambda",      "diffusion", "cimln_checkpoint", "out",
                                                "seed",        "refit",     "save_latents_at"};
    for (const auto& [key, _] : j.items())
        if (std::find(known.begin(), known.end(), key) == known.end()) {
            throw std::invalid_argument("unknown job field '" + key + "'");
        }
    EditJob job;
    job.scene_path = path("scene");
    job.cameras_path = path("cameras");
    job.output_dir = path("out");
    if (j.contains("edit")) job.edit = diffusion::parse_edit(j.at("edit").get<std::string>());
    if (j.contains("refs")) job.reference_ids = j.at("refs").get<std::vector<int>>();
    job.lambda = j.value("lambda", job.lambda);
    if (j.contains("diffusion")) {
        const auto& d = j.at("diffusion");
        job.diffusion_steps = d.value("steps", job.diffusion_steps);
        job.beta_start = d.value("beta_start", job.beta_start);
        job.beta_end = d.value("beta_end", job.beta_end);
    }
    if (j.contains("cimln_checkpoint") && !j.at("cimln_checkpoint").is_null()) {
        job.cimln_checkpoint = path("cimln_checkpoint");
    }
    job.seed = j.value("seed", job.seed);
    if (j.contains("refit")) {
        job.refit_steps = j.at("refit").value("steps", job.refit_steps);
        job.refit_lr = j.at("refit").value("lr", job.refit_lr);
    }
    if (j.contains("save_latents_at")) job.save_latents_at = j.at("save_latents_at").get<std::vector<int>>();
    job.validate();
    return job;
}

json job_to_json(const EditJob& job) {
    return {{"scene", job.scene_path.string()},
            {"cameras", job.cameras_path.string()},
            {"edit", diffusion::format_edit(job.edit)},
            {"refs", job.reference_ids},
            {"lambda", job.lambda},
            {"diffusion", {{"steps", job.diffusion_steps}, {"beta_start", job.beta_start}, {"beta_end", job.beta_end}}},
            {"cimln_checkpoint", job.cimln_checkpoint ? json(job.cimln_checkpoint->string()) : json(nullptr)},
            {"out", job.output_dir.string()},
            {"seed", job.seed},
            {"refit", {{"steps", job.refit_steps}, {"lr", job.refit_lr}}},
            {"save_latents_at", job.save_latents_at}};
}

EditJob load_job(const fs::path& path) {
    json j;
    try {
        j = json::parse(io::read_file(path));
    } catch (const json::parse_error& e) {
        throw io::IoError(fmt::format("{}: {}", path.string(), e.what()));
    }
    return job_from_json(j, path.parent_path());
}

namespace {

template <class F>
auto stage(const char* name, F&& fn) {
    try {
        spdlog::info("stage {}", name);
        return fn();
    } catch (const StageError&) {
        throw;
    } catch (const std::exception& e) {
        throw StageError(name, e.what());
    }
}

std::string indexed(const char* stem, std::size_t i, const char* ext) { return fmt::format("{}_{:03}.{}", stem, i, ext); }

DTensor clamp_unit(const DTensor& x) {
    numerics::NoGradGuard no_grad;
    return numerics::clamp(x, 0.0, 1.0);
}

} // namespace

EditResult edit_scene(const EditJob& job) {
    stage("job", [&] {
        job.validate();
        if (!fs::exists(job.scene_path)) throw io::IoError("scene file " + job.scene_path.string() + " not found");
        if (!fs::exists(job.cameras_path)) {
            throw io::IoError("camera file " + job.cameras_path.string() + " not found");
        }
        if (job.cimln_checkpoint && !fs::exists(*job.cimln_checkpoint)) {
            throw io::IoError("checkpoint " + job.cimln_checkpoint->string() + " not found");
        }
        return 0;
    });
    const auto& out = job.output_dir;
    auto scene = stage("load", [&] { return splat::load_scene(job.scene_path); });
    auto cams = stage("load", [&] {
        auto c = splat::load_cameras(job.cameras_path);
        if (c.empty()) throw std::invalid_argument("camera list is empty");
        for (int r : job.reference_ids)
            if (static_cast<std::size_t>(r) >= c.size()) {
                throw std::invalid_argument(fmt::format("reference view {} but only {} cameras", r, c.size()));
            }
        for (const auto& cam : c)
            if (cam.width != c[0].width || cam.height != c[0].height) {
                throw std::invalid_argument("all cameras must share one image size");
            }
        return c;
    });
    const std::size_t n = cams.size();
    stage("output", [&] {
        fs::create_directories(out);
        io::write_file_atomic(out / "job.json", job_to_json(job).dump(2) + "\n");
        return 0;
    });

    EditResult result;
    std::vector<DTensor> depths;
    stage("render", [&] {
        for (std::size_t i = 0; i < n; ++i) {
            auto r = splat::render(scene, cams[i]);
            io::write_png(out / indexed("render", i, "png"), r.rgb);
            io::write_rten(out / indexed("render", i, "rten"), r.rgb);
            io::write_rten(out / indexed("depth", i, "rten"), r.depth);
            result.original.push_back(r.rgb);
            depths.push_back(r.depth);
        }
        return 0;
    });

    if (job.cimln_checkpoint) {
        stage("enhance", [&] {
            const auto model = cimln::load_checkpoint(*job.cimln_checkpoint);
            for (std::size_t i = 0; i < n; ++i) {
                depths[i] = cimln::enhance_depth(model, depths[i], result.original[i]);
                io::write_rten(out / indexed("depth_enhanced", i, "rten"), depths[i]);
            }
            return 0;
        });
    }

    stage("edit", [&] {
        const auto sched = diffusion::make_schedule(job.diffusion_steps, job.beta_start, job.beta_end);
        const auto predictor = diffusion::toy_predictor(job.edit, sched, job.seed);
        std::vector<diffusion::Condition> conds;
        for (std::size_t i = 0; i < n; ++i) conds.push_back({depths[i], diffusion::edit_kind_name(job.edit.kind)});
        auto observer = [&](const diffusion::LatentState& st, bool inverting) {
            if (inverting && st.t != sched.steps) return;
            if (std::find(job.save_latents_at.begin(), job.save_latents_at.end(), st.t) == job.save_latents_at.end()) {
                return;
            }
            for (std::size_t i = 0; i < n; ++i) {
                io::write_rten(out / fmt::format("latent_t{:03}_{:03}.rten", st.t, i), st.z[i]);
            }
        };
        diffusion::EditLoopConfig loop;
        loop.reference_ids = job.reference_ids;
        loop.lambda = job.lambda;
        const auto final_state =
            diffusion::run_edit_loop({result.original, 0}, *predictor, conds, sched, loop, observer);
        for (std::size_t i = 0; i < n; ++i) {
            result.edited.push_back(clamp_unit(final_state.z[i]));
            io::write_rten(out / indexed("edited", i, "rten"), result.edited[i]);
            io::write_png(out / indexed("view", i, "png"), result.edited[i]);
        }
        return 0;
    });

    result.scene = stage("refit", [&] {
        std::vector<splat::TargetView> targets;
        for (std::size_t i = 0; i < n; ++i) targets.push_back({cams[i], result.edited[i]});
        auto r = splat::refit_scene(scene, targets, {.steps = job.refit_steps, .lr = job.refit_lr});
        spdlog::info("refit loss {:.6g} -> {:.6g}", r.initial_loss, r.final_loss);
        splat::save_scene(out / "scene_edited.json", r.scene);
        return r.scene;
    });

    stage("metrics", [&] {
        double sq = 0.0;
        auto& rep = result.report;
        for (std::size_t i = 0; i < n; ++i) {
            auto rr = splat::render(result.scene, cams[i]).rgb;
            io::write_png(out / indexed("rerender", i, "png"), rr);
            const double rmse = compute_rmse(rr, result.original[i]);
            sq += rmse * rmse;
            rep.per_view.push_back({static_cast<int>(i), compute_psnr(rr, result.original[i]), rmse,
                                    mean_luminance(result.original[i]), mean_luminance(result.edited[i]),
                                    mean_luminance(rr)});
            result.rerender.push_back(std::move(rr));
        }
        const double mse = sq / static_cast<double>(n);
        rep.rmse = std::sqrt(mse);
        rep.psnr_db = mse < 1e-10 ? kPsnrCap : std::min(kPsnrCap, -10.0 * std::log10(mse));
        rep.cross_view_std = n >= 2 ? cross_view_consistency(result.edited) : 0.0;
        io::write_file_atomic(out / "report.json", to_json(rep).dump(2) + "\n");
        return 0;
    });
    return result;
}

} // namespace gsedit::pipeline
