#include "gsedit/cli/cli.hpp"

#include "gsedit/cimln/checkpoint.hpp"
#include "gsedit/cimln/gradcheck_suite.hpp"
#include "gsedit/cimln/train.hpp"
#include "gsedit/io/files.hpp"
#include "gsedit/io/png.hpp"
#include "gsedit/io/rten.hpp"
#include "gsedit/pipeline/edit_scene.hpp"
#include "gsedit/pipeline/metrics.hpp"
#include "gsedit/splat/render.hpp"
#include "gsedit/splat/scene_io.hpp"
#include "gsedit/splat/synthetic.hpp"
#include "gsedit/wavelet/wavelet.hpp"

#include <CLI11.hpp>
#include <fmt/core.h>
#include <nlohmann/json.hpp>
#include <spdlog/sinks/stdout_sinks.h>
#include <spdlog/spdlog.h>

#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>

namespace gsedit::cli {

namespace fs = std::filesystem;
using numerics::DTensor;
using pipeline::StageError;

namespace {

// Thrown for bad argument values found after parsing; maps to exit code 2.
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

template <class F>
auto stage(const char* name, F&& f) {
    try {
        return f();
    } catch (const StageError&) {
        throw;
    } catch (const std::exception& e) {
        throw StageError(name, e.what());
    }
}

DTensor load_image(const fs::path& path) {
    if (path.extension() == ".png") return io::read_png(path);
    return io::read_rten(path);
}

std::string indexed(const char* stem, std::size_t i, const char* ext) { return fmt::format("{}_{:03}.{}", stem, i, ext); }

// Shortest round-trip form, always with a decimal point.
std::string format_number(double v) {
    auto s = fmt::format("{}", v);
    if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
    return s;
}

void print_json(const nlohmann::json& j) { fmt::print("{}\n", j.dump(2)); }

struct Globals {
    std::uint64_t seed = 0;
    std::string log_level = "warn";
};

// Each subcommand also takes --seed so it can follow the subcommand name.
std::uint64_t resolve_seed(const CLI::App* sub, const Globals& g, std::uint64_t local) {
    return sub->count("--seed") ? local : g.seed;
}

struct GenSceneArgs {
    std::uint64_t seed = 0;
    std::size_t n = 200;
    std::string layout = "cluster";
    int cameras = 8, width = 64, height = 64;
    double radius = 1.0;
    fs::path out;
};

struct RenderArgs {
    fs::path scene, cameras, out;
    std::vector<int> views;
};

struct TrainArgs {
    std::uint64_t seed = 0;
    fs::path renders, out;
    cimln::TrainConfig cfg;
    int features = 16, window = 3;
};

struct EnhanceArgs {
    fs::path ckpt, depth, rgb, out;
};

struct DwtArgs {
    fs::path in, prefix;
};

struct MetricsArgs {
    fs::path a, b, out;
    std::string metric = "psnr";
    double peak = 1.0;
};

struct GradcheckArgs {
    std::uint64_t seed = 0;
    double tol = 1e-3;
    fs::path out;
};

struct EditArgs {
    std::uint64_t seed = 0;
    fs::path job_file;
    pipeline::EditJob job;
    std::string edit = "identity";
    fs::path ckpt;
};

int cmd_gen_scene(const GenSceneArgs& a, std::uint64_t seed) {
    const auto layout = splat::parse_layout(a.layout);
    splat::SyntheticOptions opts;
    opts.radius = a.radius;
    opts.num_cameras = a.cameras;
    opts.width = a.width;
    opts.height = a.height;
    auto s = stage("generate", [&] { return splat::make_synthetic_scene(seed, a.n, layout, opts); });
    stage("write", [&] {
        fs::create_directories(a.out);
        splat::save_scene(a.out / "scene.json", s.scene);
        splat::save_cameras(a.out / "cameras.json", s.orbit_cameras);
        return 0;
    });
    print_json({{"scene", (a.out / "scene.json").string()},
                {"cameras", (a.out / "cameras.json").string()},
                {"gaussians", s.scene.gaussians.size()},
                {"views", s.orbit_cameras.size()}});
    return 0;
}

int cmd_render(const RenderArgs& a) {
    auto scene = stage("load", [&] { return splat::load_scene(a.scene); });
    auto cams = stage("load", [&] { return splat::load_cameras(a.cameras); });
    std::vector<int> views = a.views;
    if (views.empty())
        for (std::size_t i = 0; i < cams.size(); ++i) views.push_back(static_cast<int>(i));
    for (int v : views)
        if (v < 0 || static_cast<std::size_t>(v) >= cams.size())
            throw UsageError(fmt::format("view {} out of range for {} cameras", v, cams.size()));
    stage("write", [&] {
        fs::create_directories(a.out);
        return 0;
    });
    auto listing = nlohmann::json::array();
    for (int v : views) {
        const auto i = static_cast<std::size_t>(v);
        auto r = stage("render", [&] { return splat::render(scene, cams[i]); });
        stage("write", [&] {
            io::write_png(a.out / indexed("render", i, "png"), r.rgb);
            io::write_rten(a.out / indexed("render", i, "rten"), r.rgb);
            io::write_rten(a.out / indexed("depth", i, "rten"), r.depth);
            return 0;
        });
        listing.push_back({{"view", v}, {"height", cams[i].height}, {"width", cams[i].width}});
    }
    print_json({{"out", a.out.string()}, {"views", listing}});
    return 0;
}

// Pairs render_XXX.rten (or .png) with depth_XXX.rten, in index order.
std::vector<cimln::RenderPair> load_render_pairs(const fs::path& dir) {
    std::map<std::string, fs::path> depths;
    for (const auto& e : fs::directory_iterator(dir)) {
        const auto name = e.path().filename().string();
        if (name.rfind("depth_", 0) == 0 && e.path().extension() == ".rten") depths[name.substr(6)] = e.path();
    }
    std::vector<cimln::RenderPair> pairs;
    for (const auto& [suffix, depth_path] : depths) {
        auto rgb_path = dir / ("render_" + suffix);
        if (!fs::exists(rgb_path)) rgb_path.replace_extension(".png");
        if (!fs::exists(rgb_path)) throw std::runtime_error("no render image for " + depth_path.string());
        pairs.push_back({io::read_rten(depth_path), load_image(rgb_path)});
    }
    if (pairs.empty()) throw std::runtime_error("no depth_*.rten files in " + dir.string());
    return pairs;
}

int cmd_train(TrainArgs a, std::uint64_t seed) {
    a.cfg.seed = seed;
    a.cfg.model.features = static_cast<std::size_t>(a.features);
    a.cfg.model.window = a.window;
    try {
        a.cfg.validate();
    } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
    }
    auto pairs = stage("load", [&] { return load_render_pairs(a.renders); });
    spdlog::info("training on {} pairs for {} steps", pairs.size(), a.cfg.steps);
    auto result = stage("train", [&] { return cimln::train_self_supervised(pairs, a.cfg); });
    nlohmann::json summary{{"pairs", pairs.size()},
                           {"steps", a.cfg.steps},
                           {"lr", a.cfg.lr},
                           {"lambda", a.cfg.lambda_l1},
                           {"gamma", a.cfg.gamma_ba},
                           {"factor", a.cfg.downsample_factor},
                           {"seed", seed},
                           {"initial_loss", result.initial_loss},
                           {"best_loss", result.best_loss}};
    stage("write", [&] {
        cimln::save_checkpoint(a.out, result.model, summary);
        return 0;
    });
    print_json(summary);
    return 0;
}

int cmd_enhance(const EnhanceArgs& a) {
    auto model = stage("load", [&] { return cimln::load_checkpoint(a.ckpt); });
    auto depth = stage("load", [&] { return io::read_rten(a.depth); });
    auto rgb = stage("load", [&] { return load_image(a.rgb); });
    auto out = stage("enhance", [&] { return cimln::enhance_depth(model, depth, rgb); });
    stage("write", [&] {
        io::write_rten(a.out, out);
        return 0;
    });
    return 0;
}

int cmd_dwt(const DwtArgs& a) {
    auto x = stage("load", [&] { return load_image(a.in); });
    auto p = stage("dwt", [&] { return wavelet::dwt2(x); });
    stage("write", [&] {
        for (int b = 0; b < 4; ++b)
            io::write_rten(a.prefix.string() + "." + wavelet::WaveletPyramid::band_names[b] + ".rten", p.band(b));
        return 0;
    });
    return 0;
}

int cmd_idwt(const DwtArgs& a) {
    wavelet::WaveletPyramid p;
    stage("load", [&] {
        for (int b = 0; b < 4; ++b)
            p.band(b) = io::read_rten(a.in.string() + "." + wavelet::WaveletPyramid::band_names[b] + ".rten");
        return 0;
    });
    auto x = stage("idwt", [&] { return wavelet::idwt2(p); });
    stage("write", [&] {
        io::write_rten(a.prefix, x);
        return 0;
    });
    return 0;
}

int cmd_metrics(const MetricsArgs& a) {
    auto x = stage("load", [&] { return load_image(a.a); });
    auto y = stage("load", [&] { return load_image(a.b); });
    const double v = stage("metrics", [&] {
        return a.metric == "psnr" ? pipeline::compute_psnr(x, y, a.peak) : pipeline::compute_rmse(x, y);
    });
    if (!a.out.empty())
        stage("write", [&] {
            io::write_file_atomic(a.out, nlohmann::json{{"metric", a.metric}, {"value", v}}.dump(2) + "\n");
            return 0;
        });
    fmt::print("{}\n", format_number(v));
    return 0;
}

int cmd_gradcheck(const GradcheckArgs& a, std::uint64_t seed) {
    auto cases = stage("gradcheck", [&] { return cimln::run_gradient_checks(seed); });
    int failed = 0;
    auto report = nlohmann::json::array();
    for (const auto& c : cases) {
        const bool ok = c.rel_error <= a.tol;
        failed += !ok;
        fmt::print("{:<24} {:.3e} {}\n", c.name, c.rel_error, ok ? "ok" : "FAIL");
        report.push_back({{"op", c.name}, {"rel_error", c.rel_error}, {"pass", ok}});
    }
    if (!a.out.empty())
        stage("write", [&] {
            io::write_file_atomic(a.out, nlohmann::json{{"tolerance", a.tol}, {"cases", report}}.dump(2) + "\n");
            return 0;
        });
    if (failed) throw StageError("gradcheck", fmt::format("{} of {} cases above tolerance {}", failed, cases.size(), a.tol));
    return 0;
}

int cmd_edit(EditArgs a, const CLI::App* sub, std::uint64_t seed, bool seed_given) {
    pipeline::EditJob job;
    if (!a.job_file.empty()) job = stage("job", [&] { return pipeline::load_job(a.job_file); });
    auto given = [&](const char* flag) { return a.job_file.empty() || sub->count(flag) > 0; };
    const auto& f = a.job;
    if (given("--scene")) job.scene_path = f.scene_path;
    if (given("--cameras")) job.cameras_path = f.cameras_path;
    if (given("--out")) job.output_dir = f.output_dir;
    if (given("--refs")) job.reference_ids = f.reference_ids;
    if (given("--lambda")) job.lambda = f.lambda;
    if (given("--steps")) job.diffusion_steps = f.diffusion_steps;
    if (given("--beta-start")) job.beta_start = f.beta_start;
    if (given("--beta-end")) job.beta_end = f.beta_end;
    if (given("--refit-steps")) job.refit_steps = f.refit_steps;
    if (given("--refit-lr")) job.refit_lr = f.refit_lr;
    if (given("--save-latents-at")) job.save_latents_at = f.save_latents_at;
    if (a.job_file.empty() || seed_given) job.seed = seed;
    if (sub->count("--ckpt")) job.cimln_checkpoint = a.ckpt;
    try {
        if (given("--edit")) job.edit = diffusion::parse_edit(a.edit);
        if (job.scene_path.empty() || job.cameras_path.empty() || job.output_dir.empty())
            throw std::invalid_argument("--scene, --cameras and --out are required without --job");
        job.validate();
    } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
    }
    auto result = pipeline::edit_scene(job);
    print_json(pipeline::to_json(result.report));
    return 0;
}

void configure_logging(const std::string& level) {
    static auto logger = [] {
        auto l = std::make_shared<spdlog::logger>("gsedit", std::make_shared<spdlog::sinks::stderr_sink_mt>());
        l->set_pattern("[%l] %v");
        return l;
    }();
    spdlog::set_default_logger(logger);
    spdlog::set_level(spdlog::level::from_str(level));
}

} // namespace

std::string version() { return GSEDIT_VERSION; }

int run(int argc, const char* const* argv) {
    CLI::App app{"Multi-view consistent 3D Gaussian scene editing toolkit.", "gsedit"};
    app.set_version_flag("--version", version());
    app.require_subcommand(1);
    app.option_defaults()->always_capture_default();
    app.footer("Run 'gsedit <subcommand> --help' for subcommand flags.");

    Globals g;
    app.add_option("--seed", g.seed, "Seed for every random choice in the run");
    app.add_option("--log-level", g.log_level, "Log verbosity on stderr")
        ->check(CLI::IsMember({"trace", "debug", "info", "warn", "error", "off"}));

    auto add_seed = [](CLI::App* sub, std::uint64_t& seed) {
        sub->add_option("--seed", seed, "Seed (overrides the global --seed)");
    };
    auto add_sub = [&](const char* name, const char* desc) {
        auto* sub = app.add_subcommand(name, desc);
        sub->fallthrough();
        sub->footer("Global flags --seed and --log-level may also follow the subcommand.");
        return sub;
    };

    GenSceneArgs gen;
    auto* gen_cmd = add_sub("gen-scene", "Write a synthetic scene.json and orbit cameras.json");
    add_seed(gen_cmd, gen.seed);
    gen_cmd->add_option("--n", gen.n, "Number of Gaussians")->check(CLI::PositiveNumber);
    gen_cmd->add_option("--layout", gen.layout, "Spatial layout")->check(CLI::IsMember({"cluster", "shell", "boxes"}));
    gen_cmd->add_option("--cameras", gen.cameras, "Number of orbit cameras")->check(CLI::PositiveNumber);
    gen_cmd->add_option("--width", gen.width, "Image width in pixels")->check(CLI::PositiveNumber);
    gen_cmd->add_option("--height", gen.height, "Image height in pixels")->check(CLI::PositiveNumber);
    gen_cmd->add_option("--radius", gen.radius, "Scene radius")->check(CLI::PositiveNumber);
    gen_cmd->add_option("--out", gen.out, "Output directory")->required();

    RenderArgs rend;
    auto* render_cmd = add_sub("render", "Render RGB (PNG + .rten) and depth (.rten) for each camera");
    render_cmd->add_option("--scene", rend.scene, "Scene JSON")->required()->check(CLI::ExistingFile);
    render_cmd->add_option("--cameras", rend.cameras, "Camera JSON (object or array)")->required()->check(CLI::ExistingFile);
    render_cmd->add_option("--views", rend.views, "Comma-separated camera indices")
        ->delimiter(',')
        ->default_str("all");
    render_cmd->add_option("--out", rend.out, "Output directory")->required();

    TrainArgs train;
    auto* train_cmd = add_sub("train-cimln", "Self-supervised training of the depth enhancement network");
    add_seed(train_cmd, train.seed);
    train_cmd->add_option("--renders", train.renders, "Directory of render_XXX / depth_XXX pairs")
        ->required()
        ->check(CLI::ExistingDirectory);
    train_cmd->add_option("--steps", train.cfg.steps, "Optimizer steps")->check(CLI::PositiveNumber);
    train_cmd->add_option("--lr", train.cfg.lr, "Adam learning rate")->check(CLI::PositiveNumber);
    train_cmd->add_option("--factor", train.cfg.downsample_factor, "Depth degradation factor")->check(CLI::PositiveNumber);
    train_cmd->add_option("--lambda", train.cfg.lambda_l1, "Weight of the squared error term")->check(CLI::NonNegativeNumber);
    train_cmd->add_option("--gamma", train.cfg.gamma_ba, "Weight of the boundary term")->check(CLI::NonNegativeNumber);
    train_cmd->add_option("--features", train.features, "Feature channels")->check(CLI::PositiveNumber);
    train_cmd->add_option("--window", train.window, "Mutual learning window (odd)")->check(CLI::PositiveNumber);
    train_cmd->add_option("--out", train.out, "Checkpoint directory")->required();

    EnhanceArgs enh;
    auto* enhance_cmd = add_sub("enhance-depth", "Refine a depth map with a trained checkpoint");
    enhance_cmd->add_option("--ckpt", enh.ckpt, "Checkpoint directory")->required()->check(CLI::ExistingDirectory);
    enhance_cmd->add_option("--depth", enh.depth, "Depth .rten [1 x H x W]")->required()->check(CLI::ExistingFile);
    enhance_cmd->add_option("--rgb", enh.rgb, "Guide image, .png or .rten")->required()->check(CLI::ExistingFile);
    enhance_cmd->add_option("--out", enh.out, "Output depth .rten")->required();

    DwtArgs dwt;
    auto* dwt_cmd = add_sub("dwt", "One-level Haar transform into <prefix>.{LL,LH,HL,HH}.rten");
    dwt_cmd->add_option("--in", dwt.in, "Image, .png or .rten")->required()->check(CLI::ExistingFile);
    dwt_cmd->add_option("--out-prefix,--out", dwt.prefix, "Output path prefix")->required();

    DwtArgs idwt;
    auto* idwt_cmd = add_sub("idwt", "Inverse transform from <prefix>.{LL,LH,HL,HH}.rten");
    idwt_cmd->add_option("--in-prefix", idwt.in, "Input path prefix")->required();
    idwt_cmd->add_option("--out", idwt.prefix, "Output .rten")->required();

    MetricsArgs met;
    auto* metrics_cmd = add_sub("metrics", "Compare two images and print the value");
    metrics_cmd->add_option("--a", met.a, "First image, .png or .rten")->required()->check(CLI::ExistingFile);
    metrics_cmd->add_option("--b", met.b, "Second image, .png or .rten")->required()->check(CLI::ExistingFile);
    metrics_cmd->add_option("--metric", met.metric, "Metric")->check(CLI::IsMember({"psnr", "rmse"}));
    metrics_cmd->add_option("--peak", met.peak, "Peak signal value for psnr")->check(CLI::PositiveNumber);
    metrics_cmd->add_option("--out", met.out, "Also write {metric, value} JSON here");

    GradcheckArgs gc;
    auto* gradcheck_cmd = add_sub("gradcheck", "Finite-difference checks of the depth network ops");
    add_seed(gradcheck_cmd, gc.seed);
    gradcheck_cmd->add_option("--tol", gc.tol, "Maximum relative error")->check(CLI::PositiveNumber);
    gradcheck_cmd->add_option("--out", gc.out, "Also write a JSON report here");

    EditArgs ed;
    auto* edit_cmd = add_sub("edit", "Run the full edit pipeline from a job file or flags");
    add_seed(edit_cmd, ed.seed);
    edit_cmd->add_option("--job", ed.job_file, "Job JSON; flags given alongside override it")->check(CLI::ExistingFile);
    edit_cmd->add_option("--scene", ed.job.scene_path, "Scene JSON");
    edit_cmd->add_option("--cameras", ed.job.cameras_path, "Camera JSON");
    edit_cmd->add_option("--edit", ed.edit, "Edit as kind[:strength]: identity, darken, hue_shift, sharpen");
    edit_cmd->add_option("--refs", ed.job.reference_ids, "Comma-separated reference view indices")
        ->delimiter(',')
        ->default_str("0");
    edit_cmd->add_option("--lambda", ed.job.lambda, "Self-attention weight; 1 disables cross-view alignment")
        ->check(CLI::Range(0.0, 1.0));
    edit_cmd->add_option("--steps", ed.job.diffusion_steps, "Diffusion steps T")->check(CLI::PositiveNumber);
    edit_cmd->add_option("--beta-start", ed.job.beta_start, "First noise variance")->check(CLI::PositiveNumber);
    edit_cmd->add_option("--beta-end", ed.job.beta_end, "Last noise variance")->check(CLI::PositiveNumber);
    edit_cmd->add_option("--ckpt", ed.ckpt, "Depth network checkpoint; depth is used as rendered when omitted");
    edit_cmd->add_option("--refit-steps", ed.job.refit_steps, "Scene refit steps")->check(CLI::NonNegativeNumber);
    edit_cmd->add_option("--refit-lr", ed.job.refit_lr, "Scene refit learning rate")->check(CLI::PositiveNumber);
    edit_cmd->add_option("--save-latents-at", ed.job.save_latents_at, "Comma-separated steps whose latents are saved")
        ->delimiter(',')
        ->default_str("none");
    edit_cmd->add_option("--out", ed.job.output_dir, "Output directory");

    const char* stage_name = "usage";
    try {
        app.parse(argc, argv);
        configure_logging(g.log_level);
        auto* sub = app.get_subcommands().front();
        stage_name = sub->get_name().c_str();
        const auto seed_of = [&](std::uint64_t local) { return resolve_seed(sub, g, local); };
        if (sub == gen_cmd) return cmd_gen_scene(gen, seed_of(gen.seed));
        if (sub == render_cmd) return cmd_render(rend);
        if (sub == train_cmd) return cmd_train(train, seed_of(train.seed));
        if (sub == enhance_cmd) return cmd_enhance(enh);
        if (sub == dwt_cmd) return cmd_dwt(dwt);
        if (sub == idwt_cmd) return cmd_idwt(idwt);
        if (sub == metrics_cmd) return cmd_metrics(met);
        if (sub == gradcheck_cmd) return cmd_gradcheck(gc, seed_of(gc.seed));
        if (sub == edit_cmd) return cmd_edit(ed, sub, seed_of(ed.seed), sub->count("--seed") || app.count("--seed"));
        throw std::logic_error("unhandled subcommand");
    } catch (const CLI::Success& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        fmt::print(stderr, "ERROR usage: {}\n", e.what());
        return 2;
    } catch (const UsageError& e) {
        fmt::print(stderr, "ERROR usage: {}\n", e.what());
        return 2;
    } catch (const StageError& e) {
        fmt::print(stderr, "ERROR {}: {}\n", e.stage(), e.what());
        return 1;
    } catch (const std::exception& e) {
        fmt::print(stderr, "ERROR {}: {}\n", stage_name, e.what());
        return 1;
    }
}

} // namespace gsedit::cli
