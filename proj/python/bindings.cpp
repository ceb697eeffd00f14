#include "gsedit/cimln/checkpoint.hpp"
#include "gsedit/cimln/gradcheck_suite.hpp"
#include "gsedit/cimln/train.hpp"
#include "gsedit/diffusion/predictor.hpp"
#include "gsedit/diffusion/schedule.hpp"
#include "gsedit/pipeline/edit_scene.hpp"
#include "gsedit/pipeline/metrics.hpp"
#include "gsedit/splat/render.hpp"
#include "gsedit/splat/scene_io.hpp"
#include "gsedit/splat/synthetic.hpp"
#include "gsedit/wavelet/wavelet.hpp"

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

namespace py = pybind11;
using namespace gsedit;
using numerics::DTensor;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

DTensor to_tensor(const Array& a) {
    numerics::Shape shape(a.shape(), a.shape() + a.ndim());
    return DTensor::from(shape, std::vector<double>(a.data(), a.data() + a.size()));
}

Array to_array(const DTensor& t) {
    std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
    Array out(shape);
    const auto v = t.values();
    std::copy(v.begin(), v.end(), out.mutable_data());
    return out;
}

// JSON crosses the boundary as text; the Python wrapper does the parsing.
nlohmann::json parse(const std::string& s) { return nlohmann::json::parse(s); }

} // namespace

PYBIND11_MODULE(_core, m) {
    m.attr("__version__") = GSEDIT_VERSION;

    static py::exception<pipeline::StageError> stage_error(m, "StageError", PyExc_RuntimeError);
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const pipeline::StageError& e) {
            PyErr_SetObject(stage_error.ptr(), py::make_tuple(e.stage(), e.what()).ptr());
        }
    });

    m.def(
        "make_synthetic_scene",
        [](std::uint64_t seed, std::size_t n, const std::string& layout, int cameras, int width, int height) {
            splat::SyntheticOptions opts;
            opts.num_cameras = cameras;
            opts.width = width;
            opts.height = height;
            auto s = splat::make_synthetic_scene(seed, n, splat::parse_layout(layout), opts);
            return py::make_tuple(splat::scene_to_json(s.scene).dump(), splat::cameras_to_json(s.orbit_cameras).dump());
        },
        py::arg("seed"), py::arg("n"), py::arg("layout") = "cluster", py::arg("cameras") = 8, py::arg("width") = 64,
        py::arg("height") = 64);

    m.def(
        "render",
        [](const std::string& scene, const std::string& camera) {
            auto r = splat::render(splat::scene_from_json(parse(scene)), splat::camera_from_json(parse(camera)));
            return py::make_tuple(to_array(r.rgb), to_array(r.depth), to_array(r.alpha));
        },
        py::arg("scene"), py::arg("camera"));

    m.def("dwt2", [](const Array& x) {
        auto p = wavelet::dwt2(to_tensor(x));
        return py::make_tuple(to_array(p.ll), to_array(p.lh), to_array(p.hl), to_array(p.hh));
    });
    m.def("idwt2", [](const Array& ll, const Array& lh, const Array& hl, const Array& hh) {
        wavelet::WaveletPyramid p{to_tensor(ll), to_tensor(lh), to_tensor(hl), to_tensor(hh), {}};
        return to_array(wavelet::idwt2(p));
    });
    m.def(
        "wca",
        [](const Array& query, const Array& context) {
            const auto q = to_tensor(query);
            return to_array(wavelet::wca(q, to_tensor(context), wavelet::AttentionParams::identity(q.dim(0))));
        },
        py::arg("query"), py::arg("context"));

    m.def(
        "compute_psnr", [](const Array& a, const Array& b, double peak) { return pipeline::compute_psnr(to_tensor(a), to_tensor(b), peak); },
        py::arg("a"), py::arg("b"), py::arg("peak") = 1.0);
    m.def("compute_rmse", [](const Array& a, const Array& b) { return pipeline::compute_rmse(to_tensor(a), to_tensor(b)); });
    m.def("cross_view_consistency", [](const std::vector<Array>& views) {
        std::vector<DTensor> ts;
        for (const auto& v : views) ts.push_back(to_tensor(v));
        return pipeline::cross_view_consistency(ts);
    });

    m.def(
        "ddim_round_trip",
        [](const Array& z0, int steps, std::uint64_t seed) {
            auto sched = diffusion::make_schedule(steps);
            auto z = to_tensor(z0);
            const auto e = diffusion::noise_field(z.shape(), seed);
            for (int t = 0; t < steps; ++t) z = diffusion::ddim_invert_step(z, e, t, sched);
            for (int t = steps; t >= 1; --t) z = diffusion::ddim_denoise_step(z, e, t, sched);
            return to_array(z);
        },
        py::arg("z0"), py::arg("steps") = 50, py::arg("seed") = 0);

    m.def(
        "train_cimln",
        [](const std::vector<std::pair<Array, Array>>& pairs, const std::filesystem::path& out, int steps, double lr,
           int factor, double lambda, double gamma, std::size_t features, std::uint64_t seed) {
            std::vector<cimln::RenderPair> rp;
            for (const auto& [d, c] : pairs) rp.push_back({to_tensor(d), to_tensor(c)});
            cimln::TrainConfig cfg;
            cfg.steps = steps;
            cfg.lr = lr;
            cfg.downsample_factor = factor;
            cfg.lambda_l1 = lambda;
            cfg.gamma_ba = gamma;
            cfg.model.features = features;
            cfg.seed = seed;
            cfg.validate();
            cimln::TrainResult r;
            {
                py::gil_scoped_release release;
                r = cimln::train_self_supervised(rp, cfg);
            }
            cimln::save_checkpoint(out, r.model, {{"initial_loss", r.initial_loss}, {"best_loss", r.best_loss}});
            return py::make_tuple(r.initial_loss, r.best_loss, r.loss_history);
        },
        py::arg("pairs"), py::arg("out"), py::arg("steps") = 200, py::arg("lr") = 3e-4, py::arg("factor") = 2,
        py::arg("lambda_") = 1.0, py::arg("gamma") = 0.1, py::arg("features") = 16, py::arg("seed") = 0);
    m.def(
        "enhance_depth",
        [](const std::filesystem::path& ckpt, const Array& depth, const Array& rgb) {
            return to_array(cimln::enhance_depth(cimln::load_checkpoint(ckpt), to_tensor(depth), to_tensor(rgb)));
        },
        py::arg("ckpt"), py::arg("depth"), py::arg("rgb"));

    m.def(
        "edit_scene",
        [](const std::string& job, const std::filesystem::path& base_dir) {
            auto j = pipeline::job_from_json(parse(job), base_dir);
            pipeline::EditResult r;
            {
                py::gil_scoped_release release;
                r = pipeline::edit_scene(j);
            }
            return pipeline::to_json(r.report).dump();
        },
        py::arg("job"), py::arg("base_dir") = std::filesystem::path{});

    m.def("gradient_checks", [](std::uint64_t seed) {
        std::vector<std::pair<std::string, double>> out;
        for (const auto& c : cimln::run_gradient_checks(seed)) out.emplace_back(c.name, c.rel_error);
        return out;
    }, py::arg("seed") = 0);
}
