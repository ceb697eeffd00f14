#include "gsedit/splat/refit.hpp"
#include "gsedit/numerics/ops.hpp"
#include "gsedit/numerics/optim.hpp"
#include "gsedit/splat/render.hpp"

#include <algorithm>
#include <stdexcept>

namespace gsedit::splat {

using namespace numerics;

namespace {

DTensor view_loss(const GaussianScene& geometry, const DTensor& colors, const DTensor& opacities,
                  const std::vector<TargetView>& views) {
    DTensor total;
    for (const auto& v : views) {
        const auto diff = sub(render_rgb(geometry, colors, opacities, v.camera), v.rgb);
        const auto l = mean(mul(diff, diff));
        total = total.defined() ? add(total, l) : l;
    }
    return scale(total, 1.0 / static_cast<double>(views.size()));
}

GaussianScene with_appearance(GaussianScene scene, const DTensor& colors, const DTensor& opacities) {
    for (std::size_t i = 0; i < scene.size(); ++i) {
        auto& g = scene.gaussians[i];
        g.opacity = opacities.values()[i];
        g.color = {colors.values()[3 * i], colors.values()[3 * i + 1], colors.values()[3 * i + 2]};
    }
    return scene;
}

} // namespace

double render_loss(const GaussianScene& scene, const std::vector<TargetView>& views) {
    if (views.empty()) throw std::invalid_argument("render_loss needs at least one view");
    NoGradGuard no_grad;
    std::vector<double> c, o;
    for (const auto& g : scene.gaussians) {
        c.insert(c.end(), {g.color.x(), g.color.y(), g.color.z()});
        o.push_back(g.opacity);
    }
    return view_loss(scene, DTensor::from({scene.size(), 3}, c), DTensor::from({scene.size()}, o), views).item();
}

RefitResult refit_scene(const GaussianScene& scene, const std::vector<TargetView>& views, const RefitConfig& cfg) {
    if (views.empty()) throw std::invalid_argument("refit_scene needs at least one view");
    for (const auto& v : views) {
        const Shape expected{3, static_cast<std::size_t>(v.camera.height), static_cast<std::size_t>(v.camera.width)};
        if (v.rgb.shape() != expected) {
            throw ShapeError("refit target " + shape_str(v.rgb.shape()) + " does not match camera " +
                             shape_str(expected));
        }
    }
    const std::size_t n = scene.size();
    std::vector<double> c, o;
    for (const auto& g : scene.gaussians) {
        c.insert(c.end(), {g.color.x(), g.color.y(), g.color.z()});
        o.push_back(g.opacity);
    }
    std::vector<DTensor> params{DTensor::from({n, 3}, c, true), DTensor::from({n}, o, true)};
    AdamState state;
    const AdamConfig adam{.lr = cfg.lr};

    RefitResult result;
    std::vector<double> best_c = c, best_o = o;
    double best = 0.0;
    for (int step = 0; step <= cfg.steps; ++step) {
        for (auto& p : params) p.zero_grad();
        const bool last = step == cfg.steps;
        DTensor loss;
        if (last) {
            NoGradGuard no_grad;
            loss = view_loss(scene, params[0], params[1], views);
        } else {
            loss = view_loss(scene, params[0], params[1], views);
        }
        const double value = loss.item();
        result.loss_history.push_back(value);
        if (step == 0 || value < best) {
            best = value;
            best_c.assign(params[0].values().begin(), params[0].values().end());
            best_o.assign(params[1].values().begin(), params[1].values().end());
        }
        if (last) break;
        backward(loss);
        adam_step(params, adam, state);
        for (auto& p : params)
            for (auto& v : p.mutable_values()) v = std::clamp(v, 0.0, 1.0);
    }
    result.initial_loss = result.loss_history.front();
    result.final_loss = best;
    result.scene = with_appearance(scene, DTensor::from({n, 3}, best_c), DTensor::from({n}, best_o));
    return result;
}

} // namespace gsedit::splat
