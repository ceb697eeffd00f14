#include "gsedit/diffusion/edit_loop.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <stdexcept>

namespace gsedit::diffusion {

using numerics::DTensor;

namespace {

DTensor aligned_latent(const std::vector<DTensor>& z, std::size_t i, const std::vector<int>& refs, double lambda,
                       const wavelet::AttentionParams& params) {
    const auto self = wavelet::wca(z[i], z[i], params);
    std::vector<DTensor> cross;
    for (int j : refs) cross.push_back(wavelet::wca(z[i], z[static_cast<std::size_t>(j)], params));
    const auto blended = wavelet::blend_attention(self, cross, lambda);
    const auto zv = z[i].values(), sv = self.values(), bv = blended.values();
    std::vector<double> u(zv.size());
    for (std::size_t k = 0; k < u.size(); ++k) u[k] = zv[k] + (bv[k] - sv[k]);
    return DTensor::from(z[i].shape(), std::move(u));
}

} // namespace

LatentState run_edit_loop(const LatentState& views, const NoisePredictor& predictor,
                          const std::vector<Condition>& conditions, const DiffusionSchedule& sched,
                          const EditLoopConfig& cfg, const LatentObserver& observer) {
    sched.validate();
    const std::size_t n = views.z.size();
    if (n == 0) throw std::invalid_argument("edit loop needs at least one view");
    if (views.t != 0) throw std::invalid_argument("edit loop starts from clean latents (t = 0)");
    if (conditions.size() != n) {
        throw std::invalid_argument(fmt::format("{} conditions for {} views", conditions.size(), n));
    }
    if (cfg.reference_ids.empty()) throw std::invalid_argument("edit loop needs at least one reference view");
    for (int r : cfg.reference_ids)
        if (r < 0 || static_cast<std::size_t>(r) >= n) {
            throw std::invalid_argument(fmt::format("reference view {} outside [0, {})", r, n));
        }
    for (const auto& z : views.z)
        if (z.shape() != views.z[0].shape()) {
            throw numerics::ShapeError(fmt::format("view latents differ in shape: {} vs {}",
                                                   numerics::shape_str(z.shape()),
                                                   numerics::shape_str(views.z[0].shape())));
        }
    if (!(cfg.lambda >= 0.0 && cfg.lambda <= 1.0)) throw std::invalid_argument("lambda must be in [0,1]");
    const auto params =
        cfg.attention.w_q.defined() ? cfg.attention : wavelet::AttentionParams::identity(views.z[0].dim(0));

    std::vector<bool> is_ref(n, false);
    for (int r : cfg.reference_ids) is_ref[static_cast<std::size_t>(r)] = true;

    LatentState state{views.z, 0};
    for (int t = 0; t < sched.steps; ++t) {
        for (std::size_t i = 0; i < n; ++i) {
            Condition plain{conditions[i].depth, ""};
            state.z[i] = ddim_invert_step(state.z[i], predictor.predict(state.z[i], t, plain), t, sched);
        }
        state.t = t + 1;
        if (observer) observer(state, true);
    }
    for (int t = sched.steps; t >= 1; --t) {
        std::vector<DTensor> next(n);
        for (std::size_t i = 0; i < n; ++i) {
            const auto u = is_ref[i] ? state.z[i] : aligned_latent(state.z, i, cfg.reference_ids, cfg.lambda, params);
            next[i] = ddim_denoise_step(u, predictor.predict(u, t, conditions[i]), t, sched);
        }
        state.z = std::move(next);
        state.t = t - 1;
        if (observer) observer(state, false);
    }
    return state;
}

} // namespace gsedit::diffusion
