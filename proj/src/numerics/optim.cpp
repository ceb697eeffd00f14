#include "gsedit/numerics/optim.hpp"

#include <fmt/format.h>

#include <cmath>

namespace gsedit::numerics {

void adam_step(std::vector<DTensor>& params, const AdamConfig& cfg, AdamState& state) {
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (!params[i].has_grad()) throw GraphError(fmt::format("adam_step: parameter {} has no gradient", i));
    }
    if (state.m.size() != params.size()) {
        state.m.assign(params.size(), {});
        state.v.assign(params.size(), {});
        for (std::size_t i = 0; i < params.size(); ++i) {
            state.m[i].assign(params[i].numel(), 0.0);
            state.v[i].assign(params[i].numel(), 0.0);
        }
        state.step = 0;
    }
    ++state.step;
    const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
    const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto values = params[i].mutable_values();
        const auto g = params[i].grad();
        auto& m = state.m[i];
        auto& v = state.v[i];
        for (std::size_t k = 0; k < values.size(); ++k) {
            m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * g[k];
            v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * g[k] * g[k];
            const double mhat = m[k] / c1;
            const double vhat = v[k] / c2;
            values[k] = round_to_precision(values[k] - cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps));
        }
    }
}

} // namespace gsedit::numerics
