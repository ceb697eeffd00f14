#include "gsedit/diffusion/schedule.hpp"

#include <fmt/format.h>

#include <cmath>
#include <stdexcept>

namespace gsedit::diffusion {

using numerics::DTensor;

void DiffusionSchedule::validate() const {
    if (steps < 1 || alpha_bar.size() != static_cast<std::size_t>(steps) + 1) {
        throw std::invalid_argument("schedule needs T >= 1 and T+1 alpha_bar values");
    }
    if (alpha_bar[0] != 1.0) throw std::invalid_argument("alpha_bar[0] must be 1");
    for (int t = 1; t <= steps; ++t)
        if (!(alpha_bar[t] > 0.0 && alpha_bar[t] < alpha_bar[t - 1])) {
            throw std::invalid_argument(fmt::format("alpha_bar must decrease strictly inside (0,1] (t={})", t));
        }
}

double DiffusionSchedule::snr(int t) const {
    const double ab = alpha_bar.at(static_cast<std::size_t>(t));
    return ab >= 1.0 ? INFINITY : ab / (1.0 - ab);
}

DiffusionSchedule make_schedule(int steps, double beta_start, double beta_end) {
    if (steps < 1) throw std::invalid_argument("diffusion steps must be >= 1");
    if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0)) {
        throw std::invalid_argument(
            fmt::format("need 0 < beta_start <= beta_end < 1, got {} and {}", beta_start, beta_end));
    }
    DiffusionSchedule s;
    s.steps = steps;
    s.alpha_bar.assign(1, 1.0);
    double prod = 1.0;
    for (int t = 1; t <= steps; ++t) {
        const double beta = steps == 1 ? beta_start : beta_start + (beta_end - beta_start) * (t - 1) / (steps - 1);
        prod *= 1.0 - beta;
        s.alpha_bar.push_back(prod);
    }
    s.validate();
    return s;
}

namespace {

DTensor ddim_move(const DTensor& z, const DTensor& e, double ab_from, double ab_to) {
    if (z.shape() != e.shape()) {
        throw numerics::ShapeError(fmt::format("latent {} and noise {} shapes differ", numerics::shape_str(z.shape()),
                                               numerics::shape_str(e.shape())));
    }
    const double s_from = std::sqrt(1.0 - ab_from), inv_from = 1.0 / std::sqrt(ab_from);
    const double a_to = std::sqrt(ab_to), s_to = std::sqrt(1.0 - ab_to);
    const auto zv = z.values();
    const auto ev = e.values();
    std::vector<double> out(zv.size());
    for (std::size_t i = 0; i < zv.size(); ++i) {
        const double x0 = (zv[i] - s_from * ev[i]) * inv_from;
        out[i] = a_to * x0 + s_to * ev[i];
    }
    return DTensor::from(z.shape(), std::move(out));
}

} // namespace

DTensor ddim_invert_step(const DTensor& z_t, const DTensor& e, int t, const DiffusionSchedule& sched) {
    if (t < 0 || t >= sched.steps) {
        throw std::out_of_range(fmt::format("inversion step {} outside [0, {}]", t, sched.steps - 1));
    }
    return ddim_move(z_t, e, sched.alpha_bar[t], sched.alpha_bar[t + 1]);
}

DTensor ddim_denoise_step(const DTensor& z_t, const DTensor& e_hat, int t, const DiffusionSchedule& sched) {
    if (t < 1 || t > sched.steps) {
        throw std::out_of_range(fmt::format("denoising step {} outside [1, {}]", t, sched.steps));
    }
    return ddim_move(z_t, e_hat, sched.alpha_bar[t], sched.alpha_bar[t - 1]);
}

} // namespace gsedit::diffusion
