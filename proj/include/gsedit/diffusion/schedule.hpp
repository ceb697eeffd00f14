#pragma once

#include "gsedit/numerics/tensor.hpp"

#include <vector>

namespace gsedit::diffusion {

struct DiffusionSchedule {
    int steps = 0;                  // T
    std::vector<double> alpha_bar;  // length T+1, alpha_bar[0] = 1

    void validate() const;
    /// alpha_bar_t / (1 - alpha_bar_t); infinite at t = 0.
    double snr(int t) const;
};

/// Linear betas from beta_start to beta_end over T steps.
DiffusionSchedule make_schedule(int steps = 50, double beta_start = 1e-4, double beta_end = 0.02);

/// z_{t+1} = sqrt(ab_{t+1}) * (z_t - sqrt(1-ab_t) e) / sqrt(ab_t) + sqrt(1-ab_{t+1}) e
numerics::DTensor ddim_invert_step(const numerics::DTensor& z_t, const numerics::DTensor& e, int t,
                                   const DiffusionSchedule& sched);

/// z_{t-1} = sqrt(ab_{t-1}) * (z_t - sqrt(1-ab_t) e) / sqrt(ab_t) + sqrt(1-ab_{t-1}) e
numerics::DTensor ddim_denoise_step(const numerics::DTensor& z_t, const numerics::DTensor& e_hat, int t,
                                    const DiffusionSchedule& sched);

} // namespace gsedit::diffusion
