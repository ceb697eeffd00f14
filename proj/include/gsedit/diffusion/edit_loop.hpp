#pragma once

#include "gsedit/diffusion/predictor.hpp"
#include "gsedit/wavelet/wavelet.hpp"

#include <functional>
#include <vector>

namespace gsedit::diffusion {

struct LatentState {
    std::vector<numerics::DTensor> z;  // per view, equal shapes
    int t = 0;
};

struct EditLoopConfig {
    std::vector<int> reference_ids{0};
    double lambda = 0.5;
    wavelet::AttentionParams attention;  // defaults to identity maps when undefined
};

/// Called with the state after each inversion and denoising step.
using LatentObserver = std::function<void(const LatentState&, bool inverting)>;

/// Phase 1 inverts every view to t = T with the edit tag cleared. Phase 2
/// denoises all views in lockstep. For a non-reference view i the predictor
/// is replaced by u_i = z_i + blend(A_ii, {A_ij}, lambda) - A_ii, with
/// A = wca, before predicting and stepping. Reference views use u_i = z_i,
/// and lambda = 1 leaves every view untouched.
LatentState run_edit_loop(const LatentState& views, const NoisePredictor& predictor,
                          const std::vector<Condition>& conditions, const DiffusionSchedule& sched,
                          const EditLoopConfig& cfg, const LatentObserver& observer = {});

} // namespace gsedit::diffusion
