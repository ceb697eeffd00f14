#pragma once

#include "gsedit/cimln/model.hpp"

#include <cstdint>
#include <vector>

namespace gsedit::cimln {

struct RenderPair {
    numerics::DTensor depth;  // [1 x H x W]
    numerics::DTensor rgb;    // [3 x H x W]
};

struct TrainConfig {
    int steps = 200;
    double lr = 3e-4;
    double lambda_l1 = 1.0;
    double gamma_ba = 0.1;
    int downsample_factor = 2;
    std::uint64_t seed = 0;
    ModelConfig model;

    void validate() const;
};

struct TrainResult {
    CimlnModel model;  // lowest-loss iterate
    double initial_loss = 0.0;
    double best_loss = 0.0;
    std::vector<double> loss_history;  // full-batch loss before each step
};

/// Degraded network input: average-downsample then bilinear-upsample.
numerics::DTensor degrade_depth(const numerics::DTensor& depth, int factor);

/// Mean loss_total over pairs with degraded inputs and the originals as targets.
double evaluate_loss(const CimlnModel& model, const std::vector<RenderPair>& pairs, const TrainConfig& cfg);

TrainResult train_self_supervised(const std::vector<RenderPair>& pairs, const TrainConfig& cfg);

} // namespace gsedit::cimln
