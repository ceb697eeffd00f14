#include "gsedit/cimln/train.hpp"

#include "gsedit/numerics/ops.hpp"
#include "gsedit/numerics/optim.hpp"

#include <fmt/format.h>

#include <cmath>
#include <stdexcept>

namespace gsedit::cimln {

using namespace numerics;

void TrainConfig::validate() const {
    if (steps < 1) throw std::invalid_argument("steps must be >= 1");
    if (!(lr > 0)) throw std::invalid_argument("lr must be positive");
    if (!(lambda_l1 >= 0) || !(gamma_ba >= 0)) throw std::invalid_argument("loss weights must be non-negative");
    if (downsample_factor < 2) throw std::invalid_argument("downsample factor must be >= 2");
}

DTensor degrade_depth(const DTensor& depth, int factor) {
    return resample(resample(depth, factor, ResampleMode::down_average), factor, ResampleMode::up_bilinear);
}

namespace {

struct Sample {
    DTensor input, rgb, target;
};

std::vector<Sample> make_samples(const std::vector<RenderPair>& pairs, int factor) {
    if (pairs.empty()) throw std::invalid_argument("training needs at least one render pair");
    std::vector<Sample> out;
    NoGradGuard no_grad;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        const auto& d = pairs[i].depth;
        if (d.ndim() != 3 || d.dim(1) % factor != 0 || d.dim(2) % factor != 0) {
            throw ShapeError(fmt::format("render pair {}: depth {} is not divisible by factor {}", i,
                                         shape_str(d.shape()), factor));
        }
        out.push_back({degrade_depth(d.detach(), factor), pairs[i].rgb.detach(), d.detach()});
    }
    return out;
}

} // namespace

double evaluate_loss(const CimlnModel& model, const std::vector<RenderPair>& pairs, const TrainConfig& cfg) {
    cfg.validate();
    const auto samples = make_samples(pairs, cfg.downsample_factor);
    NoGradGuard no_grad;
    double total = 0.0;
    for (const auto& s : samples)
        total += loss_total(forward(model, s.input, s.rgb), s.target, cfg.lambda_l1, cfg.gamma_ba).item();
    return total / static_cast<double>(samples.size());
}

TrainResult train_self_supervised(const std::vector<RenderPair>& pairs, const TrainConfig& cfg) {
    cfg.validate();
    const auto samples = make_samples(pairs, cfg.downsample_factor);
    const double inv_n = 1.0 / static_cast<double>(samples.size());

    CimlnModel model = CimlnModel::init(cfg.model, cfg.seed);
    model.set_requires_grad(true);
    auto params = model.tensors();
    AdamState state;
    const AdamConfig adam{.lr = cfg.lr};

    TrainResult result;
    result.best_loss = INFINITY;
    auto consider = [&](double loss) {
        if (!std::isfinite(loss)) throw std::runtime_error("training loss became non-finite");
        result.loss_history.push_back(loss);
        if (loss < result.best_loss) {
            result.best_loss = loss;
            result.model = model.clone();
        }
    };

    for (int step = 0; step < cfg.steps; ++step) {
        for (auto& p : params) p.zero_grad();
        double total = 0.0;
        for (const auto& s : samples) {
            auto loss = loss_total(forward(model, s.input, s.rgb), s.target, cfg.lambda_l1, cfg.gamma_ba);
            total += loss.item();
            backward(scale(loss, inv_n));
        }
        consider(total * inv_n);
        adam_step(params, adam, state);
    }
    consider(evaluate_loss(model, pairs, cfg));
    result.initial_loss = result.loss_history.front();
    return result;
}

} // namespace gsedit::cimln
