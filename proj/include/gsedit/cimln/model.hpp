#pragma once

#include "gsedit/numerics/tensor.hpp"

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

namespace gsedit::cimln {

struct ModelConfig {
    int features = 16;
    int window = 3;  // pixel mutual learning neighborhood, odd
};

struct NamedParam {
    std::string name;
    numerics::DTensor value;
};

/// Two-branch depth enhancement network. Parameters live in a flat named
/// list so optimizers, checkpoints and grad checks can walk them in order.
class CimlnModel {
public:
    CimlnModel() = default;
    CimlnModel(ModelConfig config, std::vector<NamedParam> params);

    /// Random stems/blocks, zero output conv (forward starts as identity).
    static CimlnModel init(const ModelConfig& config, std::uint64_t seed);

    const ModelConfig& config() const { return config_; }
    const std::vector<NamedParam>& params() const { return params_; }
    std::vector<numerics::DTensor> tensors() const;
    const numerics::DTensor& param(const std::string& name) const;
    bool has_param(const std::string& name) const { return index_.count(name) != 0; }

    CimlnModel clone() const;
    void set_requires_grad(bool flag);
    void validate() const;

private:
    ModelConfig config_;
    std::vector<NamedParam> params_;
    std::unordered_map<std::string, std::size_t> index_;
};

/// Names and shapes every model with this config must carry.
std::vector<std::pair<std::string, numerics::Shape>> param_layout(const ModelConfig& config);

enum class Direction { guide_to_source, source_to_guide };

/// Simplified SSM block on [F x H x W]; `prefix` selects the parameter set
/// ("source.ssm." / "guide.ssm.").
numerics::DTensor ssm_block(const numerics::DTensor& feat, const CimlnModel& model, const std::string& prefix);

/// Local attention from `query` into `values` over a k x k zero-padded
/// window: w = softmax(<q(i,j), v(i+di,j+dj)>), out(i,j) = sum w v.
numerics::DTensor local_attention(const numerics::DTensor& query, const numerics::DTensor& values, int k);

/// guide_to_source: queries from the source, aggregates guide features.
/// source_to_guide: the reverse. Inputs are taken as already projected.
numerics::DTensor pixel_mutual_learning(const numerics::DTensor& source_feat, const numerics::DTensor& guide_feat,
                                        Direction direction, int k);

/// depth [1 x H x W], rgb [3 x H x W] -> depth + predicted residual.
numerics::DTensor forward(const CimlnModel& model, const numerics::DTensor& depth, const numerics::DTensor& rgb);

/// Inference-mode forward clamped to [0, 1.05 * max(depth)].
numerics::DTensor enhance_depth(const CimlnModel& model, const numerics::DTensor& depth,
                                const numerics::DTensor& rgb);

/// lambda * mean((out-target)^2) + gamma * mean(|dx out - dx t| * |dy out - dy t|)
numerics::DTensor loss_total(const numerics::DTensor& out, const numerics::DTensor& target, double lambda,
                             double gamma);

} // namespace gsedit::cimln
