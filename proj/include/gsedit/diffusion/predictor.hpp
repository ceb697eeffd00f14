#pragma once

#include "gsedit/diffusion/schedule.hpp"

#include <cstdint>
#include <memory>
#include <string>

namespace gsedit::diffusion {

struct Condition {
    numerics::DTensor depth;  // [1 x H x W], may be undefined
    std::string edit_tag;     // empty = reconstruct, no edit
};

class NoisePredictor {
public:
    virtual ~NoisePredictor() = default;
    /// Deterministic noise estimate with the shape of z.
    virtual numerics::DTensor predict(const numerics::DTensor& z, int t, const Condition& cond) const = 0;
};

enum class EditKind { identity, hue_shift, darken, sharpen };

EditKind parse_edit_kind(const std::string& name);
std::string edit_kind_name(EditKind kind);

struct EditSpec {
    EditKind kind = EditKind::identity;
    double strength = 0.5;
};

/// "hue_shift:0.3", "darken", "identity" ...
EditSpec parse_edit(const std::string& text);
std::string format_edit(const EditSpec& spec);

/// Standard-normal field fixed by (seed, shape).
numerics::DTensor noise_field(const numerics::Shape& shape, std::uint64_t seed);

/// Toy stand-in for a conditioned denoiser. It always predicts a fixed noise
/// field, so DDIM inversion followed by denoising reproduces the input. When
/// the condition carries an edit tag, the prediction is bent so that each
/// denoising step moves the clean estimate by a slice of the named edit;
/// the slices add up to roughly the full edit over a run from T to 0.
///   identity   no change
///   darken     x -> x - s * (depth / max depth) * x
///   hue_shift  rotate colors about the gray axis by s*pi where depth > 0
///   sharpen    x -> x + s * (x - box3(x)) where depth > 0
class ToyPredictor : public NoisePredictor {
public:
    ToyPredictor(EditSpec spec, DiffusionSchedule sched, std::uint64_t seed);

    numerics::DTensor predict(const numerics::DTensor& z, int t, const Condition& cond) const override;

    /// The full edit the predictor steers toward, applied to a clean image.
    numerics::DTensor edit_delta(const numerics::DTensor& x, const Condition& cond) const;

    const EditSpec& spec() const { return spec_; }

private:
    EditSpec spec_;
    DiffusionSchedule sched_;
    std::uint64_t seed_;
    double kappa_sum_ = 1.0;
};

std::unique_ptr<ToyPredictor> toy_predictor(EditSpec spec, const DiffusionSchedule& sched, std::uint64_t seed);

} // namespace gsedit::diffusion
