#include "gsedit/diffusion/predictor.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>

namespace gsedit::diffusion {

using numerics::DTensor;
using numerics::Shape;

EditKind parse_edit_kind(const std::string& name) {
    if (name == "identity") return EditKind::identity;
    if (name == "hue_shift") return EditKind::hue_shift;
    if (name == "darken") return EditKind::darken;
    if (name == "sharpen") return EditKind::sharpen;
    throw std::invalid_argument("unknown edit '" + name + "' (expected identity, hue_shift, darken or sharpen)");
}

std::string edit_kind_name(EditKind kind) {
    switch (kind) {
    case EditKind::identity: return "identity";
    case EditKind::hue_shift: return "hue_shift";
    case EditKind::darken: return "darken";
    case EditKind::sharpen: return "sharpen";
    }
    return "?";
}

EditSpec parse_edit(const std::string& text) {
    EditSpec spec;
    const auto colon = text.find(':');
    spec.kind = parse_edit_kind(text.substr(0, colon));
    if (colon != std::string::npos) {
        const std::string num = text.substr(colon + 1);
        double v = 0.0;
        auto [end, ec] = std::from_chars(num.data(), num.data() + num.size(), v);
        if (ec != std::errc() || end != num.data() + num.size() || !std::isfinite(v)) {
            throw std::invalid_argument("edit strength '" + num + "' is not a finite number");
        }
        spec.strength = v;
    }
    return spec;
}

std::string format_edit(const EditSpec& spec) {
    return fmt::format("{}:{}", edit_kind_name(spec.kind), spec.strength);
}

DTensor noise_field(const Shape& shape, std::uint64_t seed) {
    std::uint64_t h = seed * 0x9E3779B97F4A7C15ull;
    for (auto d : shape) h = (h ^ d) * 0x100000001B3ull;
    std::mt19937_64 rng(h);
    std::normal_distribution<double> n(0.0, 1.0);
    std::vector<double> v(numerics::numel(shape));
    for (auto& x : v) x = n(rng);
    return DTensor::from(shape, std::move(v));
}

ToyPredictor::ToyPredictor(EditSpec spec, DiffusionSchedule sched, std::uint64_t seed)
    : spec_(spec), sched_(std::move(sched)), seed_(seed) {
    if (!std::isfinite(spec_.strength)) throw std::invalid_argument("edit strength must be finite");
    sched_.validate();
    // Step t moves the clean estimate by delta * kappa_t once the next
    // step re-reads it against the fixed noise; kappa_1 = 1.
    kappa_sum_ = 0.0;
    for (int t = 1; t <= sched_.steps; ++t) {
        kappa_sum_ += t == 1 ? 1.0 : 1.0 - std::sqrt(sched_.snr(t) / sched_.snr(t - 1));
    }
}

namespace {

std::vector<double> depth_weights(const Condition& cond, std::size_t h, std::size_t w, bool normalized) {
    std::vector<double> out(h * w, 1.0);
    if (!cond.depth.defined()) return out;
    const auto& d = cond.depth;
    if (d.ndim() != 3 || d.dim(0) != 1 || d.dim(1) != h || d.dim(2) != w) {
        throw numerics::ShapeError(fmt::format("depth condition {} does not match latent size {}x{}",
                                               numerics::shape_str(d.shape()), h, w));
    }
    const auto dv = d.values();
    const double dmax = *std::max_element(dv.begin(), dv.end());
    for (std::size_t i = 0; i < out.size(); ++i) {
        if (normalized) out[i] = dmax > 0.0 ? dv[i] / dmax : 0.0;
        else out[i] = dv[i] > 0.0 ? 1.0 : 0.0;
    }
    return out;
}

} // namespace

DTensor ToyPredictor::edit_delta(const DTensor& x, const Condition& cond) const {
    if (x.ndim() != 3) throw numerics::ShapeError("toy predictor expects [C x H x W] latents");
    const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2), plane = h * w;
    const double s = spec_.strength;
    const auto xv = x.values();
    std::vector<double> delta(xv.size(), 0.0);
    switch (spec_.kind) {
    case EditKind::identity: break;
    case EditKind::darken: {
        const auto dn = depth_weights(cond, h, w, true);
        for (std::size_t ch = 0; ch < c; ++ch)
            for (std::size_t p = 0; p < plane; ++p) delta[ch * plane + p] = -s * dn[p] * xv[ch * plane + p];
        break;
    }
    case EditKind::hue_shift: {
        if (c != 3) throw numerics::ShapeError("hue_shift needs 3-channel latents");
        const auto mask = depth_weights(cond, h, w, false);
        const double th = s * std::numbers::pi, co = std::cos(th), si = std::sin(th);
        const double k = 1.0 / std::sqrt(3.0);
        // Rodrigues rotation about (1,1,1)/sqrt(3), minus identity
        double r[3][3];
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) r[i][j] = (i == j ? co : 0.0) + (1.0 - co) * k * k;
        r[0][1] -= si * k, r[0][2] += si * k;
        r[1][0] += si * k, r[1][2] -= si * k;
        r[2][0] -= si * k, r[2][1] += si * k;
        for (int i = 0; i < 3; ++i) r[i][i] -= 1.0;
        for (std::size_t p = 0; p < plane; ++p) {
            if (mask[p] == 0.0) continue;
            for (int i = 0; i < 3; ++i)
                delta[i * plane + p] = r[i][0] * xv[p] + r[i][1] * xv[plane + p] + r[i][2] * xv[2 * plane + p];
        }
        break;
    }
    case EditKind::sharpen: {
        const auto mask = depth_weights(cond, h, w, false);
        for (std::size_t ch = 0; ch < c; ++ch)
            for (std::size_t y = 0; y < h; ++y)
                for (std::size_t xx = 0; xx < w; ++xx) {
                    const std::size_t p = y * w + xx;
                    if (mask[p] == 0.0) continue;
                    double acc = 0.0;
                    for (int dy = -1; dy <= 1; ++dy)
                        for (int dx = -1; dx <= 1; ++dx) {
                            const auto yy = static_cast<std::size_t>(std::clamp<long>(long(y) + dy, 0, long(h) - 1));
                            const auto xc = static_cast<std::size_t>(std::clamp<long>(long(xx) + dx, 0, long(w) - 1));
                            acc += xv[ch * plane + yy * w + xc];
                        }
                    delta[ch * plane + p] = s * (xv[ch * plane + p] - acc / 9.0);
                }
        break;
    }
    }
    return DTensor::from(x.shape(), std::move(delta));
}

DTensor ToyPredictor::predict(const DTensor& z, int t, const Condition& cond) const {
    if (t < 0 || t > sched_.steps) throw std::out_of_range(fmt::format("predictor step {} out of range", t));
    auto eps = noise_field(z.shape(), seed_);
    const bool edits = !cond.edit_tag.empty() && spec_.kind != EditKind::identity && spec_.strength != 0.0;
    if (!edits || t == 0) return eps;
    const double ab = sched_.alpha_bar[t];
    const double sa = std::sqrt(ab), sn = std::sqrt(1.0 - ab);
    const auto zv = z.values();
    const auto ev = eps.values();
    std::vector<double> x0(zv.size());
    for (std::size_t i = 0; i < zv.size(); ++i) x0[i] = (zv[i] - sn * ev[i]) / sa;
    const auto delta = edit_delta(DTensor::from(z.shape(), x0), cond);
    const auto dv = delta.values();
    std::vector<double> out(zv.size());
    for (std::size_t i = 0; i < zv.size(); ++i) out[i] = ev[i] - sa * (dv[i] / kappa_sum_) / sn;
    return DTensor::from(z.shape(), std::move(out));
}

std::unique_ptr<ToyPredictor> toy_predictor(EditSpec spec, const DiffusionSchedule& sched, std::uint64_t seed) {
    return std::make_unique<ToyPredictor>(spec, sched, seed);
}

} // namespace gsedit::diffusion
