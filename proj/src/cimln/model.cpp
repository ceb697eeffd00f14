#include "gsedit/cimln/model.hpp"

#include "gsedit/numerics/autograd.hpp"
#include "gsedit/numerics/ops.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

namespace gsedit::cimln {

using namespace numerics;

std::vector<std::pair<std::string, Shape>> param_layout(const ModelConfig& config) {
    const std::size_t f = static_cast<std::size_t>(config.features);
    std::vector<std::pair<std::string, Shape>> out{
        {"source.stem.w", {f, 1, 3, 3}},
        {"source.stem.b", {f}},
        {"guide.stem.w", {f, 3, 3, 3}},
        {"guide.stem.b", {f}},
    };
    for (const std::string branch : {"source", "guide"}) {
        const std::string p = branch + ".ssm.";
        out.push_back({p + "conv", {f, f, 3, 3}});
        out.push_back({p + "conv1d_x", {f, f, 3}});
        out.push_back({p + "conv1d_y", {f, f, 3}});
        out.push_back({p + "a_raw", {f}});
        out.push_back({p + "b", {f}});
        out.push_back({p + "c", {f}});
        out.push_back({p + "ln_gamma", {f}});
        out.push_back({p + "ln_beta", {f}});
        out.push_back({p + "linear", {f, f}});
    }
    out.push_back({"pml.source_query", {f, f}});
    out.push_back({"pml.guide_value", {f, f}});
    out.push_back({"pml.guide_query", {f, f}});
    out.push_back({"pml.source_value", {f, f}});
    out.push_back({"head.fuse.w", {f, 2 * f, 3, 3}});
    out.push_back({"head.fuse.b", {f}});
    for (const std::string r : {"head.res1.", "head.res2."}) {
        out.push_back({r + "w1", {f, f, 3, 3}});
        out.push_back({r + "b1", {f}});
        out.push_back({r + "w2", {f, f, 3, 3}});
        out.push_back({r + "b2", {f}});
    }
    out.push_back({"head.out.w", {1, f, 3, 3}});
    out.push_back({"head.out.b", {1}});
    return out;
}

CimlnModel::CimlnModel(ModelConfig config, std::vector<NamedParam> params)
    : config_(config), params_(std::move(params)) {
    for (std::size_t i = 0; i < params_.size(); ++i) index_[params_[i].name] = i;
    validate();
}

void CimlnModel::validate() const {
    if (config_.features < 1) throw std::invalid_argument("cimln features must be >= 1");
    if (config_.window < 1 || config_.window % 2 == 0) throw std::invalid_argument("cimln window must be odd");
    const auto layout = param_layout(config_);
    if (layout.size() != params_.size()) {
        throw ShapeError(fmt::format("cimln model has {} parameters, expected {}", params_.size(), layout.size()));
    }
    for (const auto& [name, shape] : layout) {
        auto it = index_.find(name);
        if (it == index_.end()) throw ShapeError("cimln model is missing parameter " + name);
        const auto& t = params_[it->second].value;
        if (t.shape() != shape) {
            throw ShapeError(fmt::format("parameter {} has shape {}, expected {}", name, shape_str(t.shape()),
                                         shape_str(shape)));
        }
        for (double v : t.values())
            if (!std::isfinite(v)) throw std::invalid_argument("parameter " + name + " is not finite");
    }
}

CimlnModel CimlnModel::init(const ModelConfig& config, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::vector<NamedParam> params;
    for (const auto& [name, shape] : param_layout(config)) {
        std::vector<double> v(numel(shape), 0.0);
        auto uniform = [&](double lo, double hi) {
            std::uniform_real_distribution<double> d(lo, hi);
            for (auto& x : v) x = d(rng);
        };
        auto ends_with = [&](const std::string& s) {
            return name.size() >= s.size() && name.compare(name.size() - s.size(), s.size(), s) == 0;
        };
        std::size_t fan_in = shape.size() > 1 ? numel(shape) / shape[0] : 1;
        if (name == "head.out.w" || name == "head.out.b") {
            // identity at start
        } else if (ends_with("a_raw")) {
            uniform(-3.0, 0.0);
        } else if (ends_with(".b") || ends_with(".c")) {
            uniform(0.5, 1.0);
        } else if (ends_with("ln_gamma")) {
            std::fill(v.begin(), v.end(), 1.0);
        } else if (shape.size() == 1) {
            // biases, ln_beta
        } else {
            double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
            if (ends_with("w2") || name.rfind("pml.", 0) == 0) bound *= 0.5;
            uniform(-bound, bound);
        }
        params.push_back({name, DTensor::from(shape, std::move(v))});
    }
    return CimlnModel(config, std::move(params));
}

std::vector<DTensor> CimlnModel::tensors() const {
    std::vector<DTensor> out;
    out.reserve(params_.size());
    for (const auto& p : params_) out.push_back(p.value);
    return out;
}

const DTensor& CimlnModel::param(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("no cimln parameter " + name);
    return params_[it->second].value;
}

CimlnModel CimlnModel::clone() const {
    std::vector<NamedParam> params;
    for (const auto& p : params_) params.push_back({p.name, p.value.detach().clone()});
    return CimlnModel(config_, std::move(params));
}

void CimlnModel::set_requires_grad(bool flag) {
    for (auto& p : params_) p.value.set_requires_grad(flag);
}

namespace {

void require_chw(const DTensor& t, std::size_t channels, const char* what) {
    if (t.ndim() != 3 || (channels && t.dim(0) != channels)) {
        throw ShapeError(fmt::format("{} must be [{}xHxW], got {}", what, channels ? std::to_string(channels) : "C",
                                     shape_str(t.shape())));
    }
}

DTensor pixel_linear(const DTensor& w, const DTensor& x) {
    const std::size_t c = x.dim(0), h = x.dim(1), wd = x.dim(2);
    return matmul(w, x.reshape({c, h * wd})).reshape({w.dim(0), h, wd});
}

DTensor conv_bias(const DTensor& x, const DTensor& w, const DTensor& b) {
    return add_channel_bias(conv2d(x, w, 1, 1), b);
}

} // namespace

DTensor ssm_block(const DTensor& feat, const CimlnModel& m, const std::string& prefix) {
    require_chw(feat, 0, "ssm_block input");
    const std::size_t f = feat.dim(0), h = feat.dim(1), w = feat.dim(2);
    auto p = [&](const char* n) -> const DTensor& { return m.param(prefix + n); };
    if (p("conv").dim(1) != f) throw ShapeError("ssm_block channel count does not match parameters");
    auto ft = conv2d(feat, p("conv"), 1, 1);
    auto x = silu(conv1d_sequence(ft, p("conv1d_x"))).reshape({f, h * w});
    auto y = silu(conv1d_sequence(ft, p("conv1d_y"))).reshape({f, h * w});
    auto xt = layernorm(ssm_scan(x, p("a_raw"), p("b"), p("c")), 0, p("ln_gamma"), p("ln_beta"), 1e-5);
    return matmul(p("linear"), mul(xt, y)).reshape({f, h, w});
}

DTensor local_attention(const DTensor& query, const DTensor& values, int k) {
    require_chw(query, 0, "attention query");
    require_chw(values, 0, "attention values");
    if (query.shape() != values.shape()) {
        throw ShapeError(fmt::format("attention query {} and values {} differ", shape_str(query.shape()),
                                     shape_str(values.shape())));
    }
    if (k < 1 || k % 2 == 0) throw std::invalid_argument("attention window must be odd");
    const int c = static_cast<int>(query.dim(0)), h = static_cast<int>(query.dim(1)),
              w = static_cast<int>(query.dim(2));
    const int r = k / 2, kk = k * k;
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    const auto q = query.values();
    const auto v = values.values();
    // weights[(y*w+x)*kk + n]; neighbor index -1 marks zero padding
    std::vector<double> weights(plane * kk);
    std::vector<long> nbr(plane * kk);
    std::vector<double> out(static_cast<std::size_t>(c) * plane, 0.0);
    std::vector<double> s(kk);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const std::size_t p = static_cast<std::size_t>(y) * w + x;
            double smax = -INFINITY;
            for (int n = 0; n < kk; ++n) {
                const int yy = y + n / k - r, xx = x + n % k - r;
                long idx = -1;
                double dot = 0.0;
                if (yy >= 0 && yy < h && xx >= 0 && xx < w) {
                    idx = static_cast<long>(yy) * w + xx;
                    for (int ch = 0; ch < c; ++ch) dot += q[ch * plane + p] * v[ch * plane + idx];
                }
                nbr[p * kk + n] = idx;
                s[n] = dot;
                smax = std::max(smax, dot);
            }
            double z = 0.0;
            for (int n = 0; n < kk; ++n) z += (s[n] = std::exp(s[n] - smax));
            for (int n = 0; n < kk; ++n) {
                const double wt = s[n] / z;
                weights[p * kk + n] = wt;
                const long idx = nbr[p * kk + n];
                if (idx < 0) continue;
                for (int ch = 0; ch < c; ++ch) out[ch * plane + p] += wt * v[ch * plane + idx];
            }
        }
    return detail::make_op(
        query.shape(), std::move(out), {query, values},
        [c, kk, plane, weights = std::move(weights), nbr = std::move(nbr)](detail::Node& self) {
            auto& pq = self.parents[0];
            auto& pv = self.parents[1];
            const auto& g = self.grad;
            const auto& qd = pq->data;
            const auto& vd = pv->data;
            std::vector<double>* gq = detail::wants_grad(pq) ? &pq->ensure_grad() : nullptr;
            std::vector<double>* gv = detail::wants_grad(pv) ? &pv->ensure_grad() : nullptr;
            std::vector<double> dw(kk);
            for (std::size_t p = 0; p < plane; ++p) {
                const double* wt = &weights[p * kk];
                const long* nb = &nbr[p * kk];
                double dot = 0.0;
                for (int n = 0; n < kk; ++n) {
                    double acc = 0.0;
                    if (nb[n] >= 0)
                        for (int ch = 0; ch < c; ++ch) acc += g[ch * plane + p] * vd[ch * plane + nb[n]];
                    dw[n] = acc;
                    dot += wt[n] * acc;
                }
                for (int n = 0; n < kk; ++n) {
                    if (nb[n] < 0) continue;
                    const double ds = wt[n] * (dw[n] - dot);
                    for (int ch = 0; ch < c; ++ch) {
                        const std::size_t vi = ch * plane + nb[n];
                        if (gq) (*gq)[ch * plane + p] += ds * vd[vi];
                        if (gv) (*gv)[vi] += wt[n] * g[ch * plane + p] + ds * qd[ch * plane + p];
                    }
                }
            }
        });
}

DTensor pixel_mutual_learning(const DTensor& source_feat, const DTensor& guide_feat, Direction direction, int k) {
    return direction == Direction::guide_to_source ? local_attention(source_feat, guide_feat, k)
                                                   : local_attention(guide_feat, source_feat, k);
}

DTensor forward(const CimlnModel& m, const DTensor& depth, const DTensor& rgb) {
    require_chw(depth, 1, "depth");
    require_chw(rgb, 3, "rgb");
    if (depth.dim(1) != rgb.dim(1) || depth.dim(2) != rgb.dim(2)) {
        throw ShapeError(fmt::format("depth {} and rgb {} sizes differ", shape_str(depth.shape()),
                                     shape_str(rgb.shape())));
    }
    // Work on depth normalized by its maximum so the network is scale free.
    double dmax = 0.0;
    for (double v : depth.values()) dmax = std::max(dmax, v);
    const double s = dmax > 0.0 ? dmax : 1.0;
    const int k = m.config().window;

    auto fs = silu(conv_bias(scale(depth, 1.0 / s), m.param("source.stem.w"), m.param("source.stem.b")));
    auto fg = silu(conv_bias(rgb, m.param("guide.stem.w"), m.param("guide.stem.b")));
    fs = add(fs, ssm_block(fs, m, "source.ssm."));
    fg = add(fg, ssm_block(fg, m, "guide.ssm."));

    auto o_gs = pixel_mutual_learning(pixel_linear(m.param("pml.source_query"), fs),
                                      pixel_linear(m.param("pml.guide_value"), fg), Direction::guide_to_source, k);
    auto o_sg = pixel_mutual_learning(pixel_linear(m.param("pml.source_value"), fs),
                                      pixel_linear(m.param("pml.guide_query"), fg), Direction::source_to_guide, k);

    auto x = silu(conv_bias(concat({add(fs, o_gs), add(fg, o_sg)}), m.param("head.fuse.w"), m.param("head.fuse.b")));
    for (const std::string r : {"head.res1.", "head.res2."}) {
        auto t = silu(conv_bias(x, m.param(r + "w1"), m.param(r + "b1")));
        x = add(x, conv_bias(t, m.param(r + "w2"), m.param(r + "b2")));
    }
    auto residual = conv_bias(x, m.param("head.out.w"), m.param("head.out.b"));
    return add(depth, scale(residual, s));
}

DTensor enhance_depth(const CimlnModel& model, const DTensor& depth, const DTensor& rgb) {
    NoGradGuard no_grad;
    double dmax = 0.0;
    for (double v : depth.values()) dmax = std::max(dmax, v);
    return clamp(forward(model, depth.detach(), rgb.detach()), 0.0, 1.05 * dmax);
}

DTensor loss_total(const DTensor& out, const DTensor& target, double lambda, double gamma) {
    if (out.shape() != target.shape()) {
        throw ShapeError(fmt::format("loss shapes differ: {} vs {}", shape_str(out.shape()),
                                     shape_str(target.shape())));
    }
    if (out.ndim() != 3) throw ShapeError("loss expects [C x H x W] maps");
    auto diff = sub(out, target);
    auto l2 = mean(mul(diff, diff));
    // gradients are linear, so grad(out) - grad(target) == grad(out - target)
    auto gx = abs(spatial_gradient(diff, GradAxis::x));
    auto gy = abs(spatial_gradient(diff, GradAxis::y));
    return add(scale(l2, lambda), scale(mean(mul(gx, gy)), gamma));
}

} // namespace gsedit::cimln
