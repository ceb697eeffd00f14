#include "gsedit/wavelet/wavelet.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

namespace gsedit::wavelet {

using numerics::DTensor;
using numerics::Shape;
using numerics::ShapeError;
using numerics::shape_str;

const DTensor& WaveletPyramid::band(int i) const {
    switch (i) {
    case 0: return ll;
    case 1: return lh;
    case 2: return hl;
    case 3: return hh;
    }
    throw std::out_of_range("wavelet band index");
}

DTensor& WaveletPyramid::band(int i) { return const_cast<DTensor&>(std::as_const(*this).band(i)); }

WaveletPyramid dwt2(const DTensor& x) {
    if (x.ndim() != 3) throw ShapeError(fmt::format("dwt2 expects [C x H x W], got {}", shape_str(x.shape())));
    const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
    if (h % 2 || w % 2 || h == 0 || w == 0) {
        throw ShapeError(fmt::format("dwt2 needs even spatial size, got {}", shape_str(x.shape())));
    }
    const std::size_t h2 = h / 2, w2 = w / 2;
    std::vector<double> ll(c * h2 * w2), lh(ll.size()), hl(ll.size()), hh(ll.size());
    const auto v = x.values();
    for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t i = 0; i < h2; ++i)
            for (std::size_t j = 0; j < w2; ++j) {
                const std::size_t top = (ch * h + 2 * i) * w + 2 * j, bot = top + w;
                const double a = v[top], b = v[top + 1], cc = v[bot], d = v[bot + 1];
                const std::size_t o = (ch * h2 + i) * w2 + j;
                ll[o] = (a + b + cc + d) / 2;
                lh[o] = (a - b + cc - d) / 2;
                hl[o] = (a + b - cc - d) / 2;
                hh[o] = (a - b - cc + d) / 2;
            }
    const Shape bs{c, h2, w2};
    return {DTensor::from(bs, std::move(ll)), DTensor::from(bs, std::move(lh)), DTensor::from(bs, std::move(hl)),
            DTensor::from(bs, std::move(hh)), x.shape()};
}

DTensor idwt2(const WaveletPyramid& p) {
    const Shape bs = p.ll.shape();
    for (int i = 1; i < 4; ++i)
        if (p.band(i).shape() != bs) {
            throw ShapeError(fmt::format("wavelet band {} has shape {}, LL has {}", WaveletPyramid::band_names[i],
                                         shape_str(p.band(i).shape()), shape_str(bs)));
        }
    if (bs.size() != 3) throw ShapeError("wavelet bands must be [C x h x w]");
    const std::size_t c = bs[0], h2 = bs[1], w2 = bs[2], h = 2 * h2, w = 2 * w2;
    if (!p.source_shape.empty() && p.source_shape != Shape{c, h, w}) {
        throw ShapeError(fmt::format("pyramid bands {} do not match source shape {}", shape_str(bs),
                                     shape_str(p.source_shape)));
    }
    std::vector<double> out(c * h * w);
    const auto ll = p.ll.values(), lh = p.lh.values(), hl = p.hl.values(), hh = p.hh.values();
    for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t i = 0; i < h2; ++i)
            for (std::size_t j = 0; j < w2; ++j) {
                const std::size_t o = (ch * h2 + i) * w2 + j;
                const std::size_t top = (ch * h + 2 * i) * w + 2 * j, bot = top + w;
                out[top] = (ll[o] + lh[o] + hl[o] + hh[o]) / 2;
                out[top + 1] = (ll[o] - lh[o] + hl[o] - hh[o]) / 2;
                out[bot] = (ll[o] + lh[o] - hl[o] - hh[o]) / 2;
                out[bot + 1] = (ll[o] - lh[o] - hl[o] + hh[o]) / 2;
            }
    return DTensor::from({c, h, w}, std::move(out));
}

void AttentionParams::validate() const {
    for (const auto* m : {&w_q, &w_k, &w_v}) {
        if (!m->defined() || m->ndim() != 2 || m->dim(0) != m->dim(1) || m->dim(0) != w_q.dim(0)) {
            throw ShapeError("attention projections must be square and of equal size");
        }
    }
    if (!(alpha > 0)) throw std::invalid_argument("attention scale alpha must be positive");
}

AttentionParams AttentionParams::identity(std::size_t features) {
    std::vector<double> eye(features * features, 0.0);
    for (std::size_t i = 0; i < features; ++i) eye[i * features + i] = 1.0;
    auto m = DTensor::from({features, features}, eye);
    return {m, m.clone(), m.clone(), static_cast<double>(features)};
}

AttentionParams AttentionParams::perturbed_identity(std::size_t features, double amplitude, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-amplitude, amplitude);
    auto make = [&] {
        std::vector<double> v(features * features);
        for (std::size_t i = 0; i < v.size(); ++i) v[i] = (i % (features + 1) == 0 ? 1.0 : 0.0) + u(rng);
        return DTensor::from({features, features}, std::move(v));
    };
    AttentionParams p;
    p.w_q = make();
    p.w_k = make();
    p.w_v = make();
    p.alpha = static_cast<double>(features);
    return p;
}

namespace {

// tokens [N x C] after projecting the band's channel vectors by w
std::vector<double> project_tokens(const DTensor& band, const DTensor& w) {
    const std::size_t c = band.dim(0), n = band.dim(1) * band.dim(2);
    const auto bv = band.values();
    const auto wv = w.values();
    std::vector<double> out(n * c, 0.0);
    for (std::size_t t = 0; t < n; ++t)
        for (std::size_t i = 0; i < c; ++i) {
            double acc = 0.0;
            for (std::size_t k = 0; k < c; ++k) acc += wv[i * c + k] * bv[k * n + t];
            out[t * c + i] = acc;
        }
    return out;
}

void check_bands(const DTensor& q, const DTensor& c, const AttentionParams& params) {
    params.validate();
    if (q.ndim() != 3 || c.ndim() != 3) throw ShapeError("attention bands must be [C x h x w]");
    if (q.dim(0) != params.features() || c.dim(0) != params.features()) {
        throw ShapeError(fmt::format("band features {} / {} do not match projection size {}", q.dim(0), c.dim(0),
                                     params.features()));
    }
}

} // namespace

std::vector<double> attention_weights(const DTensor& query_band, const DTensor& context_band,
                                      const AttentionParams& params) {
    check_bands(query_band, context_band, params);
    const std::size_t c = params.features();
    const std::size_t nq = query_band.dim(1) * query_band.dim(2), nk = context_band.dim(1) * context_band.dim(2);
    const auto q = project_tokens(query_band, params.w_q);
    const auto k = project_tokens(context_band, params.w_k);
    const double inv = 1.0 / std::sqrt(params.alpha);
    std::vector<double> wts(nq * nk);
    for (std::size_t i = 0; i < nq; ++i) {
        double* row = &wts[i * nk];
        double m = -INFINITY;
        for (std::size_t j = 0; j < nk; ++j) {
            double s = 0.0;
            for (std::size_t f = 0; f < c; ++f) s += q[i * c + f] * k[j * c + f];
            row[j] = s * inv;
            m = std::max(m, row[j]);
        }
        double z = 0.0;
        for (std::size_t j = 0; j < nk; ++j) z += (row[j] = std::exp(row[j] - m));
        for (std::size_t j = 0; j < nk; ++j) row[j] /= z;
    }
    return wts;
}

DTensor subband_attention(const DTensor& query_band, const DTensor& context_band, const AttentionParams& params) {
    const auto wts = attention_weights(query_band, context_band, params);
    const std::size_t c = params.features();
    const std::size_t nq = query_band.dim(1) * query_band.dim(2), nk = context_band.dim(1) * context_band.dim(2);
    const auto v = project_tokens(context_band, params.w_v);
    std::vector<double> out(c * nq, 0.0);
    for (std::size_t i = 0; i < nq; ++i)
        for (std::size_t j = 0; j < nk; ++j) {
            const double w = wts[i * nk + j];
            for (std::size_t f = 0; f < c; ++f) out[f * nq + i] += w * v[j * c + f];
        }
    return DTensor::from(query_band.shape(), std::move(out));
}

DTensor wca(const DTensor& query_latent, const DTensor& context_latent, const AttentionParams& params) {
    if (query_latent.shape() != context_latent.shape()) {
        throw ShapeError(fmt::format("wca latents differ: {} vs {}", shape_str(query_latent.shape()),
                                     shape_str(context_latent.shape())));
    }
    const auto q = dwt2(query_latent);
    const auto c = dwt2(context_latent);
    WaveletPyramid out;
    out.source_shape = q.source_shape;
    for (int b = 0; b < 4; ++b) out.band(b) = subband_attention(q.band(b), c.band(b), params);
    return idwt2(out);
}

DTensor blend_attention(const DTensor& self_out, const std::vector<DTensor>& cross_outs, double lambda) {
    if (cross_outs.empty()) throw std::invalid_argument("blend_attention needs at least one cross-attention output");
    if (!(lambda >= 0.0 && lambda <= 1.0)) throw std::invalid_argument("blend lambda must be in [0,1]");
    for (const auto& c : cross_outs)
        if (c.shape() != self_out.shape()) {
            throw ShapeError(fmt::format("cross output {} does not match self output {}", shape_str(c.shape()),
                                         shape_str(self_out.shape())));
        }
    const auto s = self_out.values();
    if (lambda == 1.0) return DTensor::from(self_out.shape(), {s.begin(), s.end()});
    std::vector<double> mean(s.size(), 0.0);
    for (const auto& c : cross_outs) {
        const auto cv = c.values();
        for (std::size_t i = 0; i < s.size(); ++i) mean[i] += cv[i];
    }
    const double inv = 1.0 / static_cast<double>(cross_outs.size());
    std::vector<double> out(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) {
        out[i] = lambda == 0.0 ? mean[i] * inv : lambda * s[i] + (1.0 - lambda) * (mean[i] * inv);
    }
    return DTensor::from(self_out.shape(), std::move(out));
}

} // namespace gsedit::wavelet
