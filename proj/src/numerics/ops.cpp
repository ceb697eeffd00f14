#include "gsedit/numerics/ops.hpp"
#include "gsedit/numerics/autograd.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>

namespace gsedit::numerics {

using detail::make_op;
using detail::Node;
using detail::wants_grad;

namespace {

double sigmoid_scalar(double x) {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

double softplus_scalar(double x) {
    return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

template <class F, class DF>
DTensor unary(const DTensor& x, F f, DF df) {
    const auto xs = x.values();
    std::vector<double> out(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) out[i] = f(xs[i]);
    return make_op(x.shape(), std::move(out), {x}, [df](Node& self) {
        auto& p = *self.parents[0];
        auto& g = p.ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * df(p.data[i], self.data[i]);
    });
}

// Maps every flat output index to the flat index of an operand broadcast
// into the output shape.
std::vector<std::size_t> broadcast_index(const Shape& out, const Shape& in) {
    const std::size_t n = numel(out);
    std::vector<std::size_t> idx(n);
    const std::size_t rank = out.size();
    std::vector<std::size_t> in_stride(rank, 0);
    std::size_t stride = 1;
    for (std::size_t k = 0; k < in.size(); ++k) {
        const std::size_t in_axis = in.size() - 1 - k;
        const std::size_t out_axis = rank - 1 - k;
        in_stride[out_axis] = in[in_axis] == 1 ? 0 : stride;
        stride *= in[in_axis];
    }
    std::vector<std::size_t> counter(rank, 0);
    std::size_t flat_in = 0;
    for (std::size_t i = 0; i < n; ++i) {
        idx[i] = flat_in;
        for (std::size_t axis = rank; axis-- > 0;) {
            ++counter[axis];
            flat_in += in_stride[axis];
            if (counter[axis] < out[axis]) break;
            flat_in -= in_stride[axis] * counter[axis];
            counter[axis] = 0;
        }
    }
    return idx;
}

enum class BinOp { add, sub, mul };

DTensor binary(BinOp op, const DTensor& a, const DTensor& b) {
    const Shape out_shape = broadcast_shape(a.shape(), b.shape());
    const std::size_t n = numel(out_shape);
    const auto av = a.values();
    const auto bv = b.values();
    const bool same = a.shape() == out_shape && b.shape() == out_shape;
    std::vector<std::size_t> ia, ib;
    if (!same) {
        ia = broadcast_index(out_shape, a.shape());
        ib = broadcast_index(out_shape, b.shape());
    }
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double x = av[same ? i : ia[i]];
        const double y = bv[same ? i : ib[i]];
        out[i] = op == BinOp::add ? x + y : op == BinOp::sub ? x - y : x * y;
    }
    return make_op(out_shape, std::move(out), {a, b}, [op, same, ia, ib](Node& self) {
        auto& pa = self.parents[0];
        auto& pb = self.parents[1];
        const std::size_t n = self.grad.size();
        if (wants_grad(pa)) {
            auto& ga = pa->ensure_grad();
            for (std::size_t i = 0; i < n; ++i) {
                const std::size_t j = same ? i : ia[i];
                const double scale = op == BinOp::mul ? pb->data[same ? i : ib[i]] : 1.0;
                ga[j] += self.grad[i] * scale;
            }
        }
        if (wants_grad(pb)) {
            auto& gb = pb->ensure_grad();
            for (std::size_t i = 0; i < n; ++i) {
                const std::size_t j = same ? i : ib[i];
                const double scale = op == BinOp::mul ? pa->data[same ? i : ia[i]] : op == BinOp::sub ? -1.0 : 1.0;
                gb[j] += self.grad[i] * scale;
            }
        }
    });
}

std::size_t normalize_axis(int axis, std::size_t rank) {
    const int r = static_cast<int>(rank);
    if (axis < -r || axis >= r) throw ShapeError(fmt::format("axis {} invalid for rank {}", axis, rank));
    return static_cast<std::size_t>(axis < 0 ? axis + r : axis);
}

struct AxisSplit {
    std::size_t outer = 1, n = 1, inner = 1;
};

AxisSplit split_axis(const Shape& s, std::size_t axis) {
    AxisSplit r;
    for (std::size_t i = 0; i < axis; ++i) r.outer *= s[i];
    r.n = s[axis];
    for (std::size_t i = axis + 1; i < s.size(); ++i) r.inner *= s[i];
    return r;
}

void require_chw(const DTensor& x, const char* what) {
    if (x.ndim() != 3) throw ShapeError(fmt::format("{} expects [C x H x W], got {}", what, shape_str(x.shape())));
}

} // namespace

Shape broadcast_shape(const Shape& a, const Shape& b) {
    const std::size_t rank = std::max(a.size(), b.size());
    Shape out(rank);
    for (std::size_t k = 0; k < rank; ++k) {
        const std::size_t da = k < a.size() ? a[a.size() - 1 - k] : 1;
        const std::size_t db = k < b.size() ? b[b.size() - 1 - k] : 1;
        if (da != db && da != 1 && db != 1) {
            throw ShapeError(fmt::format("shapes {} and {} are not broadcastable", shape_str(a), shape_str(b)));
        }
        out[rank - 1 - k] = std::max(da, db);
    }
    return out;
}

DTensor add(const DTensor& a, const DTensor& b) { return binary(BinOp::add, a, b); }
DTensor sub(const DTensor& a, const DTensor& b) { return binary(BinOp::sub, a, b); }
DTensor mul(const DTensor& a, const DTensor& b) { return binary(BinOp::mul, a, b); }

DTensor silu(const DTensor& x) {
    return unary(
        x, [](double v) { return v * sigmoid_scalar(v); },
        [](double v, double) {
            const double s = sigmoid_scalar(v);
            return s * (1.0 + v * (1.0 - s));
        });
}

DTensor softplus(const DTensor& x) {
    return unary(x, softplus_scalar, [](double v, double) { return sigmoid_scalar(v); });
}

DTensor abs(const DTensor& x) {
    return unary(
        x, [](double v) { return std::fabs(v); },
        [](double v, double) { return v > 0 ? 1.0 : v < 0 ? -1.0 : 0.0; });
}

DTensor sigmoid(const DTensor& x) {
    return unary(x, sigmoid_scalar, [](double, double y) { return y * (1.0 - y); });
}

DTensor exp(const DTensor& x) {
    return unary(
        x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

DTensor scale(const DTensor& x, double factor) {
    return unary(
        x, [factor](double v) { return v * factor; }, [factor](double, double) { return factor; });
}

DTensor add_scalar(const DTensor& x, double value) {
    return unary(
        x, [value](double v) { return v + value; }, [](double, double) { return 1.0; });
}

DTensor clamp(const DTensor& x, double lo, double hi) {
    return unary(
        x, [lo, hi](double v) { return std::clamp(v, lo, hi); },
        [lo, hi](double v, double) { return (v >= lo && v <= hi) ? 1.0 : 0.0; });
}

DTensor elementwise(Elementwise op, const DTensor& a, const std::optional<DTensor>& b) {
    const bool binary_op = op == Elementwise::add || op == Elementwise::sub || op == Elementwise::mul;
    if (binary_op && !b) throw ShapeError("binary elementwise op needs a second operand");
    switch (op) {
    case Elementwise::add: return add(a, *b);
    case Elementwise::sub: return sub(a, *b);
    case Elementwise::mul: return mul(a, *b);
    case Elementwise::silu: return silu(a);
    case Elementwise::softplus: return softplus(a);
    case Elementwise::abs: return abs(a);
    }
    throw std::invalid_argument("unknown elementwise op");
}

DTensor sum(const DTensor& x) {
    double s = 0.0;
    for (double v : x.values()) s += v;
    return make_op({}, {s}, {x}, [](Node& self) {
        auto& g = self.parents[0]->ensure_grad();
        for (auto& v : g) v += self.grad[0];
    });
}

DTensor mean(const DTensor& x) {
    const double n = static_cast<double>(x.numel());
    double s = 0.0;
    for (double v : x.values()) s += v;
    return make_op({}, {s / n}, {x}, [n](Node& self) {
        auto& g = self.parents[0]->ensure_grad();
        for (auto& v : g) v += self.grad[0] / n;
    });
}

DTensor matmul(const DTensor& a, const DTensor& b) {
    if (a.ndim() != 2 || b.ndim() != 2 || a.dim(1) != b.dim(0)) {
        throw ShapeError(fmt::format("matmul dimension mismatch: {} x {}", shape_str(a.shape()), shape_str(b.shape())));
    }
    const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    const auto av = a.values();
    const auto bv = b.values();
    std::vector<double> out(m * n, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
        double* row = out.data() + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double s = av[i * k + p];
            if (s == 0.0) continue;
            const double* brow = bv.data() + p * n;
            for (std::size_t j = 0; j < n; ++j) row[j] += s * brow[j];
        }
    }
    return make_op({m, n}, std::move(out), {a, b}, [m, k, n](Node& self) {
        auto& pa = self.parents[0];
        auto& pb = self.parents[1];
        const auto& g = self.grad;
        if (wants_grad(pa)) {
            auto& ga = pa->ensure_grad();
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t p = 0; p < k; ++p) {
                    double s = 0.0;
                    for (std::size_t j = 0; j < n; ++j) s += g[i * n + j] * pb->data[p * n + j];
                    ga[i * k + p] += s;
                }
        }
        if (wants_grad(pb)) {
            auto& gb = pb->ensure_grad();
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t p = 0; p < k; ++p) {
                    const double s = pa->data[i * k + p];
                    if (s == 0.0) continue;
                    for (std::size_t j = 0; j < n; ++j) gb[p * n + j] += s * g[i * n + j];
                }
        }
    });
}

DTensor conv2d(const DTensor& x, const DTensor& kernel, int stride, int padding) {
    return conv2d(x, kernel, stride, padding, padding);
}

DTensor conv2d(const DTensor& x, const DTensor& kernel, int stride, int pad_h, int pad_w) {
    require_chw(x, "conv2d");
    if (kernel.ndim() != 4 || kernel.dim(1) != x.dim(0)) {
        throw ShapeError(fmt::format("conv2d kernel {} does not match input {}", shape_str(kernel.shape()),
                                     shape_str(x.shape())));
    }
    const int kh = static_cast<int>(kernel.dim(2)), kw = static_cast<int>(kernel.dim(3));
    if (kh % 2 == 0 || kw % 2 == 0) throw ShapeError("conv2d kernel size must be odd");
    if (stride < 1 || pad_h < 0 || pad_w < 0) throw ShapeError("conv2d needs stride >= 1 and padding >= 0");
    const int ci_n = static_cast<int>(x.dim(0)), h = static_cast<int>(x.dim(1)), w = static_cast<int>(x.dim(2));
    const int co_n = static_cast<int>(kernel.dim(0));
    const int span_h = h + 2 * pad_h - kh, span_w = w + 2 * pad_w - kw;
    if (span_h < 0 || span_w < 0 || span_h % stride != 0 || span_w % stride != 0) {
        throw ShapeError(fmt::format("conv2d output size is not an integer for input {}, kernel {}, stride {}",
                                     shape_str(x.shape()), shape_str(kernel.shape()), stride));
    }
    const int ho = span_h / stride + 1, wo = span_w / stride + 1;

    // Visits every (output pixel, input pixel, weight) triple once.
    auto for_each_tap = [=](auto&& fn) {
        for (int co = 0; co < co_n; ++co)
            for (int ci = 0; ci < ci_n; ++ci)
                for (int ky = 0; ky < kh; ++ky)
                    for (int kx = 0; kx < kw; ++kx) {
                        const std::size_t widx = ((static_cast<std::size_t>(co) * ci_n + ci) * kh + ky) * kw + kx;
                        // ox range with 0 <= ox*stride - pad_w + kx < w
                        int ox_lo = 0;
                        while (ox_lo < wo && ox_lo * stride - pad_w + kx < 0) ++ox_lo;
                        int ox_hi = wo;
                        while (ox_hi > ox_lo && (ox_hi - 1) * stride - pad_w + kx >= w) --ox_hi;
                        for (int oy = 0; oy < ho; ++oy) {
                            const int iy = oy * stride - pad_h + ky;
                            if (iy < 0 || iy >= h) continue;
                            const std::size_t obase = (static_cast<std::size_t>(co) * ho + oy) * wo;
                            const std::size_t ibase = (static_cast<std::size_t>(ci) * h + iy) * w;
                            fn(widx, obase, ibase, ox_lo, ox_hi, kx);
                        }
                    }
    };

    const auto xv = x.values();
    const auto kv = kernel.values();
    std::vector<double> out(static_cast<std::size_t>(co_n) * ho * wo, 0.0);
    for_each_tap([&](std::size_t widx, std::size_t obase, std::size_t ibase, int lo, int hi, int kx) {
        const double wv = kv[widx];
        if (wv == 0.0) return;
        double* o = out.data() + obase;
        const double* in = xv.data() + (static_cast<std::ptrdiff_t>(ibase) - pad_w + kx);
        for (int ox = lo; ox < hi; ++ox) o[ox] += wv * in[ox * stride];
    });

    return make_op({static_cast<std::size_t>(co_n), static_cast<std::size_t>(ho), static_cast<std::size_t>(wo)},
                   std::move(out), {x, kernel}, [for_each_tap, stride, pad_w](Node& self) {
                       auto& px = self.parents[0];
                       auto& pk = self.parents[1];
                       const bool gx_on = wants_grad(px), gk_on = wants_grad(pk);
                       double* gx = gx_on ? px->ensure_grad().data() : nullptr;
                       double* gk = gk_on ? pk->ensure_grad().data() : nullptr;
                       const double* g = self.grad.data();
                       const double* xd = px->data.data();
                       const double* kd = pk->data.data();
                       for_each_tap([&](std::size_t widx, std::size_t obase, std::size_t ibase, int lo, int hi,
                                        int kx) {
                           const double* go = g + obase;
                           const std::ptrdiff_t shift = static_cast<std::ptrdiff_t>(ibase) - pad_w + kx;
                           if (gx_on) {
                               const double wv = kd[widx];
                               if (wv != 0.0) {
                                   double* gi = gx + shift;
                                   for (int ox = lo; ox < hi; ++ox) gi[ox * stride] += wv * go[ox];
                               }
                           }
                           if (gk_on) {
                               const double* in = xd + shift;
                               double s = 0.0;
                               for (int ox = lo; ox < hi; ++ox) s += go[ox] * in[ox * stride];
                               gk[widx] += s;
                           }
                       });
                   });
}

DTensor conv1d_sequence(const DTensor& x, const DTensor& kernel) {
    require_chw(x, "conv1d_sequence");
    if (kernel.ndim() != 3) throw ShapeError("conv1d kernel must be [C_out x C_in x k]");
    const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
    const std::size_t k = kernel.dim(2);
    auto seq = x.reshape({c, 1, h * w});
    auto k4 = kernel.reshape({kernel.dim(0), kernel.dim(1), 1, k});
    return conv2d(seq, k4, 1, 0, static_cast<int>(k / 2)).reshape({kernel.dim(0), h, w});
}

DTensor add_channel_bias(const DTensor& x, const DTensor& bias) {
    require_chw(x, "add_channel_bias");
    if (bias.numel() != x.dim(0)) {
        throw ShapeError(fmt::format("bias {} does not match channels of {}", shape_str(bias.shape()),
                                     shape_str(x.shape())));
    }
    return add(x, bias.reshape({x.dim(0), 1, 1}));
}

DTensor softmax(const DTensor& x, int axis) {
    const std::size_t ax = normalize_axis(axis, x.ndim());
    const auto sp = split_axis(x.shape(), ax);
    const auto xv = x.values();
    std::vector<double> out(xv.size());
    for (std::size_t o = 0; o < sp.outer; ++o)
        for (std::size_t in = 0; in < sp.inner; ++in) {
            const std::size_t base = o * sp.n * sp.inner + in;
            double mx = -std::numeric_limits<double>::infinity();
            for (std::size_t i = 0; i < sp.n; ++i) mx = std::max(mx, xv[base + i * sp.inner]);
            double s = 0.0;
            for (std::size_t i = 0; i < sp.n; ++i) {
                const double e = std::exp(xv[base + i * sp.inner] - mx);
                out[base + i * sp.inner] = e;
                s += e;
            }
            for (std::size_t i = 0; i < sp.n; ++i) out[base + i * sp.inner] /= s;
        }
    return make_op(x.shape(), std::move(out), {x}, [sp](Node& self) {
        auto& g = self.parents[0]->ensure_grad();
        const auto& y = self.data;
        const auto& gy = self.grad;
        for (std::size_t o = 0; o < sp.outer; ++o)
            for (std::size_t in = 0; in < sp.inner; ++in) {
                const std::size_t base = o * sp.n * sp.inner + in;
                double dot = 0.0;
                for (std::size_t i = 0; i < sp.n; ++i) dot += y[base + i * sp.inner] * gy[base + i * sp.inner];
                for (std::size_t i = 0; i < sp.n; ++i) {
                    const std::size_t j = base + i * sp.inner;
                    g[j] += y[j] * (gy[j] - dot);
                }
            }
    });
}

DTensor layernorm(const DTensor& x, int axis, const DTensor& gamma, const DTensor& beta, double eps) {
    const std::size_t ax = normalize_axis(axis, x.ndim());
    const auto sp = split_axis(x.shape(), ax);
    if (gamma.numel() != sp.n || beta.numel() != sp.n) {
        throw ShapeError(fmt::format("layernorm gamma/beta must have {} entries", sp.n));
    }
    if (!(eps > 0)) throw std::invalid_argument("layernorm eps must be positive");
    const auto xv = x.values();
    const auto gv = gamma.values();
    const auto bv = beta.values();
    std::vector<double> out(xv.size());
    std::vector<double> xhat(xv.size());
    std::vector<double> inv_std(sp.outer * sp.inner);
    const double n = static_cast<double>(sp.n);
    for (std::size_t o = 0; o < sp.outer; ++o)
        for (std::size_t in = 0; in < sp.inner; ++in) {
            const std::size_t base = o * sp.n * sp.inner + in;
            double mu = 0.0;
            for (std::size_t i = 0; i < sp.n; ++i) mu += xv[base + i * sp.inner];
            mu /= n;
            double var = 0.0;
            for (std::size_t i = 0; i < sp.n; ++i) {
                const double d = xv[base + i * sp.inner] - mu;
                var += d * d;
            }
            var /= n;
            const double is = 1.0 / std::sqrt(var + eps);
            inv_std[o * sp.inner + in] = is;
            for (std::size_t i = 0; i < sp.n; ++i) {
                const std::size_t j = base + i * sp.inner;
                xhat[j] = (xv[j] - mu) * is;
                out[j] = gv[i] * xhat[j] + bv[i];
            }
        }
    return make_op(x.shape(), std::move(out), {x, gamma, beta},
                   [sp, n, xhat = std::move(xhat), inv_std = std::move(inv_std)](Node& self) {
                       auto& px = self.parents[0];
                       auto& pg = self.parents[1];
                       auto& pb = self.parents[2];
                       const auto& gy = self.grad;
                       for (std::size_t o = 0; o < sp.outer; ++o)
                           for (std::size_t in = 0; in < sp.inner; ++in) {
                               const std::size_t base = o * sp.n * sp.inner + in;
                               if (wants_grad(pg) || wants_grad(pb)) {
                                   for (std::size_t i = 0; i < sp.n; ++i) {
                                       const std::size_t j = base + i * sp.inner;
                                       if (wants_grad(pg)) pg->ensure_grad()[i] += gy[j] * xhat[j];
                                       if (wants_grad(pb)) pb->ensure_grad()[i] += gy[j];
                                   }
                               }
                               if (!wants_grad(px)) continue;
                               auto& gx = px->ensure_grad();
                               double m1 = 0.0, m2 = 0.0;
                               for (std::size_t i = 0; i < sp.n; ++i) {
                                   const std::size_t j = base + i * sp.inner;
                                   const double dxh = gy[j] * pg->data[i];
                                   m1 += dxh;
                                   m2 += dxh * xhat[j];
                               }
                               m1 /= n;
                               m2 /= n;
                               const double is = inv_std[o * sp.inner + in];
                               for (std::size_t i = 0; i < sp.n; ++i) {
                                   const std::size_t j = base + i * sp.inner;
                                   const double dxh = gy[j] * pg->data[i];
                                   gx[j] += is * (dxh - m1 - xhat[j] * m2);
                               }
                           }
                   });
}

DTensor resample(const DTensor& x, int factor, ResampleMode mode) {
    require_chw(x, "resample");
    if (factor < 1) throw std::invalid_argument("resample factor must be >= 1");
    const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
    const std::size_t f = static_cast<std::size_t>(factor);
    const auto xv = x.values();
    if (mode == ResampleMode::down_average) {
        if (h % f != 0 || w % f != 0) {
            throw ShapeError(fmt::format("resample: {} not divisible by factor {}", shape_str(x.shape()), factor));
        }
        const std::size_t ho = h / f, wo = w / f;
        const double inv = 1.0 / static_cast<double>(f * f);
        std::vector<double> out(c * ho * wo, 0.0);
        for (std::size_t ch = 0; ch < c; ++ch)
            for (std::size_t y = 0; y < h; ++y)
                for (std::size_t xx = 0; xx < w; ++xx)
                    out[(ch * ho + y / f) * wo + xx / f] += xv[(ch * h + y) * w + xx] * inv;
        return make_op({c, ho, wo}, std::move(out), {x}, [c, h, w, f, ho, wo, inv](Node& self) {
            auto& g = self.parents[0]->ensure_grad();
            for (std::size_t ch = 0; ch < c; ++ch)
                for (std::size_t y = 0; y < h; ++y)
                    for (std::size_t xx = 0; xx < w; ++xx)
                        g[(ch * h + y) * w + xx] += self.grad[(ch * ho + y / f) * wo + xx / f] * inv;
        });
    }

    // Half-pixel centers, edge-clamped source coordinates.
    struct Tap {
        std::size_t i0, i1;
        double w1;
    };
    auto taps = [f](std::size_t n_in, std::size_t n_out) {
        std::vector<Tap> t(n_out);
        for (std::size_t o = 0; o < n_out; ++o) {
            double s = (static_cast<double>(o) + 0.5) / static_cast<double>(f) - 0.5;
            s = std::clamp(s, 0.0, static_cast<double>(n_in - 1));
            const auto i0 = static_cast<std::size_t>(std::floor(s));
            const std::size_t i1 = std::min(i0 + 1, n_in - 1);
            t[o] = {i0, i1, s - static_cast<double>(i0)};
        }
        return t;
    };
    const std::size_t ho = h * f, wo = w * f;
    const auto ty = taps(h, ho);
    const auto tx = taps(w, wo);
    std::vector<double> out(c * ho * wo);
    for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t oy = 0; oy < ho; ++oy)
            for (std::size_t ox = 0; ox < wo; ++ox) {
                const auto& a = ty[oy];
                const auto& b = tx[ox];
                const double* base = xv.data() + ch * h * w;
                const double top = base[a.i0 * w + b.i0] * (1 - b.w1) + base[a.i0 * w + b.i1] * b.w1;
                const double bot = base[a.i1 * w + b.i0] * (1 - b.w1) + base[a.i1 * w + b.i1] * b.w1;
                out[(ch * ho + oy) * wo + ox] = top * (1 - a.w1) + bot * a.w1;
            }
    return make_op({c, ho, wo}, std::move(out), {x}, [c, h, w, ho, wo, ty, tx](Node& self) {
        auto& g = self.parents[0]->ensure_grad();
        for (std::size_t ch = 0; ch < c; ++ch)
            for (std::size_t oy = 0; oy < ho; ++oy)
                for (std::size_t ox = 0; ox < wo; ++ox) {
                    const double go = self.grad[(ch * ho + oy) * wo + ox];
                    const auto& a = ty[oy];
                    const auto& b = tx[ox];
                    double* base = g.data() + ch * h * w;
                    base[a.i0 * w + b.i0] += go * (1 - a.w1) * (1 - b.w1);
                    base[a.i0 * w + b.i1] += go * (1 - a.w1) * b.w1;
                    base[a.i1 * w + b.i0] += go * a.w1 * (1 - b.w1);
                    base[a.i1 * w + b.i1] += go * a.w1 * b.w1;
                }
    });
}

DTensor spatial_gradient(const DTensor& x, GradAxis axis) {
    require_chw(x, "spatial_gradient");
    const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
    if (h < 2 || w < 2) throw ShapeError("spatial_gradient needs H, W >= 2");
    const std::size_t step = axis == GradAxis::x ? 1 : w;
    auto valid = [=](std::size_t y, std::size_t xx) { return axis == GradAxis::x ? xx + 1 < w : y + 1 < h; };
    const auto xv = x.values();
    std::vector<double> out(xv.size(), 0.0);
    for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t y = 0; y < h; ++y)
            for (std::size_t xx = 0; xx < w; ++xx) {
                if (!valid(y, xx)) continue;
                const std::size_t i = (ch * h + y) * w + xx;
                out[i] = xv[i + step] - xv[i];
            }
    return make_op(x.shape(), std::move(out), {x}, [c, h, w, step, valid](Node& self) {
        auto& g = self.parents[0]->ensure_grad();
        for (std::size_t ch = 0; ch < c; ++ch)
            for (std::size_t y = 0; y < h; ++y)
                for (std::size_t xx = 0; xx < w; ++xx) {
                    if (!valid(y, xx)) continue;
                    const std::size_t i = (ch * h + y) * w + xx;
                    g[i + step] += self.grad[i];
                    g[i] -= self.grad[i];
                }
    });
}

DTensor concat(const std::vector<DTensor>& parts) {
    if (parts.empty()) throw ShapeError("concat of zero tensors");
    Shape out_shape = parts[0].shape();
    if (out_shape.empty()) throw ShapeError("concat needs rank >= 1");
    out_shape[0] = 0;
    for (const auto& p : parts) {
        if (p.ndim() != out_shape.size() ||
            !std::equal(p.shape().begin() + 1, p.shape().end(), parts[0].shape().begin() + 1)) {
            throw ShapeError(fmt::format("concat shape mismatch: {} vs {}", shape_str(p.shape()),
                                         shape_str(parts[0].shape())));
        }
        out_shape[0] += p.dim(0);
    }
    std::vector<double> out;
    out.reserve(numel(out_shape));
    std::vector<std::size_t> offsets;
    for (const auto& p : parts) {
        offsets.push_back(out.size());
        out.insert(out.end(), p.values().begin(), p.values().end());
    }
    return make_op(out_shape, std::move(out), parts, [offsets](Node& self) {
        for (std::size_t k = 0; k < self.parents.size(); ++k) {
            auto& p = self.parents[k];
            if (!wants_grad(p)) continue;
            auto& g = p->ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[offsets[k] + i];
        }
    });
}

double ssm_decay(double a_raw) { return std::exp(-softplus_scalar(a_raw)); }

DTensor ssm_scan(const DTensor& x, const DTensor& a_raw, const DTensor& b, const DTensor& c) {
    if (x.ndim() != 2) throw ShapeError(fmt::format("ssm_scan expects [C x L], got {}", shape_str(x.shape())));
    const std::size_t ch = x.dim(0), len = x.dim(1);
    if (a_raw.numel() != ch || b.numel() != ch || c.numel() != ch) {
        throw ShapeError(fmt::format("ssm_scan parameters must have {} entries", ch));
    }
    const auto xv = x.values();
    std::vector<double> h(ch * len);
    std::vector<double> out(ch * len);
    for (std::size_t k = 0; k < ch; ++k) {
        const double a = ssm_decay(a_raw.values()[k]);
        const double bk = b.values()[k], ck = c.values()[k];
        double state = 0.0;
        for (std::size_t i = 0; i < len; ++i) {
            state = a * state + bk * xv[k * len + i];
            h[k * len + i] = state;
            out[k * len + i] = ck * state;
        }
    }
    return make_op(x.shape(), std::move(out), {x, a_raw, b, c}, [ch, len, h = std::move(h)](Node& self) {
        auto& px = self.parents[0];
        auto& pa = self.parents[1];
        auto& pb = self.parents[2];
        auto& pc = self.parents[3];
        for (std::size_t k = 0; k < ch; ++k) {
            const double r = pa->data[k];
            const double a = ssm_decay(r);
            const double bk = pb->data[k], ck = pc->data[k];
            double dh_next = 0.0, da = 0.0, db = 0.0, dc = 0.0;
            for (std::size_t i = len; i-- > 0;) {
                const std::size_t j = k * len + i;
                const double gy = self.grad[j];
                const double dh = ck * gy + a * dh_next;
                dc += gy * h[j];
                db += dh * px->data[j];
                if (i > 0) da += dh * h[j - 1];
                if (wants_grad(px)) px->ensure_grad()[j] += bk * dh;
                dh_next = dh;
            }
            if (wants_grad(pa)) pa->ensure_grad()[k] += da * (-a / (1.0 + std::exp(-r)));
            if (wants_grad(pb)) pb->ensure_grad()[k] += db;
            if (wants_grad(pc)) pc->ensure_grad()[k] += dc;
        }
    });
}

} // namespace gsedit::numerics
