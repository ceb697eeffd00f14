#pragma once

#include "gsedit/numerics/tensor.hpp"

#include <optional>
#include <vector>

namespace gsedit::numerics {

enum class Elementwise { add, sub, mul, silu, softplus, abs };

/// Unary ops ignore `b`; binary ops broadcast by the trailing-dimension rule.
DTensor elementwise(Elementwise op, const DTensor& a, const std::optional<DTensor>& b = std::nullopt);

DTensor add(const DTensor& a, const DTensor& b);
DTensor sub(const DTensor& a, const DTensor& b);
DTensor mul(const DTensor& a, const DTensor& b);
DTensor silu(const DTensor& x);
DTensor softplus(const DTensor& x);
DTensor abs(const DTensor& x);
DTensor sigmoid(const DTensor& x);
DTensor exp(const DTensor& x);
DTensor scale(const DTensor& x, double factor);
DTensor add_scalar(const DTensor& x, double value);

Shape broadcast_shape(const Shape& a, const Shape& b);

DTensor sum(const DTensor& x);
DTensor mean(const DTensor& x);

/// [m x k] * [k x n] with 64-bit accumulation.
DTensor matmul(const DTensor& a, const DTensor& b);

/// x: [C_in x H x W], kernel: [C_out x C_in x kh x kw], zero padding.
DTensor conv2d(const DTensor& x, const DTensor& kernel, int stride, int padding);
DTensor conv2d(const DTensor& x, const DTensor& kernel, int stride, int pad_h, int pad_w);

/// Conv over the row-major flattened spatial sequence of x [C_in x H x W]
/// with kernel [C_out x C_in x k]; realized as conv2d with a 1 x k kernel.
DTensor conv1d_sequence(const DTensor& x, const DTensor& kernel);

/// Adds bias [C] to every spatial position of x [C x H x W].
DTensor add_channel_bias(const DTensor& x, const DTensor& bias);

DTensor softmax(const DTensor& x, int axis);

DTensor layernorm(const DTensor& x, int axis, const DTensor& gamma, const DTensor& beta, double eps);

enum class ResampleMode { down_average, up_bilinear };
DTensor resample(const DTensor& x, int factor, ResampleMode mode);

enum class GradAxis { x, y };
/// Forward differences; the trailing column (x) or row (y) is zero.
DTensor spatial_gradient(const DTensor& x, GradAxis axis);

/// Concatenate along axis 0.
DTensor concat(const std::vector<DTensor>& parts);

/// Per-channel diagonal linear recurrence over the last axis of x [C x L]:
/// h_k = a*h_{k-1} + b*x_k, y_k = c*h_k, h_0 = 0, with a = exp(-softplus(a_raw)).
DTensor ssm_scan(const DTensor& x, const DTensor& a_raw, const DTensor& b, const DTensor& c);

/// exp(-softplus(r)), the effective decay used by ssm_scan.
double ssm_decay(double a_raw);

DTensor clamp(const DTensor& x, double lo, double hi);

} // namespace gsedit::numerics
