#pragma once

#include "gsedit/numerics/tensor.hpp"

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace gsedit::wavelet {

/// Single-level orthonormal Haar decomposition of a [C x H x W] map.
struct WaveletPyramid {
    numerics::DTensor ll, lh, hl, hh;  // each [C x H/2 x W/2]
    numerics::Shape source_shape;

    static constexpr std::array<const char*, 4> band_names{"LL", "LH", "HL", "HH"};
    const numerics::DTensor& band(int i) const;
    numerics::DTensor& band(int i);
};

WaveletPyramid dwt2(const numerics::DTensor& x);
numerics::DTensor idwt2(const WaveletPyramid& p);

/// Square feature maps applied per token; scores are divided by sqrt(alpha).
struct AttentionParams {
    numerics::DTensor w_q, w_k, w_v;  // [C_feat x C_feat]
    double alpha = 1.0;

    std::size_t features() const { return w_q.dim(0); }
    void validate() const;

    /// Identity projections with alpha = C_feat.
    static AttentionParams identity(std::size_t features);
    /// Identity plus uniform noise of the given amplitude; alpha = C_feat.
    static AttentionParams perturbed_identity(std::size_t features, double amplitude, std::uint64_t seed);
};

/// Row-stochastic [N x N] attention weights between the tokens (spatial
/// positions) of two bands.
std::vector<double> attention_weights(const numerics::DTensor& query_band, const numerics::DTensor& context_band,
                                      const AttentionParams& params);

/// softmax(Q K^T / sqrt(alpha)) V with Q from query_band, K and V from
/// context_band; returned in the band's [C x h x w] layout.
numerics::DTensor subband_attention(const numerics::DTensor& query_band, const numerics::DTensor& context_band,
                                    const AttentionParams& params);

/// Band-wise attention of query onto context, recombined by idwt2.
numerics::DTensor wca(const numerics::DTensor& query_latent, const numerics::DTensor& context_latent,
                      const AttentionParams& params);

/// lambda * self_out + (1 - lambda) * mean(cross_outs)
numerics::DTensor blend_attention(const numerics::DTensor& self_out, const std::vector<numerics::DTensor>& cross_outs,
                                  double lambda);

} // namespace gsedit::wavelet
