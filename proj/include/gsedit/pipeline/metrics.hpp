#pragma once

#include "gsedit/numerics/tensor.hpp"

#include <nlohmann/json.hpp>

#include <vector>

namespace gsedit::pipeline {

constexpr double kPsnrCap = 100.0;

/// 10 log10(peak^2 / MSE), capped at 100 dB once MSE < peak^2 * 1e-10.
double compute_psnr(const numerics::DTensor& a, const numerics::DTensor& b, double peak = 1.0);
double compute_rmse(const numerics::DTensor& a, const numerics::DTensor& b);

/// Per-channel population std over views of each view's mean color,
/// combined by L2 norm. Needs >= 2 equally shaped [C x H x W] views.
double cross_view_consistency(const std::vector<numerics::DTensor>& views);

/// Rec. 709 luma averaged over the image, [3 x H x W].
double mean_luminance(const numerics::DTensor& rgb);

struct ViewMetrics {
    int view = 0;
    double psnr_db = 0.0;
    double rmse = 0.0;
    double luminance_original = 0.0;
    double luminance_edited = 0.0;    // diffusion output
    double luminance_rerender = 0.0;  // refit scene
};

/// Re-render vs original render, pooled over all views.
struct MetricReport {
    double psnr_db = 0.0;
    double rmse = 0.0;
    double cross_view_std = 0.0;  // of the edited views
    std::vector<ViewMetrics> per_view;
};

nlohmann::json to_json(const MetricReport& report);

} // namespace gsedit::pipeline
