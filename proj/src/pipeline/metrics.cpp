#include "gsedit/pipeline/metrics.hpp"

#include <fmt/format.h>

#include <cmath>
#include <stdexcept>

namespace gsedit::pipeline {

using numerics::DTensor;

namespace {

double mse(const DTensor& a, const DTensor& b) {
    if (a.shape() != b.shape()) {
        throw numerics::ShapeError(fmt::format("images differ in shape: {} vs {}", numerics::shape_str(a.shape()),
                                               numerics::shape_str(b.shape())));
    }
    if (a.numel() == 0) throw numerics::ShapeError("metrics need non-empty images");
    const auto av = a.values(), bv = b.values();
    double s = 0.0;
    for (std::size_t i = 0; i < av.size(); ++i) s += (av[i] - bv[i]) * (av[i] - bv[i]);
    return s / static_cast<double>(av.size());
}

} // namespace

double compute_psnr(const DTensor& a, const DTensor& b, double peak) {
    if (!(peak > 0)) throw std::invalid_argument("psnr peak must be positive");
    const double m = mse(a, b);
    if (m < peak * peak * 1e-10) return kPsnrCap;
    return std::min(kPsnrCap, 10.0 * std::log10(peak * peak / m));
}

double compute_rmse(const DTensor& a, const DTensor& b) { return std::sqrt(mse(a, b)); }

double cross_view_consistency(const std::vector<DTensor>& views) {
    if (views.size() < 2) throw std::invalid_argument("cross-view consistency needs at least two views");
    for (const auto& v : views)
        if (v.shape() != views[0].shape() || v.ndim() != 3) {
            throw numerics::ShapeError("cross-view consistency needs equally shaped [C x H x W] views");
        }
    const std::size_t c = views[0].dim(0), plane = views[0].numel() / c;
    const double n = static_cast<double>(views.size());
    double total = 0.0;
    for (std::size_t ch = 0; ch < c; ++ch) {
        std::vector<double> means;
        for (const auto& v : views) {
            double s = 0.0;
            for (std::size_t p = 0; p < plane; ++p) s += v.values()[ch * plane + p];
            means.push_back(s / static_cast<double>(plane));
        }
        double mu = 0.0;
        for (double m : means) mu += m;
        mu /= n;
        double var = 0.0;
        for (double m : means) var += (m - mu) * (m - mu);
        total += var / n;
    }
    return std::sqrt(total);
}

double mean_luminance(const DTensor& rgb) {
    if (rgb.ndim() != 3 || rgb.dim(0) != 3) throw numerics::ShapeError("luminance needs a [3 x H x W] image");
    const std::size_t plane = rgb.numel() / 3;
    const auto v = rgb.values();
    double s = 0.0;
    for (std::size_t p = 0; p < plane; ++p) s += 0.2126 * v[p] + 0.7152 * v[plane + p] + 0.0722 * v[2 * plane + p];
    return s / static_cast<double>(plane);
}

nlohmann::json to_json(const MetricReport& report) {
    nlohmann::json views = nlohmann::json::array();
    for (const auto& v : report.per_view) {
        views.push_back({{"view", v.view},
                         {"psnr_db", v.psnr_db},
                         {"rmse", v.rmse},
                         {"luminance_original", v.luminance_original},
                         {"luminance_edited", v.luminance_edited},
                         {"luminance_rerender", v.luminance_rerender}});
    }
    return {{"schema", 1},
            {"psnr_db", report.psnr_db},
            {"rmse", report.rmse},
            {"cross_view_std", report.cross_view_std},
            {"per_view", views}};
}

} // namespace gsedit::pipeline
