#include "gsedit/numerics/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace gsedit::numerics {

double grad_check(const std::function<DTensor()>& f, std::vector<DTensor> params, double h) {
    if (!(h > 0)) throw std::invalid_argument("grad_check step h must be positive");
    ScopedPrecision wide(Precision::f64);
    for (auto& p : params) {
        p.zero_grad();
        p.set_requires_grad(true);
    }
    backward(f());
    std::vector<std::vector<double>> analytic;
    for (const auto& p : params) {
        analytic.emplace_back(p.numel(), 0.0);
        if (p.has_grad()) std::copy(p.grad().begin(), p.grad().end(), analytic.back().begin());
    }

    NoGradGuard no_grad;
    double worst = 0.0;
    for (std::size_t k = 0; k < params.size(); ++k) {
        auto values = params[k].mutable_values();
        for (std::size_t i = 0; i < values.size(); ++i) {
            const double saved = values[i];
            values[i] = saved + h;
            const double up = f().item();
            values[i] = saved - h;
            const double down = f().item();
            values[i] = saved;
            const double cd = (up - down) / (2.0 * h);
            const double a = analytic[k][i];
            const double denom = std::max({std::fabs(a), std::fabs(cd), 1e-8});
            worst = std::max(worst, std::fabs(a - cd) / denom);
        }
    }
    for (auto& p : params) p.zero_grad();
    return worst;
}

double grad_check(const std::function<DTensor(const DTensor&)>& f, const DTensor& x, double h) {
    DTensor leaf = DTensor::from(x.shape(), std::vector<double>(x.values().begin(), x.values().end()), true);
    return grad_check([&] { return f(leaf); }, {leaf}, h);
}

} // namespace gsedit::numerics
