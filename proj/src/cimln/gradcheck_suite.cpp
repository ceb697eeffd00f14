#include "gsedit/cimln/gradcheck_suite.hpp"

#include "gsedit/cimln/model.hpp"
#include "gsedit/numerics/gradcheck.hpp"
#include "gsedit/numerics/ops.hpp"

#include <functional>
#include <random>

namespace gsedit::cimln {

using numerics::DTensor;

namespace {

DTensor random_tensor(const numerics::Shape& shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> u(lo, hi);
    auto t = DTensor::zeros(shape);
    for (auto& v : t.mutable_values()) v = numerics::round_to_precision(u(rng));
    return t;
}

} // namespace

std::vector<GradCheckCase> run_gradient_checks(std::uint64_t seed, double h) {
    using namespace numerics;
    std::mt19937_64 rng(seed);
    std::vector<GradCheckCase> out;

    auto model = CimlnModel::init({.features = 4, .window = 3}, seed);
    // The output conv starts at zero; give it weights so the head is exercised.
    for (auto name : {"head.out.w", "head.out.b"}) {
        auto t = model.param(name);
        std::uniform_real_distribution<double> u(-0.3, 0.3);
        for (auto& v : t.mutable_values()) v = round_to_precision(u(rng));
    }
    auto depth = random_tensor({1, 8, 8}, rng, 0.5, 3.0);
    auto rgb = random_tensor({3, 8, 8}, rng, 0.0, 1.0);
    auto target = random_tensor({1, 8, 8}, rng, 0.5, 3.0);
    auto feat = random_tensor({4, 8, 8}, rng);
    auto feat2 = random_tensor({4, 8, 8}, rng);

    auto weighted = [&](const Shape& shape) { return random_tensor(shape, rng); };
    auto check = [&](std::string name, const Shape& out_shape, std::function<DTensor()> f,
                     std::vector<DTensor> leaves) {
        auto w = weighted(out_shape);
        const double err = grad_check([&] { return sum(mul(f(), w)); }, std::move(leaves), h);
        out.push_back({std::move(name), err});
    };

    auto kernel = random_tensor({4, 1, 3, 3}, rng, -0.5, 0.5);
    auto bias = random_tensor({4}, rng);
    check("conv2d", {4, 8, 8}, [&] { return conv2d(depth, kernel, 1, 1); }, {depth, kernel});
    check("add_channel_bias", {4, 8, 8}, [&] { return add_channel_bias(feat, bias); }, {feat, bias});
    check("silu", {1, 8, 8}, [&] { return silu(add_scalar(depth, -1.5)); }, {depth});
    check("softplus", {4, 8, 8}, [&] { return softplus(feat); }, {feat});
    check("exp", {4, 8, 8}, [&] { return numerics::exp(feat); }, {feat});
    auto k1d = random_tensor({4, 4, 3}, rng, -0.5, 0.5);
    check("conv1d_sequence", {4, 8, 8}, [&] { return conv1d_sequence(feat, k1d); }, {feat, k1d});
    auto a_raw = random_tensor({4}, rng), b = random_tensor({4}, rng), c = random_tensor({4}, rng);
    check("ssm_scan", {4, 64}, [&] { return ssm_scan(feat.reshape({4, 64}), a_raw, b, c); }, {feat, a_raw, b, c});
    auto gamma = random_tensor({4}, rng, 0.5, 1.5), beta = random_tensor({4}, rng);
    check("layernorm", {4, 64}, [&] { return layernorm(feat.reshape({4, 64}), 0, gamma, beta, 1e-5); },
          {feat, gamma, beta});
    auto proj = random_tensor({4, 4}, rng);
    check("matmul", {4, 64}, [&] { return matmul(proj, feat.reshape({4, 64})); }, {proj, feat});
    check("concat", {8, 8, 8}, [&] { return concat({feat, feat2}); }, {feat, feat2});
    check("local_attention", {4, 8, 8}, [&] { return local_attention(feat, feat2, 3); }, {feat, feat2});
    check("pixel_mutual_learning", {4, 8, 8},
          [&] { return pixel_mutual_learning(feat, feat2, Direction::guide_to_source, 3); }, {feat, feat2});
    check("down_average", {1, 4, 4}, [&] { return resample(depth, 2, ResampleMode::down_average); }, {depth});
    check("up_bilinear", {1, 16, 16}, [&] { return resample(depth, 2, ResampleMode::up_bilinear); }, {depth});
    check("spatial_gradient", {1, 8, 8},
          [&] { return mul(spatial_gradient(depth, GradAxis::x), spatial_gradient(depth, GradAxis::y)); }, {depth});
    check("abs", {1, 8, 8}, [&] { return numerics::abs(add_scalar(depth, -4.0)); }, {depth});

    std::vector<DTensor> ssm_leaves{feat};
    for (const auto& p : model.params())
        if (p.name.rfind("source.ssm.", 0) == 0) ssm_leaves.push_back(p.value);
    check("ssm_block", {4, 8, 8}, [&] { return ssm_block(feat, model, "source.ssm."); }, ssm_leaves);

    check("forward", {1, 8, 8}, [&] { return forward(model, depth, rgb); }, model.tensors());
    out.push_back({"loss_total", grad_check([&](const DTensor& d) { return loss_total(d, target, 1.0, 0.1); },
                                            add_scalar(depth, 0.0), h)});
    out.push_back({"forward+loss",
                   grad_check([&] { return loss_total(forward(model, depth, rgb), target, 1.0, 0.1); }, model.tensors(), h)});
    return out;
}

} // namespace gsedit::cimln
