#include "gsedit/cimln/checkpoint.hpp"
#include "gsedit/cimln/model.hpp"
#include "gsedit/cimln/train.hpp"
#include "gsedit/numerics/gradcheck.hpp"
#include "gsedit/numerics/ops.hpp"
#include "gsedit/splat/render.hpp"
#include "gsedit/splat/synthetic.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <random>

using namespace gsedit;
using namespace gsedit::cimln;
using numerics::DTensor;
namespace tu = gsedit::testing;

namespace {

// Nested-loop local attention in plain doubles.
std::vector<double> attention_oracle(const DTensor& q, const DTensor& v, int k) {
    const int c = q.dim(0), h = q.dim(1), w = q.dim(2), r = k / 2;
    std::vector<double> out(c * h * w, 0.0);
    auto val = [&](const DTensor& t, int ch, int y, int x) {
        return (y < 0 || y >= h || x < 0 || x >= w) ? 0.0 : t.values()[(ch * h + y) * w + x];
    };
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            std::vector<double> s;
            for (int dy = -r; dy <= r; ++dy)
                for (int dx = -r; dx <= r; ++dx) {
                    double dot = 0;
                    for (int ch = 0; ch < c; ++ch) dot += val(q, ch, y, x) * val(v, ch, y + dy, x + dx);
                    s.push_back(dot);
                }
            double z = 0;
            for (double e : s) z += std::exp(e);
            int n = 0;
            for (int dy = -r; dy <= r; ++dy)
                for (int dx = -r; dx <= r; ++dx, ++n)
                    for (int ch = 0; ch < c; ++ch) out[(ch * h + y) * w + x] += std::exp(s[n]) / z * val(v, ch, y + dy, x + dx);
        }
    return out;
}

CimlnModel small_model(std::uint64_t seed, bool live_head) {
    auto m = CimlnModel::init({.features = 4, .window = 3}, seed);
    if (live_head) {
        std::mt19937_64 rng(seed + 1);
        std::uniform_real_distribution<double> u(-0.3, 0.3);
        for (auto name : {"head.out.w", "head.out.b"}) {
            auto t = m.param(name);
            for (auto& x : t.mutable_values()) x = numerics::round_to_precision(u(rng));
        }
    }
    return m;
}

std::vector<RenderPair> synthetic_pairs(std::uint64_t seed, int cams, int size) {
    auto s = splat::make_synthetic_scene(seed, 80, splat::Layout::cluster,
                                         {.num_cameras = cams, .width = size, .height = size});
    std::vector<RenderPair> out;
    for (const auto& c : s.orbit_cameras) {
        auto r = splat::render(s.scene, c);
        out.push_back({r.depth, r.rgb});
    }
    return out;
}

} // namespace

TEST(SsmBlock, ZeroInputGivesZeroOutput) {
    auto m = CimlnModel::init({}, 3);
    auto out = ssm_block(DTensor::zeros({16, 6, 5}), m, "source.ssm.");
    for (double v : out.values()) EXPECT_EQ(v, 0.0);
}

TEST(SsmBlock, ShapePreservedAndChannelMismatchRejected) {
    std::mt19937_64 rng(1);
    auto m = CimlnModel::init({}, 3);
    EXPECT_EQ(ssm_block(tu::random_tensor({16, 7, 9}, rng), m, "guide.ssm.").shape(), (numerics::Shape{16, 7, 9}));
    EXPECT_THROW(ssm_block(tu::random_tensor({8, 7, 9}, rng), m, "guide.ssm."), numerics::ShapeError);
}

TEST(SsmBlock, ScanOverPixelSequenceMatchesLoop) {
    // 1x4x4 map scanned in row-major pixel order.
    std::mt19937_64 rng(5);
    auto x = tu::random_tensor({1, 4, 4}, rng);
    const double ar = 0.3, b = 0.7, c = -1.2;
    auto y = numerics::ssm_scan(x.reshape({1, 16}), DTensor::from({1}, {ar}), DTensor::from({1}, {b}),
                                DTensor::from({1}, {c}));
    const double a = std::exp(-std::log1p(std::exp(ar)));
    double h = 0;
    for (int k = 0; k < 16; ++k) {
        h = a * h + b * x.values()[k];
        EXPECT_NEAR(y.values()[k], c * h, 1e-5);
    }
}

TEST(SsmBlock, GradCheck) {
    auto m = small_model(4, false);
    std::mt19937_64 rng(6);
    auto feat = tu::random_tensor({4, 5, 6}, rng);
    auto w = tu::random_tensor({4, 5, 6}, rng);
    std::vector<DTensor> params{feat};
    for (const auto& p : m.params())
        if (p.name.rfind("source.ssm.", 0) == 0) params.push_back(p.value);
    auto f = [&] { return numerics::sum(numerics::mul(ssm_block(feat, m, "source.ssm."), w)); };
    EXPECT_LE(numerics::grad_check(f, params, 1e-6), 1e-3);
}

TEST(PixelMutualLearning, ConstantNeighborhoodPassesThrough) {
    std::mt19937_64 rng(7);
    auto src = tu::random_tensor({3, 6, 6}, rng);
    auto guide = DTensor::full({3, 6, 6}, 0.37);
    auto out = pixel_mutual_learning(src, guide, Direction::guide_to_source, 3);
    for (int ch = 0; ch < 3; ++ch)
        for (int y = 1; y < 5; ++y)
            for (int x = 1; x < 5; ++x) EXPECT_NEAR(out.at({std::size_t(ch), std::size_t(y), std::size_t(x)}), 0.37, 1e-6);
}

TEST(PixelMutualLearning, EqualCorrelationsGiveWindowMean) {
    std::mt19937_64 rng(8);
    auto src = DTensor::zeros({2, 5, 5});
    auto guide = tu::random_tensor({2, 5, 5}, rng);
    auto out = pixel_mutual_learning(src, guide, Direction::guide_to_source, 3);
    for (int ch = 0; ch < 2; ++ch)
        for (int y = 0; y < 5; ++y)
            for (int x = 0; x < 5; ++x) {
                double s = 0;
                for (int dy = -1; dy <= 1; ++dy)
                    for (int dx = -1; dx <= 1; ++dx)
                        if (y + dy >= 0 && y + dy < 5 && x + dx >= 0 && x + dx < 5) s += guide.at({std::size_t(ch), std::size_t(y + dy), std::size_t(x + dx)});
                EXPECT_NEAR(out.at({std::size_t(ch), std::size_t(y), std::size_t(x)}), s / 9.0, 1e-6);
            }
}

TEST(PixelMutualLearning, WeightsSumToOne) {
    // With a single all-ones value channel the output is the weight sum.
    std::mt19937_64 rng(9);
    auto q = tu::random_tensor({1, 6, 6}, rng, -3, 3);
    auto out = local_attention(q, DTensor::full({1, 6, 6}, 1.0), 3);
    for (int y = 1; y < 5; ++y)
        for (int x = 1; x < 5; ++x) EXPECT_NEAR(out.at({0, std::size_t(y), std::size_t(x)}), 1.0, 1e-6);
}

TEST(PixelMutualLearning, MatchesNestedLoopOracle) {
    std::mt19937_64 rng(10);
    for (int trial = 0; trial < 10; ++trial) {
        auto s = tu::random_tensor({2, 5, 5}, rng, -2, 2);
        auto g = tu::random_tensor({2, 5, 5}, rng, -2, 2);
        EXPECT_LE(tu::max_abs_diff(pixel_mutual_learning(s, g, Direction::guide_to_source, 3), attention_oracle(s, g, 3)), 1e-5);
        EXPECT_LE(tu::max_abs_diff(pixel_mutual_learning(s, g, Direction::source_to_guide, 5), attention_oracle(g, s, 5)), 1e-5);
    }
}

TEST(PixelMutualLearning, GradCheck) {
    std::mt19937_64 rng(11);
    auto s = tu::random_tensor({3, 5, 4}, rng);
    auto g = tu::random_tensor({3, 5, 4}, rng);
    auto w = tu::random_tensor({3, 5, 4}, rng);
    auto f = [&] { return numerics::sum(numerics::mul(pixel_mutual_learning(s, g, Direction::guide_to_source, 3), w)); };
    EXPECT_LE(numerics::grad_check(f, {s, g}, 1e-6), 1e-3);
}

TEST(PixelMutualLearning, RejectsBadInputs) {
    EXPECT_THROW(local_attention(DTensor::zeros({2, 4, 4}), DTensor::zeros({2, 4, 5}), 3), numerics::ShapeError);
    EXPECT_THROW(local_attention(DTensor::zeros({2, 4, 4}), DTensor::zeros({2, 4, 4}), 2), std::invalid_argument);
}

TEST(Forward, IdentityAtInitialization) {
    std::mt19937_64 rng(12);
    auto m = CimlnModel::init({}, 1);
    auto depth = tu::random_tensor({1, 12, 12}, rng, 0, 5);
    auto rgb = tu::random_tensor({3, 12, 12}, rng, 0, 1);
    EXPECT_EQ(tu::to_vec(forward(m, depth, rgb)), tu::to_vec(depth));
    EXPECT_EQ(tu::to_vec(enhance_depth(m, depth, rgb)), tu::to_vec(depth));
}

TEST(Forward, OutputShapeMatchesInput) {
    std::mt19937_64 rng(13);
    auto m = small_model(2, true);
    for (std::size_t n : {8u, 16u, 33u}) {
        auto out = forward(m, tu::random_tensor({1, n, n}, rng, 0, 3), tu::random_tensor({3, n, n}, rng, 0, 1));
        EXPECT_EQ(out.shape(), (numerics::Shape{1, n, n}));
    }
    EXPECT_THROW(forward(m, DTensor::zeros({1, 8, 8}), DTensor::zeros({3, 8, 9})), numerics::ShapeError);
    EXPECT_THROW(forward(m, DTensor::zeros({2, 8, 8}), DTensor::zeros({3, 8, 8})), numerics::ShapeError);
}

TEST(Forward, GradCheckAllParameters) {
    std::mt19937_64 rng(14);
    auto m = small_model(3, true);
    auto depth = tu::random_tensor({1, 8, 8}, rng, 0.5, 3);
    auto rgb = tu::random_tensor({3, 8, 8}, rng, 0, 1);
    auto target = tu::random_tensor({1, 8, 8}, rng, 0.5, 3);
    EXPECT_LE(numerics::grad_check([&] { return numerics::sum(forward(m, depth, rgb)); }, m.tensors(), 1e-6), 1e-3);
    EXPECT_LE(numerics::grad_check([&] { return loss_total(forward(m, depth, rgb), target, 1.0, 0.1); }, m.tensors(), 1e-6),
              1e-3);
}

TEST(Loss, ZeroForIdenticalMaps) {
    std::mt19937_64 rng(15);
    auto t = tu::random_tensor({1, 6, 6}, rng);
    EXPECT_EQ(loss_total(t, t, 1.0, 0.1).item(), 0.0);
}

TEST(Loss, ConstantOffsetOnlyHitsL2Term) {
    std::mt19937_64 rng(16);
    auto t = tu::random_tensor({1, 6, 6}, rng);
    EXPECT_NEAR(loss_total(numerics::add_scalar(t, 0.25), t, 2.0, 5.0).item(), 2.0 * 0.0625, 1e-6);
}

TEST(Loss, MatchesScalarLoop) {
    std::mt19937_64 rng(17);
    for (int trial = 0; trial < 5; ++trial) {
        auto o = tu::random_tensor({1, 7, 5}, rng);
        auto t = tu::random_tensor({1, 7, 5}, rng);
        const double lambda = 0.7, gamma = 1.3;
        auto at = [](const DTensor& x, int y, int c) { return x.values()[y * 5 + c]; };
        double l2 = 0, ba = 0;
        for (int y = 0; y < 7; ++y)
            for (int x = 0; x < 5; ++x) {
                l2 += std::pow(at(o, y, x) - at(t, y, x), 2);
                const double gx = x + 1 < 5 ? (at(o, y, x + 1) - at(o, y, x)) - (at(t, y, x + 1) - at(t, y, x)) : 0.0;
                const double gy = y + 1 < 7 ? (at(o, y + 1, x) - at(o, y, x)) - (at(t, y + 1, x) - at(t, y, x)) : 0.0;
                ba += std::fabs(gx) * std::fabs(gy);
            }
        EXPECT_NEAR(loss_total(o, t, lambda, gamma).item(), lambda * l2 / 35 + gamma * ba / 35, 1e-6);
        EXPECT_GE(loss_total(o, t, lambda, gamma).item(), 0.0);
    }
    EXPECT_THROW(loss_total(DTensor::zeros({1, 4, 4}), DTensor::zeros({1, 4, 5}), 1, 1), numerics::ShapeError);
}

TEST(Train, SingleStepGivesFiniteLoss) {
    auto pairs = synthetic_pairs(1, 2, 16);
    TrainConfig cfg;
    cfg.steps = 1;
    cfg.model.features = 4;
    auto r = train_self_supervised(pairs, cfg);
    EXPECT_TRUE(std::isfinite(r.best_loss));
    EXPECT_LE(r.best_loss, r.initial_loss);
    r.model.validate();
}

TEST(Train, DeterministicForSeed) {
    auto pairs = synthetic_pairs(2, 2, 16);
    TrainConfig cfg;
    cfg.steps = 4;
    cfg.model.features = 4;
    auto a = train_self_supervised(pairs, cfg);
    auto b = train_self_supervised(pairs, cfg);
    for (std::size_t i = 0; i < a.model.params().size(); ++i)
        EXPECT_EQ(tu::to_vec(a.model.params()[i].value), tu::to_vec(b.model.params()[i].value));
    EXPECT_EQ(a.loss_history, b.loss_history);
}

TEST(Train, LossDecreasesAndStaysFinite) {
    auto pairs = synthetic_pairs(3, 2, 16);
    TrainConfig cfg;
    cfg.steps = 25;
    cfg.model.features = 8;
    auto r = train_self_supervised(pairs, cfg);
    for (double l : r.loss_history) EXPECT_TRUE(std::isfinite(l));
    EXPECT_LT(r.best_loss, r.initial_loss);
    EXPECT_NEAR(evaluate_loss(r.model, pairs, cfg), r.best_loss, 1e-6 * r.initial_loss + 1e-9);
}

TEST(Train, RejectsIndivisibleSizesAndBadConfig) {
    std::vector<RenderPair> pairs{{DTensor::zeros({1, 9, 8}), DTensor::zeros({3, 9, 8})}};
    EXPECT_THROW(train_self_supervised(pairs, {}), numerics::ShapeError);
    EXPECT_THROW(train_self_supervised({}, {}), std::invalid_argument);
    TrainConfig cfg;
    cfg.downsample_factor = 1;
    EXPECT_THROW(cfg.validate(), std::invalid_argument);
}

TEST(EnhanceDepth, BackgroundZerosStayFinite) {
    auto pairs = synthetic_pairs(4, 1, 16);
    auto m = small_model(5, true);
    auto out = enhance_depth(m, pairs[0].depth, pairs[0].rgb);
    double dmax = 0;
    for (double v : pairs[0].depth.values()) dmax = std::max(dmax, v);
    for (double v : out.values()) {
        EXPECT_TRUE(std::isfinite(v));
        EXPECT_GE(v, 0.0);
        EXPECT_LE(v, 1.05 * dmax + 1e-6);
    }
    auto blank = enhance_depth(m, DTensor::zeros({1, 8, 8}), DTensor::zeros({3, 8, 8}));
    for (double v : blank.values()) EXPECT_EQ(v, 0.0);
}

TEST(Checkpoint, RoundTripIsExact) {
    auto dir = std::filesystem::temp_directory_path() / "gsedit_ckpt_test";
    std::filesystem::remove_all(dir);
    auto m = small_model(6, true);
    save_checkpoint(dir, m, {{"steps", 3}});
    auto back = load_checkpoint(dir);
    EXPECT_EQ(back.config().features, 4);
    ASSERT_EQ(back.params().size(), m.params().size());
    for (std::size_t i = 0; i < m.params().size(); ++i) {
        EXPECT_EQ(back.params()[i].name, m.params()[i].name);
        EXPECT_EQ(tu::to_vec(back.params()[i].value), tu::to_vec(m.params()[i].value));
    }
    std::filesystem::remove(dir / "head.out.w.rten");
    EXPECT_ANY_THROW(load_checkpoint(dir));
    std::filesystem::remove_all(dir);
}
