#include <gtest/gtest.h>

#include "lienet/dsconv.hpp"
#include "oracle.hpp"

using namespace lienet;

namespace {

template <typename T>
DSConvParams<T> random_params(int c, int dia, Variant v, std::uint64_t seed) {
    const auto r = oracle::random_tensor<T>({1, 1, 4, c}, seed, -1.5, 1.5);
    DSConvParams<T> p;
    for (int k = 0; k < c; ++k) {
        p.w1.push_back(r.at(0, 0, 0, k));
        p.b1.push_back(r.at(0, 0, 1, k));
        p.w2.push_back(r.at(0, 0, 2, k));
        p.b2.push_back(r.at(0, 0, 3, k));
    }
    p.dia = dia;
    p.variant = v;
    return p;
}

} // namespace

TEST(AggregateShifts, MatchesDilatedAllOnesConvolution) {
    std::mt19937_64 rng(2024);
    for (int trial = 0; trial < 100; ++trial) {
        const int dia = trial % 5;
        const int h = std::uniform_int_distribution<int>(3, 32)(rng);
        const int w = std::uniform_int_distribution<int>(3, 32)(rng);
        const auto x = oracle::random_tensor<float>({1, 3, h, w}, rng());
        EXPECT_LE(oracle::max_abs_diff(aggregate_shifts(x, dia), oracle::dilated_ones_conv(x, dia)), 1e-6)
            << "trial " << trial << " dia " << dia << " " << h << "x" << w;
    }
}

TEST(DSConv, ConstantGateHalvesFeature) {
    auto p = random_params<double>(3, 2, Variant::plain, 1);
    std::fill(p.w2.begin(), p.w2.end(), 0.0);
    std::fill(p.b2.begin(), p.b2.end(), 0.0);
    const auto x = oracle::random_tensor<double>({1, 3, 5, 5}, 2);
    const Tensor<double> y = dsconv_forward(x, p);
    const Tensor<double> expect = relu(channel_affine<double>(x, p.w1, p.b1));
    for (std::size_t k = 0; k < y.size(); ++k) EXPECT_NEAR(y[k], 0.5 * expect[k], 1e-15);
}

TEST(DSConv, MatchesNaiveComposition) {
    for (int seed = 0; seed < 30; ++seed) {
        for (Variant v : {Variant::plain, Variant::down, Variant::up}) {
            const int dia = seed % 5;
            const auto p = random_params<float>(3, dia, v, 10 + seed);
            const auto x = oracle::random_tensor<float>({1, 3, 6, 6}, 50 + seed);
            const Tensor<float> y = dsconv_forward(x, p);
            const Tensor<float> ref = oracle::dsconv(x, p, v);
            ASSERT_EQ(y.shape(), ref.shape());
            EXPECT_LE(oracle::max_abs_diff(y, ref), 1e-6) << to_string(v) << " dia " << dia;
        }
    }
}

TEST(DSConv, VariantShapes) {
    const auto x8 = oracle::random_tensor<float>({1, 3, 8, 8}, 3);
    EXPECT_EQ(dsconv_forward(x8, init_params<float>(3, 1, Variant::down, 0)).shape(), (Shape{1, 3, 4, 4}));
    const auto x4 = oracle::random_tensor<float>({1, 3, 4, 4}, 4);
    const auto up = init_params<float>(3, 1, Variant::up, 0);
    EXPECT_EQ(dsconv_forward(x4, up, SpatialSize{8, 8}).shape(), (Shape{1, 3, 8, 8}));
    EXPECT_EQ(dsconv_forward(x4, up).shape(), (Shape{1, 3, 8, 8}));
    EXPECT_EQ(dsconv_forward(x4, up, SpatialSize{9, 7}).shape(), (Shape{1, 3, 9, 7}));
}

TEST(DSConv, ChannelMismatchThrows) {
    const auto x = oracle::random_tensor<float>({1, 2, 4, 4}, 5);
    EXPECT_THROW(dsconv_forward(x, init_params<float>(3, 0, Variant::plain, 0)), StructuralError);
}

TEST(DSConv, ZeroUpstreamGivesZeroGradients) {
    const auto p = random_params<double>(3, 1, Variant::down, 6);
    const auto x = oracle::random_tensor<double>({1, 3, 6, 6}, 7);
    DSConvCache<double> cache;
    const Tensor<double> y = dsconv_forward(x, p, std::nullopt, &cache);
    const DSConvGrad<double> g = dsconv_backward(cache, p, Tensor<double>(y.shape()));
    EXPECT_EQ(g.dx.sum(), 0.0);
    for (const auto* v : {&g.dp.w1, &g.dp.b1, &g.dp.w2, &g.dp.b2})
        for (double e : *v) EXPECT_EQ(e, 0.0);
}

TEST(DSConv, BackwardRejectsWrongUpstreamShape) {
    const auto p = random_params<double>(3, 1, Variant::plain, 8);
    DSConvCache<double> cache;
    (void)dsconv_forward(oracle::random_tensor<double>({1, 3, 4, 4}, 9), p, std::nullopt, &cache);
    EXPECT_THROW(dsconv_backward(cache, p, Tensor<double>({1, 3, 4, 5})), StructuralError);
}

TEST(DSConv, ConstantGateBackwardComposesPrimitives) {
    auto p = random_params<double>(3, 3, Variant::plain, 10);
    std::fill(p.w2.begin(), p.w2.end(), 0.0);
    std::fill(p.b2.begin(), p.b2.end(), 0.0);
    const auto x = oracle::random_tensor<double>({1, 3, 5, 6}, 11);
    const auto dy = oracle::random_tensor<double>(x.shape(), 12);
    DSConvCache<double> cache;
    (void)dsconv_forward(x, p, std::nullopt, &cache);
    const DSConvGrad<double> g = dsconv_backward(cache, p, dy);

    Tensor<double> half = dy;
    half *= 0.5;
    const Tensor<double> pre = channel_affine<double>(x, p.w1, p.b1);
    const Tensor<double> expect = channel_affine_backward<double>(x, p.w1, relu_backward(pre, half)).dx;
    EXPECT_LT(oracle::max_abs_diff(g.dx, expect), 1e-14);
}

TEST(DSConv, SumOfOutputsGradcheckAllVariants) {
    for (Variant v : {Variant::plain, Variant::down, Variant::up}) {
        for (int dia = 0; dia <= 4; ++dia) {
            const auto p = random_params<double>(2, dia, v, 40 + dia);
            const auto x = oracle::random_tensor<double>({1, 2, 5, 6}, 60 + dia);
            DSConvCache<double> cache;
            const Tensor<double> y = dsconv_forward(x, p, std::nullopt, &cache);
            const DSConvGrad<double> g = dsconv_backward(cache, p, Tensor<double>(y.shape(), 1.0));
            const auto fx = [&](const Tensor<double>& t) { return dsconv_forward(t, p).sum(); };
            EXPECT_LE(relative_error(g.dx.data(), numeric_gradient(fx, x, 1e-6).data()), 1e-5);
            const auto fw1 = [&](const std::vector<double>& w) {
                auto q = p;
                q.w1 = w;
                return dsconv_forward(x, q).sum();
            };
            EXPECT_LE(relative_error(g.dp.w1, numeric_gradient(fw1, p.w1, 1e-6)), 1e-5);
            const auto fb2 = [&](const std::vector<double>& b) {
                auto q = p;
                q.b2 = b;
                return dsconv_forward(x, q).sum();
            };
            EXPECT_LE(relative_error(g.dp.b2, numeric_gradient(fb2, p.b2, 1e-6)), 1e-5);
        }
    }
}

TEST(DSConvInit, ScaledKaimingStatistics) {
    // Many channels so the sample std is tight around 0.1 * sqrt(2).
    const auto p = init_params<double>(20000, 0, Variant::plain, 77);
    double s = 0, s2 = 0;
    for (double v : p.w1) {
        s += v;
        s2 += v * v;
    }
    const double n = static_cast<double>(p.w1.size());
    const double mean = s / n;
    const double sd = std::sqrt(s2 / n - mean * mean);
    EXPECT_NEAR(mean, 0.0, 0.01);
    EXPECT_NEAR(sd, 0.1 * std::sqrt(2.0), 0.01);
    for (double v : p.b1) EXPECT_EQ(v, 0.0);
    for (double v : p.b2) EXPECT_EQ(v, 0.0);
    EXPECT_EQ(init_params<double>(3, 1, Variant::down, 5).w1, init_params<double>(3, 1, Variant::down, 5).w1);
    EXPECT_NE(init_params<double>(3, 1, Variant::down, 5).w1, init_params<double>(3, 1, Variant::down, 6).w1);
}

TEST(DSConvCost, ParameterCounts) {
    EXPECT_EQ(dsconv_param_count(3), 12);
    EXPECT_EQ(dsconv_param_count(256), 1024);
    EXPECT_EQ(dilated_conv_param_count(256), 9 * 256 * 256 + 256);
    EXPECT_EQ(init_params<float>(3, 0, Variant::plain, 0).scalar_count(), 12u);
}

TEST(DSConvCost, FlopItems) {
    const DSConvFlops f = dsconv_flop_count(3, 10, 20);
    const std::int64_t chw = 3 * 10 * 20;
    EXPECT_EQ(f.conv1, 4 * chw);
    EXPECT_EQ(f.conv1_affine, 2 * chw);
    EXPECT_EQ(f.aggregation, 8 * chw);
    EXPECT_EQ(f.conv2, 2 * chw);
    EXPECT_EQ(f.gate_mul, chw);
    EXPECT_EQ(f.total, 15 * chw);
    EXPECT_EQ(dilated_conv_flop_count(256, 4, 4), 18LL * 256 * 256 * 16 + 256 * 16);
}
