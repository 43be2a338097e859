#include <gtest/gtest.h>

#include <filesystem>

#include "lienet/checkpoint.hpp"
#include "lienet/imageio.hpp"
#include "lienet/metrics.hpp"
#include "lienet/ssim.hpp"
#include "oracle.hpp"
#include "scratch_dir.hpp"

using namespace lienet;
namespace fs = std::filesystem;

TEST(Psnr, KnownValues) {
    const Tensor<double> a({1, 3, 4, 4}, 0.5);
    EXPECT_EQ(psnr(a, a), kPsnrCap);
    Tensor<double> b = a;
    for (double& v : b.data()) v += 0.1;
    EXPECT_NEAR(psnr(a, b), 20.0, 1e-9);
    const auto x = oracle::random_tensor<double>({1, 3, 9, 7}, 1, 0, 1);
    const auto y = oracle::random_tensor<double>({1, 3, 9, 7}, 2, 0, 1);
    EXPECT_NEAR(psnr(x, y), oracle::psnr(x, y), 1e-9);
    EXPECT_THROW(psnr(x, Tensor<double>({1, 3, 9, 8})), StructuralError);
}

TEST(Ssim, MatchesNaiveSlidingWindow) {
    for (int seed = 0; seed < 10; ++seed) {
        const auto a = oracle::random_tensor<double>({1, 1, 32, 32}, 100 + seed, 0, 1);
        Tensor<double> b = oracle::random_tensor<double>(a.shape(), 200 + seed, -0.2, 0.2);
        b += a;
        EXPECT_NEAR(ssim(a, b), oracle::ssim(a, b), 1e-6);
    }
    const auto rgb = oracle::random_tensor<double>({1, 3, 32, 32}, 7, 0, 1);
    const auto rgb2 = oracle::random_tensor<double>({1, 3, 32, 32}, 8, 0, 1);
    EXPECT_NEAR(ssim(rgb, rgb2), oracle::ssim(rgb, rgb2), 1e-6);
}

TEST(Ssim, SelfSimilarityAndSymmetry) {
    const auto a = oracle::random_tensor<double>({1, 3, 32, 32}, 9, 0, 1);
    const auto b = oracle::random_tensor<double>({1, 3, 32, 32}, 10, 0, 1);
    EXPECT_NEAR(ssim(a, a), 1.0, 1e-12);
    EXPECT_NEAR(ssim(a, b), ssim(b, a), 1e-12);
    EXPECT_THROW(ssim(Tensor<double>({1, 1, 8, 8}), Tensor<double>({1, 1, 8, 8})), StructuralError);
}

TEST(Ssim, GaussianWindowIsNormalized) {
    const auto w = gaussian_window();
    ASSERT_EQ(w.size(), 11u);
    double s = 0;
    for (double v : w) s += v;
    EXPECT_NEAR(s, 1.0, 1e-15);
    EXPECT_NEAR(w[5] / w[6], std::exp(1.0 / (2 * 1.5 * 1.5)), 1e-12);
}

class EvaluateTest : public ::testing::Test {
protected:
    void SetUp() override {
        root_ = scratch_dir();
        fs::remove_all(root_);
        synth_pairs({6, 32, 3}, root_);
    }
    void TearDown() override { fs::remove_all(root_); }
    fs::path root_;
};

TEST_F(EvaluateTest, BaselineScoresLowImages) {
    const EvalReport r = evaluate(root_, nullptr);
    ASSERT_EQ(r.images.size(), 6u);
    double mean = 0;
    for (const auto& row : r.images) {
        const ImagePair p = load_pair(scan_dataset(root_)[&row - r.images.data()]);
        EXPECT_EQ(row.name, p.name);
        EXPECT_NEAR(row.psnr, psnr(p.low, p.high), 1e-12);
        mean += row.psnr;
    }
    EXPECT_NEAR(r.mean_psnr, mean / 6, 1e-12);
}

TEST_F(EvaluateTest, NamesFilterAndThreadsAgree) {
    const auto net = Network<float>::initialize(NetworkConfig{}, 1);
    EvalOptions one;
    one.names = std::vector<std::string>{"0001", "0004"};
    EvalOptions many = one;
    many.threads = 3;
    const EvalReport a = evaluate(root_, &net, one);
    const EvalReport b = evaluate(root_, &net, many);
    ASSERT_EQ(a.images.size(), 2u);
    EXPECT_EQ(a.images[0].name, "0001");
    EXPECT_EQ(a.to_json(), b.to_json());

    EvalOptions missing;
    missing.names = std::vector<std::string>{"nope"};
    EXPECT_THROW(evaluate(root_, &net, missing), IoError);
}

TEST_F(EvaluateTest, EnhanceClampsAndKeepsSize) {
    const auto net = Network<float>::initialize(NetworkConfig{}, 2);
    const ImagePair p = load_pair(scan_dataset(root_)[0]);
    const Tensor<float> out = enhance(net, p.low);
    EXPECT_EQ(out.shape(), p.low.shape());
    for (float v : out.data()) {
        EXPECT_GE(v, 0.0f);
        EXPECT_LE(v, 1.0f);
    }
}
