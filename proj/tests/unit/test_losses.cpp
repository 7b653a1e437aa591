#include "gsgen/loss/features.hpp"
#include "gsgen/loss/losses.hpp"
#include "gsgen/loss/metrics.hpp"

#include "../support/oracles.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <random>

using namespace gsgen;
using gsgen::testing::central_difference;
using gsgen::testing::random_image;
using gsgen::testing::relative_error;

namespace {

ImageBuffer row(std::initializer_list<double> values) {
    ImageBuffer img(static_cast<int>(values.size()), 1, 1);
    std::size_t i = 0;
    for (double v : values) img.data()[i++] = v;
    return img;
}

ImageBuffer ones_like(const ImageBuffer& img) { return ImageBuffer(img.width(), img.height(), 1, 1.0); }

ImageBuffer scaled(const ImageBuffer& img, double c) {
    ImageBuffer out = img;
    for (double& v : out.data()) v *= c;
    return out;
}

// Checks grad against central differences of loss(image) over every entry.
void expect_gradient_matches(const std::function<double(const ImageBuffer&)>& loss, const ImageBuffer& at,
                             const ImageBuffer& grad, double step = 1e-6, double tol = 1e-4) {
    ASSERT_TRUE(at.same_shape(grad));
    ImageBuffer work = at;
    for (std::size_t i = 0; i < at.size(); ++i) {
        const double original = work.data()[i];
        const auto f = [&](double v) {
            work.data()[i] = v;
            const double value = loss(work);
            work.data()[i] = original;
            return value;
        };
        const double numeric = central_difference(f, original, step);
        const double analytic = grad.data()[i];
        if (std::abs(numeric) < 1e-9 && std::abs(analytic) < 1e-9) continue;
        EXPECT_LT(relative_error(numeric, analytic), tol) << "entry " << i << " analytic " << analytic
                                                          << " numeric " << numeric;
    }
}

} // namespace

TEST(ScaleInvariantDepth, HandValueAndInvariance) {
    const ImageBuffer d = row({1.0, 2.0});
    const ImageBuffer p = row({1.0, 4.0});
    const double expected = std::pow(std::log(2.0), 2) / 8.0;
    EXPECT_NEAR(scale_invariant_depth_loss(d, p, ones_like(d)).value, expected, 1e-12);
    EXPECT_NEAR(expected, 0.06006, 1e-5);
    EXPECT_EQ(scale_invariant_depth_loss(d, d, ones_like(d)).value, 0.0);
    EXPECT_NEAR(scale_invariant_depth_loss(d, scaled(d, 3.0), ones_like(d)).value, 0.0, 1e-15);
}

TEST(ScaleInvariantDepth, RandomScaleInvariance) {
    std::mt19937_64 rng(1);
    for (int i = 0; i < 200; ++i) {
        const ImageBuffer d = random_image(rng, 8, 8, 1, 0.5, 5.0);
        const ImageBuffer p = random_image(rng, 8, 8, 1, 0.5, 5.0);
        const ImageBuffer valid = ones_like(d);
        const double base = scale_invariant_depth_loss(d, p, valid).value;
        for (double c : {0.1, 1.0, 10.0}) {
            EXPECT_LT(std::abs(scale_invariant_depth_loss(d, scaled(p, c), valid).value - base), 1e-10);
        }
    }
}

TEST(ScaleInvariantDepth, EmptyMaskGivesZero) {
    const ImageBuffer d = row({1.0, 2.0});
    const BufferLoss l = scale_invariant_depth_loss(d, d, ImageBuffer(2, 1, 1, 0.0));
    EXPECT_EQ(l.value, 0.0);
    EXPECT_EQ(l.valid_count, 0u);
    for (double g : l.grad.data()) EXPECT_EQ(g, 0.0);
}

TEST(ScaleInvariantDepth, GradientMatchesFiniteDifferences) {
    std::mt19937_64 rng(2);
    const ImageBuffer d = random_image(rng, 8, 8, 1, 0.5, 3.0);
    const ImageBuffer p = random_image(rng, 8, 8, 1, 0.5, 3.0);
    ImageBuffer valid = random_image(rng, 8, 8, 1);
    const BufferLoss l = scale_invariant_depth_loss(d, p, valid);
    expect_gradient_matches([&](const ImageBuffer& x) { return scale_invariant_depth_loss(x, p, valid).value; }, d,
                            l.grad);
}

TEST(MultiscaleDepth, SingleScaleIsMeanAbsoluteError) {
    const ImageBuffer d = row({1.0, 2.0});
    const ImageBuffer p = row({2.0, 2.0});
    const DepthScale s{1.0, 1.0};
    EXPECT_DOUBLE_EQ(multiscale_depth_loss(d, p, ones_like(d), std::span(&s, 1)).value, 0.5);
    EXPECT_EQ(multiscale_depth_loss(d, d, ones_like(d), std::span(&s, 1)).value, 0.0);
}

TEST(MultiscaleDepth, ConstantOffsetSurvivesAveraging) {
    std::mt19937_64 rng(3);
    const ImageBuffer d = random_image(rng, 4, 4, 1, 1.0, 2.0);
    ImageBuffer p = d;
    const double offset = 0.3;
    for (double& v : p.data()) v += offset;
    const std::vector<DepthScale> scales = {{1.0, 0.7}, {0.5, 0.2}};
    // Oracle: block-average both maps independently and evaluate each scale.
    double oracle = 0.0;
    for (const auto& s : scales) {
        const auto ds = gsgen::testing::block_average(d, p, ones_like(d), static_cast<int>(std::lround(1 / s.factor)));
        double sum = 0.0;
        for (std::size_t i = 0; i < ds.depth.size(); ++i) sum += std::abs(ds.depth[i] - ds.prior[i]);
        oracle += s.weight * sum / static_cast<double>(ds.depth.size());
    }
    EXPECT_NEAR(oracle, (0.7 + 0.2) * offset, 1e-12);
    EXPECT_NEAR(multiscale_depth_loss(d, p, ones_like(d), scales).value, oracle, 1e-12);
}

TEST(MultiscaleDepth, MatchesBlockAverageOracleWithMask) {
    std::mt19937_64 rng(4);
    const ImageBuffer d = random_image(rng, 9, 7, 1, 1.0, 3.0);
    const ImageBuffer p = random_image(rng, 9, 7, 1, 1.0, 3.0);
    ImageBuffer valid = random_image(rng, 9, 7, 1);
    const std::vector<DepthScale> scales = {{1.0, 0.1}, {0.5, 0.05}, {0.25, 0.025}};
    double oracle = 0.0;
    for (const auto& s : scales) {
        const auto ds = gsgen::testing::block_average(d, p, valid, static_cast<int>(std::lround(1 / s.factor)));
        double sum = 0.0;
        int n = 0;
        for (std::size_t i = 0; i < ds.depth.size(); ++i) {
            if (!ds.valid[i]) continue;
            sum += std::abs(ds.depth[i] - ds.prior[i]);
            ++n;
        }
        if (n > 0) oracle += s.weight * sum / n;
    }
    const BufferLoss l = multiscale_depth_loss(d, p, valid, scales);
    EXPECT_NEAR(l.value, oracle, 1e-12);
    expect_gradient_matches([&](const ImageBuffer& x) { return multiscale_depth_loss(x, p, valid, scales).value; },
                            d, l.grad);
}

TEST(HuberDepth, Branches) {
    EXPECT_DOUBLE_EQ(huber_depth_loss(row({1.5}), row({1.0}), row({1.0}), 1.0).value, 0.125);
    EXPECT_DOUBLE_EQ(huber_depth_loss(row({3.0}), row({1.0}), row({1.0}), 1.0).value, 1.5);
    EXPECT_EQ(huber_depth_loss(row({3.0}), row({3.0}), row({1.0}), 1.0).value, 0.0);
    EXPECT_THROW(huber_depth_loss(row({3.0}), row({3.0}), row({1.0}), 0.0), std::invalid_argument);
}

TEST(HuberDepth, GradientMatchesFiniteDifferences) {
    std::mt19937_64 rng(5);
    const ImageBuffer d = random_image(rng, 8, 8, 1, 0.0, 2.0);
    const ImageBuffer p = random_image(rng, 8, 8, 1, 0.0, 2.0);
    const ImageBuffer valid = ones_like(d);
    const BufferLoss l = huber_depth_loss(d, p, valid, 0.5);
    expect_gradient_matches([&](const ImageBuffer& x) { return huber_depth_loss(x, p, valid, 0.5).value; }, d,
                            l.grad);
}

TEST(DepthLossTest, WeightedCombination) {
    const ImageBuffer d = row({1.0, 2.0});
    const ImageBuffer p = row({1.0, 4.0});
    LossConfig cfg;
    cfg.depth_scale_weight = cfg.depth_multiscale_weight = cfg.depth_huber_weight = 0.0;
    EXPECT_EQ(depth_loss(d, p, ones_like(d), cfg).total.value, 0.0);
    cfg.depth_scale_weight = 1.0;
    EXPECT_NEAR(depth_loss(d, p, ones_like(d), cfg).total.value, std::pow(std::log(2.0), 2) / 8.0, 1e-12);
    EXPECT_EQ(depth_loss(d, d, ones_like(d), LossConfig{}).total.value, 0.0);

    std::mt19937_64 rng(6);
    const ImageBuffer dd = random_image(rng, 8, 8, 1, 0.5, 2.0);
    const ImageBuffer pp = random_image(rng, 8, 8, 1, 0.5, 2.0);
    const LossConfig defaults;
    const DepthLoss l = depth_loss(dd, pp, ones_like(dd), defaults);
    expect_gradient_matches([&](const ImageBuffer& x) { return depth_loss(x, pp, ones_like(x), defaults).total.value; },
                            dd, l.total.grad);
}

TEST(MaskLoss, MeanConvention) {
    const std::vector<ImageBuffer> ones = {ImageBuffer(4, 4, 1, 1.0)};
    const std::vector<ImageBuffer> zeros = {ImageBuffer(4, 4, 1, 0.0)};
    EXPECT_EQ(mask_loss(ones, ones).value, 0.0);
    EXPECT_DOUBLE_EQ(mask_loss(ones, zeros).value, 1.0);
    std::vector<ImageBuffer> half = zeros;
    for (int y = 0; y < 2; ++y)
        for (int x = 0; x < 4; ++x) half[0].at(x, y) = 1.0;
    EXPECT_DOUBLE_EQ(mask_loss(half, zeros).value, 0.5);
    const std::vector<ImageBuffer> wrong = {ImageBuffer(2, 4, 1)};
    EXPECT_THROW(mask_loss(ones, wrong), std::invalid_argument);
}

TEST(MaskLoss, GradientMatchesFiniteDifferences) {
    std::mt19937_64 rng(7);
    std::vector<ImageBuffer> a = {random_image(rng, 8, 8, 1), random_image(rng, 8, 8, 1)};
    const std::vector<ImageBuffer> m = {random_image(rng, 8, 8, 1), random_image(rng, 8, 8, 1)};
    const ViewsLoss l = mask_loss(a, m);
    for (std::size_t v = 0; v < a.size(); ++v) {
        expect_gradient_matches(
            [&](const ImageBuffer& x) {
                auto copy = a;
                copy[v] = x;
                return mask_loss(copy, m).value;
            },
            a[v], l.grads[v]);
    }
}

TEST(FeatureLossTest, CosineCases) {
    const std::vector<double> f = {1.0, 2.0, 0.5};
    EXPECT_NEAR(feature_loss(f, f).value, 0.0, 1e-15);
    const std::vector<double> a = {1.0, 0.0}, b = {0.0, 3.0};
    EXPECT_DOUBLE_EQ(feature_loss(a, b).value, 1.0);
    const std::vector<double> neg = {-1.0, -2.0, -0.5};
    EXPECT_DOUBLE_EQ(feature_loss(f, neg).value, 2.0);
    const std::vector<double> zero = {0.0, 0.0, 0.0};
    EXPECT_THROW(feature_loss(f, zero), std::domain_error);
}

TEST(FeatureLossTest, GradientMatchesFiniteDifferences) {
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<double> f(16), g(16);
    for (auto& v : f) v = u(rng);
    for (auto& v : g) v = u(rng);
    const FeatureLoss l = feature_loss(f, g);
    for (std::size_t i = 0; i < f.size(); ++i) {
        auto fp = f, fm = f;
        fp[i] += 1e-6;
        fm[i] -= 1e-6;
        const double numeric = (feature_loss(fp, g).value - feature_loss(fm, g).value) / 2e-6;
        EXPECT_LT(relative_error(numeric, l.grad[i]), 1e-5);
    }
}

TEST(PatchStats, ShapeAndConstantImage) {
    const PatchStatsExtractor ex(4);
    const ImageBuffer gray(32, 32, 3, 0.5);
    const auto f = extract_features(gray, ex);
    ASSERT_EQ(f.size(), 16u * 4u);
    for (std::size_t p = 0; p < 16; ++p) {
        EXPECT_DOUBLE_EQ(f[p * 4 + 0], 0.5);
        EXPECT_DOUBLE_EQ(f[p * 4 + 1], 0.5);
        EXPECT_DOUBLE_EQ(f[p * 4 + 2], 0.5);
        EXPECT_DOUBLE_EQ(f[p * 4 + 3], 0.0);
    }
    EXPECT_EQ(feature_loss(f, extract_features(gray, ex)).value, 0.0);
}

TEST(PatchStats, BackwardMatchesFiniteDifferences) {
    std::mt19937_64 rng(9);
    const PatchStatsExtractor ex(2);
    const ImageBuffer img = random_image(rng, 8, 8, 3);
    const auto target = ex.extract(random_image(rng, 8, 8, 3));
    const FeatureLoss l = feature_loss(ex.extract(img), target);
    const ImageBuffer grad = ex.backward(img, l.grad);
    expect_gradient_matches([&](const ImageBuffer& x) { return feature_loss(ex.extract(x), target).value; }, img,
                            grad);
}

TEST(ColorLossTest, IdentityAndReductions) {
    std::mt19937_64 rng(10);
    const std::vector<ImageBuffer> a = {random_image(rng, 8, 8, 3), random_image(rng, 8, 8, 3)};
    const std::vector<ImageBuffer> b = {random_image(rng, 8, 8, 3), random_image(rng, 8, 8, 3)};
    for (double mix : {0.0, 0.2, 1.0}) EXPECT_EQ(color_loss(a, a, mix).value, 0.0);
    const double l1 = (l1_loss(a[0], b[0]).value + l1_loss(a[1], b[1]).value) / 2.0;
    EXPECT_NEAR(color_loss(a, b, 0.0).value, l1, 1e-15);
    EXPECT_THROW(color_loss(a, b, 1.5), std::invalid_argument);
}

TEST(ColorLossTest, CheckerboardVersusInverse) {
    ImageBuffer board(8, 8, 3), inverse(8, 8, 3);
    for (int y = 0; y < 8; ++y) {
        for (int x = 0; x < 8; ++x) {
            const double v = (x + y) % 2 == 0 ? 1.0 : 0.0;
            board.set_rgb(x, y, Vec3::Constant(v));
            inverse.set_rgb(x, y, Vec3::Constant(1.0 - v));
        }
    }
    const std::vector<ImageBuffer> a = {board}, b = {inverse};
    const double dssim_oracle = (1.0 - gsgen::testing::direct_ssim(board, inverse)) / 2.0;
    EXPECT_GT(dssim_oracle, 0.4);
    EXPECT_NEAR(color_loss(a, b, 1.0).value, dssim_oracle, 1e-12);
    EXPECT_EQ(color_loss(a, a, 1.0).value, 0.0);
}

TEST(ColorLossTest, GradientMatchesFiniteDifferences) {
    std::mt19937_64 rng(11);
    const std::vector<ImageBuffer> a = {random_image(rng, 8, 8, 3)};
    const std::vector<ImageBuffer> b = {random_image(rng, 8, 8, 3)};
    const ViewsLoss l = color_loss(a, b, 0.2);
    expect_gradient_matches(
        [&](const ImageBuffer& x) {
            const std::vector<ImageBuffer> v = {x};
            return color_loss(v, b, 0.2).value;
        },
        a[0], l.grads[0]);
}

TEST(RefineLoss, ValuesAndGradient) {
    std::mt19937_64 rng(12);
    const ImageBuffer img = random_image(rng, 8, 8, 3, 0.2, 0.8);
    EXPECT_EQ(refine_loss(img, img).value, 0.0);
    ImageBuffer shifted = img;
    for (double& v : shifted.data()) v += 0.1;
    EXPECT_NEAR(refine_loss(img, shifted).value, 0.01, 1e-12);
    const BufferLoss l = refine_loss(img, shifted);
    for (std::size_t i = 0; i < img.size(); ++i) {
        EXPECT_NEAR(l.grad.data()[i], 2.0 * (shifted.data()[i] - img.data()[i]) / img.size(), 1e-15);
    }
    EXPECT_THROW(refine_loss(img, ImageBuffer(4, 4, 3)), std::invalid_argument);
}

TEST(Metrics, PsnrAndSsim) {
    std::mt19937_64 rng(13);
    const ImageBuffer a = random_image(rng, 16, 16, 3, 0.2, 0.8);
    EXPECT_EQ(psnr(a, a), 99.0);
    EXPECT_EQ(ssim(a, a), 1.0);
    ImageBuffer b = a;
    for (double& v : b.data()) v += 0.1;
    EXPECT_NEAR(psnr(a, b), 20.0, 1e-9);
    for (int i = 0; i < 20; ++i) {
        const ImageBuffer x = random_image(rng, 12, 12, 3);
        const ImageBuffer y = random_image(rng, 12, 12, 3);
        EXPECT_DOUBLE_EQ(ssim(x, y), ssim(y, x));
        const double s = ssim(x, y);
        EXPECT_GE(s, -1.0);
        EXPECT_LE(s, 1.0);
        EXPECT_NEAR(s, gsgen::testing::direct_ssim(x, y), 1e-12);
    }
    EXPECT_THROW(psnr(a, ImageBuffer(8, 8, 3)), std::invalid_argument);
}

TEST(Metrics, SsimGradientMatchesFiniteDifferences) {
    std::mt19937_64 rng(14);
    const ImageBuffer a = random_image(rng, 8, 8, 1);
    const ImageBuffer b = random_image(rng, 8, 8, 1);
    const SsimWithGrad s = ssim_with_grad(a, b);
    expect_gradient_matches([&](const ImageBuffer& x) { return ssim(x, b); }, a, s.grad);
}
