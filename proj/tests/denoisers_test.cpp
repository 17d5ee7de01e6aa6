#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "glmamp/denoisers.hpp"
#include "glmamp/errors.hpp"
#include "glmamp/rng.hpp"
#include "support/quadrature.hpp"

namespace glmamp {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

Vec random_vec(int n, uint64_t seed) {
    Rng rng(seed);
    Vec v(n);
    for (int i = 0; i < n; ++i) v(i) = rng.gaussian();
    return v;
}

TEST(Clip, ScalarAndVector) {
    EXPECT_DOUBLE_EQ(clip(0.3, 2.0), 0.3);
    EXPECT_DOUBLE_EQ(clip(5.0, 2.0), 2.0);
    EXPECT_DOUBLE_EQ(clip(-5.0, 2.0), -2.0);
    Vec z(4);
    z << -3.0, -0.5, 0.5, 3.0;
    const Vec c = clip(z, 1.0);
    EXPECT_DOUBLE_EQ(c(0), -1.0);
    EXPECT_DOUBLE_EQ(c(1), -0.5);
    EXPECT_DOUBLE_EQ(c(2), 0.5);
    EXPECT_DOUBLE_EQ(c(3), 1.0);
    EXPECT_EQ((clip(z, kInf) - z).norm(), 0.0);
}

TEST(Prior, UnitPowerNormalization) {
    for (double mu : {0.05, 0.1, 0.5, 1.0}) {
        const auto prior = BernoulliGaussianPrior::unit_power(mu);
        EXPECT_NEAR(prior.variance(), 1.0, 1e-14) << "mu=" << mu;
        EXPECT_DOUBLE_EQ(prior.mean(), 0.0);
    }
}

TEST(BgPosterior, RejectsBadParameters) {
    const Vec p = Vec::Zero(3);
    EXPECT_THROW(bg_posterior(p, 1.0, BernoulliGaussianPrior{0.0, 0.0, 1.0}),
                 InvalidConfig);
    EXPECT_THROW(bg_posterior(p, 1.0, BernoulliGaussianPrior{1.1, 0.0, 1.0}),
                 InvalidConfig);
    EXPECT_THROW(bg_posterior(p, 1.0, BernoulliGaussianPrior{0.5, 0.0, 0.0}),
                 InvalidConfig);
    EXPECT_THROW(bg_posterior(p, 0.0, BernoulliGaussianPrior::unit_power(0.1)),
                 InvalidConfig);
    EXPECT_THROW(bg_posterior(p, -1.0, BernoulliGaussianPrior::unit_power(0.1)),
                 InvalidConfig);
}

TEST(BgPosterior, InfiniteVarianceSentinelRevertsToPrior) {
    const BernoulliGaussianPrior prior{0.3, 0.7, 2.0};
    const Vec pseudo = random_vec(16, 1);
    const PosteriorOutput out = bg_posterior(pseudo, kInf, prior);
    for (int i = 0; i < 16; ++i) EXPECT_DOUBLE_EQ(out.mean(i), prior.mean());
    EXPECT_DOUBLE_EQ(out.variance, prior.variance());
}

TEST(BgPosterior, PureGaussianLimitMatchesClosedForm) {
    // μ = 1 degenerates the prior to N(u_g, v_g): the posterior is the
    // standard Gaussian fusion.
    const BernoulliGaussianPrior prior{1.0, 0.4, 1.5};
    const double v = 0.6;
    const Vec pseudo = random_vec(32, 2);
    const PosteriorOutput out = bg_posterior(pseudo, v, prior);
    const double v_post = 1.0 / (1.0 / prior.v_g + 1.0 / v);
    for (int i = 0; i < 32; ++i) {
        const double ref = v_post * (prior.u_g / prior.v_g + pseudo(i) / v);
        EXPECT_NEAR(out.mean(i), ref, 1e-12);
    }
    EXPECT_NEAR(out.variance, v_post, 1e-12);
}

TEST(BgPosterior, MmsePropertiesOnPopulation) {
    const auto prior = BernoulliGaussianPrior::unit_power(0.2);
    const double v = 0.7;
    const int K = 400000;
    Rng rng(9);
    Vec x(K), pseudo(K);
    const double sd_g = std::sqrt(prior.v_g);
    const double sd = std::sqrt(v);
    for (int i = 0; i < K; ++i) {
        x(i) = rng.uniform() < prior.mu ? sd_g * rng.gaussian() : 0.0;
        pseudo(i) = x(i) + sd * rng.gaussian();
    }
    const PosteriorOutput out = bg_posterior(pseudo, v, prior);

    // Measured MSE must agree with the reported posterior variance.
    const Vec err = out.mean - x;
    const double mse = err.squaredNorm() / K;
    const Vec sq = err.cwiseProduct(err);
    const double se_mse =
        std::sqrt(std::max(sq.squaredNorm() / K - mse * mse, 0.0) / K);
    EXPECT_NEAR(mse, out.variance, 4.0 * se_mse + 1e-6);

    // MMSE orthogonality: the error is uncorrelated with the estimate.
    const Vec prod = err.cwiseProduct(out.mean);
    const double corr = prod.mean();
    const double se_corr =
        std::sqrt(std::max(prod.squaredNorm() / K - corr * corr, 0.0) / K);
    EXPECT_NEAR(corr, 0.0, 4.0 * se_corr + 1e-6);
}

TEST(AwgnPosterior, ClosedFormAndSentinel) {
    const Vec pseudo = random_vec(8, 3);
    const Vec y = random_vec(8, 4);
    const double v = 0.8, s2 = 0.2;
    const PosteriorOutput out = awgn_posterior(pseudo, v, y, s2);
    const double v_post = 1.0 / (1.0 / v + 1.0 / s2);
    for (int i = 0; i < 8; ++i)
        EXPECT_NEAR(out.mean(i), v_post * (y(i) / s2 + pseudo(i) / v), 1e-13);
    EXPECT_NEAR(out.variance, v_post, 1e-15);

    const PosteriorOutput inf_out = awgn_posterior(pseudo, kInf, y, s2);
    EXPECT_EQ((inf_out.mean - y).norm(), 0.0);
    EXPECT_DOUBLE_EQ(inf_out.variance, s2);

    EXPECT_THROW(awgn_posterior(pseudo, v, random_vec(7, 5), s2), DimensionMismatch);
    EXPECT_THROW(awgn_posterior(pseudo, 0.0, y, s2), InvalidConfig);
    EXPECT_THROW(awgn_posterior(pseudo, v, y, 0.0), InvalidConfig);
}

TEST(ClipPosterior, LinearChannelDelegatesToAwgn) {
    const Vec pseudo = random_vec(12, 6);
    const Vec y = random_vec(12, 7);
    const ClipChannel ch{kInf, 0.3};
    const PosteriorOutput a = clip_posterior(pseudo, 0.9, y, ch);
    const PosteriorOutput b = awgn_posterior(pseudo, 0.9, y, ch.sigma2);
    EXPECT_EQ((a.mean - b.mean).norm(), 0.0);
    EXPECT_EQ(a.variance, b.variance);
}

TEST(ClipPosterior, RejectsBadParameters) {
    const Vec p = Vec::Zero(3);
    const Vec y = Vec::Zero(3);
    EXPECT_THROW(clip_posterior(p, 1.0, Vec::Zero(4), ClipChannel{2.0, 0.1}),
                 DimensionMismatch);
    EXPECT_THROW(clip_posterior(p, 1.0, y, ClipChannel{0.0, 0.1}), InvalidConfig);
    EXPECT_THROW(clip_posterior(p, 0.0, y, ClipChannel{2.0, 0.1}), InvalidConfig);
    EXPECT_THROW(clip_posterior(p, 1.0, y, ClipChannel{2.0, 0.0}), InvalidConfig);
}

// The exact three-region posterior against blind adaptive quadrature on the
// raw product density, swept over pseudo mean/variance, observation, and
// noise level. Saturated, linear, and mixed regimes are all on the grid.
TEST(ClipPosterior, MatchesAdaptiveQuadrature) {
    const double c = 2.0;
    const double tol = 1e-8;
    for (double m : {-3.0, -0.5, 0.0, 1.2, 2.8}) {
        for (double v : {0.05, 0.5, 2.0}) {
            for (double y : {-2.5, -1.0, 0.0, 0.7, 2.0, 3.0}) {
                for (double s2 : {1e-2, 0.3}) {
                    const ClipChannel ch{c, s2};
                    const Vec pseudo = Vec::Constant(1, m);
                    const Vec obs = Vec::Constant(1, y);
                    const PosteriorOutput out = clip_posterior(pseudo, v, obs, ch);
                    const auto ref =
                        testing::clip_posterior_quadrature(m, v, y, c, s2);
                    EXPECT_NEAR(out.mean(0), ref.mean, tol)
                        << "m=" << m << " v=" << v << " y=" << y << " s2=" << s2;
                    EXPECT_NEAR(out.variance, ref.variance, tol)
                        << "m=" << m << " v=" << v << " y=" << y << " s2=" << s2;
                }
            }
        }
    }
}

TEST(ClipPosterior, QuadratureAgreesOnLinearChannelToo) {
    for (double m : {-1.0, 0.4}) {
        for (double y : {-0.6, 1.1}) {
            const Vec pseudo = Vec::Constant(1, m);
            const Vec obs = Vec::Constant(1, y);
            const PosteriorOutput out =
                clip_posterior(pseudo, 0.7, obs, ClipChannel{kInf, 0.25});
            const auto ref = testing::clip_posterior_quadrature(m, 0.7, y, kInf, 0.25);
            EXPECT_NEAR(out.mean(0), ref.mean, 1e-8);
            EXPECT_NEAR(out.variance, ref.variance, 1e-8);
        }
    }
}

TEST(Orthogonalize, GaussianFusionInverse) {
    // Orthogonalization inverts the fusion: combining the extrinsic output
    // with the pseudo-observation at the prior variance recovers the
    // posterior.
    const Vec pseudo = random_vec(16, 8);
    PosteriorOutput post;
    post.mean = 0.6 * pseudo + random_vec(16, 9) * 0.1;
    post.variance = 0.35;
    const double v_pri = 1.2;
    const PosteriorOutput ext = orthogonalize(post, pseudo, v_pri);

    const double v_fused = 1.0 / (1.0 / v_pri + 1.0 / ext.variance);
    EXPECT_NEAR(v_fused, post.variance, 1e-12);
    const Vec fused_mean =
        v_fused * (pseudo / v_pri + ext.mean / ext.variance);
    EXPECT_LT((fused_mean - post.mean).norm(), 1e-9 * std::max(1.0, post.mean.norm()));

    // Closed-form variance: v_post·v_pri/(v_pri − v_post).
    EXPECT_NEAR(ext.variance, post.variance * v_pri / (v_pri - post.variance), 1e-12);
}

TEST(Orthogonalize, InfinitePriorPassesThrough) {
    const Vec pseudo = Vec::Zero(5);
    PosteriorOutput post;
    post.mean = random_vec(5, 10);
    post.variance = 0.4;
    const PosteriorOutput ext = orthogonalize(post, pseudo, kInf);
    EXPECT_EQ((ext.mean - post.mean).norm(), 0.0);
    EXPECT_DOUBLE_EQ(ext.variance, post.variance);
}

TEST(Orthogonalize, NonInformativeDenoiserThrows) {
    const Vec pseudo = Vec::Zero(5);
    PosteriorOutput post;
    post.mean = random_vec(5, 11);
    post.variance = 1.0;
    EXPECT_THROW(orthogonalize(post, pseudo, 1.0), NumericalFailure);
    post.variance = 1.5;
    EXPECT_THROW(orthogonalize(post, pseudo, 1.0), NumericalFailure);
    EXPECT_THROW(orthogonalize(post, Vec::Zero(4), 2.0), DimensionMismatch);
    EXPECT_THROW(orthogonalize(post, pseudo, 0.0), InvalidConfig);
}

}  // namespace
}  // namespace glmamp
