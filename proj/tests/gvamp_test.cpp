#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include <Eigen/Dense>

#include "glmamp/errors.hpp"
#include "glmamp/gvamp.hpp"
#include "glmamp/harness.hpp"
#include "glmamp/rng.hpp"
#include "glmamp/trace.hpp"
#include "support/dense_reference.hpp"
#include "support/slm_reference.hpp"

namespace glmamp {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

Vec random_vec(int n, uint64_t seed) {
    Rng rng(seed);
    Vec v(n);
    for (int i = 0; i < n; ++i) v(i) = rng.gaussian();
    return v;
}

TEST(NleModeTest, StringsRoundTrip) {
    EXPECT_EQ(to_string(NleMode::blind), "blind");
    EXPECT_EQ(to_string(NleMode::oracle_tracking), "oracle-tracking");
    EXPECT_EQ(nle_mode_from_string("blind"), NleMode::blind);
    EXPECT_EQ(nle_mode_from_string("oracle-tracking"), NleMode::oracle_tracking);
    EXPECT_THROW(nle_mode_from_string("bogus"), InvalidConfig);
}

TEST(GvampLeTest, MatchesDenseClosedForm) {
    const int M = 12, N = 24;
    const auto op = SpectralOperator::build(M, N, 10.0, OperatorKind::dense_haar, 71);
    const Vec x_t = random_vec(N, 1);
    const Vec z_t = random_vec(M, 2);
    const double v_x = 0.5, v_z = 0.8;

    const GvampLeOutput out = gvamp_le(x_t, z_t, v_x, v_z, op);

    const Mat A = op.materialize();
    const double rho = v_z / v_x;
    const double eps = testing::dense_resolvent_trace(A, rho);
    const Mat reg = rho * Mat::Identity(M, M) + A * A.transpose();
    const Vec gamma = A.transpose() * reg.ldlt().solve(z_t - A * x_t);
    const double delta = static_cast<double>(M) / N;
    const Vec x_ext = gamma / (delta * eps) + x_t;
    const Vec z_ext = (A * (gamma + x_t) - eps * z_t) / (1.0 - eps);

    EXPECT_NEAR(out.eps_gamma, eps, 1e-12);
    EXPECT_LT((out.x_ext - x_ext).norm(), 1e-10 * x_ext.norm());
    EXPECT_LT((out.z_ext - z_ext).norm(), 1e-10 * z_ext.norm());
    EXPECT_NEAR(out.v_x_ext, (1.0 / (delta * eps) - 1.0) * v_x, 1e-10);
    EXPECT_NEAR(out.v_z_ext, eps / (1.0 - eps) * v_z, 1e-10);
}

TEST(GvampLeTest, ValidatesInputs) {
    const auto op = SpectralOperator::build(8, 16, 4.0, OperatorKind::dense_haar, 3);
    const Vec x = Vec::Zero(16), z = Vec::Zero(8);
    EXPECT_THROW(gvamp_le(Vec::Zero(15), z, 1.0, 1.0, op), DimensionMismatch);
    EXPECT_THROW(gvamp_le(x, Vec::Zero(9), 1.0, 1.0, op), DimensionMismatch);
    EXPECT_THROW(gvamp_le(x, z, 0.0, 1.0, op), InvalidConfig);
    EXPECT_THROW(gvamp_le(x, z, 1.0, -1.0, op), InvalidConfig);
    EXPECT_THROW(gvamp_le(x, z, kInf, 1.0, op), InvalidConfig);
}

TEST(GvampLeTest, BreaksDownWhenResolventDegenerates) {
    // ρ → 0 drives the normalized resolvent trace to J/M = 1 for a wide
    // operator: no extrinsic information remains on the z side.
    const auto op = SpectralOperator::build(12, 24, 10.0, OperatorKind::dense_haar, 5);
    const Vec x = Vec::Zero(24), z = Vec::Zero(12);
    EXPECT_THROW(gvamp_le(x, z, 1.0, 1e-300, op), NumericalFailure);
}

ExperimentConfig gvamp_config() {
    ExperimentConfig cfg;
    cfg.N = 512;
    cfg.delta = 0.5;
    cfg.kappa = 10.0;
    cfg.mu = 0.1;
    cfg.clip_c = 2.0;
    cfg.snr_db = 35.0;
    cfg.T = 30;
    cfg.seed = 21;
    cfg.operator_kind = OperatorKind::fast_transform;
    return cfg;
}

TEST(RunGvampTest, ConvergesAndIsDeterministic) {
    const GlmInstance instance = generate_instance(gvamp_config(), 0);

    const IterationTrace a = run_gvamp(instance, 30);
    const IterationTrace b = run_gvamp(instance, 30);
    EXPECT_EQ(a.algorithm, "gvamp");
    EXPECT_EQ(a.seed, instance.seed);
    ASSERT_EQ(a.records.size(), b.records.size());
    for (std::size_t i = 0; i < a.records.size(); ++i) {
        EXPECT_EQ(a.records[i].mse_x, b.records[i].mse_x);
        EXPECT_EQ(a.records[i].t, static_cast<int>(i) + 1);
    }
    ASSERT_GE(a.records.size(), 10u);
    EXPECT_LT(a.records.back().mse_x, 5e-2);
    EXPECT_LT(a.records.back().mse_x, 0.1 * a.records.front().mse_x);
}

TEST(RunGvampTest, OracleTrackingConverges) {
    const GlmInstance instance = generate_instance(gvamp_config(), 1);
    GvampProbe probe;
    const IterationTrace tr = run_gvamp(instance, 25, NleMode::oracle_tracking, &probe);
    ASSERT_GE(tr.records.size(), 10u);
    EXPECT_LT(tr.records.back().mse_x, 5e-2);
    ASSERT_EQ(probe.N, 512);
    ASSERT_EQ(probe.eps_gamma.size(), tr.records.size());
    for (double e : probe.eps_gamma) {
        EXPECT_GT(e, 0.0);
        EXPECT_LT(e, 1.0);
    }
    // The probe's measured LE error power should track its prediction within
    // finite-size fluctuations on a well-behaved run.
    for (std::size_t i = 3; i < probe.f_sq_le.size(); ++i) {
        const double measured = probe.f_sq_le[i] / probe.N;
        const double predicted = probe.v_x_le[i];
        EXPECT_LT(std::abs(std::log10(measured / predicted)), 0.5)
            << "iteration " << i + 1;
    }
}

TEST(RunGvampTest, HandlesTrivialBudgets) {
    const GlmInstance instance = generate_instance(gvamp_config(), 2);
    const IterationTrace empty = run_gvamp(instance, 0);
    EXPECT_TRUE(empty.records.empty());
    EXPECT_TRUE(empty.termination.empty());
    EXPECT_THROW(run_gvamp(instance, -1), InvalidConfig);
}

// On the linear channel the generalized loop must reproduce the classical
// dense-LMMSE loop step for step.
TEST(RunGvampTest, LinearChannelMatchesDenseVampReference) {
    ExperimentConfig cfg = gvamp_config();
    cfg.N = 256;
    cfg.clip_c = kInf;
    cfg.operator_kind = OperatorKind::dense_haar;
    cfg.T = 25;
    cfg.seed = 33;
    const GlmInstance instance = generate_instance(cfg, 0);

    const IterationTrace ours = run_gvamp(instance, 25);
    const IterationTrace ref = testing::vamp_reference(instance, 25);
    ASSERT_EQ(ours.records.size(), ref.records.size());
    ASSERT_GE(ours.records.size(), 10u);
    for (std::size_t i = 0; i < ours.records.size(); ++i) {
        const double a = ours.records[i].mse_x;
        const double b = ref.records[i].mse_x;
        EXPECT_LT(std::abs(a - b), 1e-8 * std::max(1e-12, std::max(a, b)))
            << "iteration " << i + 1;
    }
}

TEST(GvampSeTest, TracksSimulationOnLargeInstance) {
    ExperimentConfig cfg = gvamp_config();
    cfg.N = 8192;
    cfg.T = 15;
    cfg.snr_db = 30.0;
    cfg.seed = 4;
    const GlmInstance instance = generate_instance(cfg, 0);
    const IterationTrace sim = run_gvamp(instance, cfg.T);

    const auto moments = compute_moments(instance.op, cfg.T);
    const ScalarSeTrace se = gvamp_se(instance.prior, ClipChannel{cfg.clip_c, 1.0},
                                      moments, cfg.T, 100000, 9, cfg.snr_db);

    ASSERT_EQ(se.points.size(), static_cast<std::size_t>(cfg.T));
    const std::size_t n = std::min(sim.records.size(), se.points.size());
    ASSERT_GE(n, 5u);
    for (std::size_t i = 2; i < n; ++i) {
        const double gap_db =
            std::abs(10.0 * std::log10(sim.records[i].mse_x / se.points[i].mse_x));
        EXPECT_LT(gap_db, 1.5) << "iteration " << i + 1;
    }
}

TEST(GvampSeTest, ValidatesInputsAndResolvesSnr) {
    const auto op = SpectralOperator::build(16, 32, 4.0, OperatorKind::dense_haar, 2);
    const auto m = compute_moments(op, 4);
    const auto prior = BernoulliGaussianPrior::unit_power(0.1);
    const ClipChannel ch{2.0, 0.5};

    EXPECT_THROW(gvamp_se(prior, ch, m, -1), InvalidConfig);
    EXPECT_THROW(gvamp_se(prior, ch, m, 4, 5000), InvalidConfig);
    EXPECT_THROW(gvamp_se(BernoulliGaussianPrior{0.0, 0.0, 1.0}, ch, m, 4), InvalidConfig);
    EXPECT_THROW(gvamp_se(BernoulliGaussianPrior{0.5, 0.0, 0.0}, ch, m, 4), InvalidConfig);
    EXPECT_THROW(gvamp_se(prior, ClipChannel{0.0, 0.5}, m, 4), InvalidConfig);
    EXPECT_THROW(gvamp_se(prior, ch, m, 4, 200000, 0,
                          std::numeric_limits<double>::quiet_NaN()),
                 InvalidConfig);

    // T = 0: empty points but the noise resolution still happens.
    const ScalarSeTrace empty = gvamp_se(prior, ch, m, 0, 20000, 0, 25.0);
    EXPECT_TRUE(empty.points.empty());
    EXPECT_GT(empty.sigma2, 0.0);
    EXPECT_LT(empty.sigma2, 0.02);

    // Infinite SNR floors the noise variance.
    const ScalarSeTrace clean = gvamp_se(prior, ch, m, 0, 20000, 0, kInf);
    EXPECT_DOUBLE_EQ(clean.sigma2, 1e-12);

    // Without snr_db the channel's own noise variance is used untouched.
    const ScalarSeTrace as_is = gvamp_se(prior, ch, m, 0, 20000, 0);
    EXPECT_DOUBLE_EQ(as_is.sigma2, 0.5);
}

}  // namespace
}  // namespace glmamp
