#include "glmamp/se.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <string>
#include <utility>

#include <Eigen/Cholesky>

#include "glmamp/errors.hpp"

namespace glmamp {

Vec conditional_gaussian_column(const Eigen::Ref<const Mat>& hist, const Mat& hist_cov,
                                const Vec& cross, double var, int samples, Rng& rng) {
    const Eigen::Index m = hist_cov.rows();
    if (hist_cov.cols() != m || hist.cols() != m || cross.size() != m)
        throw DimensionMismatch("conditional draw: history and covariance sizes disagree");
    if (m > 0 && hist.rows() != samples)
        throw DimensionMismatch("conditional draw: history population size mismatch");
    if (!std::isfinite(var))
        throw NumericalFailure("conditional draw: target variance is not finite");

    Vec g(samples);
    for (int i = 0; i < samples; ++i) g(i) = rng.gaussian();

    const double tol = 1e-9 * std::max(std::abs(var), 1.0);
    if (m == 0) {
        if (var < -tol)
            throw NumericalFailure("conditional draw: negative target variance");
        return std::sqrt(std::max(var, 0.0)) * g;
    }

    for (double jitter : {1e-12, 1e-8}) {
        Mat shifted = hist_cov;
        shifted.diagonal().array() += jitter;
        Eigen::LDLT<Mat> ldlt(shifted);
        if (ldlt.info() != Eigen::Success || ldlt.vectorD().minCoeff() <= 0.0) continue;
        Vec b = ldlt.solve(cross);
        double residual = var - cross.dot(b);
        if (!std::isfinite(residual) || residual < -tol) continue;
        residual = std::max(residual, 0.0);
        return hist * b + std::sqrt(residual) * g;
    }
    throw NumericalFailure("conditional draw: covariance history is not positive semidefinite");
}

namespace {

// Raw (not mean-removed) second moments of the undamped error against each
// column of the damped history, then against itself; matches how the
// covariance entries are defined on zero-mean error processes.
template <typename Column>
void measure_entry(const Vec& undamped, const Column& other, int samples, int j,
                   NleMeasurement& out) {
    const Vec prod = undamped.cwiseProduct(other);
    const double mean = prod.mean();
    const double second = prod.squaredNorm() / samples;
    out.row(j) = mean;
    out.std_err(j) = std::sqrt(std::max(second - mean * mean, 0.0) / samples);
}

void measure_row(const Vec& undamped, const Mat& err, int samples, int t,
                 NleMeasurement& out) {
    out.row = Vec(t);
    out.std_err = Vec(t);
    for (int j = 0; j + 1 < t; ++j) measure_entry(undamped, err.col(j), samples, j, out);
    measure_entry(undamped, undamped, samples, t - 1, out);
}

void damp_column(Mat& err, const Vec& undamped, const Vec& weights, int t) {
    const int l = static_cast<int>(weights.size());
    if (l < 1 || l > t)
        throw DimensionMismatch("sampler damping: window length out of range");
    Vec col = weights(l - 1) * undamped;
    for (int a = 0; a + 1 < l; ++a) col += weights(a) * err.col(t - l + a);
    err.col(t - 1) = col;
}

}  // namespace

PhiSampler::PhiSampler(const BernoulliGaussianPrior& prior, int samples, int T, Rng rng)
    : prior_(prior), samples_(samples), T_(T), rng_(std::move(rng)) {
    if (samples < 1) throw InvalidConfig("x-side sampler needs a positive sample count");
    if (T < 1) throw InvalidConfig("x-side sampler needs at least one iteration");
    if (!(prior.mu > 0.0 && prior.mu <= 1.0))
        throw InvalidConfig("x-side sampler: sparsity must lie in (0, 1]");
    if (!(prior.v_g > 0.0) || !std::isfinite(prior.v_g))
        throw InvalidConfig("x-side sampler: component variance must be positive and finite");

    x_ = Vec(samples);
    const double sd = std::sqrt(prior.v_g);
    for (int i = 0; i < samples; ++i)
        x_(i) = rng_.uniform() < prior.mu ? prior.u_g + sd * rng_.gaussian() : 0.0;
    eta_ = Mat::Zero(samples, T);
    err_ = Mat::Zero(samples, T);
}

NleMeasurement PhiSampler::denoise(const Mat& cov) {
    if (pending_) throw InvalidConfig("x-side sampler: damp() must follow denoise()");
    const int t = t_ + 1;
    if (t > T_) throw InvalidConfig("x-side sampler: iteration budget exhausted");
    if (cov.rows() < t || cov.cols() < t)
        throw DimensionMismatch("x-side sampler: covariance block smaller than iteration count");

    const double v_t = cov(t - 1, t - 1);
    Vec pseudo;
    if (t == 1) {
        // The first input is exactly zero and carries the infinite-variance
        // sentinel: the denoiser reverts to the prior.
        if (!std::isinf(v_t))
            throw InvalidConfig("first x-side iteration must carry the infinite-variance sentinel");
        pseudo = Vec::Zero(samples_);
    } else {
        if (!(std::isfinite(v_t) && v_t > 0.0))
            throw NumericalFailure("x-side sampler: non-positive input variance");
        const int m = t - 2;
        eta_.col(t - 1) = conditional_gaussian_column(
            eta_.middleCols(1, m), cov.block(1, 1, m, m),
            cov.block(t - 1, 1, 1, m).transpose(), v_t, samples_, rng_);
        pseudo = x_ + eta_.col(t - 1);
    }

    const PosteriorOutput post = bg_posterior(pseudo, v_t, prior_);
    NleMeasurement out;
    out.v_post = post.variance;
    out.mse_post = (post.mean - x_).squaredNorm() / samples_;
    const PosteriorOutput ext = orthogonalize(post, pseudo, v_t);
    undamped_ = ext.mean - x_;
    measure_row(undamped_, err_, samples_, t, out);
    pending_ = true;
    return out;
}

void PhiSampler::damp(const Vec& zeta) {
    if (!pending_) throw InvalidConfig("x-side sampler: nothing to damp");
    damp_column(err_, undamped_, zeta, t_ + 1);
    t_ += 1;
    pending_ = false;
}

PsiSampler::PsiSampler(const ClipChannel& channel, double z_var, int samples, int T, Rng rng,
                       std::optional<double> snr_db)
    : channel_(channel), samples_(samples), T_(T), rng_(std::move(rng)) {
    if (samples < 1) throw InvalidConfig("z-side sampler needs a positive sample count");
    if (T < 1) throw InvalidConfig("z-side sampler needs at least one iteration");
    if (!(z_var > 0.0) || !std::isfinite(z_var))
        throw InvalidConfig("z-side sampler: z variance must be positive and finite");
    if (!(channel.c > 0.0))
        throw InvalidConfig("z-side sampler: clip level must be positive");
    if (snr_db && std::isnan(*snr_db))
        throw InvalidConfig("z-side sampler: snr_db must not be NaN");

    z_ = Vec(samples);
    const double sd = std::sqrt(z_var);
    for (int i = 0; i < samples; ++i) z_(i) = sd * rng_.gaussian();
    const Vec clipped = clip(z_, channel_.c);
    clip_power_ = clipped.squaredNorm() / samples;
    if (snr_db)
        channel_.sigma2 = std::max(clip_power_ / std::pow(10.0, *snr_db / 10.0), 1e-12);
    if (!(channel_.sigma2 > 0.0) || !std::isfinite(channel_.sigma2))
        throw InvalidConfig("z-side sampler: noise variance must be positive and finite");

    y_ = Vec(samples);
    const double nsd = std::sqrt(channel_.sigma2);
    for (int i = 0; i < samples; ++i) y_(i) = clipped(i) + nsd * rng_.gaussian();
    eta_ = Mat::Zero(samples, T);
    err_ = Mat::Zero(samples, T);
    // Iteration 1's input is exactly zero, so its error is -z with variance
    // Var(z); later errors correlate with z through this column.
    eta_.col(0) = -z_;
}

NleMeasurement PsiSampler::denoise(const Mat& cov) {
    if (pending_) throw InvalidConfig("z-side sampler: damp() must follow denoise()");
    const int t = t_ + 1;
    if (t > T_) throw InvalidConfig("z-side sampler: iteration budget exhausted");
    if (cov.rows() < t || cov.cols() < t)
        throw DimensionMismatch("z-side sampler: covariance block smaller than iteration count");

    const double v_t = cov(t - 1, t - 1);
    if (!(std::isfinite(v_t) && v_t > 0.0))
        throw NumericalFailure("z-side sampler: non-positive input variance");
    if (t >= 2) {
        const int m = t - 1;
        eta_.col(t - 1) = conditional_gaussian_column(
            eta_.leftCols(m), cov.topLeftCorner(m, m),
            cov.block(t - 1, 0, 1, m).transpose(), v_t, samples_, rng_);
    }
    const Vec pseudo = z_ + eta_.col(t - 1);

    const PosteriorOutput post = clip_posterior(pseudo, v_t, y_, channel_);
    NleMeasurement out;
    out.v_post = post.variance;
    out.mse_post = (post.mean - z_).squaredNorm() / samples_;
    const PosteriorOutput ext = orthogonalize(post, pseudo, v_t);
    undamped_ = ext.mean - z_;
    measure_row(undamped_, err_, samples_, t, out);
    pending_ = true;
    return out;
}

void PsiSampler::damp(const Vec& varrho) {
    if (!pending_) throw InvalidConfig("z-side sampler: nothing to damp");
    damp_column(err_, undamped_, varrho, t_ + 1);
    t_ += 1;
    pending_ = false;
}

namespace {

const SeConfig& validated(const SeConfig& config) {
    if (config.sample_budget < 10000)
        throw InvalidConfig("state evolution needs a sample budget of at least 1e4");
    return config;
}

}  // namespace

SeEngine::SeEngine(const SpectralMoments& moments, const SeConfig& config)
    : cfg_(validated(config)),
      kernel_(moments, KernelOptions{.T = config.T,
                                     .L = config.L,
                                     .theta_optimized = config.theta_optimized,
                                     .xi_optimized = config.xi_optimized}),
      phi_(config.prior, config.sample_budget, config.T, Rng::stream(config.seed, 100)),
      psi_(config.channel, moments.lambda1, config.sample_budget, config.T,
           Rng::stream(config.seed, 101), config.snr_db) {}

SeEngine::StepResult SeEngine::step() {
    const int t = kernel_.iterations_done() + 1;
    const CovarianceLedger& led = kernel_.ledger();
    NleMeasurement mx = phi_.denoise(led.VVx.topLeftCorner(t, t));
    NleMeasurement mz = psi_.denoise(led.VVz.topLeftCorner(t, t));
    MemoryKernel::Step ks = kernel_.advance(mx.row, mz.row);
    phi_.damp(ks.damping.zeta);
    psi_.damp(ks.damping.varrho);

    StepResult out;
    out.t = t;
    out.v_phi_row = std::move(mx.row);
    out.v_psi_row = std::move(mz.row);
    out.kernel_step = std::move(ks);
    out.mse_x = mx.mse_post;
    out.v_post_x = mx.v_post;
    return out;
}

ScalarSeTrace run_se(const SpectralMoments& moments, const SeConfig& config) {
    if (config.T < 0) throw InvalidConfig("iteration count must be nonnegative");
    ScalarSeTrace trace;
    trace.seed = config.seed;
    trace.sample_budget = config.sample_budget;
    trace.sigma2 = config.channel.sigma2;
    if (config.T == 0) return trace;

    SeEngine engine(moments, config);
    trace.sigma2 = engine.sigma2();
    trace.points.reserve(config.T);
    for (int t = 1; t <= config.T; ++t) {
        const auto start = std::chrono::steady_clock::now();
        const SeEngine::StepResult sr = engine.step();
        const auto stop = std::chrono::steady_clock::now();
        const CovarianceLedger& led = engine.kernel().ledger();
        SePoint p;
        p.t = t;
        p.mse_x = sr.mse_x;
        p.v_x = led.Vx(t - 1, t - 1);
        p.v_z = led.Vz(t - 1, t - 1);
        p.vv_x = led.VVx(t, t);
        p.vv_z = led.VVz(t, t);
        p.wall_ms = std::chrono::duration<double, std::milli>(stop - start).count();
        trace.points.push_back(p);
    }
    return trace;
}

namespace {

void validate_window(const Mat& window, int samples, int L, const char* side) {
    if (window.rows() != window.cols())
        throw DimensionMismatch(std::string(side) + " covariance window must be square");
    if (window.rows() < 1)
        throw InvalidConfig(std::string(side) + " covariance window must cover at least one iteration");
    if (!window.allFinite())
        throw InvalidConfig(std::string(side) + " covariance window must be finite");
    if (!(window.diagonal().array() > 0.0).all())
        throw InvalidConfig(std::string(side) + " covariance window needs positive variances");
    if (samples < 100000)
        throw InvalidConfig("expectation maps need at least 1e5 samples");
    if (L < 1) throw InvalidConfig("damping length must be at least 1");
}

// Runs one sampler for n iterations against the prescribed input covariance,
// damping intermediates exactly as the full recursion would (the damping
// weights of each side depend only on that side's own measured window), and
// returns the final, undamped measurement.
template <typename Sampler>
NleMeasurement drive_sampler(Sampler& sampler, const Mat& cov, int n, int L) {
    Mat hist = Mat::Zero(n, n);
    for (int t = 1; t <= n; ++t) {
        NleMeasurement m = sampler.denoise(cov.topLeftCorner(t, t));
        if (t == n) return m;
        const int l = std::min(L, t);
        const Mat window = damping_window(hist, m.row, m.row(t - 1), t, l);
        const DampingSolve dw = damping_weights(window);
        sampler.damp(dw.weights);
        const int r = t - 1;
        for (int j = 0; j < r; ++j) {
            double val = dw.weights(l - 1) * m.row(j);
            for (int a = 0; a + 1 < l; ++a) val += dw.weights(a) * hist(t - l + a, j);
            hist(r, j) = hist(j, r) = val;
        }
        hist(r, r) = dw.v_tt;
    }
    throw NumericalFailure("unreachable: sampler drive fell through");
}

}  // namespace

NleMeasurement se_phi_expectation(const Mat& VVx_window, const BernoulliGaussianPrior& prior,
                                  int samples, int L, std::uint64_t seed) {
    validate_window(VVx_window, samples, L, "x-side");
    const int k = static_cast<int>(VVx_window.rows());
    const int n = k + 1;
    Mat cov = Mat::Zero(n, n);
    cov(0, 0) = std::numeric_limits<double>::infinity();
    cov.block(1, 1, k, k) = VVx_window;
    PhiSampler sampler(prior, samples, n, Rng::stream(seed, 100));
    return drive_sampler(sampler, cov, n, L);
}

NleMeasurement se_psi_expectation(const Mat& VVz_window, const ClipChannel& channel,
                                  double z_var, int samples, int L, std::uint64_t seed) {
    validate_window(VVz_window, samples, L, "z-side");
    if (!(z_var > 0.0) || !std::isfinite(z_var))
        throw InvalidConfig("z variance must be positive and finite");
    if (std::abs(VVz_window(0, 0) - z_var) > 1e-6 * std::max(1.0, z_var))
        throw InvalidConfig("z-side window must open at Var(z): the first input is exactly zero");
    const int k = static_cast<int>(VVz_window.rows());
    PsiSampler sampler(channel, z_var, samples, k, Rng::stream(seed, 101), std::nullopt);
    return drive_sampler(sampler, VVz_window, k, L);
}

}  // namespace glmamp
