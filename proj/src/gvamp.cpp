#include "glmamp/gvamp.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <utility>

#include "glmamp/errors.hpp"
#include "glmamp/rng.hpp"

namespace glmamp {

std::string to_string(NleMode mode) {
    return mode == NleMode::blind ? "blind" : "oracle-tracking";
}

NleMode nle_mode_from_string(const std::string& name) {
    if (name == "blind") return NleMode::blind;
    if (name == "oracle-tracking") return NleMode::oracle_tracking;
    throw InvalidConfig("unknown NLE mode '" + name + "' (expected blind or oracle-tracking)");
}

GvampLeOutput gvamp_le(const Vec& x_t, const Vec& z_t, double v_x, double v_z,
                       const SpectralOperator& op) {
    if (x_t.size() != op.cols() || z_t.size() != op.rows())
        throw DimensionMismatch("linear estimator: input lengths do not match the operator");
    if (!(v_x > 0.0) || !std::isfinite(v_x) || !(v_z > 0.0) || !std::isfinite(v_z))
        throw InvalidConfig("linear estimator: variances must be positive and finite");

    const double rho = v_z / v_x;
    const double eps = op.resolvent_trace(rho);
    if (!(eps > 0.0) || !(eps < 1.0))
        throw NumericalFailure("LE breakdown: degenerate resolvent trace");
    const double delta = op.delta();
    const double scale_x = 1.0 / (delta * eps);
    if (!(scale_x > 1.0))
        throw NumericalFailure("LE breakdown: no extrinsic information in the x direction");

    const Vec gamma = op.solve_normal_adjoint(z_t - op.apply(x_t), rho);

    GvampLeOutput out;
    out.eps_gamma = eps;
    out.x_ext = scale_x * gamma + x_t;
    out.z_ext = (op.apply(gamma + x_t) - eps * z_t) / (1.0 - eps);
    out.v_x_ext = (scale_x - 1.0) * v_x;
    out.v_z_ext = eps / (1.0 - eps) * v_z;
    if (!(out.v_x_ext > 0.0) || !std::isfinite(out.v_x_ext) || !(out.v_z_ext > 0.0) ||
        !std::isfinite(out.v_z_ext))
        throw NumericalFailure("LE breakdown: nonpositive extrinsic variance");
    return out;
}

namespace {

double mse_of(const Vec& estimate, const Vec& truth) {
    return (estimate - truth).squaredNorm() / truth.size();
}

// Extrinsic NLE output: blind mode uses the denoiser-reported variance,
// oracle mode substitutes the measured posterior MSE before orthogonalizing
// (the caller keeps pseudo_var equal to the measured input error power in
// that mode, so both variances entering the subtraction are true moments).
PosteriorOutput extrinsic(const PosteriorOutput& post, const Vec& pseudo, double pseudo_var,
                          const Vec& truth, NleMode mode) {
    if (mode == NleMode::blind) return orthogonalize(post, pseudo, pseudo_var);
    PosteriorOutput measured{post.mean, mse_of(post.mean, truth)};
    return orthogonalize(measured, pseudo, pseudo_var);
}

}  // namespace

IterationTrace run_gvamp(const GlmInstance& instance, int T, NleMode mode,
                         GvampProbe* probe) {
    if (T < 0) throw InvalidConfig("iteration count must be nonnegative");
    const SpectralOperator& op = instance.op;
    const int N = op.cols();
    const int M = op.rows();
    if (instance.x_true.size() != N || instance.z_true.size() != M ||
        instance.y.size() != M)
        throw DimensionMismatch("instance vectors do not match the operator dimensions");

    IterationTrace trace;
    trace.algorithm = "gvamp";
    trace.seed = instance.seed;
    if (probe) {
        *probe = GvampProbe{};
        probe->N = N;
        probe->M = M;
    }
    if (T == 0) return trace;

    Vec x_ext = Vec::Zero(N);
    Vec z_ext = Vec::Zero(M);
    // The zero x-side start carries no information: the first denoise must
    // revert to the prior (the ∞ sentinel), whose variance is the nominal
    // 𝕧ˣ₁ = 1. Plugging 𝕧ˣ = 1 into the posterior literally would misread
    // the all-zeros vector as strong evidence for the sparse spike. The
    // z-side pair (0, λ₁) is a well-specified Gaussian prior for z and is
    // used as-is. Oracle tracking measures even that initial power instead
    // of trusting the nominal λ₁.
    double vv_x = std::numeric_limits<double>::infinity();
    double vv_z = mode == NleMode::oracle_tracking
                      ? instance.z_true.squaredNorm() / M
                      : op.singular_values().squaredNorm() / M;  // λ₁

    for (int t = 1; t <= T; ++t) {
        const auto start = std::chrono::steady_clock::now();
        const PosteriorOutput post_x = bg_posterior(x_ext, vv_x, instance.prior);

        IterationRecord rec;
        rec.t = t;
        rec.mse_x = mse_of(post_x.mean, instance.x_true);
        rec.mse_x_db = to_db(rec.mse_x);

        try {
            const PosteriorOutput post_z =
                clip_posterior(z_ext, vv_z, instance.y, instance.channel);
            const PosteriorOutput nle_x =
                extrinsic(post_x, x_ext, vv_x, instance.x_true, mode);
            const PosteriorOutput nle_z =
                extrinsic(post_z, z_ext, vv_z, instance.z_true, mode);

            const GvampLeOutput le =
                gvamp_le(nle_x.mean, nle_z.mean, nle_x.variance, nle_z.variance, op);

            if (probe) {
                const Vec f_nle = nle_x.mean - instance.x_true;
                const Vec s_nle = nle_z.mean - instance.z_true;
                const Vec f_le = le.x_ext - instance.x_true;
                const Vec s_le = le.z_ext - instance.z_true;
                probe->f_cross.push_back(f_le.dot(f_nle));
                probe->s_cross.push_back(s_le.dot(s_nle));
                probe->f_sq_le.push_back(f_le.squaredNorm());
                probe->s_sq_le.push_back(s_le.squaredNorm());
                probe->v_x_nle.push_back(nle_x.variance);
                probe->v_z_nle.push_back(nle_z.variance);
                probe->v_x_le.push_back(le.v_x_ext);
                probe->v_z_le.push_back(le.v_z_ext);
                probe->eps_gamma.push_back(le.eps_gamma);
            }

            x_ext = le.x_ext;
            z_ext = le.z_ext;
            if (mode == NleMode::oracle_tracking) {
                // Fully measured second-order bookkeeping: the next denoiser
                // models its pseudo-observation with the true error power of
                // the estimate it receives, not the asymptotic claim.
                vv_x = mse_of(x_ext, instance.x_true);
                vv_z = mse_of(z_ext, instance.z_true);
            } else {
                vv_x = le.v_x_ext;
                vv_z = le.v_z_ext;
            }
        } catch (const NumericalFailure& failure) {
            rec.wall_ms = std::chrono::duration<double, std::milli>(
                              std::chrono::steady_clock::now() - start)
                              .count();
            trace.records.push_back(rec);
            trace.termination = "iteration " + std::to_string(t) + ": " + failure.what();
            return trace;
        }

        rec.wall_ms = std::chrono::duration<double, std::milli>(
                          std::chrono::steady_clock::now() - start)
                          .count();
        trace.records.push_back(rec);
    }
    return trace;
}

namespace {

// One scalar NLE map evaluation: measured posterior MSE plus the extrinsic
// variance derived from it, with the non-informative guard reverting to the
// supplied prior variance.
struct ScalarNle {
    double mse_post = 0.0;
    double v_ext = 0.0;
};

ScalarNle extrinsic_variance(double mse_post, double pseudo_var, double prior_var) {
    ScalarNle out;
    out.mse_post = mse_post;
    const double eps = 1.0 - mse_post / pseudo_var;
    if (!(eps > 0.0)) {
        out.v_ext = prior_var;  // observation carried no information
        return out;
    }
    out.v_ext = pseudo_var * (1.0 - eps) / eps;
    return out;
}

}  // namespace

ScalarSeTrace gvamp_se(const BernoulliGaussianPrior& prior, const ClipChannel& channel,
                       const SpectralMoments& moments, int T, int sample_budget,
                       std::uint64_t seed, std::optional<double> snr_db) {
    if (T < 0) throw InvalidConfig("iteration count must be nonnegative");
    if (sample_budget < 10000)
        throw InvalidConfig("state evolution needs a sample budget of at least 1e4");
    if (!(prior.mu > 0.0 && prior.mu <= 1.0))
        throw InvalidConfig("sparsity must lie in (0, 1]");
    if (!(prior.v_g > 0.0) || !std::isfinite(prior.v_g))
        throw InvalidConfig("component variance must be positive and finite");
    if (!(channel.c > 0.0)) throw InvalidConfig("clip level must be positive");
    if (snr_db && std::isnan(*snr_db)) throw InvalidConfig("snr_db must not be NaN");

    const double w0 = moments.lambda1;
    const int K = sample_budget;

    ClipChannel ch = channel;
    {
        // Resolve the noise variance against the population clip power so the
        // convention matches the simulator's per-realization one.
        Rng rng = Rng::stream(seed, 0);
        const double sd = std::sqrt(w0);
        double power = 0.0;
        for (int i = 0; i < K; ++i) {
            const double z = sd * rng.gaussian();
            const double c = clip(z, ch.c);
            power += c * c;
        }
        power /= K;
        if (snr_db) ch.sigma2 = std::max(power / std::pow(10.0, *snr_db / 10.0), 1e-12);
    }
    if (!(ch.sigma2 > 0.0) || !std::isfinite(ch.sigma2))
        throw InvalidConfig("noise variance must be positive and finite");

    ScalarSeTrace trace;
    trace.sigma2 = ch.sigma2;
    trace.seed = seed;
    trace.sample_budget = sample_budget;
    if (T == 0) return trace;

    const double prior_var = prior.variance();
    const double sd_g = std::sqrt(prior.v_g);
    // Mirrors the simulator's uninformative x-side start: the first denoise
    // reverts to the prior rather than modeling the zero vector as a
    // unit-variance Gaussian observation of x.
    double vv_x = std::numeric_limits<double>::infinity();
    double vv_z = w0;
    trace.points.reserve(T);

    for (int t = 1; t <= T; ++t) {
        const auto start = std::chrono::steady_clock::now();
        Rng rng = Rng::stream(seed, static_cast<std::uint64_t>(t));

        // x side: x ~ prior, pseudo-observation x + √𝕧ˣ η.
        ScalarNle nle_x;
        if (std::isinf(vv_x)) {
            nle_x = {prior_var, prior_var};
        } else {
            Vec x(K), pseudo(K);
            const double sd = std::sqrt(vv_x);
            for (int i = 0; i < K; ++i) {
                x(i) = rng.uniform() < prior.mu ? prior.u_g + sd_g * rng.gaussian() : 0.0;
                pseudo(i) = x(i) + sd * rng.gaussian();
            }
            const PosteriorOutput post = bg_posterior(pseudo, vv_x, prior);
            nle_x = extrinsic_variance((post.mean - x).squaredNorm() / K, vv_x, prior_var);
        }

        // z side: the estimate 𝕫 and its error η are independent Gaussians
        // with variances w₀ − 𝕧ᶻ and 𝕧ᶻ, so z = 𝕫 + η has variance w₀.
        const double v_in_z = std::min(vv_z, w0);
        ScalarNle nle_z;
        {
            Vec z(K), pseudo(K), y(K);
            const double sd_est = std::sqrt(w0 - v_in_z);
            const double sd_err = std::sqrt(v_in_z);
            const double sd_n = std::sqrt(ch.sigma2);
            for (int i = 0; i < K; ++i) {
                pseudo(i) = sd_est * rng.gaussian();
                z(i) = pseudo(i) + sd_err * rng.gaussian();
                y(i) = clip(z(i), ch.c) + sd_n * rng.gaussian();
            }
            const PosteriorOutput post = clip_posterior(pseudo, v_in_z, y, ch);
            nle_z = extrinsic_variance((post.mean - z).squaredNorm() / K, v_in_z, w0);
        }

        // LE map in closed form on the stored spectrum.
        const double rho = nle_z.v_ext / nle_x.v_ext;
        const double eps = moments.resolvent_trace(rho);
        if (!(eps > 0.0) || !(eps < 1.0))
            throw NumericalFailure("LE breakdown: degenerate resolvent trace");
        vv_x = (1.0 / (moments.delta * eps) - 1.0) * nle_x.v_ext;
        vv_z = eps / (1.0 - eps) * nle_z.v_ext;
        if (!(vv_x > 0.0) || !std::isfinite(vv_x) || !(vv_z > 0.0) || !std::isfinite(vv_z))
            throw NumericalFailure("LE breakdown: nonpositive extrinsic variance");

        SePoint p;
        p.t = t;
        p.mse_x = nle_x.mse_post;
        p.v_x = nle_x.v_ext;
        p.v_z = nle_z.v_ext;
        p.vv_x = vv_x;
        p.vv_z = vv_z;
        p.wall_ms = std::chrono::duration<double, std::milli>(
                        std::chrono::steady_clock::now() - start)
                        .count();
        trace.points.push_back(p);
    }
    return trace;
}

}  // namespace glmamp
