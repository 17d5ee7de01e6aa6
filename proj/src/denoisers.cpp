#include "glmamp/denoisers.hpp"

#include <algorithm>
#include <limits>

#include "glmamp/errors.hpp"
#include "glmamp/stats.hpp"

namespace glmamp {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();

double sigmoid_neg(double ell) {
    // 1/(1+eˡ) without overflow for either sign of ℓ.
    if (ell > 0.0) {
        const double e = std::exp(-ell);
        return e / (1.0 + e);
    }
    return 1.0 / (1.0 + std::exp(ell));
}
}  // namespace

Vec clip(const Vec& z, double c) {
    return z.unaryExpr([c](double v) { return clip(v, c); });
}

PosteriorOutput bg_posterior(const Vec& pseudo, double pseudo_var,
                             const BernoulliGaussianPrior& prior) {
    if (!(prior.mu > 0.0 && prior.mu <= 1.0))
        throw InvalidConfig("bg_posterior: mu must be in (0, 1]");
    if (!(prior.v_g > 0.0)) throw InvalidConfig("bg_posterior: v_g must be positive");
    if (!(pseudo_var > 0.0))
        throw InvalidConfig("bg_posterior: pseudo variance must be positive");

    PosteriorOutput out;
    if (std::isinf(pseudo_var)) {
        out.mean = Vec::Constant(pseudo.size(), prior.mean());
        out.variance = prior.variance();
        return out;
    }

    const double v = pseudo_var;
    const double vg = prior.v_g;
    const double ug = prior.u_g;
    const double v_gp = 1.0 / (1.0 / vg + 1.0 / v);
    const double log_odds0 = prior.mu < 1.0
                                 ? std::log(1.0 / prior.mu - 1.0) + 0.5 * std::log1p(vg / v)
                                 : -kInf;

    out.mean.resize(pseudo.size());
    double var_sum = 0.0;
    for (Eigen::Index i = 0; i < pseudo.size(); ++i) {
        const double r = pseudo(i);
        // log P(b=0|𝕩)/P(b=1|𝕩); the quadratic part is the pdf-ratio exponent.
        const double ell =
            log_odds0 + (ug * ug * v - 2.0 * ug * r * v - vg * r * r) / (2.0 * v * (vg + v));
        const double p_post = prior.mu < 1.0 ? sigmoid_neg(ell) : 1.0;
        const double u_gp = v_gp * (ug / vg + r / v);
        const double m = p_post * u_gp;
        out.mean(i) = m;
        var_sum += p_post * (v_gp + u_gp * u_gp) - m * m;
    }
    out.variance = std::max(var_sum / static_cast<double>(pseudo.size()), 0.0);
    return out;
}

PosteriorOutput awgn_posterior(const Vec& pseudo, double pseudo_var, const Vec& y,
                               double sigma2) {
    if (pseudo.size() != y.size())
        throw DimensionMismatch("awgn_posterior: pseudo and y lengths differ");
    if (!(pseudo_var > 0.0) || !(sigma2 > 0.0))
        throw InvalidConfig("awgn_posterior: variances must be positive");

    PosteriorOutput out;
    if (std::isinf(pseudo_var)) {
        out.mean = y;
        out.variance = sigma2;
        return out;
    }
    const double prec = 1.0 / sigma2 + 1.0 / pseudo_var;
    const double v_hat = 1.0 / prec;
    out.mean = v_hat * (y / sigma2 + pseudo / pseudo_var);
    out.variance = v_hat;
    return out;
}

PosteriorOutput clip_posterior(const Vec& pseudo, double pseudo_var, const Vec& y,
                               const ClipChannel& ch) {
    if (pseudo.size() != y.size())
        throw DimensionMismatch("clip_posterior: pseudo and y lengths differ");
    if (ch.is_linear()) return awgn_posterior(pseudo, pseudo_var, y, ch.sigma2);
    if (!(ch.c > 0.0)) throw InvalidConfig("clip_posterior: threshold must be positive");
    if (!(pseudo_var > 0.0) || !(ch.sigma2 > 0.0))
        throw InvalidConfig("clip_posterior: variances must be positive");

    const double c = ch.c;
    const double s2 = ch.sigma2;
    const double vp = pseudo_var;
    const double log_s = 0.5 * std::log(s2);
    const double log_sm = 0.5 * std::log(s2 + vp);
    // Product of the prior N(𝕫, 𝕧ᶻ) with the linear-region likelihood N(y; z, σ²).
    const double v0 = 1.0 / (1.0 / vp + 1.0 / s2);

    PosteriorOutput out;
    out.mean.resize(pseudo.size());
    double var_sum = 0.0;
    for (Eigen::Index i = 0; i < pseudo.size(); ++i) {
        const double z0 = pseudo(i);
        const double yi = y(i);

        const TruncatedGaussian lo = truncated_gaussian(z0, vp, -kInf, -c);
        const TruncatedGaussian hi = truncated_gaussian(z0, vp, c, kInf);
        const double m0 = v0 * (z0 / vp + yi / s2);
        const TruncatedGaussian mid = truncated_gaussian(m0, v0, -c, c);

        const double sq = std::sqrt(s2 + vp);
        const double lw_lo = log_norm_pdf((yi + c) / std::sqrt(s2)) - log_s + lo.log_mass;
        const double lw_hi = log_norm_pdf((yi - c) / std::sqrt(s2)) - log_s + hi.log_mass;
        const double lw_mid = log_norm_pdf((yi - z0) / sq) - log_sm + mid.log_mass;

        const double lz = log_add_exp(log_add_exp(lw_lo, lw_hi), lw_mid);
        if (lz == -kInf) {
            // Total posterior mass underflowed; fall back to the prior mean.
            out.mean(i) = z0;
            var_sum += vp;
            continue;
        }
        const double p_lo = std::exp(lw_lo - lz);
        const double p_hi = std::exp(lw_hi - lz);
        const double p_mid = std::exp(lw_mid - lz);
        const double m = p_lo * lo.mean + p_mid * mid.mean + p_hi * hi.mean;
        const double second = p_lo * (lo.var + lo.mean * lo.mean) +
                              p_mid * (mid.var + mid.mean * mid.mean) +
                              p_hi * (hi.var + hi.mean * hi.mean);
        out.mean(i) = m;
        var_sum += std::max(second - m * m, 0.0);
    }
    out.variance = var_sum / static_cast<double>(pseudo.size());
    return out;
}

PosteriorOutput orthogonalize(const PosteriorOutput& post, const Vec& pseudo,
                              double pseudo_var) {
    if (post.mean.size() != pseudo.size())
        throw DimensionMismatch("orthogonalize: posterior and pseudo lengths differ");
    if (!(pseudo_var > 0.0))
        throw InvalidConfig("orthogonalize: pseudo variance must be positive");

    if (std::isinf(pseudo_var)) return post;

    const double eps = 1.0 - post.variance / pseudo_var;
    if (!(eps > 0.0))
        throw NumericalFailure("orthogonalize: non-informative denoiser (v_post >= v_pri)");

    PosteriorOutput out;
    out.mean = (post.mean - (1.0 - eps) * pseudo) / eps;
    out.variance = pseudo_var * (1.0 - eps) / eps;
    return out;
}

}  // namespace glmamp
