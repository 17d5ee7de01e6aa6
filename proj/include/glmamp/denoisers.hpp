#pragma once

#include <cmath>

#include "glmamp/types.hpp"

namespace glmamp {

// Sparse prior: x = b·g with b ~ Bernoulli(μ) and g ~ N(u_g, v_g).
// The default normalization v_g = 1/μ, u_g = 0 gives unit signal power.
struct BernoulliGaussianPrior {
    double mu = 0.1;
    double u_g = 0.0;
    double v_g = 10.0;

    static BernoulliGaussianPrior unit_power(double mu_) {
        return BernoulliGaussianPrior{mu_, 0.0, 1.0 / mu_};
    }

    double mean() const { return mu * u_g; }
    double variance() const { return mu * (v_g + u_g * u_g) - mean() * mean(); }
};

// Channel y = Clip(z; c) + n, n ~ N(0, σ²), with Clip saturating at ±c.
// c = ∞ is the pure-AWGN (linear) channel.
struct ClipChannel {
    double c = 2.0;
    double sigma2 = 1e-4;

    bool is_linear() const { return std::isinf(c); }
};

inline double clip(double z, double c) { return z < -c ? -c : (z > c ? c : z); }
Vec clip(const Vec& z, double c);

// Entrywise MMSE posterior: per-entry mean plus the variance averaged over
// entries (the scalar v̂ the message-passing recursions consume).
struct PosteriorOutput {
    Vec mean;
    double variance = 0.0;
};

// E{x | 𝕩, prior} under the pseudo-observation model 𝕩 = x + N(0, 𝕧ˣ).
// 𝕧ˣ = ∞ is the "no observation yet" sentinel: the posterior is the prior.
PosteriorOutput bg_posterior(const Vec& pseudo, double pseudo_var,
                             const BernoulliGaussianPrior& prior);

// E{z | 𝕫, y} for the clipping channel, from the exact three-region
// decomposition: two saturated regions where the likelihood is constant in z
// (truncated prior), and the linear region where prior and likelihood fuse
// into a truncated product Gaussian. All region weights in log domain.
PosteriorOutput clip_posterior(const Vec& pseudo, double pseudo_var, const Vec& y,
                               const ClipChannel& ch);

// E{z | 𝕫, y} for the linear channel y = z + N(0, σ²).
PosteriorOutput awgn_posterior(const Vec& pseudo, double pseudo_var, const Vec& y,
                               double sigma2);

// Turns a posterior into an extrinsic (orthogonalized) estimate:
//   out = (post − (1−ε)·pseudo)/ε,  ε = 1 − v_post/v_pri,
// with extrinsic variance v_post·v_pri/(v_pri − v_post). At v_pri = ∞ the
// extrinsic equals the posterior. Throws NumericalFailure when the denoiser
// is non-informative (v_post ≥ v_pri) — callers must stop or damp.
PosteriorOutput orthogonalize(const PosteriorOutput& post, const Vec& pseudo,
                              double pseudo_var);

}  // namespace glmamp
