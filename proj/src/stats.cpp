#include "glmamp/stats.hpp"

#include <gsl/gsl_errno.h>
#include <gsl/gsl_sf_erf.h>

#include <algorithm>
#include <limits>

namespace glmamp {

namespace {
// GSL's default error handler aborts the process; deep-tail hazard/erfc
// evaluations legitimately underflow, and the returned 0.0 is the value we
// want. Disable the handler once, before any special function runs.
const gsl_error_handler_t* const kSilencedGslHandler = gsl_set_error_handler_off();

constexpr double kLogSqrt2Pi = 0.9189385332046727417803297;  // log √(2π)
constexpr double kInvSqrt2 = 0.7071067811865475244008444;
constexpr double kInvSqrt2Pi = 0.3989422804014326779399461;
constexpr double kInf = std::numeric_limits<double>::infinity();
}  // namespace

double log_norm_pdf(double t) {
    return -0.5 * t * t - kLogSqrt2Pi;
}

double norm_cdf(double x) {
    return 0.5 * gsl_sf_erfc(-x * kInvSqrt2);
}

double norm_sf(double x) {
    return 0.5 * gsl_sf_erfc(x * kInvSqrt2);
}

double log_norm_cdf(double x) {
    // Φ(x) = erfc(−x/√2)/2; gsl_sf_log_erfc is accurate over the whole line.
    return gsl_sf_log_erfc(-x * kInvSqrt2) - 0.6931471805599453094172321;
}

double mills_ratio(double x) {
    // gsl_sf_hazard(x) = Z(x)/Q(x) is exactly the inverse Mills ratio and is
    // implemented with the asymptotic series for large x.
    return gsl_sf_hazard(x);
}

double scaled_norm_sf(double x) {
    // Q(x)e^{x²/2} = φ(x)/h(x) · e^{x²/2} = 1/(√(2π)·h(x)) for the hazard h.
    if (x < -30.0) return kInf;  // e^{x²/2} overflows; callers treat ∞ as "mass ≈ 1 scale"
    if (x < 5.0) return norm_sf(x) * std::exp(0.5 * x * x);
    return 1.0 / (std::sqrt(2.0 * M_PI) * gsl_sf_hazard(x));
}

double log_add_exp(double a, double b) {
    if (a == -kInf) return b;
    if (b == -kInf) return a;
    const double m = std::max(a, b);
    return m + std::log1p(std::exp(-std::fabs(a - b)));
}

namespace {

// Two-sided window with both edges in the right tail (0 ≤ α ≤ β). All terms
// share the factor e^{−α²/2}, which is divided out before the subtraction so
// the window keeps full relative precision however deep in the tail it sits.
TruncatedGaussian right_tail_window(double mean0, double var0, double s,
                                    double alpha, double beta) {
    const double sqa = scaled_norm_sf(alpha);
    const double sqb = scaled_norm_sf(beta);
    // D = φ(β)/φ(α) = e^{(α−β)(α+β)/2} ∈ [0, 1]
    const double d = std::exp(0.5 * (alpha - beta) * (alpha + beta));
    const double zs = sqa - sqb * d;  // Z·e^{α²/2}
    TruncatedGaussian out;
    if (!(zs > 0.0)) {
        out.log_mass = -kInf;
        out.mean = mean0 + s * alpha;  // left edge of the window
        out.var = 0.0;
        return out;
    }
    out.log_mass = -0.5 * alpha * alpha + std::log(zs);
    const double r1 = kInvSqrt2Pi * (1.0 - d) / zs;          // (φ(α)−φ(β))/Z
    const double r2 = kInvSqrt2Pi * (alpha - beta * d) / zs;  // (αφ(α)−βφ(β))/Z
    out.mean = mean0 + s * r1;
    out.var = var0 * (1.0 + r2 - r1 * r1);
    out.var = std::max(out.var, 0.0);
    return out;
}

}  // namespace

TruncatedGaussian truncated_gaussian(double mean0, double var0, double a, double b) {
    const double s = std::sqrt(var0);
    TruncatedGaussian out;

    if (a == -kInf && b == kInf) {
        out.log_mass = 0.0;
        out.mean = mean0;
        out.var = var0;
        return out;
    }

    if (b == kInf) {  // [a, ∞)
        const double alpha = (a - mean0) / s;
        const double h = mills_ratio(alpha);
        out.log_mass = log_norm_cdf(-alpha);
        out.mean = mean0 + s * h;
        out.var = std::max(var0 * (1.0 + alpha * h - h * h), 0.0);
        return out;
    }

    if (a == -kInf) {  // (−∞, b]: reflect the lower-tail case
        TruncatedGaussian r = truncated_gaussian(-mean0, var0, -b, kInf);
        out.log_mass = r.log_mass;
        out.mean = -r.mean;
        out.var = r.var;
        return out;
    }

    const double alpha = (a - mean0) / s;
    const double beta = (b - mean0) / s;

    if (alpha >= 0.0) return right_tail_window(mean0, var0, s, alpha, beta);
    if (beta <= 0.0) {  // left-tail window: reflect
        TruncatedGaussian r = right_tail_window(-mean0, var0, s, -beta, -alpha);
        out.log_mass = r.log_mass;
        out.mean = -r.mean;
        out.var = r.var;
        return out;
    }

    // Window straddles the mean: the mass is O(1) and direct evaluation is
    // well conditioned.
    const double z = 0.5 * (gsl_sf_erf(beta * kInvSqrt2) - gsl_sf_erf(alpha * kInvSqrt2));
    if (!(z > 0.0)) {
        out.log_mass = -kInf;
        out.mean = std::clamp(mean0, a, b);
        out.var = 0.0;
        return out;
    }
    const double pa = std::exp(log_norm_pdf(alpha));
    const double pb = std::exp(log_norm_pdf(beta));
    const double r1 = (pa - pb) / z;
    const double r2 = (alpha * pa - beta * pb) / z;
    out.log_mass = std::log(z);
    out.mean = mean0 + s * r1;
    out.var = std::max(var0 * (1.0 + r2 - r1 * r1), 0.0);
    return out;
}

}  // namespace glmamp
