#pragma once

#include <cmath>

namespace glmamp {

/// log of the standard normal density at t.
double log_norm_pdf(double t);

/// Standard normal CDF Φ(x).
double norm_cdf(double x);

/// Upper tail Q(x) = 1 − Φ(x).
double norm_sf(double x);

/// log Φ(x), stable deep into the left tail (x ≈ −40 and beyond).
double log_norm_cdf(double x);

/// Inverse Mills ratio φ(x)/Q(x). Stable for large positive x, where the
/// naive quotient is 0/0.
double mills_ratio(double x);

/// Q(x)·exp(x²/2): the scaled upper tail, finite for all x. Used to take
/// differences of nearly-equal tail probabilities without underflow.
double scaled_norm_sf(double x);

/// Moments of u ~ N(mean0, var0) conditioned on a ≤ u ≤ b.
/// Either bound may be infinite. When the window mass underflows to zero the
/// moments degrade gracefully (mean clamped into [a, b], var = 0) and
/// log_mass = −inf; mixture callers then drop the component by weight.
struct TruncatedGaussian {
    double log_mass;  // log P(a ≤ u ≤ b)
    double mean;      // E[u | a ≤ u ≤ b]
    double var;       // Var[u | a ≤ u ≤ b]
};

TruncatedGaussian truncated_gaussian(double mean0, double var0, double a, double b);

/// log(exp(a) + exp(b)) without overflow.
double log_add_exp(double a, double b);

}  // namespace glmamp
