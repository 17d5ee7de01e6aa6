#pragma once

namespace glmamp::testing {

struct QuadratureMoments {
    double mean = 0.0;
    double variance = 0.0;
};

// Posterior moments of a scalar z ~ N(pseudo, pseudo_var) observed through
// y = Clip(z, c) + N(0, sigma2), computed by adaptive quadrature on the raw
// product density — no tail/segment closed forms are shared with the library
// implementation. The clip level may be infinite. Throws std::runtime_error
// when the integrals fail to converge.
QuadratureMoments clip_posterior_quadrature(double pseudo, double pseudo_var,
                                            double y, double c, double sigma2);

}  // namespace glmamp::testing
