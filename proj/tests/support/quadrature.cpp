#include "support/quadrature.hpp"

#include <gsl/gsl_errno.h>
#include <gsl/gsl_integration.h>

#include <algorithm>
#include <cmath>
#include <memory>
#include <mutex>
#include <stdexcept>

namespace glmamp::testing {

namespace {

struct Integrand {
    double m = 0.0;       // pseudo mean
    double v = 1.0;       // pseudo variance
    double y = 0.0;       // observation
    double c = 1.0;       // clip level
    double s2 = 1.0;      // noise variance
    double shift = 0.0;   // log-scale normalizer
    int power = 0;        // 0, 1, or 2
    double center = 0.0;  // (z - center)^power for power = 2
};

double log_density(double z, const Integrand& p) {
    const double zc = std::clamp(z, -p.c, p.c);
    const double a = z - p.m;
    const double b = p.y - zc;
    return -0.5 * (a * a / p.v + b * b / p.s2);
}

double evaluate(double z, void* raw) {
    const Integrand& p = *static_cast<const Integrand*>(raw);
    double value = std::exp(log_density(z, p) - p.shift);
    if (p.power == 1) value *= z;
    if (p.power == 2) value *= (z - p.center) * (z - p.center);
    return value;
}

// ∫ over (−∞, −c] ∪ [−c, c] ∪ [c, ∞), each piece smooth, summed.
double integrate(Integrand& p, gsl_integration_workspace* ws) {
    gsl_function f;
    f.function = &evaluate;
    f.params = &p;

    // Absolute floor keeps pieces whose true value is zero (odd integrands in
    // symmetric configurations) or whose mass underflows from failing the
    // otherwise-relative convergence test; after peak normalization every
    // piece is O(1), so 1e-13 absolute stays far below every comparison
    // tolerance in the tests.
    const double eps_abs = 1e-13;
    const double eps_rel = 1e-11;
    double piece = 0.0;
    double err = 0.0;
    int status = 0;
    if (std::isinf(p.c)) {
        status = gsl_integration_qagi(&f, eps_abs, eps_rel, ws->limit, ws, &piece, &err);
        if (status != 0) throw std::runtime_error("quadrature did not converge");
        return piece;
    }
    double total = 0.0;
    status |= gsl_integration_qagil(&f, -p.c, eps_abs, eps_rel, ws->limit, ws, &piece, &err);
    total += piece;
    status |= gsl_integration_qags(&f, -p.c, p.c, eps_abs, eps_rel, ws->limit, ws, &piece, &err);
    total += piece;
    status |= gsl_integration_qagiu(&f, p.c, eps_abs, eps_rel, ws->limit, ws, &piece, &err);
    total += piece;
    if (status != 0) throw std::runtime_error("quadrature did not converge");
    return total;
}

}  // namespace

QuadratureMoments clip_posterior_quadrature(double pseudo, double pseudo_var,
                                            double y, double c, double sigma2) {
    static std::once_flag handler_off;
    std::call_once(handler_off, [] { gsl_set_error_handler_off(); });

    Integrand p;
    p.m = pseudo;
    p.v = pseudo_var;
    p.y = y;
    p.c = c;
    p.s2 = sigma2;

    // Normalize at the density's maximum so exp() stays well scaled. The
    // candidates cover every stationary point: the prior mean (saturated
    // regions), the interior product-of-Gaussians optimum, and the kinks.
    const double interior = (pseudo * sigma2 + y * pseudo_var) / (pseudo_var + sigma2);
    double peak = log_density(pseudo, p);
    for (double z : {y, -c, c, 0.0, interior, 0.5 * (pseudo + y)})
        if (std::isfinite(z)) peak = std::max(peak, log_density(z, p));
    p.shift = peak;

    std::unique_ptr<gsl_integration_workspace, void (*)(gsl_integration_workspace*)> ws(
        gsl_integration_workspace_alloc(8192), &gsl_integration_workspace_free);
    if (ws == nullptr) throw std::runtime_error("quadrature workspace allocation failed");

    QuadratureMoments out;
    p.power = 0;
    const double mass = integrate(p, ws.get());
    if (!(mass > 0.0)) throw std::runtime_error("quadrature mass is not positive");
    p.power = 1;
    out.mean = integrate(p, ws.get()) / mass;
    // Centered second moment: avoids the cancellation of E[z²] − mean².
    p.power = 2;
    p.center = out.mean;
    out.variance = integrate(p, ws.get()) / mass;
    return out;
}

}  // namespace glmamp::testing
