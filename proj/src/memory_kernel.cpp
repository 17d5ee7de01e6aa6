#include "glmamp/memory_kernel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Cholesky>

#include "glmamp/errors.hpp"

namespace glmamp {

namespace {
constexpr double kXiSentinel = 1e12;
constexpr double kDampingJitter = 1e-10;
}  // namespace

CovarianceLedger::CovarianceLedger(int T, double lambda1) {
    if (T < 1) throw InvalidConfig("ledger capacity must be >= 1");
    Vx = Mat::Zero(T, T);
    Vz = Mat::Zero(T, T);
    VVx = Mat::Zero(T + 1, T + 1);
    VVz = Mat::Zero(T + 1, T + 1);
    v_phi = Mat::Zero(T, T);
    v_psi = Mat::Zero(T, T);
    v_stilde = Mat::Zero(T, T);
    VVx(0, 0) = std::numeric_limits<double>::infinity();
    VVz(0, 0) = lambda1;
}

double optimize_theta(double v_z_tt, double v_x_tt, double lambda_dagger) {
    if (!(v_z_tt > 0.0) || !(v_x_tt > 0.0))
        throw InvalidConfig("optimize_theta: variances must be positive");
    return 1.0 / (lambda_dagger + v_z_tt / v_x_tt);
}

CCoeffs compute_c_coeffs(const CovarianceLedger& ledger, const SpectralMoments& m,
                         const Mat& vartheta, int t) {
    if (t < 2) throw InvalidConfig("c coefficients are defined for t >= 2");
    const int r = t - 1;
    const double w0 = m.w_at(0);
    const double delta = m.delta;
    CCoeffs c;
    for (int i = 1; i < t; ++i) c.c0 += vartheta(r, i - 1) * m.w_at(t - i);
    c.c0 /= w0;
    c.c1 = ledger.Vx(r, r) * delta * m.wtilde_at(0, 0) + ledger.Vz(r, r) * w0;
    for (int i = 1; i < t; ++i)
        c.c2 -= vartheta(r, i - 1) *
                (ledger.Vx(r, i - 1) * delta * m.wtilde_at(0, t - i) +
                 ledger.Vz(r, i - 1) * m.w_at(t - i));
    for (int i = 1; i < t; ++i)
        for (int j = 1; j < t; ++j)
            c.c3 += vartheta(r, i - 1) * vartheta(r, j - 1) *
                    (ledger.Vx(i - 1, j - 1) * delta * m.wtilde_at(t - i, t - j) +
                     ledger.Vz(i - 1, j - 1) * m.w_at(2 * t - i - j));
    return c;
}

double optimize_xi(const CCoeffs& c) {
    const double denom = c.c1 * c.c0 + c.c2;
    if (denom == 0.0) return kXiSentinel;
    const double xi = (c.c2 * c.c0 + c.c3) / denom;
    return std::isfinite(xi) ? xi : kXiSentinel;
}

double optimize_cz(double beta, double w0, double v_stilde_tt) {
    const double denom = beta * beta * w0 + v_stilde_tt;
    if (!(denom > 0.0))
        throw NumericalFailure("optimize_cz: nonpositive variance denominator");
    return beta * w0 / denom;
}

namespace {

struct RawSums {
    double sum_vvx = 0.0;  // 𝕧ˣ_{t+1,t'+1}/(𝕔ˣ_t 𝕔ˣ_{t'})
    double v_stilde = 0.0;
};

RawSums raw_mle_sums(const CovarianceLedger& ledger, const SpectralMoments& m,
                     const Mat& vartheta, const Vec& xi, const Vec& theta, int t,
                     int tp) {
    const int rt = t - 1;
    const int rp = tp - 1;
    RawSums out;
    double s_x_t = 0.0;  // Σ_i ϑ_{t,i} w̄_{t−i} v^x_{i,t'}
    double s_x_p = 0.0;  // Σ_j ϑ_{t',j} w̄_{t'−j} v^x_{t,j}
    double s_main = 0.0;
    for (int i = 1; i <= t; ++i) {
        const double vt_i = vartheta(rt, i - 1);
        s_x_t += vt_i * m.wbar_at(t - i) * ledger.Vx(i - 1, rp);
        for (int j = 1; j <= tp; ++j) {
            const double vv = vt_i * vartheta(rp, j - 1);
            const double vx = ledger.Vx(i - 1, j - 1);
            const double vz = ledger.Vz(i - 1, j - 1);
            s_main += vv * (m.wbarbar_at(t + tp - i - j) * vx +
                            m.wbar2_at(t - i, tp - j) * vz);
            out.sum_vvx += vv * (m.wtilde_at(t - i, tp - j) * vx +
                                 m.w_at(t + tp - i - j) * vz / m.delta);
        }
    }
    for (int j = 1; j <= tp; ++j)
        s_x_p += vartheta(rp, j - 1) * m.wbar_at(tp - j) * ledger.Vx(rt, j - 1);
    const double g_t = xi(rt) / theta(rt);
    const double g_p = xi(rp) / theta(rp);
    out.v_stilde = s_main - g_p * s_x_t - g_t * s_x_p +
                   g_t * g_p * m.w_at(0) * ledger.Vx(rt, rp);
    return out;
}

}  // namespace

MleCovariances mle_covariance(const CovarianceLedger& ledger,
                              const SpectralMoments& m, const Mat& vartheta,
                              const Vec& cx, const Vec& cz, const Vec& beta,
                              const Vec& xi, const Vec& theta, int t, int tp) {
    if (t < 1 || tp < 1 || t > ledger.t || tp > ledger.t)
        throw InvalidConfig("mle_covariance: iteration indices out of range");
    const RawSums rs = raw_mle_sums(ledger, m, vartheta, xi, theta, t, tp);
    const int rt = t - 1;
    const int rp = tp - 1;
    MleCovariances out;
    out.v_stilde = rs.v_stilde;
    out.vvx = cx(rt) * cx(rp) * rs.sum_vvx;
    out.vvz = (cz(rt) * beta(rt) - 1.0) * (cz(rp) * beta(rp) - 1.0) * m.w_at(0) +
              cz(rt) * cz(rp) * rs.v_stilde;
    return out;
}

Mat damping_window(const Mat& hist, const Vec& cross_row, double v_tt, int t, int l) {
    if (l < 1 || l > t) throw InvalidConfig("damping window length out of range");
    Mat w(l, l);
    for (int a = 0; a + 1 < l; ++a) {
        for (int b = 0; b + 1 < l; ++b) w(a, b) = hist(t - l + a, t - l + b);
        w(a, l - 1) = w(l - 1, a) = cross_row(t - l + a);
    }
    w(l - 1, l - 1) = v_tt;
    return w;
}

DampingSolve damping_weights(const Mat& window) {
    const int l = static_cast<int>(window.rows());
    DampingSolve out;
    if (l == 1) {
        out.weights = Vec::Ones(1);
        out.v_tt = window(0, 0);
        return out;
    }

    const auto fallback = [&] {
        out.weights = Vec::Zero(l);
        out.weights(l - 1) = 1.0;
        out.v_tt = window(l - 1, l - 1);
        out.fell_back = true;
        return out;
    };

    if (!window.allFinite()) return fallback();
    Mat jittered = window;
    jittered.diagonal().array() += kDampingJitter;
    Eigen::LDLT<Mat> ldlt(jittered);
    if (ldlt.info() != Eigen::Success || ldlt.vectorD().minCoeff() <= 0.0)
        return fallback();
    Vec s = ldlt.solve(Vec::Ones(l));
    const double denom = s.sum();
    if (!s.allFinite() || !(denom > 0.0)) return fallback();

    out.weights = s / denom;
    // Pin the convexity constraint exactly: the last weight absorbs rounding.
    out.weights(l - 1) = 1.0 - out.weights.head(l - 1).sum();
    out.v_tt = out.weights.dot(window * out.weights);
    if (!(out.v_tt > 0.0) || !std::isfinite(out.v_tt)) return fallback();
    return out;
}

MemoryKernel::MemoryKernel(const SpectralMoments& moments, KernelOptions opts)
    : moments_(moments),
      opts_(opts),
      ledger_(opts.T, moments.lambda1),
      vartheta_(Mat::Zero(opts.T, opts.T)),
      theta_(Vec::Zero(opts.T)),
      xi_(Vec::Zero(opts.T)),
      beta_(Vec::Zero(opts.T)),
      cx_(Vec::Zero(opts.T)),
      cz_(Vec::Zero(opts.T)) {
    if (opts.T < 1) throw InvalidConfig("kernel horizon must be >= 1");
    if (opts.L < 1) throw InvalidConfig("damping length must be >= 1");
    if (moments.max_iterations < opts.T)
        throw InvalidConfig("moment tables too short for the kernel horizon");
}

MemoryKernel::Step MemoryKernel::advance(const Vec& v_phi_row, const Vec& v_psi_row) {
    const int t = ledger_.t + 1;
    if (t > opts_.T) throw InvalidConfig("kernel advanced past its horizon");
    if (v_phi_row.size() != t || v_psi_row.size() != t)
        throw DimensionMismatch("NLE covariance rows must have length t");
    const int r = t - 1;
    const int l = std::min(opts_.L, t);

    Step step;
    step.t = t;
    step.damping.l = l;
    step.damping.L = opts_.L;

    // Damping per branch: optimal convex weights over the trailing window,
    // then the damped-output covariance rows extend the ledger.
    const auto damp_branch = [&](Mat& hist, Mat& cross_store, const Vec& row, Vec& weights,
                                 bool& fell_back) {
        const Mat window = damping_window(hist, row, row(r), t, l);
        const DampingSolve solve = damping_weights(window);
        weights = solve.weights;
        fell_back = solve.fell_back;
        cross_store.row(r).head(t) = row.transpose();
        for (int j = 0; j < r; ++j) {
            double v = solve.weights(l - 1) * row(j);
            for (int a = 0; a + 1 < l; ++a) v += solve.weights(a) * hist(t - l + a, j);
            hist(r, j) = hist(j, r) = v;
        }
        hist(r, r) = solve.v_tt;
    };
    damp_branch(ledger_.Vx, ledger_.v_phi, v_phi_row, step.damping.zeta,
                step.damping.zeta_fallback);
    damp_branch(ledger_.Vz, ledger_.v_psi, v_psi_row, step.damping.varrho,
                step.damping.varrho_fallback);

    step.rho = ledger_.Vz(r, r) / ledger_.Vx(r, r);
    step.theta = opts_.theta_optimized
                     ? optimize_theta(ledger_.Vz(r, r), ledger_.Vx(r, r),
                                      moments_.lambda_dagger)
                     : 1.0 / moments_.lambda_dagger;
    if (!(step.theta > 1e-300)) throw NumericalFailure("theta underflowed");
    theta_(r) = step.theta;
    for (int i = 0; i < r; ++i) vartheta_(r, i) = step.theta * vartheta_(r - 1, i);

    if (t >= 2) {
        step.c = compute_c_coeffs(ledger_, moments_, vartheta_, t);
        step.xi = opts_.xi_optimized ? optimize_xi(step.c) : 1.0;
    } else {
        step.xi = 1.0;
    }
    xi_(r) = step.xi;
    vartheta_(r, r) = step.xi;

    step.p.resize(t);
    double sum_p = 0.0;
    for (int i = 1; i <= t; ++i) {
        step.p(i - 1) = vartheta_(r, i - 1) * moments_.w_at(t - i);
        sum_p += step.p(i - 1);
    }
    if (!std::isfinite(sum_p) || sum_p == 0.0)
        throw NumericalFailure("memory normalization degenerate (sum of p is zero)");
    step.cx = 1.0 / sum_p;
    cx_(r) = step.cx;
    step.beta = step.xi / step.theta - sum_p;
    beta_(r) = step.beta;

    Vec raw_vvx(t), stil(t);
    for (int tp = 1; tp <= t; ++tp) {
        const RawSums rs = raw_mle_sums(ledger_, moments_, vartheta_, xi_, theta_, t, tp);
        raw_vvx(tp - 1) = rs.sum_vvx;
        stil(tp - 1) = rs.v_stilde;
        ledger_.v_stilde(r, tp - 1) = ledger_.v_stilde(tp - 1, r) = rs.v_stilde;
    }
    step.cz = optimize_cz(step.beta, moments_.w_at(0), stil(r));
    cz_(r) = step.cz;

    for (int tp = 1; tp <= t; ++tp) {
        const int q = tp - 1;
        const double vvx = step.cx * cx_(q) * raw_vvx(q);
        const double vvz = (step.cz * step.beta - 1.0) * (cz_(q) * beta_(q) - 1.0) *
                               moments_.w_at(0) +
                           step.cz * cz_(q) * stil(q);
        ledger_.VVx(t, tp) = ledger_.VVx(tp, t) = vvx;
        ledger_.VVz(t, tp) = ledger_.VVz(tp, t) = vvz;
    }
    // Covariance against 𝕫₁ = 0, whose error is −z itself.
    ledger_.VVz(t, 0) = ledger_.VVz(0, t) = -(step.cz * step.beta - 1.0) * moments_.w_at(0);

    if (!std::isfinite(ledger_.VVx(t, t)) || !(ledger_.VVx(t, t) > 0.0) ||
        !std::isfinite(ledger_.VVz(t, t)) || !(ledger_.VVz(t, t) > 0.0))
        throw NumericalFailure("MLE covariance recursion produced a degenerate variance");

    ledger_.t = t;
    return step;
}

}  // namespace glmamp
