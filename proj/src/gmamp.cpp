#include "glmamp/gmamp.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <optional>
#include <string>

#include "glmamp/denoisers.hpp"
#include "glmamp/errors.hpp"

namespace glmamp {

std::string to_string(CovMode mode) {
    switch (mode) {
        case CovMode::oracle:
            return "oracle";
        case CovMode::prop2:
            return "prop2";
        case CovMode::se_companion:
            return "se-companion";
    }
    throw InvalidConfig("unknown covariance mode");
}

CovMode cov_mode_from_string(const std::string& name) {
    if (name == "oracle") return CovMode::oracle;
    if (name == "prop2") return CovMode::prop2;
    if (name == "se-companion") return CovMode::se_companion;
    throw InvalidConfig("unknown covariance mode: " + name);
}

MleStepOutput mle_step(MemoryState& state, const SpectralOperator& op,
                       const SpectralMoments& moments, const MemoryKernel::Step& step,
                       const Vec& x_t, const Vec& z_t) {
    const int N = op.cols();
    const int M = op.rows();
    const int t = step.t;
    if (state.t != t - 1)
        throw DimensionMismatch("memory state holds " + std::to_string(state.t) +
                                " iterations but the kernel step is for iteration " +
                                std::to_string(t));
    if (x_t.size() != N || z_t.size() != M)
        throw DimensionMismatch("NLE output dimensions do not match the operator");
    if (step.p.size() != t)
        throw DimensionMismatch("history length mismatch: p has " +
                                std::to_string(step.p.size()) + " entries for iteration " +
                                std::to_string(t));
    if (state.X_hist.cols() < t || state.Z_hist.cols() < t)
        throw DimensionMismatch("history length mismatch: capacity " +
                                std::to_string(state.X_hist.cols()) +
                                " cannot hold iteration " + std::to_string(t));

    state.X_hist.col(t - 1) = x_t;
    state.Z_hist.col(t - 1) = z_t;

    state.z_hat = step.theta * moments.lambda_dagger * state.z_hat + step.xi * z_t -
                  op.apply(step.xi * x_t + step.theta * state.x_hat);
    state.x_hat = op.apply_adjoint(state.z_hat);

    const Vec px = state.X_hist.leftCols(t) * step.p;
    const Vec pz = state.Z_hist.leftCols(t) * step.p;

    MleStepOutput out;
    out.x_next = step.cx * (state.x_hat / moments.delta + px);
    out.z_next = step.cz * (op.apply(state.x_hat + (step.xi / step.theta) * x_t) - pz);
    state.t = t;
    return out;
}

DampedNle mnle_damped(const Vec& phi_out, const Vec& psi_out,
                      const CovarianceLedger& ledger, const Vec& v_phi_row,
                      const Vec& v_psi_row, const Mat& X_hist, const Mat& Z_hist,
                      int L) {
    const int t = static_cast<int>(v_phi_row.size());
    if (t < 1 || v_psi_row.size() != t)
        throw DimensionMismatch("covariance rows must both have length t >= 1");
    if (X_hist.cols() < t - 1 || Z_hist.cols() < t - 1)
        throw DimensionMismatch("history length mismatch: damping needs " +
                                std::to_string(t - 1) + " history columns");
    if (ledger.t < t - 1)
        throw InvalidConfig("ledger is missing the damped history for iteration " +
                            std::to_string(t));
    if (L < 1) throw InvalidConfig("damping window length must be >= 1");
    const int l = std::min(L, t);

    const DampingSolve sx =
        damping_weights(damping_window(ledger.Vx, v_phi_row, v_phi_row(t - 1), t, l));
    const DampingSolve sz =
        damping_weights(damping_window(ledger.Vz, v_psi_row, v_psi_row(t - 1), t, l));

    DampedNle out;
    out.damping.zeta = sx.weights;
    out.damping.varrho = sz.weights;
    out.damping.l = l;
    out.damping.L = L;
    out.damping.zeta_fallback = sx.fell_back;
    out.damping.varrho_fallback = sz.fell_back;
    out.v_x_tt = sx.v_tt;
    out.v_z_tt = sz.v_tt;

    out.x_t = sx.weights(l - 1) * phi_out;
    out.z_t = sz.weights(l - 1) * psi_out;
    for (int a = 0; a + 1 < l; ++a) {
        out.x_t += sx.weights(a) * X_hist.col(t - l + a);
        out.z_t += sz.weights(a) * Z_hist.col(t - l + a);
    }
    return out;
}

NleCovarianceRows estimate_nle_covariances(CovMode mode, const CovarianceContext& ctx) {
    const int t = ctx.t;
    if (t < 1) throw InvalidConfig("covariance estimation needs t >= 1");

    NleCovarianceRows out;
    if (mode == CovMode::se_companion) {
        if (!ctx.se_phi_row || !ctx.se_psi_row)
            throw InvalidConfig("se-companion mode needs the companion's covariance rows");
        if (ctx.se_phi_row->size() != t || ctx.se_psi_row->size() != t)
            throw DimensionMismatch("history length mismatch in the companion rows");
        out.v_phi_row = *ctx.se_phi_row;
        out.v_psi_row = *ctx.se_psi_row;
        return out;
    }

    if (!ctx.phi_out || !ctx.psi_out || !ctx.x_hist || !ctx.z_hist)
        throw InvalidConfig("covariance estimation needs the NLE outputs and histories");
    if (ctx.x_hist->cols() < t - 1 || ctx.z_hist->cols() < t - 1)
        throw DimensionMismatch("history length mismatch: estimation needs " +
                                std::to_string(t - 1) + " history columns");
    const double N = static_cast<double>(ctx.phi_out->size());
    const double M = static_cast<double>(ctx.psi_out->size());
    out.v_phi_row = Vec(t);
    out.v_psi_row = Vec(t);

    if (mode == CovMode::oracle) {
        if (!ctx.x_true || !ctx.z_true)
            throw InvalidConfig("oracle covariance estimation needs the true signals");
        const Vec f = *ctx.phi_out - *ctx.x_true;
        const Vec s = *ctx.psi_out - *ctx.z_true;
        for (int i = 0; i + 1 < t; ++i) {
            out.v_phi_row(i) = f.dot(ctx.x_hist->col(i) - *ctx.x_true) / N;
            out.v_psi_row(i) = s.dot(ctx.z_hist->col(i) - *ctx.z_true) / M;
        }
        out.v_phi_row(t - 1) = f.squaredNorm() / N;
        out.v_psi_row(t - 1) = s.squaredNorm() / M;
        return out;
    }

    // prop2: blind inner-product estimates, documented in the header.
    const double v_x = ctx.v_x_signal;
    const double v_z = ctx.v_z_signal;
    if (!(v_x > 0.0) || !(v_z > 0.0))
        throw InvalidConfig("prop2 covariance estimation needs the signal powers");
    const double v_phi_tt = v_x - ctx.phi_out->squaredNorm() / N;
    const double v_psi_tt = ctx.psi_out->squaredNorm() / M - v_z;
    bool positive = v_phi_tt > 0.0 && v_psi_tt > 0.0;
    if (positive) {
        out.v_phi_row(t - 1) = v_phi_tt;
        out.v_psi_row(t - 1) = v_psi_tt;
        for (int i = 0; i + 1 < t && positive; ++i) {
            const double v_x_ii = v_x - ctx.x_hist->col(i).squaredNorm() / N;
            if (v_x_ii <= 0.0) {
                positive = false;
                break;
            }
            out.v_phi_row(i) =
                ctx.phi_out->dot(ctx.x_hist->col(i)) / N - v_x + v_x_ii + v_phi_tt;
            out.v_psi_row(i) = ctx.psi_out->dot(ctx.z_hist->col(i)) / M - v_z;
        }
    }
    if (!positive) {
        if (!ctx.se_phi_row || !ctx.se_psi_row)
            throw NumericalFailure(
                "blind covariance estimate lost positivity and no fallback rows were "
                "provided");
        if (ctx.se_phi_row->size() != t || ctx.se_psi_row->size() != t)
            throw DimensionMismatch("history length mismatch in the fallback rows");
        out.v_phi_row = *ctx.se_phi_row;
        out.v_psi_row = *ctx.se_psi_row;
        out.fell_back = true;
    }
    return out;
}

namespace {

double elapsed_ms(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() -
                                                     start)
        .count();
}

}  // namespace

std::vector<SeScheduleEntry> se_covariance_schedule(const SpectralMoments& moments,
                                                    const SeConfig& config) {
    SeEngine engine(moments, config);
    std::vector<SeScheduleEntry> schedule;
    schedule.reserve(config.T);
    for (int t = 1; t <= config.T; ++t) {
        SeEngine::StepResult sr = engine.step();
        schedule.push_back(
            SeScheduleEntry{std::move(sr.v_phi_row), std::move(sr.v_psi_row), sr.mse_x});
    }
    return schedule;
}

IterationTrace run_bo_gmamp(const GlmInstance& instance, const BoGmampConfig& config,
                            BoGmampProbe* probe,
                            const std::vector<SeScheduleEntry>* se_schedule) {
    const SpectralOperator& op = instance.op;
    const int N = op.cols();
    const int M = op.rows();
    const int T = config.T;
    if (T < 1) throw InvalidConfig("iteration count must be >= 1");
    if (config.L < 1) throw InvalidConfig("damping window length must be >= 1");
    if (instance.x_true.size() != N || instance.z_true.size() != M ||
        instance.y.size() != M)
        throw DimensionMismatch("instance vectors do not match the operator");
    if (se_schedule && static_cast<int>(se_schedule->size()) < T)
        throw InvalidConfig("state-evolution schedule is shorter than T");

    const SpectralMoments moments = compute_moments(op, T);
    const bool linear = instance.channel.is_linear();

    // The local kernel always carries the parameter schedule and the ledger;
    // the modes differ only in where its input rows come from. se-companion
    // and prop2 (whose documented fallback is the companion) need a row
    // source: either the caller's precomputed schedule or an in-process
    // engine run in lockstep. Replaying the companion's rows through the
    // local kernel reproduces the companion's parameters exactly.
    std::optional<SeEngine> engine;
    if (config.cov_mode != CovMode::oracle && !se_schedule) {
        SeConfig se_cfg;
        se_cfg.T = T;
        se_cfg.L = config.L;
        se_cfg.theta_optimized = config.theta_optimized;
        se_cfg.xi_optimized = config.xi_optimized;
        se_cfg.sample_budget = config.se_sample_budget;
        se_cfg.seed = config.seed;
        se_cfg.prior = instance.prior;
        se_cfg.channel = instance.channel;
        engine.emplace(moments, se_cfg);
    }
    MemoryKernel kernel(moments, KernelOptions{T, config.L, config.theta_optimized,
                                               config.xi_optimized});
    const CovarianceLedger& led = kernel.ledger();

    IterationTrace trace;
    trace.algorithm = "bo-gmamp";
    trace.seed = instance.seed;

    if (probe) {
        probe->N = N;
        probe->M = M;
        probe->iterations = 0;
        probe->f_cross = Mat::Zero(T, T);
        probe->s_cross = Mat::Zero(T, T);
        probe->f_in_out = Vec::Zero(T);
        probe->s_in_out = Vec::Zero(T);
        probe->f_le_sq = Vec::Zero(T);
        probe->s_le_sq = Vec::Zero(T);
        probe->f_nle_sq = Vec::Zero(T);
        probe->s_nle_sq = Vec::Zero(T);
        probe->f_in_sq = Vec::Zero(T);
        probe->s_in_sq = Vec::Zero(T);
    }

    MemoryState state(N, M, T);
    Vec x_pseudo = Vec::Zero(N);
    Vec z_pseudo = Vec::Zero(M);
    // Realized signal powers, the anchors of the blind inner-product
    // estimator (see CovarianceContext).
    const double v_x_sig = instance.x_true.squaredNorm() / N;
    const double v_z_sig = instance.z_true.squaredNorm() / M;

    for (int t = 1; t <= T; ++t) {
        const auto start = std::chrono::steady_clock::now();
        IterationRecord rec;
        rec.t = t;

        const double vv_x = led.VVx(t - 1, t - 1);
        const double vv_z = led.VVz(t - 1, t - 1);

        const PosteriorOutput post_x = bg_posterior(x_pseudo, vv_x, instance.prior);
        rec.mse_x = (post_x.mean - instance.x_true).squaredNorm() / N;
        rec.mse_x_db = to_db(rec.mse_x);

        try {
            const PosteriorOutput phi = orthogonalize(post_x, x_pseudo, vv_x);
            PosteriorOutput psi;
            if (linear) {
                // c = ∞ degenerates the z branch: the extrinsic estimate of z
                // from y = z + n alone is y itself, exactly. This recovers the
                // memory AMP recursion for the standard linear model.
                psi.mean = instance.y;
                psi.variance = instance.channel.sigma2;
            } else {
                const PosteriorOutput post_z =
                    clip_posterior(z_pseudo, vv_z, instance.y, instance.channel);
                psi = orthogonalize(post_z, z_pseudo, vv_z);
            }

            std::optional<SeEngine::StepResult> sr;
            if (engine) sr = engine->step();

            CovarianceContext ctx;
            ctx.t = t;
            ctx.phi_out = &phi.mean;
            ctx.psi_out = &psi.mean;
            ctx.x_hist = &state.X_hist;
            ctx.z_hist = &state.Z_hist;
            ctx.x_true = &instance.x_true;
            ctx.z_true = &instance.z_true;
            ctx.v_x_signal = v_x_sig;
            ctx.v_z_signal = v_z_sig;
            if (se_schedule) {
                const SeScheduleEntry& entry = (*se_schedule)[t - 1];
                ctx.se_phi_row = &entry.v_phi_row;
                ctx.se_psi_row = &entry.v_psi_row;
                rec.v_x_predicted = entry.mse_x;
            } else if (sr) {
                ctx.se_phi_row = &sr->v_phi_row;
                ctx.se_psi_row = &sr->v_psi_row;
                rec.v_x_predicted = sr->mse_x;
            }
            const NleCovarianceRows rows = estimate_nle_covariances(config.cov_mode, ctx);
            if (rows.fell_back)
                trace.notes.push_back("iteration " + std::to_string(t) +
                                      ": blind covariance estimate lost positivity; "
                                      "state-evolution rows substituted");

            const MemoryKernel::Step step = kernel.advance(rows.v_phi_row, rows.v_psi_row);

            if (probe) {
                probe->f_in_sq(t - 1) = (x_pseudo - instance.x_true).squaredNorm() / N;
                probe->s_in_sq(t - 1) = (z_pseudo - instance.z_true).squaredNorm() / M;
            }

            const Vec& zeta = step.damping.zeta;
            const Vec& varrho = step.damping.varrho;
            const int l = step.damping.l;
            Vec x_t = zeta(l - 1) * phi.mean;
            Vec z_t = varrho(l - 1) * psi.mean;
            for (int a = 0; a + 1 < l; ++a) {
                x_t += zeta(a) * state.X_hist.col(t - l + a);
                z_t += varrho(a) * state.Z_hist.col(t - l + a);
            }

            if (probe) {
                const Vec f_nle = x_t - instance.x_true;
                const Vec s_nle = z_t - instance.z_true;
                probe->f_nle_sq(t - 1) = f_nle.squaredNorm() / N;
                probe->s_nle_sq(t - 1) = s_nle.squaredNorm() / M;
                probe->f_in_out(t - 1) = f_nle.dot(x_pseudo - instance.x_true) / N;
                probe->s_in_out(t - 1) = s_nle.dot(z_pseudo - instance.z_true) / M;
            }

            const MleStepOutput mle = mle_step(state, op, moments, step, x_t, z_t);

            if (probe) {
                const Vec f_le = mle.x_next - instance.x_true;
                const Vec s_le = mle.z_next - instance.z_true;
                probe->f_le_sq(t - 1) = f_le.squaredNorm() / N;
                probe->s_le_sq(t - 1) = s_le.squaredNorm() / M;
                for (int i = 0; i < t; ++i) {
                    probe->f_cross(t - 1, i) =
                        f_le.dot(state.X_hist.col(i) - instance.x_true) / N;
                    probe->s_cross(t - 1, i) =
                        s_le.dot(state.Z_hist.col(i) - instance.z_true) / M;
                }
                probe->iterations = t;
            }

            x_pseudo = mle.x_next;
            z_pseudo = mle.z_next;

            if (led.Vx(t - 1, t - 1) > 10.0 * led.Vx(0, 0)) {
                rec.wall_ms = elapsed_ms(start);
                trace.records.push_back(rec);
                trace.termination =
                    "iteration " + std::to_string(t) +
                    ": divergence guard tripped (damped output variance exceeded ten "
                    "times its starting value)";
                return trace;
            }
        } catch (const NumericalFailure& failure) {
            rec.wall_ms = elapsed_ms(start);
            trace.records.push_back(rec);
            trace.termination = "iteration " + std::to_string(t) + ": " + failure.what();
            return trace;
        }
        rec.wall_ms = elapsed_ms(start);
        trace.records.push_back(rec);
    }
    return trace;
}

}  // namespace glmamp
