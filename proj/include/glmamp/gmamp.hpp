#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "glmamp/instance.hpp"
#include "glmamp/memory_kernel.hpp"
#include "glmamp/operator.hpp"
#include "glmamp/se.hpp"
#include "glmamp/trace.hpp"
#include "glmamp/types.hpp"

namespace glmamp {

// Where the memory recursion's NLE error covariances come from.
//   oracle       — measured against the true x and z (diagnostics only).
//   prop2        — blind inner-product estimates from the iterates
//                  themselves; falls back to the state-evolution companion
//                  when an estimated variance loses positivity.
//   se_companion — a synchronized scalar state evolution supplies the rows
//                  (and hence the whole parameter schedule). Default: it is
//                  the most stable choice and the one the reference results
//                  were produced with.
enum class CovMode { oracle, prop2, se_companion };

std::string to_string(CovMode mode);
CovMode cov_mode_from_string(const std::string& name);

// Vector-side state of the long-memory linear estimator. Histories keep every
// damped NLE output pair (x_i, z_i) because the memory runs over the full
// past; column i holds iteration i+1.
struct MemoryState {
    MemoryState(int N, int M, int T)
        : z_hat(Vec::Zero(M)), x_hat(Vec::Zero(N)), X_hist(N, T), Z_hist(M, T) {}

    Vec z_hat;   // ẑ_t, the B-polynomial running estimate
    Vec x_hat;   // 𝕩̂_t = Aᵀẑ_t, cached to keep the recursion at O(MN)
    Mat X_hist;  // damped NLE outputs x_1 … x_t in the first t columns
    Mat Z_hist;  // damped NLE outputs z_1 … z_t
    int t = 0;   // completed MLE iterations
};

struct MleStepOutput {
    Vec x_next;  // 𝕩_{t+1}
    Vec z_next;  // 𝕫_{t+1}
};

// One memory linear estimation update, using the parameters the kernel
// optimized for this iteration (θ_t, ξ_t, 𝕔ˣ_t, 𝕔ᶻ_t, p_{t,·}):
//   ẑ_t     = θ_t λ† ẑ_{t−1} + ξ_t z_t − A(ξ_t x_t + θ_t 𝕩̂_{t−1})
//   𝕩̂_t     = Aᵀ ẑ_t
//   𝕩_{t+1} = 𝕔ˣ_t (δ⁻¹ 𝕩̂_t + Σᵢ p_{t,i} x_i)
//   𝕫_{t+1} = 𝕔ᶻ_t (A(𝕩̂_t + (ξ_t/θ_t) x_t) − Σᵢ p_{t,i} z_i)
// Appends (x_t, z_t) to the histories and advances state.t. Cost: two
// operator applications plus one adjoint. Throws DimensionMismatch when the
// state is out of phase with the step or a history length mismatches.
MleStepOutput mle_step(MemoryState& state, const SpectralOperator& op,
                       const SpectralMoments& moments, const MemoryKernel::Step& step,
                       const Vec& x_t, const Vec& z_t);

// Damps the orthogonalized NLE outputs with this iteration's weights:
//   x_t = ζ_l φ_t + Σₐ ζₐ x_{t−l+a},   z_t analogously with ϱ.
// The weights and windows come from the covariance rows exactly as the
// kernel computes them internally; calling this with the same rows that were
// passed to MemoryKernel::advance reproduces the kernel's weights bit for
// bit. Histories carry t−1 columns; rows have length t.
struct DampedNle {
    Vec x_t;
    Vec z_t;
    DampingVectors damping;
    double v_x_tt = 0.0;  // ζᵀV^φζ, the damped output variance
    double v_z_tt = 0.0;
};
DampedNle mnle_damped(const Vec& phi_out, const Vec& psi_out,
                      const CovarianceLedger& ledger, const Vec& v_phi_row,
                      const Vec& v_psi_row, const Mat& X_hist, const Mat& Z_hist,
                      int L);

// One iteration's measured/estimated NLE covariance rows (length t each:
// cross entries against the damped history, then the undamped variance).
struct NleCovarianceRows {
    Vec v_phi_row;
    Vec v_psi_row;
    bool fell_back = false;  // prop2 lost positivity and SE rows were used
};

struct CovarianceContext {
    int t = 0;                  // current iteration, 1-based
    const Vec* phi_out = nullptr;  // undamped orthogonalized NLE outputs
    const Vec* psi_out = nullptr;
    const Mat* x_hist = nullptr;   // damped output histories, t−1 columns
    const Mat* z_hist = nullptr;
    const Vec* x_true = nullptr;   // oracle mode
    const Vec* z_true = nullptr;
    // prop2's power anchors v_x = ⟨x, x⟩ and v_z = ⟨z, z⟩: the realized
    // signal powers (1/N)‖x‖² and (1/M)‖z‖², not their population limits.
    // The estimator reads error variances off differences of nearly equal
    // powers, so the O(N^{-1/2}) gap between a realized norm and its limit
    // is a first-order bias that compounds across iterations.
    double v_x_signal = 0.0;
    double v_z_signal = 0.0;
    const Vec* se_phi_row = nullptr;  // se_companion rows / prop2 fallback
    const Vec* se_psi_row = nullptr;
};

// oracle:  v^φ_{t,t'} = ⟨φ_t − x, x_{t'} − x⟩, diagonal ⟨φ_t − x, φ_t − x⟩.
// prop2:   blind estimates from inner products of the iterates. The z side
//          is v^ψ_{t,t'} = ⟨ψ_t, z_{t'}⟩ − v_z (the output error is
//          asymptotically orthogonal to z). On the x side the MMSE output
//          satisfies ⟨output error, output⟩ = 0 instead, which leaves
//          ⟨f_t, x⟩ = −v^φ_{t,t}; the estimator therefore reads the
//          variances off the output powers first,
//            v^φ_{t,t}   = v_x − ⟨φ_t, φ_t⟩,
//            v^x_{t',t'} = v_x − ⟨x_{t'}, x_{t'}⟩,
//          and corrects the cross terms with them:
//            v^φ_{t,t'} = ⟨φ_t, x_{t'}⟩ − v_x + v^x_{t',t'} + v^φ_{t,t}.
//          Any nonpositive estimated variance falls back to the provided SE
//          rows (fell_back = true) or throws NumericalFailure if absent.
// se_companion: copies the provided SE rows.
NleCovarianceRows estimate_nle_covariances(CovMode mode, const CovarianceContext& ctx);

struct BoGmampConfig {
    int T = 64;
    int L = 3;  // damping window length
    CovMode cov_mode = CovMode::se_companion;
    bool theta_optimized = true;
    bool xi_optimized = true;
    // Seed and budget of the synchronized state-evolution companion (unused
    // in oracle mode).
    std::uint64_t seed = 0;
    int se_sample_budget = 200000;
};

// One iteration of a precomputed state-evolution schedule: the measured
// covariance rows plus the predicted posterior MSE.
struct SeScheduleEntry {
    Vec v_phi_row;
    Vec v_psi_row;
    double mse_x = 0.0;
};

// Runs the state-evolution engine once and collects its covariance rows.
// The schedule depends only on the spectrum, the prior, and the channel —
// not on the realized operator factors — so experiments share one schedule
// across all trials of a config instead of re-running the companion
// per trial.
std::vector<SeScheduleEntry> se_covariance_schedule(const SpectralMoments& moments,
                                                    const SeConfig& config);

// Error inner products measured against the truth, filled when a probe is
// passed to run_bo_gmamp. Entry (t−1, t'−1) pairs the MLE output error of
// iteration t with the damped NLE output error of iteration t'; all values
// carry the 1/N (or 1/M) normalization, so correlation coefficients follow
// by dividing through the matching *_sq powers.
struct BoGmampProbe {
    int N = 0, M = 0;
    int iterations = 0;  // filled entries
    Mat f_cross;   // ⟨𝕩_{t+1} − x, x_{t'} − x⟩/N
    Mat s_cross;   // ⟨𝕫_{t+1} − z, z_{t'} − z⟩/M
    Vec f_in_out;  // ⟨x_t − x, 𝕩_t − x⟩/N: damped output vs input error
    Vec s_in_out;  // ⟨z_t − z, 𝕫_t − z⟩/M
    Vec f_le_sq;   // ‖𝕩_{t+1} − x‖²/N
    Vec s_le_sq;   // ‖𝕫_{t+1} − z‖²/M
    Vec f_nle_sq;  // ‖x_t − x‖²/N
    Vec s_nle_sq;  // ‖z_t − z‖²/M
    Vec f_in_sq;   // ‖𝕩_t − x‖²/N
    Vec s_in_sq;   // ‖𝕫_t − z‖²/M
};

// Bayes-optimal generalized memory AMP. Per iteration: entrywise posteriors
// on both branches (the recorded MSE is that of the posterior mean x̂_t),
// orthogonalization, covariance rows per cov_mode, the shared kernel step
// (damping weights, θ/ξ/𝕔 optimization, closed-form MLE covariances), vector
// damping, and the memory linear estimator. A linear channel degenerates the
// z branch to the measurement itself, recovering the memory AMP recursion
// for standard linear models. Stops early — with the reason recorded in the
// trace — on denoiser breakdown or when the damped x variance exceeds ten
// times its starting value (divergence guard; the factor is an artifact
// choice, large enough to never trip on transient plateaus).
//
// se_schedule, when given, replaces the in-process companion engine as the
// source of state-evolution rows (cov_mode se_companion consumes it
// directly; prop2 uses it as the fallback). It must cover at least T
// iterations.
IterationTrace run_bo_gmamp(const GlmInstance& instance, const BoGmampConfig& config,
                            BoGmampProbe* probe = nullptr,
                            const std::vector<SeScheduleEntry>* se_schedule = nullptr);

}  // namespace glmamp
