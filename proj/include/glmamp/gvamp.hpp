#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "glmamp/denoisers.hpp"
#include "glmamp/instance.hpp"
#include "glmamp/operator.hpp"
#include "glmamp/trace.hpp"
#include "glmamp/types.hpp"

namespace glmamp {

// How the NLE stage obtains posterior variances: blind mode trusts the
// denoisers' reported variances; oracle mode measures the errors against the
// true x and z (test/diagnostic use only).
enum class NleMode { blind, oracle_tracking };

std::string to_string(NleMode mode);
NleMode nle_mode_from_string(const std::string& name);

struct GvampLeOutput {
    Vec x_ext;            // 𝕩_{t+1}
    Vec z_ext;            // 𝕫_{t+1}
    double v_x_ext = 0.0;  // 𝕧ˣ_{t+1}
    double v_z_ext = 0.0;  // 𝕧ᶻ_{t+1}
    double eps_gamma = 0.0;
};

// Memoryless LMMSE linear estimator, solved spectrally through the operator's
// factorization:
//   γ̂ = Aᵀ(ρI + AAᵀ)⁻¹(z_t − A x_t),   ρ = v_z/v_x
//   𝕩_{t+1} = γ̂/(δ ε^γ) + x_t           ε^γ = (1/M) Σ_j d_j²/(ρ + d_j²)
//   𝕫_{t+1} = [A(γ̂ + x_t) − ε^γ z_t]/(1 − ε^γ)
// with extrinsic variances 𝕧ˣ = (1/(δε^γ) − 1)v_x and 𝕧ᶻ = ε^γ/(1−ε^γ)·v_z.
// The coefficient of the 𝕩-update on x_t has normalized trace zero by
// construction. Throws NumericalFailure ("LE breakdown") if ε^γ degenerates
// to 0 or 1.
GvampLeOutput gvamp_le(const Vec& x_t, const Vec& z_t, double v_x, double v_z,
                       const SpectralOperator& op);

// Per-iteration ground-truth diagnostics, filled when a probe is passed to
// run_gvamp. Entry t-1 describes iteration t: f = x-side errors (length N),
// s = z-side errors (length M); "nle" vectors are the orthogonalized NLE
// outputs' errors, "le" the linear estimator outputs' errors.
struct GvampProbe {
    int N = 0;
    int M = 0;
    std::vector<double> f_cross;    // ⟨𝕗_{t+1}, f_t⟩ raw inner products
    std::vector<double> s_cross;    // ⟨𝕤_{t+1}, s_t⟩
    std::vector<double> f_sq_le;    // ‖𝕗_{t+1}‖² measured
    std::vector<double> s_sq_le;    // ‖𝕤_{t+1}‖²
    std::vector<double> v_x_nle;    // extrinsic v^x_t used by the LE
    std::vector<double> v_z_nle;    // v^z_t
    std::vector<double> v_x_le;     // predicted 𝕧ˣ_{t+1}
    std::vector<double> v_z_le;     // predicted 𝕧ᶻ_{t+1}
    std::vector<double> eps_gamma;  // ε^γ_t
};

// Full loop: 𝕩₁ = 𝕫₁ = 0 with an uninformative x-side start (the first
// denoise reverts to the prior, whose variance is the nominal 𝕧ˣ₁ = 1) and
// 𝕧ᶻ₁ = λ₁ on the z side, then NLE → orthogonalize → LE
// for T iterations. The recorded MSE is that of the posterior estimate
// x̂_t = E[x | 𝕩_t]. A denoiser turning non-informative or an LE breakdown
// ends the run early with the reason recorded in the trace. Deterministic:
// consumes no randomness beyond the instance itself. T = 0 gives an empty
// trace.
IterationTrace run_gvamp(const GlmInstance& instance, int T,
                         NleMode mode = NleMode::blind, GvampProbe* probe = nullptr);

// Scalar state evolution of the same loop. Each iteration evaluates the two
// NLE maps by fresh Monte Carlo populations (x ~ prior with 𝕩 = x + √𝕧ˣ η;
// z-side jointly samples 𝕫 ~ N(0, w₀ − 𝕧ᶻ), z = 𝕫 + η, y = Clip(z) + n) and
// the LE map in closed form from the stored spectrum. If snr_db is set, the
// noise variance is resolved from the measured population clip power with a
// 1e-12 floor; otherwise channel.sigma2 is used as-is. Deterministic given
// (seed, sample_budget); budgets below 1e4 are rejected.
ScalarSeTrace gvamp_se(const BernoulliGaussianPrior& prior, const ClipChannel& channel,
                       const SpectralMoments& moments, int T, int sample_budget = 200000,
                       std::uint64_t seed = 0,
                       std::optional<double> snr_db = std::nullopt);

}  // namespace glmamp
