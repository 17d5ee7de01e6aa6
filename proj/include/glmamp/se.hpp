#pragma once

#include <cstdint>
#include <optional>

#include "glmamp/denoisers.hpp"
#include "glmamp/memory_kernel.hpp"
#include "glmamp/rng.hpp"
#include "glmamp/trace.hpp"
#include "glmamp/types.hpp"

namespace glmamp {

// Draws one new K-sample column jointly Gaussian with the columns of hist:
// Cov(new, hist_i) = cross(i), Var(new) = var. Solves the conditional-
// Gaussian extension with diagonal jitter escalation (1e-12 then 1e-8) and
// throws NumericalFailure if the history covariance is not PSD even then.
Vec conditional_gaussian_column(const Eigen::Ref<const Mat>& hist, const Mat& hist_cov,
                                const Vec& cross, double var, int samples, Rng& rng);

// Monte Carlo measurement of one NLE side's covariance rows on a persistent
// sample population. Each iteration draws the input noise jointly Gaussian
// with all previous iterations' noise, denoises with the scalar input
// variance, orthogonalizes uniformly, and measures the undamped output-error
// covariances against the damped error history. `damp` must be called with
// the damping weights before the next `denoise`.
struct NleMeasurement {
    Vec row;          // length t: cross entries vs damped history, then diagonal
    Vec std_err;      // Monte Carlo standard error per entry
    double v_post;    // reported (averaged) posterior variance
    double mse_post;  // measured posterior MSE on the population
};

class PhiSampler {
  public:
    // cov is the full input-covariance matrix: (i, j) entry = 𝕧ˣ_{i+1,j+1},
    // with the (0,0) infinity sentinel (iteration 1 reverts to the prior).
    PhiSampler(const BernoulliGaussianPrior& prior, int samples, int T, Rng rng);

    NleMeasurement denoise(const Mat& cov);
    void damp(const Vec& zeta);
    int iterations_done() const { return t_; }
    const Vec& signal() const { return x_; }

  private:
    BernoulliGaussianPrior prior_;
    int samples_, T_;
    Rng rng_;
    int t_ = 0;       // completed (damped) iterations
    bool pending_ = false;
    Vec x_;
    Mat eta_;         // column r holds η for iteration r+1 (column 0 unused)
    Mat err_;         // damped output-error columns
    Vec undamped_;
};

class PsiSampler {
  public:
    // The population is the channel's randomness: z ~ N(0, z_var) and
    // y = Clip(z) + n, both fixed at construction. If snr_db is given, the
    // noise variance is resolved as mean(Clip(z)²)/10^(snr/10) (floored at
    // 1e-12), mirroring the per-realization convention of the simulator;
    // otherwise channel.sigma2 is used as-is.
    // cov for denoise(): (i, j) = 𝕧ᶻ_{i+1,j+1} with (0,0) = Var(z), because
    // iteration 1's input 𝕫₁ = 0 has error −z exactly.
    PsiSampler(const ClipChannel& channel, double z_var, int samples, int T, Rng rng,
               std::optional<double> snr_db = std::nullopt);

    NleMeasurement denoise(const Mat& cov);
    void damp(const Vec& varrho);
    int iterations_done() const { return t_; }
    double sigma2() const { return channel_.sigma2; }
    double clip_power() const { return clip_power_; }

  private:
    ClipChannel channel_;
    int samples_, T_;
    Rng rng_;
    int t_ = 0;
    bool pending_ = false;
    double clip_power_ = 0.0;
    Vec z_, y_;
    Mat eta_;  // column 0 is z itself (η₁)
    Mat err_;
    Vec undamped_;
};

struct SeConfig {
    int T = 32;
    int L = 3;
    bool theta_optimized = true;
    bool xi_optimized = true;
    int sample_budget = 200000;
    std::uint64_t seed = 0;
    BernoulliGaussianPrior prior;
    ClipChannel channel;
    // When set, overrides channel.sigma2 via the measured-clip-power rule.
    std::optional<double> snr_db;
};

// The scalar mirror of the full algorithm: Monte Carlo NLE maps on the two
// sampler populations, then the shared kernel (damping, parameter
// optimization, closed-form MLE covariances). Deterministic given seed and
// budget. Also drivable step-by-step so a vector run can consume its
// measured covariance rows (the se-companion mode).
class SeEngine {
  public:
    SeEngine(const SpectralMoments& moments, const SeConfig& config);

    struct StepResult {
        int t = 0;
        Vec v_phi_row, v_psi_row;
        MemoryKernel::Step kernel_step;
        double mse_x = 0.0;  // predicted posterior MSE at iteration t
        double v_post_x = 0.0;
    };
    StepResult step();

    int iterations_done() const { return kernel_.iterations_done(); }
    const MemoryKernel& kernel() const { return kernel_; }
    double sigma2() const { return psi_.sigma2(); }

  private:
    SeConfig cfg_;
    MemoryKernel kernel_;
    PhiSampler phi_;
    PsiSampler psi_;
};

ScalarSeTrace run_se(const SpectralMoments& moments, const SeConfig& config);

// Standalone evaluation of the NLE expectation maps for a prescribed input
// covariance history (PSD; samples ≥ 1e5). The row is measured exactly as in
// the engine — orthogonalized outputs, damped history with window length
// min(L, t) — and mse_post carries the posterior-MSE reading alongside.
// For phi the window covers iterations 2..t (iteration 1 is the implicit
// prior step); for psi it covers iterations 1..t with window(0,0) = Var(z).
NleMeasurement se_phi_expectation(const Mat& VVx_window,
                                  const BernoulliGaussianPrior& prior, int samples,
                                  int L = 3, std::uint64_t seed = 0);
NleMeasurement se_psi_expectation(const Mat& VVz_window, const ClipChannel& channel,
                                  double z_var, int samples, int L = 3,
                                  std::uint64_t seed = 0);

}  // namespace glmamp
