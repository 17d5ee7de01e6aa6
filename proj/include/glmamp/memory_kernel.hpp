#pragma once

#include "glmamp/operator.hpp"
#include "glmamp/types.hpp"

namespace glmamp {

// Error-covariance bookkeeping shared by the vector algorithm and its state
// evolution. Row/column index (i, j) refers to iterations i+1, j+1:
//   Vx, Vz   — covariances of the damped NLE output errors f_i = x_i − x,
//              s_i = z_i − z.
//   VVx, VVz — covariances of the MLE output (NLE input) errors 𝕗_i, 𝕤_i.
//              VVx(0,0) is the ∞ sentinel ("no observation yet"); the rest of
//              row/column 0 of VVx is unused. VVz(0,0) = λ₁ since 𝕫₁ = 0.
//   v_phi, v_psi — per-iteration rows of cross-covariances between the
//              *undamped* denoiser output error and the damped history
//              (diagonal entry = undamped output variance).
//   v_stilde — covariances of the non-Onsager part of the z-side MLE output.
// Matrices are preallocated at capacity T; `t` counts completed iterations.
struct CovarianceLedger {
    CovarianceLedger(int T, double lambda1);

    int t = 0;
    Mat Vx, Vz;
    Mat VVx, VVz;
    Mat v_phi, v_psi;
    Mat v_stilde;

    int capacity() const { return static_cast<int>(Vx.rows()); }
};

// Damping weights for both branches at one iteration; l = min(L, t).
// Each weight vector sums to 1 exactly; a fallback flag records that the
// window solve was abandoned for the no-damping arm [0, …, 0, 1].
struct DampingVectors {
    Vec zeta;    // x branch
    Vec varrho;  // z branch
    int l = 0;
    int L = 0;
    bool zeta_fallback = false;
    bool varrho_fallback = false;
};

// θ_t = 1/(λ† + ρ_t) with ρ_t = v^z_{t,t}/v^x_{t,t} — the step size that
// minimizes the spectral radius of the memory recursion's contraction.
double optimize_theta(double v_z_tt, double v_x_tt, double lambda_dagger);

// Coefficients of the quadratic-over-quadratic objective that 𝕧ˣ_{t+1,t+1}
// traces out as a function of ξ_t.
struct CCoeffs {
    double c0 = 0.0, c1 = 0.0, c2 = 0.0, c3 = 0.0;
};

// Requires t ≥ 2, ledger rows ≤ t filled, and the ϑ row for iteration t
// already rescaled by θ_t for i < t (the ϑ_{t,t} = ξ_t slot is not read).
CCoeffs compute_c_coeffs(const CovarianceLedger& ledger, const SpectralMoments& moments,
                         const Mat& vartheta, int t);

// ξ_t^opt = (c₂c₀ + c₃)/(c₁c₀ + c₂); a zero denominator returns the large
// finite sentinel 1e12 (the 𝕔ˣ normalization absorbs the scale).
double optimize_xi(const CCoeffs& c);

// 𝕔ᶻ_t = β_t w₀/(β_t² w₀ + v^𝕤̃_{t,t}); throws on a nonpositive denominator.
double optimize_cz(double beta, double w0, double v_stilde_tt);

struct MleCovariances {
    double vvx = 0.0;      // 𝕧ˣ_{t+1,t'+1}
    double vvz = 0.0;      // 𝕧ᶻ_{t+1,t'+1}
    double v_stilde = 0.0; // v^𝕤̃_{t,t'}
};

// The closed-form MLE output covariances, evaluated from the ledger, the
// spectral moment tables, and the full parameter histories (1-based t, t').
MleCovariances mle_covariance(const CovarianceLedger& ledger,
                              const SpectralMoments& moments, const Mat& vartheta,
                              const Vec& cx, const Vec& cz, const Vec& beta,
                              const Vec& xi, const Vec& theta, int t, int tp);

// Inverse-variance-optimal convex weights for a covariance window:
// weights = W⁻¹1/(1ᵀW⁻¹1), solved after adding 1e-10 diagonal jitter. A
// non-PSD window or nonpositive normalizer falls back to [0, …, 0, 1].
// v_tt is the damped output variance weightsᵀ·W·weights (jitter-free W).
struct DampingSolve {
    Vec weights;
    double v_tt = 0.0;
    bool fell_back = false;
};
DampingSolve damping_weights(const Mat& window);

// Assembles the l×l damping window for iteration t (1-based): entries
// 1..l−1 are the damped outputs of iterations t−l+1..t−1 (covariances from
// hist), entry l is the undamped current output (cross row + corner v_tt).
Mat damping_window(const Mat& hist, const Vec& cross_row, double v_tt, int t, int l);

struct KernelOptions {
    int T = 32;
    int L = 3;
    bool theta_optimized = true;
    bool xi_optimized = true;
};

// One iteration of the shared parameter/covariance recursion: damping
// weights from the measured NLE covariances, ledger update, θ/ξ/𝕔ˣ/𝕔ᶻ
// optimization, and the closed-form MLE covariance rows for the next
// iteration's inputs. The vector algorithm and the state evolution both
// drive this object; they differ only in where the v^φ/v^ψ rows come from
// and in whether actual vectors are carried along.
class MemoryKernel {
  public:
    MemoryKernel(const SpectralMoments& moments, KernelOptions opts);

    struct Step {
        int t = 0;  // 1-based iteration this step completed
        DampingVectors damping;
        double rho = 0.0, theta = 0.0, xi = 0.0, beta = 0.0, cx = 0.0, cz = 0.0;
        Vec p;  // p_{t,i} = ϑ_{t,i} w_{t−i}, i = 1..t
        CCoeffs c;  // zeros at t = 1
    };

    // v_phi_row/v_psi_row have length t (cross entries for iterations
    // 1..t−1, then the undamped output variance).
    Step advance(const Vec& v_phi_row, const Vec& v_psi_row);

    int iterations_done() const { return ledger_.t; }
    const CovarianceLedger& ledger() const { return ledger_; }
    const SpectralMoments& moments() const { return moments_; }
    const KernelOptions& options() const { return opts_; }
    const Mat& vartheta() const { return vartheta_; }
    const Vec& theta_history() const { return theta_; }
    const Vec& xi_history() const { return xi_; }
    const Vec& beta_history() const { return beta_; }
    const Vec& cx_history() const { return cx_; }
    const Vec& cz_history() const { return cz_; }

  private:
    SpectralMoments moments_;
    KernelOptions opts_;
    CovarianceLedger ledger_;
    Mat vartheta_;
    Vec theta_, xi_, beta_, cx_, cz_;
};

}  // namespace glmamp
