#pragma once

#include <cstdint>
#include <memory>
#include <stdexcept>
#include <string>

#include <nlohmann/json_fwd.hpp>

#include "glmamp/rng.hpp"
#include "glmamp/types.hpp"

namespace glmamp {

// One orthonormal n×n transform Q, either materialized (Haar-distributed
// dense matrix) or a fast composition Q = P·C·S of a random permutation P,
// an orthonormal trigonometric transform C (DCT-II), and random sign flips S.
// Immutable after construction; apply/apply_adjoint are pure and safe to call
// concurrently from any number of threads.
class OrthonormalFactor {
  public:
    static OrthonormalFactor haar(int n, Rng& rng);
    static OrthonormalFactor fast(int n, Rng& rng);

    int size() const;
    Vec apply(const Vec& x) const;          // Q x
    Vec apply_adjoint(const Vec& y) const;  // Qᵀ y
    Mat materialize() const;                // n×n dense Q (test/diagnostic use)

  private:
    struct Impl;
    explicit OrthonormalFactor(std::shared_ptr<const Impl> impl);
    std::shared_ptr<const Impl> impl_;
};

enum class OperatorKind { dense_haar, fast_transform };

std::string to_string(OperatorKind kind);
OperatorKind operator_kind_from_string(const std::string& name);

// Construction parameters for a sensing operator; round-trips through JSON so
// an operator can be rebuilt bit-identically from a saved experiment config.
struct OperatorSpec {
    int M = 0;
    int N = 0;
    double kappa = 1.0;
    OperatorKind kind = OperatorKind::fast_transform;
    std::uint64_t seed = 0;
};

void to_json(nlohmann::json& j, const OperatorSpec& spec);
void from_json(const nlohmann::json& j, OperatorSpec& spec);

// The sensing matrix A = U Σ Vᵀ with known singular values d_1 ≥ … ≥ d_J,
// J = min(M, N). The geometric builder spaces the d_i so that d_1/d_J equals
// the requested condition number exactly and Σ d_i² = N. Immutable and safe
// to share across threads; all operations are pure.
class SpectralOperator {
  public:
    // Geometric spectrum: d_i = d_1·κ^{−(i−1)/(J−1)}, normalized to Σd² = N.
    // Throws InvalidConfig for M or N < 1 or κ < 1.
    static SpectralOperator build(int M, int N, double kappa, OperatorKind kind,
                                  std::uint64_t seed);
    static SpectralOperator build(const OperatorSpec& spec);

    // Same factor construction but with caller-supplied singular values
    // (descending, length min(M,N)). Used for operators outside the geometric
    // family, e.g. row-orthogonal AAᵀ = I.
    static SpectralOperator with_spectrum(int M, int N, Vec singular_values,
                                          OperatorKind kind, std::uint64_t seed);

    int rows() const { return M_; }
    int cols() const { return N_; }
    double delta() const { return static_cast<double>(M_) / N_; }
    const Vec& singular_values() const { return d_; }
    double lambda_min() const { return lambda_min_; }      // d_J²
    double lambda_max() const { return lambda_max_; }      // d_1²
    double lambda_dagger() const { return lambda_dagger_; }  // (λ_max+λ_min)/2
    const OperatorSpec& spec() const { return spec_; }

    Vec apply(const Vec& x) const;          // A x,  x ∈ ℝᴺ → ℝᴹ
    Vec apply_adjoint(const Vec& v) const;  // Aᵀ v, v ∈ ℝᴹ → ℝᴺ

    // B u with B = λ†I − AAᵀ, applied spectrally: U diag(λ†−d²) Uᵀ u.
    Vec apply_B(const Vec& u) const;

    // Aᵀ(ρI + AAᵀ)⁻¹ r, the regularized adjoint solve used by the VAMP-style
    // linear estimator. ρ must be positive.
    Vec solve_normal_adjoint(const Vec& r, double rho) const;

    // (1/M) Σ_j d_j²/(ρ + d_j²), the normalized trace of AAᵀ(ρI + AAᵀ)⁻¹.
    double resolvent_trace(double rho) const;

    Mat materialize() const;  // dense M×N matrix A (test/diagnostic use)

  private:
    SpectralOperator(int M, int N, Vec d, OrthonormalFactor U, OrthonormalFactor V,
                     OperatorSpec spec);

    int M_, N_;
    Vec d_;  // length J = min(M, N), descending
    double lambda_min_, lambda_max_, lambda_dagger_;
    OrthonormalFactor U_, V_;
    OperatorSpec spec_;
};

SpectralOperator build_operator(int M, int N, double kappa, OperatorKind kind,
                                std::uint64_t seed);

// Polynomial spectral moments of AAᵀ that drive the memory-estimator
// parameter and covariance recursions:
//   w_t  = (1/M) Σ_j d_j²(λ† − d_j²)^t           (= (1/M) tr{AᵀBᵗA})
//   w̄_i  = λ† w_i − w_{i+1}                       (= (1/M) Σ_j d_j⁴(λ†−d_j²)^i)
//   w̄̄_i  = λ† w̄_i − w̄_{i+1}
//   w̄_{i,j} = w̄_{i+j} − w_i w_j
//   w̃_{i,j} = w̄_{i+j}/δ − w_i w_j
// All entries are exact functions of the owned singular values. The 1-D
// tables carry extra slack beyond 2T so every pairwise accessor below stays
// in range for iterations up to T.
struct SpectralMoments {
    double lambda_min = 0.0;
    double lambda_max = 0.0;
    double lambda_dagger = 0.0;
    double lambda1 = 0.0;  // (1/M) Σ d² = w_0
    double delta = 1.0;
    int rows = 0;  // M
    int cols = 0;  // N
    int max_iterations = 0;  // T

    Vec singular_values;  // copy of the operator's d, length min(M, N)

    // (1/M) Σ_j d_j²/(ρ + d_j²) — same value as the source operator's
    // resolvent_trace, recomputable without the operator itself.
    double resolvent_trace(double rho) const;

    Vec w;        // indices 0 .. 2T+2
    Vec wbar;     // indices 0 .. 2T+1
    Vec wbarbar;  // indices 0 .. 2T
    Mat wbar2;    // (T+1)×(T+1), symmetric
    Mat wtilde;   // (T+1)×(T+1), symmetric

    double w_at(int t) const { return w(check(t, static_cast<int>(w.size()))); }
    double wbar_at(int i) const { return wbar(check(i, static_cast<int>(wbar.size()))); }
    double wbarbar_at(int i) const {
        return wbarbar(check(i, static_cast<int>(wbarbar.size())));
    }
    // Pairwise values computed from the 1-D tables so any index pair with
    // i + j ≤ 2T+1 is reachable, not just the materialized (T+1)² window.
    double wbar2_at(int i, int j) const { return wbar_at(i + j) - w_at(i) * w_at(j); }
    double wtilde_at(int i, int j) const {
        return wbar_at(i + j) / delta - w_at(i) * w_at(j);
    }

  private:
    static int check(int i, int n) {
        if (i < 0 || i >= n) throw std::out_of_range("spectral moment index out of range");
        return i;
    }
};

// T ≥ 1 is the maximum iteration count the tables must support.
SpectralMoments compute_moments(const SpectralOperator& op, int T);

}  // namespace glmamp
