#include "glmamp/operator.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <mutex>
#include <numeric>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "glmamp/errors.hpp"

namespace glmamp {

namespace {

// FFTW's planner mutates global state; only fftw_execute is thread-safe.
// Every plan creation/destruction goes through this lock.
std::mutex& fftw_planner_mutex() {
    static std::mutex m;
    return m;
}

}  // namespace

struct OrthonormalFactor::Impl {
    int n = 0;
    bool dense = false;

    Mat q;  // dense case

    // Fast case: Q = Π_r (P_r·C·S_r), r = 1..kRounds, with independent random
    // sign diagonals S_r, the orthonormal DCT-II C, and independent random
    // permutations P_r with (P_r v)_i = v[perm_r[i]]. A single round leaves the
    // leading singular directions as globally-signed smooth cosine columns
    // (the sign diagonal only flips whole columns), which is visibly far from
    // rotation-invariant; each extra round sign-randomizes every column
    // entrywise and re-mixes it, after which iterative estimators behave as
    // they do on dense rotation-invariant factors.
    static constexpr int kRounds = 3;
    std::vector<Vec> signs;               // one diagonal per round
    std::vector<std::vector<int>> perms;  // one permutation per round
    fftw_plan dct2 = nullptr;  // REDFT10
    fftw_plan dct3 = nullptr;  // REDFT01
    Vec scale_fwd;  // s_k/2 with s_0 = √(1/n), s_k = √(2/n): C x = scale ∘ REDFT10(x)
    Vec scale_adj;  // Cᵀ y = REDFT01(scale_adj ∘ y)

    ~Impl() {
        if (dct2 || dct3) {
            std::lock_guard<std::mutex> lock(fftw_planner_mutex());
            if (dct2) fftw_destroy_plan(dct2);
            if (dct3) fftw_destroy_plan(dct3);
        }
    }
};

OrthonormalFactor::OrthonormalFactor(std::shared_ptr<const Impl> impl)
    : impl_(std::move(impl)) {}

OrthonormalFactor OrthonormalFactor::haar(int n, Rng& rng) {
    if (n < 1) throw InvalidConfig("orthonormal factor size must be >= 1");
    auto impl = std::make_shared<Impl>();
    impl->n = n;
    impl->dense = true;

    Mat g(n, n);
    for (int j = 0; j < n; ++j)
        for (int i = 0; i < n; ++i) g(i, j) = rng.gaussian();

    Eigen::HouseholderQR<Mat> qr(g);
    Mat q = qr.householderQ();
    Mat r = qr.matrixQR().triangularView<Eigen::Upper>();
    // Fixing the sign of R's diagonal makes Q exactly Haar-distributed (and
    // the construction deterministic given the Gaussian draw).
    for (int j = 0; j < n; ++j)
        if (r(j, j) < 0.0) q.col(j) = -q.col(j);
    impl->q = std::move(q);
    return OrthonormalFactor(std::move(impl));
}

OrthonormalFactor OrthonormalFactor::fast(int n, Rng& rng) {
    if (n < 1) throw InvalidConfig("orthonormal factor size must be >= 1");
    auto impl = std::make_shared<Impl>();
    impl->n = n;
    impl->dense = false;

    impl->signs.resize(Impl::kRounds);
    impl->perms.resize(Impl::kRounds);
    for (int r = 0; r < Impl::kRounds; ++r) {
        Vec& signs = impl->signs[r];
        signs.resize(n);
        for (int i = 0; i < n; ++i) signs(i) = rng.below(2) ? 1.0 : -1.0;

        std::vector<int>& perm = impl->perms[r];
        perm.resize(n);
        std::iota(perm.begin(), perm.end(), 0);
        for (int i = n - 1; i > 0; --i) {
            const int j = static_cast<int>(rng.below(static_cast<std::uint64_t>(i) + 1));
            std::swap(perm[i], perm[j]);
        }
    }

    const double s0 = std::sqrt(1.0 / n);
    const double sk = std::sqrt(2.0 / n);
    impl->scale_fwd.resize(n);
    impl->scale_adj.resize(n);
    impl->scale_fwd(0) = 0.5 * s0;
    impl->scale_adj(0) = s0;
    for (int k = 1; k < n; ++k) {
        impl->scale_fwd(k) = 0.5 * sk;
        impl->scale_adj(k) = 0.5 * sk;
    }

    // FFTW_UNALIGNED lets us execute the plan on any same-length buffers;
    // FFTW_ESTIMATE keeps planning deterministic and cheap.
    std::vector<double> a(static_cast<std::size_t>(n)), b(static_cast<std::size_t>(n));
    {
        std::lock_guard<std::mutex> lock(fftw_planner_mutex());
        impl->dct2 = fftw_plan_r2r_1d(n, a.data(), b.data(), FFTW_REDFT10,
                                      FFTW_ESTIMATE | FFTW_UNALIGNED);
        impl->dct3 = fftw_plan_r2r_1d(n, a.data(), b.data(), FFTW_REDFT01,
                                      FFTW_ESTIMATE | FFTW_UNALIGNED);
    }
    if (!impl->dct2 || !impl->dct3)
        throw NumericalFailure("FFTW failed to create DCT plans");
    return OrthonormalFactor(std::move(impl));
}

int OrthonormalFactor::size() const { return impl_->n; }

Vec OrthonormalFactor::apply(const Vec& x) const {
    if (x.size() != impl_->n) throw DimensionMismatch("factor apply: wrong length");
    if (impl_->dense) return impl_->q * x;

    const int n = impl_->n;
    Vec cur = x;
    Vec y(n);
    Vec out(n);
    for (int r = 0; r < Impl::kRounds; ++r) {
        cur = impl_->signs[r].cwiseProduct(cur);
        fftw_execute_r2r(impl_->dct2, cur.data(), y.data());
        y = impl_->scale_fwd.cwiseProduct(y);
        const std::vector<int>& perm = impl_->perms[r];
        for (int i = 0; i < n; ++i) out(i) = y(perm[i]);
        cur.swap(out);
    }
    return cur;
}

Vec OrthonormalFactor::apply_adjoint(const Vec& y) const {
    if (y.size() != impl_->n) throw DimensionMismatch("factor adjoint: wrong length");
    if (impl_->dense) return impl_->q.transpose() * y;

    const int n = impl_->n;
    Vec cur = y;
    Vec u(n);
    Vec out(n);
    for (int r = Impl::kRounds - 1; r >= 0; --r) {
        const std::vector<int>& perm = impl_->perms[r];
        for (int i = 0; i < n; ++i) u(perm[i]) = cur(i);
        u = impl_->scale_adj.cwiseProduct(u);
        fftw_execute_r2r(impl_->dct3, u.data(), out.data());
        cur = impl_->signs[r].cwiseProduct(out);
    }
    return cur;
}

Mat OrthonormalFactor::materialize() const {
    const int n = impl_->n;
    if (impl_->dense) return impl_->q;
    Mat q(n, n);
    Vec e = Vec::Zero(n);
    for (int j = 0; j < n; ++j) {
        e(j) = 1.0;
        q.col(j) = apply(e);
        e(j) = 0.0;
    }
    return q;
}

std::string to_string(OperatorKind kind) {
    switch (kind) {
        case OperatorKind::dense_haar: return "dense-haar";
        case OperatorKind::fast_transform: return "fast-transform";
    }
    throw InvalidConfig("unknown operator kind");
}

OperatorKind operator_kind_from_string(const std::string& name) {
    if (name == "dense-haar") return OperatorKind::dense_haar;
    if (name == "fast-transform") return OperatorKind::fast_transform;
    throw InvalidConfig("unknown operator kind: " + name);
}

void to_json(nlohmann::json& j, const OperatorSpec& spec) {
    j = nlohmann::json{{"M", spec.M},
                       {"N", spec.N},
                       {"kappa", spec.kappa},
                       {"kind", to_string(spec.kind)},
                       {"seed", spec.seed}};
}

void from_json(const nlohmann::json& j, OperatorSpec& spec) {
    spec.M = j.at("M").get<int>();
    spec.N = j.at("N").get<int>();
    spec.kappa = j.at("kappa").get<double>();
    spec.kind = operator_kind_from_string(j.at("kind").get<std::string>());
    spec.seed = j.at("seed").get<std::uint64_t>();
}

namespace {

OrthonormalFactor make_factor(int n, OperatorKind kind, Rng& rng) {
    return kind == OperatorKind::dense_haar ? OrthonormalFactor::haar(n, rng)
                                            : OrthonormalFactor::fast(n, rng);
}

Vec geometric_spectrum(int M, int N, double kappa) {
    const int J = std::min(M, N);
    Vec d(J);
    if (J == 1) {
        d(0) = std::sqrt(static_cast<double>(N));
        return d;
    }
    // d_i = c·r^{i−1} with r chosen so the realized condition number d_1/d_J
    // is exactly κ, then c fixed by the power normalization Σd² = N.
    const double r = std::pow(kappa, -1.0 / (J - 1));
    double sum = 0.0;
    double g = 1.0;
    for (int i = 0; i < J; ++i) {
        d(i) = g;
        sum += g * g;
        g *= r;
    }
    const double c = std::sqrt(static_cast<double>(N) / sum);
    d *= c;
    return d;
}

}  // namespace

SpectralOperator::SpectralOperator(int M, int N, Vec d, OrthonormalFactor U,
                                   OrthonormalFactor V, OperatorSpec spec)
    : M_(M),
      N_(N),
      d_(std::move(d)),
      U_(std::move(U)),
      V_(std::move(V)),
      spec_(std::move(spec)) {
    lambda_max_ = d_(0) * d_(0);
    lambda_min_ = d_(d_.size() - 1) * d_(d_.size() - 1);
    lambda_dagger_ = 0.5 * (lambda_max_ + lambda_min_);
}

SpectralOperator SpectralOperator::build(int M, int N, double kappa,
                                         OperatorKind kind, std::uint64_t seed) {
    if (M < 1 || N < 1) throw InvalidConfig("operator dimensions must be >= 1");
    if (!(kappa >= 1.0)) throw InvalidConfig("condition number must be >= 1");
    Vec d = geometric_spectrum(M, N, kappa);
    Rng rng_u = Rng::stream(seed, 0);
    Rng rng_v = Rng::stream(seed, 1);
    OperatorSpec spec{M, N, kappa, kind, seed};
    return SpectralOperator(M, N, std::move(d), make_factor(M, kind, rng_u),
                            make_factor(N, kind, rng_v), std::move(spec));
}

SpectralOperator SpectralOperator::build(const OperatorSpec& spec) {
    return build(spec.M, spec.N, spec.kappa, spec.kind, spec.seed);
}

SpectralOperator SpectralOperator::with_spectrum(int M, int N, Vec singular_values,
                                                 OperatorKind kind,
                                                 std::uint64_t seed) {
    if (M < 1 || N < 1) throw InvalidConfig("operator dimensions must be >= 1");
    const int J = std::min(M, N);
    if (singular_values.size() != J)
        throw DimensionMismatch("spectrum length must be min(M, N)");
    for (int i = 0; i < J; ++i) {
        if (!(singular_values(i) >= 0.0))
            throw InvalidConfig("singular values must be nonnegative");
        if (i > 0 && singular_values(i) > singular_values(i - 1))
            throw InvalidConfig("singular values must be nonincreasing");
    }
    Rng rng_u = Rng::stream(seed, 0);
    Rng rng_v = Rng::stream(seed, 1);
    const double kappa =
        singular_values(J - 1) > 0.0 ? singular_values(0) / singular_values(J - 1) : 0.0;
    OperatorSpec spec{M, N, kappa, kind, seed};
    return SpectralOperator(M, N, std::move(singular_values),
                            make_factor(M, kind, rng_u), make_factor(N, kind, rng_v),
                            std::move(spec));
}

Vec SpectralOperator::apply(const Vec& x) const {
    if (x.size() != N_) throw DimensionMismatch("apply: expected length-N input");
    const int J = static_cast<int>(d_.size());
    Vec t = V_.apply_adjoint(x);
    Vec s = Vec::Zero(M_);
    for (int j = 0; j < J; ++j) s(j) = d_(j) * t(j);
    return U_.apply(s);
}

Vec SpectralOperator::apply_adjoint(const Vec& v) const {
    if (v.size() != M_) throw DimensionMismatch("apply_adjoint: expected length-M input");
    const int J = static_cast<int>(d_.size());
    Vec u = U_.apply_adjoint(v);
    Vec t = Vec::Zero(N_);
    for (int j = 0; j < J; ++j) t(j) = d_(j) * u(j);
    return V_.apply(t);
}

Vec SpectralOperator::apply_B(const Vec& u) const {
    if (u.size() != M_) throw DimensionMismatch("apply_B: expected length-M input");
    const int J = static_cast<int>(d_.size());
    Vec s = U_.apply_adjoint(u);
    for (int j = 0; j < M_; ++j) {
        const double ev = j < J ? d_(j) * d_(j) : 0.0;
        s(j) *= lambda_dagger_ - ev;
    }
    return U_.apply(s);
}

Vec SpectralOperator::solve_normal_adjoint(const Vec& r, double rho) const {
    if (r.size() != M_)
        throw DimensionMismatch("solve_normal_adjoint: expected length-M input");
    if (!(rho > 0.0)) throw InvalidConfig("regularizer must be positive");
    const int J = static_cast<int>(d_.size());
    Vec u = U_.apply_adjoint(r);
    Vec t = Vec::Zero(N_);
    for (int j = 0; j < J; ++j) t(j) = d_(j) * u(j) / (rho + d_(j) * d_(j));
    return V_.apply(t);
}

double SpectralOperator::resolvent_trace(double rho) const {
    if (!(rho > 0.0)) throw InvalidConfig("regularizer must be positive");
    double sum = 0.0;
    for (int j = 0; j < d_.size(); ++j) {
        const double d2 = d_(j) * d_(j);
        sum += d2 / (rho + d2);
    }
    return sum / M_;
}

Mat SpectralOperator::materialize() const {
    const int J = static_cast<int>(d_.size());
    Mat vm = V_.materialize();
    Mat sv = Mat::Zero(M_, N_);
    for (int j = 0; j < J; ++j) sv.row(j) = d_(j) * vm.col(j).transpose();
    return U_.materialize() * sv;
}

double SpectralMoments::resolvent_trace(double rho) const {
    if (!(rho > 0.0)) throw InvalidConfig("regularizer must be positive");
    if (rows < 1) throw InvalidConfig("moments carry no operator dimensions");
    double sum = 0.0;
    for (int j = 0; j < singular_values.size(); ++j) {
        const double d2 = singular_values(j) * singular_values(j);
        sum += d2 / (rho + d2);
    }
    return sum / rows;
}

SpectralMoments compute_moments(const SpectralOperator& op, int T) {
    if (T < 1) throw InvalidConfig("moment horizon must be >= 1");
    SpectralMoments m;
    m.lambda_min = op.lambda_min();
    m.lambda_max = op.lambda_max();
    m.lambda_dagger = op.lambda_dagger();
    m.delta = op.delta();
    m.rows = op.rows();
    m.cols = op.cols();
    m.max_iterations = T;
    m.singular_values = op.singular_values();

    const Vec& d = op.singular_values();
    const int J = static_cast<int>(d.size());
    const double inv_m = 1.0 / op.rows();

    const int n_w = 2 * T + 3;
    m.w = Vec::Zero(n_w);
    for (int j = 0; j < J; ++j) {
        const double d2 = d(j) * d(j);
        const double b = m.lambda_dagger - d2;
        double cur = d2;
        for (int t = 0; t < n_w; ++t) {
            m.w(t) += cur;
            cur *= b;
        }
    }
    m.w *= inv_m;
    m.lambda1 = m.w(0);

    m.wbar = Vec(n_w - 1);
    for (int i = 0; i + 1 < n_w; ++i) m.wbar(i) = m.lambda_dagger * m.w(i) - m.w(i + 1);
    m.wbarbar = Vec(n_w - 2);
    for (int i = 0; i + 2 < n_w; ++i)
        m.wbarbar(i) = m.lambda_dagger * m.wbar(i) - m.wbar(i + 1);

    m.wbar2 = Mat(T + 1, T + 1);
    m.wtilde = Mat(T + 1, T + 1);
    for (int i = 0; i <= T; ++i)
        for (int j = 0; j <= T; ++j) {
            m.wbar2(i, j) = m.wbar(i + j) - m.w(i) * m.w(j);
            m.wtilde(i, j) = m.wbar(i + j) / m.delta - m.w(i) * m.w(j);
        }
    return m;
}

SpectralOperator build_operator(int M, int N, double kappa, OperatorKind kind,
                                std::uint64_t seed) {
    return SpectralOperator::build(M, N, kappa, kind, seed);
}

}  // namespace glmamp
