#pragma once

// Finite-difference realization of the divergence-form operator
//   A u = d/dx (a du/dx) + b du/dx   on (x_lo, x_hi), u = 0 on the boundary,
// together with its resolvent, semigroup, Yosida approximants and the
// degenerate (sub-domain) restriction.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>

#include "spdelab/error.hpp"
#include "spdelab/expression.hpp"
#include "spdelab/grid.hpp"

namespace spdelab {

inline constexpr double kTolSector = 1e-6;

/// Scalar diffusion a(x) and drift b(x) with the uniform constants they are
/// audited against: a >= kappa and |a|, |b| <= bound.
struct CoefficientField {
    std::function<double(double)> a;
    std::function<double(double)> b;
    double kappa = 0.0;
    double bound = std::numeric_limits<double>::infinity();
    std::string label;

    static CoefficientField from_expressions(const Expression& a_expr, const Expression& b_expr, double n,
                                             double kappa, double bound) {
        CoefficientField c;
        c.a = [a_expr, n](double x) { return a_expr(x, n); };
        c.b = [b_expr, n](double x) { return b_expr(x, n); };
        c.kappa = kappa;
        c.bound = bound;
        c.label = "a=" + a_expr.source() + ";b=" + b_expr.source() + ";n=" + std::to_string(n);
        return c;
    }

    static CoefficientField constant(double a_value, double b_value = 0.0) {
        CoefficientField c;
        c.a = [a_value](double) { return a_value; };
        c.b = [b_value](double) { return b_value; };
        c.kappa = a_value;
        c.bound = std::max(std::abs(a_value), std::abs(b_value));
        c.label = "a=" + std::to_string(a_value) + ";b=" + std::to_string(b_value);
        return c;
    }
};

/// Where a coefficient field breaks one of its constraints.
struct CoefficientViolation {
    enum class Kind { ellipticity, bound } kind;
    std::string location;  // "half-node 12" or "node 3"
    double x = 0.0;
    double value = 0.0;

    std::string describe() const {
        std::ostringstream os;
        if (kind == Kind::ellipticity) {
            os << "(i) ellipticity violated: a(" << x << ") = " << value << " < kappa at " << location;
        } else {
            os << "(ii) sup-norm bound violated: |coefficient(" << x << ")| = " << value << " at " << location;
        }
        return os.str();
    }
};

/// First violation of (i) or (ii) on the evaluation nodes, if any.
/// Ellipticity is tested where the stencil samples a (half nodes) and the bound
/// on both nodes (b) and half nodes (a).
inline std::optional<CoefficientViolation> find_coefficient_violation(const SpatialGrid& grid,
                                                                      const CoefficientField& c) {
    for (std::size_t i = 0; i <= grid.m(); ++i) {
        const double x = grid.half_node(i);
        const double a = c.a(x);
        if (!(a >= c.kappa) || !(c.kappa > 0.0)) {
            return CoefficientViolation{CoefficientViolation::Kind::ellipticity, "half-node " + std::to_string(i), x, a};
        }
        if (!(std::abs(a) <= c.bound)) {
            return CoefficientViolation{CoefficientViolation::Kind::bound, "half-node " + std::to_string(i), x, a};
        }
    }
    for (std::size_t i = 0; i < grid.m(); ++i) {
        const double x = grid.node(i);
        const double b = c.b(x);
        if (!(std::abs(b) <= c.bound)) {
            return CoefficientViolation{CoefficientViolation::Kind::bound, "node " + std::to_string(i), x, b};
        }
    }
    return std::nullopt;
}

struct SectorBound {
    double M = 1.0;
    double w = 0.0;
};

/// Eigen-decomposition of a symmetric generator, eigenvectors embedded in the
/// full node space (zero rows outside the active set).
struct SpectralCache {
    Vector eigenvalues;
    Matrix eigenvectors;
};

/// Square generator matrix on a spatial grid. In degenerate mode only the
/// `active` nodes carry dynamics; the matrix vanishes outside the active block
/// and the projection pi zeroes inactive nodes.
class SectorialGenerator {
public:
    SectorialGenerator(SpatialGrid grid, Matrix A, SectorBound sector, std::vector<Eigen::Index> active = {})
        : grid_(std::move(grid)), A_(std::move(A)), sector_(sector), active_(std::move(active)) {
        const auto m = static_cast<Eigen::Index>(grid_.m());
        if (A_.rows() != m || A_.cols() != m) throw ValidationError("generator matrix must be m x m");
        if (!A_.allFinite()) throw ValidationError("generator matrix has non-finite entries");
        if (active_.empty()) {
            active_.resize(static_cast<std::size_t>(m));
            for (Eigen::Index i = 0; i < m; ++i) active_[static_cast<std::size_t>(i)] = i;
        } else {
            std::sort(active_.begin(), active_.end());
            active_.erase(std::unique(active_.begin(), active_.end()), active_.end());
            if (active_.front() < 0 || active_.back() >= m) throw ValidationError("active node index out of range");
        }
        mask_ = Vector::Zero(m);
        for (Eigen::Index i : active_) mask_[i] = 1.0;
        if (degenerate()) {
            // A = pi A pi: rows and columns outside the active block are zero.
            for (Eigen::Index i = 0; i < m; ++i) {
                if (mask_[i] == 0.0) {
                    A_.row(i).setZero();
                    A_.col(i).setZero();
                }
            }
        }
        symmetric_ = (A_ - A_.transpose()).cwiseAbs().maxCoeff() == 0.0;
        if (symmetric_) build_spectral();
    }

    const SpatialGrid& grid() const noexcept { return grid_; }
    const Matrix& matrix() const noexcept { return A_; }
    SectorBound sector() const noexcept { return sector_; }
    bool symmetric() const noexcept { return symmetric_; }
    bool degenerate() const noexcept { return active_.size() != grid_.m(); }
    const std::vector<Eigen::Index>& active() const noexcept { return active_; }
    const Vector& mask() const noexcept { return mask_; }
    const std::optional<SpectralCache>& spectral() const noexcept { return spectral_; }
    Eigen::Index active_size() const noexcept { return static_cast<Eigen::Index>(active_.size()); }

    Vector project(const Vector& x) const { return x.cwiseProduct(mask_); }

    Matrix active_block() const {
        const Eigen::Index k = active_size();
        Matrix B(k, k);
        for (Eigen::Index i = 0; i < k; ++i)
            for (Eigen::Index j = 0; j < k; ++j) B(i, j) = A_(active_[i], active_[j]);
        return B;
    }

    template <typename Vec>
    auto gather(const Vec& x) const {
        using Scalar = typename Vec::Scalar;
        Eigen::Matrix<Scalar, Eigen::Dynamic, 1> y(active_size());
        for (Eigen::Index i = 0; i < active_size(); ++i) y[i] = x[active_[i]];
        return y;
    }

    template <typename Vec>
    auto scatter(const Vec& y) const {
        using Scalar = typename Vec::Scalar;
        Eigen::Matrix<Scalar, Eigen::Dynamic, 1> x =
            Eigen::Matrix<Scalar, Eigen::Dynamic, 1>::Zero(static_cast<Eigen::Index>(grid_.m()));
        for (Eigen::Index i = 0; i < active_size(); ++i) x[active_[i]] = y[i];
        return x;
    }

    /// Embed an active-block matrix into the full node space.
    Matrix embed(const Matrix& block) const {
        const auto m = static_cast<Eigen::Index>(grid_.m());
        Matrix full = Matrix::Zero(m, m);
        for (Eigen::Index i = 0; i < active_size(); ++i)
            for (Eigen::Index j = 0; j < active_size(); ++j) full(active_[i], active_[j]) = block(i, j);
        return full;
    }

    SectorialGenerator with_sector(SectorBound s) const {
        SectorialGenerator g = *this;
        g.sector_ = s;
        return g;
    }

    double operator_norm() const {
        if (spectral_) return spectral_->eigenvalues.cwiseAbs().maxCoeff();
        Eigen::JacobiSVD<Matrix> svd(active_block());
        return svd.singularValues()[0];
    }

private:
    void build_spectral() {
        Eigen::SelfAdjointEigenSolver<Matrix> es(active_block());
        if (es.info() != Eigen::Success) return;
        SpectralCache cache;
        cache.eigenvalues = es.eigenvalues();
        cache.eigenvectors = Matrix::Zero(A_.rows(), active_size());
        for (Eigen::Index i = 0; i < active_size(); ++i) cache.eigenvectors.row(active_[i]) = es.eigenvectors().row(i);
        spectral_ = std::move(cache);
    }

    SpatialGrid grid_;
    Matrix A_;
    SectorBound sector_;
    std::vector<Eigen::Index> active_;
    Vector mask_;
    bool symmetric_ = false;
    std::optional<SpectralCache> spectral_;
};

// ---------------------------------------------------------------------------
// Sectoriality

namespace detail {

/// Operator 2-norm of (lambda - w) R(lambda, A) on the active block.
inline double scaled_resolvent_norm(const SectorialGenerator& g, const Matrix& block, std::complex<double> lambda,
                                    double w) {
    const double scale = std::abs(lambda - w);
    if (g.spectral()) {
        double best = 0.0;
        for (Eigen::Index k = 0; k < g.spectral()->eigenvalues.size(); ++k) {
            best = std::max(best, scale / std::abs(lambda - g.spectral()->eigenvalues[k]));
        }
        return best;
    }
    const Eigen::Index k = block.rows();
    CMatrix shifted = -block.cast<std::complex<double>>();
    shifted.diagonal().array() += lambda;
    Eigen::JacobiSVD<CMatrix> svd(shifted);
    const double smin = svd.singularValues()[k - 1];
    if (!(smin > 0.0)) return std::numeric_limits<double>::infinity();
    return scale / smin;
}

inline double max_real_eigenvalue(const SectorialGenerator& g, const Matrix& block) {
    if (g.spectral()) return g.spectral()->eigenvalues.maxCoeff();
    Eigen::EigenSolver<Matrix> es(block, false);
    if (es.info() != Eigen::Success) throw NumericError("eigenvalue computation failed");
    return es.eigenvalues().real().maxCoeff();
}

}  // namespace detail

/// Deterministic probe placement in {Re lambda > w}: `probe_count`
/// log-spaced moduli in [1e-2, 1e6] on seven rays whose angles reach
/// within 1e-6 of the imaginary axis.
inline std::vector<std::complex<double>> sectoriality_probes(double w, std::size_t probe_count) {
    const double half = std::numbers::pi / 2.0;
    const double angles[] = {0.0,
                             std::numbers::pi / 6.0,
                             -std::numbers::pi / 6.0,
                             std::numbers::pi / 3.0,
                             -std::numbers::pi / 3.0,
                             half * (1.0 - 1e-6),
                             -half * (1.0 - 1e-6)};
    std::vector<std::complex<double>> probes;
    probes.reserve(probe_count * 7);
    for (std::size_t j = 0; j < probe_count; ++j) {
        const double rho =
            std::pow(10.0, -2.0 + 8.0 * static_cast<double>(j) / static_cast<double>(probe_count - 1));
        for (double theta : angles) probes.push_back(w + std::polar(rho, theta));
    }
    return probes;
}

/// Empirical sup of ||(lambda - w) R(lambda, A)|| (L2 operator norm) over the
/// probe set. Throws SectorialityError if the spectrum reaches into
/// {Re lambda > w} or the sup blows up across probe scales.
inline SectorBound estimate_sectoriality(const SectorialGenerator& g, double w_candidate,
                                         std::size_t probe_count = 16) {
    if (probe_count < 16) throw ValidationError("estimate_sectoriality needs probe_count >= 16");
    if (!std::isfinite(w_candidate)) throw ValidationError("w must be finite");
    const Matrix block = g.active_block();
    const double top = detail::max_real_eigenvalue(g, block);
    const double scale = std::max(1.0, g.operator_norm());
    if (top > w_candidate + 1e-12 * scale) {
        std::ostringstream os;
        os << "not certifiably sectorial at w = " << w_candidate << ": spectrum reaches Re = " << top
           << "; try w > " << top;
        throw SectorialityError(os.str());
    }
    const auto probes = sectoriality_probes(w_candidate, probe_count);
    std::vector<double> per_scale(probe_count, 0.0);
    for (std::size_t idx = 0; idx < probes.size(); ++idx) {
        const double v = detail::scaled_resolvent_norm(g, block, probes[idx], w_candidate);
        per_scale[idx / 7] = std::max(per_scale[idx / 7], v);
    }
    const double M = *std::max_element(per_scale.begin(), per_scale.end());
    // Growth toward the vertex lambda -> w over three consecutive scales means
    // the bound is not uniform there.
    const bool vertex_blowup = per_scale[0] > 2.0 * per_scale[1] && per_scale[1] > 2.0 * per_scale[2];
    if (!std::isfinite(M) || M > 1e6 || vertex_blowup) {
        std::ostringstream os;
        os << "not certifiably sectorial at w = " << w_candidate << " (probe sup " << M
           << " diverges across scales); suggest a larger w";
        throw SectorialityError(os.str());
    }
    return SectorBound{std::max(1.0, M), w_candidate};
}

// ---------------------------------------------------------------------------
// Assembly

/// Second-order stencil for d/dx(a du/dx) + b du/dx with Dirichlet BC, a
/// sampled on half nodes and b centred on nodes.
inline SectorialGenerator assemble_divergence_form(const SpatialGrid& grid, const CoefficientField& coeffs,
                                                   double w_candidate = 0.0, std::size_t probe_count = 16) {
    if (auto bad = find_coefficient_violation(grid, coeffs); bad) {
        throw ValidationError("coefficient field rejected: " + bad->describe());
    }
    const auto m = static_cast<Eigen::Index>(grid.m());
    const double inv_h2 = 1.0 / (grid.h() * grid.h());
    const double inv_2h = 1.0 / (2.0 * grid.h());
    Matrix A = Matrix::Zero(m, m);
    for (Eigen::Index i = 0; i < m; ++i) {
        const auto iu = static_cast<std::size_t>(i);
        const double a_left = coeffs.a(grid.half_node(iu));
        const double a_right = coeffs.a(grid.half_node(iu + 1));
        const double b = coeffs.b(grid.node(iu));
        A(i, i) = -(a_left + a_right) * inv_h2;
        if (i > 0) A(i, i - 1) = a_left * inv_h2 - b * inv_2h;
        if (i + 1 < m) A(i, i + 1) = a_right * inv_h2 + b * inv_2h;
    }
    SectorialGenerator g(grid, std::move(A), SectorBound{1.0, w_candidate});
    return g.with_sector(estimate_sectoriality(g, w_candidate, probe_count));
}

// ---------------------------------------------------------------------------
// Resolvent

/// R_lambda(A) x = (lambda - A)^{-1} x; degenerate: iota R(lambda, A~) pi x.
inline CVector resolvent(const SectorialGenerator& g, std::complex<double> lambda, const CVector& x) {
    if (!(lambda.real() > g.sector().w)) {
        std::ostringstream os;
        os << "resolvent requested at Re lambda = " << lambda.real() << " <= w = " << g.sector().w;
        throw ValidationError(os.str());
    }
    if (x.size() != static_cast<Eigen::Index>(g.grid().m())) throw ValidationError("state vector size mismatch");
    CMatrix shifted = -g.active_block().cast<std::complex<double>>();
    shifted.diagonal().array() += lambda;
    Eigen::PartialPivLU<CMatrix> lu(shifted);
    const double rc = lu.rcond();
    if (!(rc > 1e-14)) throw NumericError("resolvent solve is ill-conditioned (rcond " + std::to_string(rc) + ")");
    return g.scatter(CVector(lu.solve(g.gather(x))));
}

inline Vector resolvent(const SectorialGenerator& g, double lambda, const Vector& x) {
    if (!(lambda > g.sector().w)) {
        throw ValidationError("resolvent requested at lambda = " + std::to_string(lambda) +
                              " <= w = " + std::to_string(g.sector().w));
    }
    if (x.size() != static_cast<Eigen::Index>(g.grid().m())) throw ValidationError("state vector size mismatch");
    Matrix shifted = -g.active_block();
    shifted.diagonal().array() += lambda;
    Eigen::PartialPivLU<Matrix> lu(shifted);
    const double rc = lu.rcond();
    if (!(rc > 1e-14)) throw NumericError("resolvent solve is ill-conditioned (rcond " + std::to_string(rc) + ")");
    return g.scatter(Vector(lu.solve(g.gather(x))));
}

// ---------------------------------------------------------------------------
// Yosida approximants

/// A_n = n^2 R(n, A) - n on the active block. The sector certificate is
/// inherited from g and re-audited by probing.
inline SectorialGenerator yosida(const SectorialGenerator& g, double n) {
    if (!(n > g.sector().w)) {
        throw ValidationError("Yosida index n = " + std::to_string(n) + " must exceed w = " +
                              std::to_string(g.sector().w));
    }
    Matrix shifted = -g.active_block();
    shifted.diagonal().array() += n;
    Eigen::PartialPivLU<Matrix> lu(shifted);
    Matrix An = n * n * lu.inverse();
    An.diagonal().array() -= n;
    if (g.symmetric()) An = 0.5 * (An + An.transpose()).eval();
    SectorialGenerator out(g.grid(), g.embed(An), g.sector(), g.degenerate() ? g.active() : std::vector<Eigen::Index>{});
    const SectorBound probed = estimate_sectoriality(out, g.sector().w);
    return out.with_sector(SectorBound{std::max(g.sector().M, probed.M), g.sector().w});
}

// ---------------------------------------------------------------------------
// Semigroup

enum class ExpMethod { automatic, eigendecomposition, pade };

/// Evaluates S(t) = exp(tA) (degenerate: iota exp(tA~) pi). Matrices are
/// cached per t; cache fills are serialized, so evaluators can be shared by
/// concurrent workers.
class SemigroupEvaluator {
public:
    explicit SemigroupEvaluator(std::shared_ptr<const SectorialGenerator> g, ExpMethod method = ExpMethod::automatic)
        : g_(std::move(g)), cache_(std::make_shared<Cache>()) {
        if (!g_) throw ValidationError("semigroup evaluator needs a generator");
        if (method == ExpMethod::automatic) {
            method_ = g_->spectral() ? ExpMethod::eigendecomposition : ExpMethod::pade;
        } else if (method == ExpMethod::eigendecomposition && !g_->spectral()) {
            throw ValidationError("eigendecomposition path requires a symmetric generator");
        } else {
            method_ = method;
        }
    }

    explicit SemigroupEvaluator(const SectorialGenerator& g, ExpMethod method = ExpMethod::automatic)
        : SemigroupEvaluator(std::make_shared<const SectorialGenerator>(g), method) {}

    const SectorialGenerator& generator() const noexcept { return *g_; }
    std::shared_ptr<const SectorialGenerator> generator_ptr() const noexcept { return g_; }
    ExpMethod method() const noexcept { return method_; }

    /// Full m x m matrix of S(t); the reference stays valid for the
    /// evaluator's lifetime.
    const Matrix& matrix(double t) const {
        check_time(t);
        std::lock_guard<std::mutex> lock(cache_->mutex);
        auto it = cache_->by_time.find(t);
        if (it != cache_->by_time.end()) return it->second;
        return cache_->by_time.emplace(t, compute(t)).first->second;
    }

    Vector apply(double t, const Vector& x) const {
        check_time(t);
        if (x.size() != static_cast<Eigen::Index>(g_->grid().m())) {
            throw ValidationError("state vector size mismatch");
        }
        if (t == 0.0) return g_->project(x);
        if (method_ == ExpMethod::eigendecomposition) {
            const auto& sp = *g_->spectral();
            const Vector coeffs = sp.eigenvectors.transpose() * x;
            return sp.eigenvectors * (coeffs.array() * (t * sp.eigenvalues.array()).exp()).matrix();
        }
        return matrix(t) * x;
    }

    /// A S(t) x.
    Vector apply_generator(double t, const Vector& x) const {
        check_time(t);
        if (method_ == ExpMethod::eigendecomposition) {
            const auto& sp = *g_->spectral();
            const Vector coeffs = sp.eigenvectors.transpose() * x;
            return sp.eigenvectors *
                   (coeffs.array() * sp.eigenvalues.array() * (t * sp.eigenvalues.array()).exp()).matrix();
        }
        return g_->matrix() * apply(t, x);
    }

private:
    struct Cache {
        std::mutex mutex;
        std::map<double, Matrix> by_time;
    };

    static void check_time(double t) {
        if (!std::isfinite(t)) throw ValidationError("semigroup time must be finite");
        if (t < 0.0) throw ValidationError("semigroup time must be >= 0");
    }

    Matrix compute(double t) const {
        if (t == 0.0) return g_->mask().asDiagonal();
        Matrix block;
        if (method_ == ExpMethod::eigendecomposition) {
            const auto& sp = *g_->spectral();
            Matrix S = sp.eigenvectors * (t * sp.eigenvalues.array()).exp().matrix().asDiagonal() *
                       sp.eigenvectors.transpose();
            if (!S.allFinite()) throw NumericError("semigroup evaluation produced non-finite entries");
            return S;
        }
        const Matrix tA = t * g_->active_block();
        block = tA.exp();
        if (!block.allFinite()) throw NumericError("Pade scaling-and-squaring produced non-finite entries");
        return g_->embed(block);
    }

    std::shared_ptr<const SectorialGenerator> g_;
    ExpMethod method_ = ExpMethod::automatic;
    std::shared_ptr<Cache> cache_;
};

// ---------------------------------------------------------------------------
// Degenerate restriction

/// Index of the grid point (0..m+1, boundaries included) nearest to x.
inline std::size_t snap_to_grid_point(const SpatialGrid& grid, double x) {
    const double j = std::round((x - grid.x_lo()) / grid.h());
    return static_cast<std::size_t>(std::clamp(j, 0.0, static_cast<double>(grid.m() + 1)));
}

/// Zero-extension of the Dirichlet operator on (sub_lo, sub_hi): endpoints
/// snap to the nearest grid points and the nodes strictly between them stay
/// active. Intersects with an existing mask.
inline SectorialGenerator restrict_to_subdomain(const SectorialGenerator& g, double sub_lo, double sub_hi) {
    const SpatialGrid& grid = g.grid();
    const double slack = 1e-12 * grid.length();
    if (!(sub_lo < sub_hi) || sub_lo < grid.x_lo() - slack || sub_hi > grid.x_hi() + slack) {
        throw ValidationError("sub-interval must satisfy x_lo <= sub_lo < sub_hi <= x_hi");
    }
    const std::size_t j_lo = snap_to_grid_point(grid, sub_lo);
    const std::size_t j_hi = snap_to_grid_point(grid, sub_hi);
    std::vector<Eigen::Index> active;
    for (Eigen::Index i : g.active()) {
        const auto j = static_cast<std::size_t>(i) + 1;  // grid-point index of node i
        if (j > j_lo && j < j_hi) active.push_back(i);
    }
    if (active.empty()) throw ValidationError("restriction leaves no active nodes");
    if (active.size() == grid.m()) return g;
    SectorialGenerator out(grid, g.matrix(), g.sector(), active);
    const SectorBound probed = estimate_sectoriality(out, g.sector().w);
    return out.with_sector(SectorBound{std::max(g.sector().M, probed.M), g.sector().w});
}

// ---------------------------------------------------------------------------
// Trotter-Kato audit

struct TrotterKatoRow {
    std::size_t member = 0;
    std::size_t probe = 0;
    double resolvent_error = 0.0;
    double semigroup_error = 0.0;  // sup over the time grid
    double generator_error = 0.0;  // sup of ||A_n S_n(t)x - A S(t)x||
};

/// Resolvent, semigroup and A S(t) discrepancies of each family member against
/// the limit, in the Lr quadrature norm, for t on `times` (all > 0).
inline std::vector<TrotterKatoRow> trotter_kato_check(std::span<const std::shared_ptr<const SectorialGenerator>> family,
                                                      const std::shared_ptr<const SectorialGenerator>& limit,
                                                      std::complex<double> lambda, std::span<const Vector> probes,
                                                      std::span<const double> times) {
    if (!limit) throw ValidationError("trotter_kato_check needs a limit generator");
    for (double t : times) {
        if (!(t > 0.0)) throw ValidationError("Trotter-Kato time grid must lie in (0, T]");
    }
    const SpatialGrid& grid = limit->grid();
    for (const auto& gn : family) {
        if (!gn || !gn->grid().same_as(grid)) {
            throw ValidationError("Trotter-Kato family must share the limit's spatial grid (embed via masks)");
        }
    }
    const auto abs_norm = [&grid](const CVector& z) { return grid.norm(Vector(z.cwiseAbs())); };
    const SemigroupEvaluator limit_ev(limit);
    std::vector<TrotterKatoRow> rows;
    for (std::size_t n = 0; n < family.size(); ++n) {
        const SemigroupEvaluator ev(family[n]);
        for (std::size_t p = 0; p < probes.size(); ++p) {
            TrotterKatoRow row{n, p};
            const CVector x = probes[p].cast<std::complex<double>>();
            if (family[n] == limit) {
                rows.push_back(row);
                continue;
            }
            row.resolvent_error = abs_norm(resolvent(*family[n], lambda, x) - resolvent(*limit, lambda, x));
            for (double t : times) {
                row.semigroup_error =
                    std::max(row.semigroup_error, grid.norm(ev.apply(t, probes[p]) - limit_ev.apply(t, probes[p])));
                row.generator_error = std::max(row.generator_error, grid.norm(ev.apply_generator(t, probes[p]) -
                                                                              limit_ev.apply_generator(t, probes[p])));
            }
            rows.push_back(row);
        }
    }
    return rows;
}

}  // namespace spdelab
