#pragma once

// Mild solutions X = S(.)xi + S*F(X) + S<>G(X) on the spatial grid.
// The production scheme is exponential Euler with left-point noise:
//   X_{m+1} = S(dt) (X_m + dt F(X_m) + G(X_m) dW_m).
// The Picard iteration is kept as an independent route to the fixed point.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "spdelab/domain_ops.hpp"
#include "spdelab/error.hpp"
#include "spdelab/expression.hpp"
#include "spdelab/grid.hpp"
#include "spdelab/noise.hpp"
#include "spdelab/rng.hpp"

namespace spdelab {

// ---------------------------------------------------------------------------
// Nonlinearities

struct LipschitzAudit {
    bool passed = true;
    std::string hypothesis;
    double lipschitz_base = 0.0;
    double lipschitz_refined = 0.0;
    double lipschitz_extended = 0.0;
    double growth = 0.0;
    std::string message;
};

namespace detail {

inline double max_adjacent_slope(const Expression& f, double x, double n, double lo, double hi, std::size_t points) {
    const double du = (hi - lo) / static_cast<double>(points - 1);
    double prev = f(x, n, lo);
    double best = 0.0;
    for (std::size_t i = 1; i < points; ++i) {
        const double u = lo + static_cast<double>(i) * du;
        const double cur = f(x, n, u);
        if (!std::isfinite(cur)) return std::numeric_limits<double>::infinity();
        best = std::max(best, std::abs(cur - prev) / du);
        prev = cur;
    }
    return best;
}

inline double max_growth_ratio(const Expression& f, double x, double n, double lo, double hi, std::size_t points) {
    const double du = (hi - lo) / static_cast<double>(points - 1);
    double best = 0.0;
    for (std::size_t i = 0; i < points; ++i) {
        const double u = lo + static_cast<double>(i) * du;
        const double v = f(x, n, u);
        if (!std::isfinite(v)) return std::numeric_limits<double>::infinity();
        best = std::max(best, std::abs(v) / (1.0 + std::abs(u)));
    }
    return best;
}

}  // namespace detail

/// Probe-lattice audit of |f(u) - f(v)| <= L |u - v| and |f(u)| <= C (1 + |u|).
/// The base lattice has 10^4 points on [-U, U]; a 10x refinement and a 10x
/// wider range at base spacing must not raise the slope estimate by more than
/// 5%, which catches superlinear growth outside the probe window.
inline LipschitzAudit audit_lipschitz(const Expression& f, double L, double C, const std::string& hypothesis,
                                      std::span<const double> x_probes, double U = 10.0, double n = 0.0) {
    constexpr std::size_t kBase = 10000;
    LipschitzAudit a;
    a.hypothesis = hypothesis;
    const double zero_x[] = {0.0};
    if (x_probes.empty()) x_probes = zero_x;
    for (double x : x_probes) {
        a.lipschitz_base = std::max(a.lipschitz_base, detail::max_adjacent_slope(f, x, n, -U, U, kBase));
        a.lipschitz_refined = std::max(a.lipschitz_refined, detail::max_adjacent_slope(f, x, n, -U, U, 10 * kBase));
        a.lipschitz_extended =
            std::max(a.lipschitz_extended, detail::max_adjacent_slope(f, x, n, -10.0 * U, 10.0 * U, 10 * kBase - 9));
        a.growth = std::max(a.growth, detail::max_growth_ratio(f, x, n, -10.0 * U, 10.0 * U, 10 * kBase - 9));
    }
    const double observed = std::max({a.lipschitz_base, a.lipschitz_refined, a.lipschitz_extended});
    auto fail = [&](std::string why) {
        a.passed = false;
        a.message = hypothesis + " violated for '" + f.source() + "': " + std::move(why);
    };
    if (!std::isfinite(observed)) {
        fail("non-finite values on the probe lattice");
    } else if (a.lipschitz_refined > 1.05 * a.lipschitz_base + 1e-12 ||
               a.lipschitz_extended > 1.05 * a.lipschitz_base + 1e-12) {
        fail("slope estimate grows under refinement or range extension (" + std::to_string(a.lipschitz_base) +
             " -> " + std::to_string(std::max(a.lipschitz_refined, a.lipschitz_extended)) + "), not Lipschitz");
    } else if (observed > L * (1.0 + 1e-9)) {
        fail("observed Lipschitz constant " + std::to_string(observed) + " exceeds declared " + std::to_string(L));
    } else if (a.growth > C * (1.0 + 1e-9)) {
        fail("observed growth constant " + std::to_string(a.growth) + " exceeds declared " + std::to_string(C));
    }
    return a;
}

/// Nemytskii drift [F(u)](x) = f(x, u(x)).
struct NonlinearityF {
    Expression f = Expression::constant(0.0);
    double L_F = 0.0;
    double C_F = 0.0;
    double n = 0.0;  // value bound to the template variable n

    static NonlinearityF zero() { return NonlinearityF{}; }

    void apply(const SpatialGrid& grid, const Vector& u, Vector& out) const {
        out.resize(u.size());
        for (Eigen::Index i = 0; i < u.size(); ++i) out[i] = f(grid.node(static_cast<std::size_t>(i)), n, u[i]);
    }

    Vector apply(const SpatialGrid& grid, const Vector& u) const {
        Vector out;
        apply(grid, u, out);
        return out;
    }

    bool is_zero() const { return !f.uses(ExprVar::u) && !f.uses(ExprVar::x) && f(0.0, n) == 0.0; }

    LipschitzAudit audit(std::span<const double> x_probes = {}, double U = 10.0) const {
        return audit_lipschitz(f, L_F, C_F, "(F1)", x_probes, U, n);
    }
};

/// Diagonal noise coefficient [G(u) e_k](x) = g_k(x, u(x)).
struct NonlinearityG {
    std::vector<Expression> g;
    double L_G = 0.0;
    double C_G = 0.0;
    double n = 0.0;

    static NonlinearityG zero(std::size_t K) {
        NonlinearityG G;
        G.g.assign(K, Expression::constant(0.0));
        return G;
    }

    std::size_t channels() const noexcept { return g.size(); }

    /// m x K matrix of G(u).
    Matrix apply(const SpatialGrid& grid, const Vector& u) const {
        Matrix out(u.size(), static_cast<Eigen::Index>(g.size()));
        for (std::size_t k = 0; k < g.size(); ++k)
            for (Eigen::Index i = 0; i < u.size(); ++i)
                out(i, static_cast<Eigen::Index>(k)) = g[k](grid.node(static_cast<std::size_t>(i)), n, u[i]);
        return out;
    }

    /// out += G(u) dw without forming the matrix; channels with dw_k == 0
    /// (projected away) are skipped.
    void apply_increment(const SpatialGrid& grid, const Vector& u, const Vector& dw, Vector& out) const {
        for (std::size_t k = 0; k < g.size(); ++k) {
            const double w = dw[static_cast<Eigen::Index>(k)];
            if (w == 0.0) continue;
            for (Eigen::Index i = 0; i < u.size(); ++i) out[i] += w * g[k](grid.node(static_cast<std::size_t>(i)), n, u[i]);
        }
    }

    std::vector<LipschitzAudit> audit(std::span<const double> x_probes = {}, double U = 10.0) const {
        std::vector<LipschitzAudit> out;
        for (const auto& gk : g) out.push_back(audit_lipschitz(gk, L_G, C_G, "(G1)", x_probes, U, n));
        return out;
    }
};

// ---------------------------------------------------------------------------
// Initial datum

/// xi(x) = profile(x) + sigma * sum_{k=1..4} gamma_k sin(k pi (x - x_lo)/L) / k,
/// with gamma_k drawn from the initial-datum stream family, which is disjoint
/// from every Brownian stream. sigma = 0 gives a deterministic datum.
struct InitialDatum {
    Expression profile = Expression::constant(0.0);
    double n = 0.0;
    double sigma = 0.0;
    std::uint64_t seed = 0;

    static constexpr std::uint32_t kModes = 4;

    bool deterministic() const noexcept { return sigma == 0.0; }

    Vector sample(const SpatialGrid& grid, std::uint64_t stream_id) const {
        Vector xi(static_cast<Eigen::Index>(grid.m()));
        std::array<double, kModes> amp{};
        if (!deterministic()) {
            for (std::uint32_t k = 0; k < kModes; ++k)
                amp[k] = sigma * gaussian(seed, StreamDomain::initial_datum, stream_id, k, 0) / (k + 1.0);
        }
        for (std::size_t i = 0; i < grid.m(); ++i) {
            const double x = grid.node(i);
            double v = profile(x, n);
            if (!deterministic()) {
                const double s = (x - grid.x_lo()) / grid.length();
                for (std::uint32_t k = 0; k < kModes; ++k) v += amp[k] * std::sin((k + 1.0) * std::numbers::pi * s);
            }
            xi[static_cast<Eigen::Index>(i)] = v;
        }
        return xi;
    }
};

// ---------------------------------------------------------------------------
// Trajectories

class PathProcess {
public:
    PathProcess(TimeGrid time, SpatialGrid space, RowMatrix values, std::uint64_t seed = 0, std::uint64_t stream_id = 0)
        : time_(time), space_(space), values_(std::move(values)), seed_(seed), stream_id_(stream_id) {
        if (values_.rows() != static_cast<Eigen::Index>(time_.steps() + 1) ||
            values_.cols() != static_cast<Eigen::Index>(space_.m())) {
            throw ValidationError("path values must be (N+1) x m");
        }
    }

    static PathProcess zeros(const TimeGrid& time, const SpatialGrid& space) {
        return PathProcess(time, space,
                           RowMatrix::Zero(static_cast<Eigen::Index>(time.steps() + 1), static_cast<Eigen::Index>(space.m())));
    }

    const TimeGrid& time() const noexcept { return time_; }
    const SpatialGrid& space() const noexcept { return space_; }
    const RowMatrix& values() const noexcept { return values_; }
    RowMatrix& values() noexcept { return values_; }
    std::uint64_t seed() const noexcept { return seed_; }
    std::uint64_t stream_id() const noexcept { return stream_id_; }
    std::size_t steps() const noexcept { return time_.steps(); }

    Vector at(std::size_t m) const { return values_.row(static_cast<Eigen::Index>(m)).transpose(); }

    std::span<const double> row(std::size_t m) const {
        return {values_.data() + static_cast<std::ptrdiff_t>(m) * values_.cols(), static_cast<std::size_t>(values_.cols())};
    }

    bool same_grids(const PathProcess& o) const { return time_.same_as(o.time_) && space_.same_as(o.space_); }

    PathProcess operator-(const PathProcess& o) const {
        if (!same_grids(o)) throw ValidationError("path difference needs identical grids");
        return PathProcess(time_, space_, values_ - o.values_, seed_, stream_id_);
    }

private:
    TimeGrid time_;
    SpatialGrid space_;
    RowMatrix values_;
    std::uint64_t seed_;
    std::uint64_t stream_id_;
};

namespace detail {

inline void require_finite(const Vector& x, std::size_t step) {
    if (!x.allFinite()) {
        throw SolverAbort("non-finite state at step " + std::to_string(step) +
                              " (stiff problem or time step too large for the configuration)",
                          step);
    }
}

}  // namespace detail

/// Y_0 = 0, Y_{m+1} = S(dt)(Y_m + dt f(t_m)). `f_path` needs rows 0..N-1.
inline PathProcess det_convolution(const SemigroupEvaluator& ev, const RowMatrix& f_path, const TimeGrid& grid) {
    const SpatialGrid& space = ev.generator().grid();
    if (f_path.rows() < static_cast<Eigen::Index>(grid.steps()) || f_path.cols() != static_cast<Eigen::Index>(space.m())) {
        throw ValidationError("convolution integrand must have N rows of length m");
    }
    PathProcess Y = PathProcess::zeros(grid, space);
    const Matrix& S = ev.matrix(grid.dt());
    Vector y = Vector::Zero(static_cast<Eigen::Index>(space.m()));
    for (std::size_t m = 0; m < grid.steps(); ++m) {
        const Vector rhs = y + grid.dt() * f_path.row(static_cast<Eigen::Index>(m)).transpose();
        y.noalias() = S * rhs;
        Y.values().row(static_cast<Eigen::Index>(m + 1)) = y.transpose();
    }
    return Y;
}

/// Z_0 = 0, Z_{m+1} = S(dt)(Z_m + Phi(t_m) dW_m); `phi[m]` is m x K.
inline PathProcess stoch_convolution(const SemigroupEvaluator& ev, std::span<const Matrix> phi, const BrownianPath& path) {
    const SpatialGrid& space = ev.generator().grid();
    const TimeGrid& grid = path.grid();
    if (phi.size() < grid.steps()) throw ValidationError("stochastic integrand must be given at t_0..t_{N-1}");
    PathProcess Z = PathProcess::zeros(grid, space);
    Z = PathProcess(grid, space, Z.values(), path.seed(), path.stream_id());
    const Matrix& S = ev.matrix(grid.dt());
    Vector z = Vector::Zero(static_cast<Eigen::Index>(space.m()));
    for (std::size_t m = 0; m < grid.steps(); ++m) {
        if (phi[m].rows() != z.size() || phi[m].cols() != static_cast<Eigen::Index>(path.channels())) {
            throw ValidationError("stochastic integrand values must be m x K");
        }
        const Vector rhs = z + phi[m] * path.increment(m);
        z.noalias() = S * rhs;
        Z.values().row(static_cast<Eigen::Index>(m + 1)) = z.transpose();
    }
    return Z;
}

inline void check_solver_inputs(const SemigroupEvaluator& ev, const NonlinearityG& G, const Vector& xi,
                                const BrownianPath& path) {
    if (xi.size() != static_cast<Eigen::Index>(ev.generator().grid().m())) {
        throw ValidationError("initial datum does not match the spatial grid");
    }
    if (G.channels() != path.channels()) {
        throw ValidationError("noise coefficient has " + std::to_string(G.channels()) + " channels, path has " +
                              std::to_string(path.channels()));
    }
}

/// Exponential Euler. In degenerate mode the start value is pi xi and every
/// later state is in the range of pi because S(dt) = iota exp(dt A~) pi.
inline PathProcess solve_exponential_euler(const SemigroupEvaluator& ev, const NonlinearityF& F, const NonlinearityG& G,
                                           const Vector& xi, const BrownianPath& path) {
    check_solver_inputs(ev, G, xi, path);
    const SectorialGenerator& g = ev.generator();
    const SpatialGrid& space = g.grid();
    const TimeGrid& grid = path.grid();
    const double dt = grid.dt();
    const Matrix& S = ev.matrix(dt);
    const bool has_drift = !F.is_zero();
    RowMatrix values(static_cast<Eigen::Index>(grid.steps() + 1), xi.size());
    Vector x = g.project(xi);
    detail::require_finite(x, 0);
    values.row(0) = x.transpose();
    Vector rhs(x.size());
    Vector drift(x.size());
    for (std::size_t m = 0; m < grid.steps(); ++m) {
        rhs = x;
        if (has_drift) {
            F.apply(space, x, drift);
            rhs += dt * drift;
        }
        G.apply_increment(space, x, path.increment(m), rhs);
        x.noalias() = S * rhs;
        detail::require_finite(x, m + 1);
        values.row(static_cast<Eigen::Index>(m + 1)) = x.transpose();
    }
    return PathProcess(grid, space, std::move(values), path.seed(), path.stream_id());
}

inline PathProcess solve_exponential_euler(const SemigroupEvaluator& ev, const NonlinearityF& F, const NonlinearityG& G,
                                           const InitialDatum& xi, const BrownianPath& path) {
    return solve_exponential_euler(ev, F, G, xi.sample(ev.generator().grid(), path.stream_id()), path);
}

// ---------------------------------------------------------------------------
// Picard oracle

/// Quadrature for the deterministic convolution inside the Picard map. The
/// left-point rule reproduces the Euler scheme's discrete fixed point; the
/// trapezoidal rule is a genuinely different discretization of the same mild
/// equation, so its distance to Euler measures consistency.
enum class ConvolutionRule { left_point, trapezoidal };

struct PicardOptions {
    std::size_t iterations = 50;
    double tol = 1e-12;
    ConvolutionRule rule = ConvolutionRule::left_point;
};

struct PicardResult {
    PathProcess process;
    std::size_t iterations = 0;
    double last_increment = 0.0;
    double contraction_ratio = 0.0;
    bool converged = false;
};

/// Trapezoidal convolution: Y_{m+1} = S(dt)(Y_m + dt/2 f_m) + dt/2 f_{m+1}.
inline PathProcess det_convolution_trapezoidal(const SemigroupEvaluator& ev, const RowMatrix& f_path, const TimeGrid& grid) {
    const SpatialGrid& space = ev.generator().grid();
    if (f_path.rows() != static_cast<Eigen::Index>(grid.steps() + 1) || f_path.cols() != static_cast<Eigen::Index>(space.m())) {
        throw ValidationError("trapezoidal convolution needs the integrand at t_0..t_N");
    }
    PathProcess Y = PathProcess::zeros(grid, space);
    const Matrix& S = ev.matrix(grid.dt());
    const double half = 0.5 * grid.dt();
    Vector y = Vector::Zero(static_cast<Eigen::Index>(space.m()));
    for (std::size_t m = 0; m < grid.steps(); ++m) {
        const Vector rhs = y + half * f_path.row(static_cast<Eigen::Index>(m)).transpose();
        y.noalias() = S * rhs;
        y += ev.generator().project(half * f_path.row(static_cast<Eigen::Index>(m + 1)).transpose());
        Y.values().row(static_cast<Eigen::Index>(m + 1)) = y.transpose();
    }
    return Y;
}

inline double sup_increment(const PathProcess& a, const PathProcess& b) {
    double best = 0.0;
    for (std::size_t m = 0; m <= a.steps(); ++m) best = std::max(best, a.space().distance(a.row(m), b.row(m)));
    return best;
}

/// phi_{k+1} = S(.)xi + S*F(phi_k) + S<>G(phi_k) from phi_0 = S(.)xi on the
/// same Brownian path. Throws PicardDivergence after three consecutive
/// non-contracting steps.
inline PicardResult picard_solve(const SemigroupEvaluator& ev, const NonlinearityF& F, const NonlinearityG& G,
                                 const Vector& xi, const BrownianPath& path, PicardOptions opt = {}) {
    if (opt.iterations == 0) throw ValidationError("Picard iteration needs iterations >= 1");
    check_solver_inputs(ev, G, xi, path);
    const SpatialGrid& space = ev.generator().grid();
    const TimeGrid& grid = path.grid();
    const auto N = static_cast<Eigen::Index>(grid.steps());
    const auto m = static_cast<Eigen::Index>(space.m());

    // S(t_m) xi by repeated application of S(dt), matching the Euler scheme.
    RowMatrix free(N + 1, m);
    {
        const Matrix& S = ev.matrix(grid.dt());
        Vector x = ev.generator().project(xi);
        free.row(0) = x.transpose();
        for (Eigen::Index k = 0; k < N; ++k) {
            x = S * x;
            free.row(k + 1) = x.transpose();
        }
    }
    PathProcess phi(grid, space, free, path.seed(), path.stream_id());
    PicardResult result{phi};
    double prev_inc = std::numeric_limits<double>::infinity();
    int strikes = 0;
    for (std::size_t it = 1; it <= opt.iterations; ++it) {
        RowMatrix f_path(N + 1, m);
        std::vector<Matrix> g_path(static_cast<std::size_t>(N));
        for (Eigen::Index k = 0; k <= N; ++k) {
            const Vector u = phi.at(static_cast<std::size_t>(k));
            f_path.row(k) = F.apply(space, u).transpose();
            if (k < N) g_path[static_cast<std::size_t>(k)] = G.apply(space, u);
        }
        const PathProcess det = opt.rule == ConvolutionRule::left_point ? det_convolution(ev, f_path, grid)
                                                                        : det_convolution_trapezoidal(ev, f_path, grid);
        const PathProcess sto = stoch_convolution(ev, g_path, path);
        PathProcess next(grid, space, free + det.values() + sto.values(), path.seed(), path.stream_id());
        if (!next.values().allFinite()) throw SolverAbort("Picard iterate became non-finite", it);
        const double inc = sup_increment(next, phi);
        const double ratio = std::isfinite(prev_inc) && prev_inc > 0.0 ? inc / prev_inc : 0.0;
        phi = std::move(next);
        result.iterations = it;
        result.last_increment = inc;
        if (std::isfinite(prev_inc) && prev_inc > 0.0) result.contraction_ratio = ratio;
        if (inc <= opt.tol) {
            result.converged = true;
            break;
        }
        strikes = (std::isfinite(prev_inc) && ratio >= 1.0) ? strikes + 1 : 0;
        if (strikes >= 3) {
            throw PicardDivergence("Picard map is not contracting (ratio " + std::to_string(ratio) +
                                   " for 3 consecutive iterations); shorten the horizon T");
        }
        prev_inc = inc;
    }
    result.process = std::move(phi);
    return result;
}

// ---------------------------------------------------------------------------
// Coupled solves

struct ProblemData {
    std::shared_ptr<const SemigroupEvaluator> semigroup;
    NonlinearityF F;
    NonlinearityG G;
    InitialDatum xi;
};

/// Solves both problems on the same Brownian increments and the same xi
/// stream (the path's stream id).
inline std::pair<PathProcess, PathProcess> solve_coupled(const ProblemData& a, const ProblemData& b,
                                                         const BrownianPath& path) {
    if (!a.semigroup || !b.semigroup) throw ValidationError("coupled solve needs two semigroups");
    if (!a.semigroup->generator().grid().same_as(b.semigroup->generator().grid())) {
        throw ValidationError("coupled problems live on different spatial grids");
    }
    if (a.G.channels() != b.G.channels()) throw ValidationError("coupled problems use different channel counts");
    const SpatialGrid& space = a.semigroup->generator().grid();
    auto xa = solve_exponential_euler(*a.semigroup, a.F, a.G, a.xi.sample(space, path.stream_id()), path);
    auto xb = solve_exponential_euler(*b.semigroup, b.F, b.G, b.xi.sample(space, path.stream_id()), path);
    return {std::move(xa), std::move(xb)};
}

// ---------------------------------------------------------------------------
// Trajectory dump

/// CSV header t,x_1..x_m then one row per time node, %.17g.
inline void write_trajectory_csv(std::ostream& os, const PathProcess& X) {
    os << "t";
    for (std::size_t i = 1; i <= X.space().m(); ++i) os << ",x_" << i;
    os << '\n';
    char buf[32];
    for (std::size_t m = 0; m <= X.steps(); ++m) {
        std::snprintf(buf, sizeof buf, "%.17g", X.time().node(m));
        os << buf;
        for (double v : X.row(m)) {
            std::snprintf(buf, sizeof buf, "%.17g", v);
            os << ',' << buf;
        }
        os << '\n';
    }
}

}  // namespace spdelab
