#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "spdelab/domain_ops.hpp"
#include "spdelab/error.hpp"
#include "spdelab/gamma_calc.hpp"
#include "spdelab/mild_solver.hpp"

namespace spdelab {

enum class NormKind { sup_C, holder_C_lambda, v_alpha_p };

inline const char* to_string(NormKind k) {
    switch (k) {
        case NormKind::sup_C: return "sup_C";
        case NormKind::holder_C_lambda: return "compensated_holder";
        case NormKind::v_alpha_p: return "v_alpha";
    }
    return "?";
}

struct NormSpec {
    NormKind kind = NormKind::sup_C;
    double lambda = 0.25;
    double alpha = 0.3;
    double p = 8.0;
    double q = 2.0;

    /// Throws ValidationError naming the violated window. The type of Lr is
    /// tau = min(r, 2); the Hölder target additionally needs
    /// 1/tau - 1/2 < lambda, which only bites for r < 2.
    void validate(double r = 2.0) const {
        if (!(p > 2.0) || !std::isfinite(p)) throw ValidationError("p must satisfy 2 < p < inf");
        if (!(q > 0.0 && q < p)) throw ValidationError("q must satisfy 0 < q < p");
        if (kind == NormKind::v_alpha_p && !(alpha > 1.0 / p && alpha < 0.5)) {
            throw ValidationError("alpha must satisfy 1/p < alpha < 1/2");
        }
        if (kind == NormKind::holder_C_lambda) {
            const double tau = std::min(r, 2.0);
            if (!(lambda >= 0.0)) throw ValidationError("lambda must be >= 0");
            if (!(lambda < 0.5 - 1.0 / p)) {
                throw ValidationError("lambda must be < 1/2 - 1/p (= " + std::to_string(0.5 - 1.0 / p) + ")");
            }
            if (!(lambda > 1.0 / tau - 0.5) && tau < 2.0) {
                throw ValidationError("lambda must be > 1/tau - 1/2 with tau = min(r, 2)");
            }
        }
    }
};

inline double sup_norm(const PathProcess& X) {
    double best = 0.0;
    for (std::size_t m = 0; m <= X.steps(); ++m) best = std::max(best, X.space().norm(X.values().row(static_cast<Eigen::Index>(m))));
    return best;
}

inline constexpr std::size_t kHolderExactCap = 4096;

enum class HolderMode { exact, dyadic_bound };

struct HolderResult {
    double value = 0.0;
    bool is_bound = false;
};

/// Discrete C^lambda seminorm over all node pairs. The exact scan is O(N^2 m)
/// and capped at N = 4096; the dyadic mode is an O(N log N m) chaining upper
/// bound, H_max (1 + 2^-lambda) / (1 - 2^-lambda), where H_max is the largest
/// normalized increment over aligned dyadic pairs.
inline HolderResult holder_seminorm(const PathProcess& X, double lambda, HolderMode mode = HolderMode::exact) {
    if (!(lambda >= 0.0 && lambda <= 1.0)) throw ValidationError("Hölder exponent must lie in [0, 1]");
    const std::size_t N = X.steps();
    const double dt = X.time().dt();
    const SpatialGrid& space = X.space();
    if (mode == HolderMode::exact) {
        if (N > kHolderExactCap) {
            throw ValidationError("exact Hölder scan is capped at N = 4096 steps; use the dyadic bound mode");
        }
        std::vector<double> lag_pow(N + 1);
        for (std::size_t k = 1; k <= N; ++k) lag_pow[k] = std::pow(static_cast<double>(k) * dt, lambda);
        double best = 0.0;
        for (std::size_t a = 0; a < N; ++a) {
            const auto ra = X.row(a);
            for (std::size_t b = a + 1; b <= N; ++b) best = std::max(best, space.distance(ra, X.row(b)) / lag_pow[b - a]);
        }
        return {best, false};
    }
    if (!(lambda > 0.0)) throw ValidationError("dyadic Hölder bound needs lambda > 0");
    double hmax = 0.0;
    for (std::size_t step = 1; step <= N; step *= 2) {
        const double denom = std::pow(static_cast<double>(step) * dt, lambda);
        for (std::size_t a = 0; a + step <= N; a += step) hmax = std::max(hmax, space.distance(X.row(a), X.row(a + step)) / denom);
    }
    const double c = std::pow(2.0, -lambda);
    return {hmax * (1.0 + c) / (1.0 - c), true};
}

/// Pathwise V_alpha^p seminorm on [t_first, t_last]:
///   ( int_a^b || s -> (t-s)^{-alpha} X(s) ||^p_{gamma(L2(a,t), E)} dt )^{1/p}
/// with the inner norm realized as the square function against mu_t^alpha
/// (exact for r = 2) and the outer integral by the trapezoid rule on the
/// trajectory grid. Expectation over samples is left to the caller.
inline double v_alpha_seminorm(const PathProcess& X, double alpha, double p, std::size_t first = 0,
                               std::size_t last = static_cast<std::size_t>(-1)) {
    if (!(alpha >= 0.0 && alpha < 0.5)) throw ValidationError("alpha must lie in [0, 1/2): the weight is not integrable otherwise");
    if (!(p >= 1.0)) throw ValidationError("p must be >= 1");
    const std::size_t N = X.steps();
    if (last == static_cast<std::size_t>(-1)) last = N;
    if (!(first < last) || last > N) throw ValidationError("V_alpha range must satisfy first < last <= N");
    const double dt = X.time().dt();
    const double e = 1.0 - 2.0 * alpha;
    // Cell masses depend only on the lag j - i.
    std::vector<double> lag_mass(last - first + 1, 0.0);
    for (std::size_t k = 1; k < lag_mass.size(); ++k) {
        lag_mass[k] = (std::pow(static_cast<double>(k) * dt, e) - std::pow(static_cast<double>(k - 1) * dt, e)) / e;
    }
    const auto m = static_cast<Eigen::Index>(X.space().m());
    RowMatrix sq = X.values().cwiseAbs2();
    Vector acc(m);
    std::vector<double> inner_p(last - first + 1, 0.0);
    for (std::size_t j = first + 1; j <= last; ++j) {
        acc.setZero();
        for (std::size_t i = first; i < j; ++i) acc += lag_mass[j - i] * sq.row(static_cast<Eigen::Index>(i)).transpose();
        inner_p[j - first] = std::pow(X.space().norm(Vector(acc.cwiseSqrt())), p);
    }
    double integral = 0.0;
    for (std::size_t k = 0; k < inner_p.size(); ++k) {
        const double w = (k == 0 || k + 1 == inner_p.size()) ? 0.5 : 1.0;
        integral += w * inner_p[k];
    }
    return std::pow(integral * dt, 1.0 / p);
}

// ---------------------------------------------------------------------------
// Ensemble aggregation

struct EnsembleEstimate {
    double mean_qth_root = 0.0;
    double std_error = 0.0;
    std::size_t samples = 0;
    double q = 2.0;
    std::size_t rejected = 0;
};

/// Pairwise sum in a fixed order, independent of how samples were produced.
inline double pairwise_sum(std::span<const double> v) {
    if (v.size() <= 8) {
        double s = 0.0;
        for (double x : v) s += x;
        return s;
    }
    const std::size_t half = v.size() / 2;
    return pairwise_sum(v.first(half)) + pairwise_sum(v.subspan(half));
}

/// (mean v^q)^{1/q} with a delta-method standard error. Non-finite samples
/// are excluded and counted in `rejected`.
inline EnsembleEstimate ensemble_norm(std::span<const double> values, double q) {
    if (!(q > 0.0) || !std::isfinite(q)) throw ValidationError("ensemble exponent q must be positive");
    std::vector<double> y;
    y.reserve(values.size());
    std::size_t rejected = 0;
    for (double v : values) {
        if (!std::isfinite(v)) {
            ++rejected;
            continue;
        }
        y.push_back(std::pow(std::abs(v), q));
    }
    if (y.size() < 2) throw ValidationError("ensemble estimate needs at least 2 finite samples");
    const double n = static_cast<double>(y.size());
    const double mean = pairwise_sum(y) / n;
    std::vector<double> dev(y.size());
    for (std::size_t i = 0; i < y.size(); ++i) dev[i] = (y[i] - mean) * (y[i] - mean);
    const double var = pairwise_sum(dev) / (n - 1.0);
    EnsembleEstimate est;
    est.q = q;
    est.samples = y.size();
    est.rejected = rejected;
    est.mean_qth_root = std::pow(mean, 1.0 / q);
    est.std_error = mean > 0.0 ? std::pow(mean, 1.0 / q - 1.0) / q * std::sqrt(var / n) : 0.0;
    return est;
}

/// t_m -> X(t_m) - S(t_m) xi, with S(t_m) formed as S(dt)^m exactly as in the
/// time stepper, so F = G = 0 compensates to zero.
inline PathProcess compensate(const PathProcess& X, const SemigroupEvaluator& ev, const Vector& xi) {
    if (!X.space().same_as(ev.generator().grid())) throw ValidationError("compensation needs matching spatial grids");
    if (xi.size() != static_cast<Eigen::Index>(X.space().m())) throw ValidationError("initial datum size mismatch");
    const Matrix& S = ev.matrix(X.time().dt());
    RowMatrix out = X.values();
    Vector s = ev.generator().project(xi);
    out.row(0) -= s.transpose();
    for (std::size_t m = 1; m <= X.steps(); ++m) {
        s = S * s;
        out.row(static_cast<Eigen::Index>(m)) -= s.transpose();
    }
    return PathProcess(X.time(), X.space(), std::move(out), X.seed(), X.stream_id());
}

}  // namespace spdelab
