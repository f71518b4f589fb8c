#pragma once

// Gamma-radonifying norms of finite-rank operators H -> Lr(O) and the
// kernel representation of operators L2((0,t), mu; R^K) -> Lr(O).
//
// For r = 2 the target is a Hilbert space and the norm is the Hilbert-Schmidt
// norm, computed exactly. Otherwise the defining Gaussian expectation is
// estimated by Monte Carlo. Finite-dimensional E contains no copy of c0, so
// gamma and gamma_infinity coincide and no separate machinery is needed.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SparseCore>
#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "json.hpp"
#include "spdelab/digest.hpp"
#include "spdelab/error.hpp"
#include "spdelab/grid.hpp"
#include "spdelab/rng.hpp"

namespace spdelab {

using SparseMatrix = Eigen::SparseMatrix<double>;

inline constexpr std::size_t kDefaultGammaSamples = 100000;

/// R = sum_j h_j (x) x_j with {h_j} orthonormal for the weighted inner
/// product <u, v> = sum_i w_i u_i v_i. Basis vectors are the columns of
/// `basis`, images the columns of `images`.
class FiniteRankOperator {
public:
    FiniteRankOperator(SparseMatrix basis, Vector inner_product, Matrix images)
        : basis_(std::move(basis)), weights_(std::move(inner_product)), images_(std::move(images)) {
        if (basis_.cols() != images_.cols()) throw ValidationError("basis and image counts differ");
        if (basis_.rows() != weights_.size()) throw ValidationError("inner-product weights do not match basis length");
        if ((weights_.array() <= 0.0).any()) throw ValidationError("inner-product weights must be positive");
        if (basis_.cols() > 0) {
            const SparseMatrix gram = SparseMatrix(basis_.transpose()) * weights_.asDiagonal() * basis_;
            Matrix dense = Matrix(gram);
            dense.diagonal().array() -= 1.0;
            const double err = dense.cwiseAbs().maxCoeff();
            if (!(err <= 1e-10)) {
                throw ValidationError("basis is not orthonormal (Gram error " + std::to_string(err) + ")");
            }
        }
    }

    /// Standard basis of R^n with Euclidean inner product.
    static FiniteRankOperator from_images(Matrix images) {
        const Eigen::Index n = images.cols();
        SparseMatrix basis(n, n);
        basis.setIdentity();
        return FiniteRankOperator(std::move(basis), Vector::Ones(n), std::move(images));
    }

    Eigen::Index rank() const noexcept { return images_.cols(); }
    const SparseMatrix& basis() const noexcept { return basis_; }
    const Vector& inner_product() const noexcept { return weights_; }
    const Matrix& images() const noexcept { return images_; }

    FiniteRankOperator compose_left(const Matrix& S) const {
        return FiniteRankOperator(basis_, weights_, S * images_);
    }

private:
    SparseMatrix basis_;
    Vector weights_;
    Matrix images_;
};

struct GammaEstimate {
    double value = 0.0;
    double std_error = 0.0;
    std::size_t samples = 0;
    bool exact = false;
};

/// gamma-norm of R in Lr(O). Exact Hilbert-Schmidt value for r = 2, otherwise
/// (E ||sum gamma_j x_j||^2)^{1/2} from `samples` seeded Gaussian draws.
inline GammaEstimate gamma_norm(const FiniteRankOperator& R, const SpatialGrid& grid,
                                std::size_t samples = kDefaultGammaSamples, std::uint64_t seed = 0) {
    if (R.images().rows() != static_cast<Eigen::Index>(grid.m()) && R.rank() > 0) {
        throw ValidationError("operator images do not live on the spatial grid");
    }
    if (R.rank() == 0) return GammaEstimate{0.0, 0.0, 0, true};
    if (grid.r() == 2.0) {
        return GammaEstimate{std::sqrt(grid.h() * R.images().squaredNorm()), 0.0, 0, true};
    }
    if (samples < 1000) throw ValidationError("Monte Carlo gamma-norm needs at least 1000 samples");
    const Eigen::Index n = R.rank();
    Vector g(n);
    Vector v(R.images().rows());
    double mean = 0.0;
    double m2 = 0.0;
    for (std::size_t s = 0; s < samples; ++s) {
        for (Eigen::Index j = 0; j < n; ++j) {
            g[j] = gaussian(seed, StreamDomain::gamma_mc, s, static_cast<std::uint32_t>(j), 0);
        }
        v.noalias() = R.images() * g;
        const double y = std::pow(grid.norm(v), 2);
        const double delta = y - mean;
        mean += delta / static_cast<double>(s + 1);
        m2 += delta * (y - mean);
    }
    const double var = m2 / static_cast<double>(samples - 1);
    const double se_mean = std::sqrt(var / static_cast<double>(samples));
    const double value = std::sqrt(mean);
    return GammaEstimate{value, value > 0.0 ? se_mean / (2.0 * value) : 0.0, samples, false};
}

/// The weighted measure mu(ds) = (t - s)^{-2 alpha} ds on (a, t), discretized
/// into cells [b_i, b_{i+1}) whose masses are integrated exactly, including
/// the singular last cell.
class WeightedTimeMeasure {
public:
    WeightedTimeMeasure(std::vector<double> breakpoints, double alpha) : alpha_(alpha) {
        if (!(alpha >= 0.0 && alpha < 0.5)) throw ValidationError("alpha must lie in [0, 1/2)");
        if (breakpoints.size() < 2) throw ValidationError("measure needs at least one cell");
        for (std::size_t i = 1; i < breakpoints.size(); ++i) {
            if (!(breakpoints[i] > breakpoints[i - 1])) throw ValidationError("breakpoints must increase strictly");
        }
        t_end_ = breakpoints.back();
        const double e = 1.0 - 2.0 * alpha;
        for (std::size_t i = 0; i + 1 < breakpoints.size(); ++i) {
            nodes_.push_back(breakpoints[i]);
            const double far = t_end_ - breakpoints[i];
            const double near = t_end_ - breakpoints[i + 1];
            weights_.push_back((std::pow(far, e) - (near > 0.0 ? std::pow(near, e) : 0.0)) / e);
        }
        lower_ = breakpoints.front();
    }

    /// Cells [t_i, t_{i+1}) for start <= i < end of a uniform time grid;
    /// distances t_end - t_i are formed as (end - i) dt.
    static WeightedTimeMeasure on_grid(const TimeGrid& grid, std::size_t end, double alpha, std::size_t start = 0) {
        if (!(end > start) || end > grid.steps()) throw ValidationError("measure index range must satisfy start < end <= N");
        WeightedTimeMeasure mu;
        if (!(alpha >= 0.0 && alpha < 0.5)) throw ValidationError("alpha must lie in [0, 1/2)");
        mu.alpha_ = alpha;
        mu.t_end_ = grid.node(end);
        mu.lower_ = grid.node(start);
        const double e = 1.0 - 2.0 * alpha;
        const double dt = grid.dt();
        for (std::size_t i = start; i < end; ++i) {
            mu.nodes_.push_back(grid.node(i));
            const double far = static_cast<double>(end - i) * dt;
            const double near = static_cast<double>(end - i - 1) * dt;
            mu.weights_.push_back((std::pow(far, e) - (near > 0.0 ? std::pow(near, e) : 0.0)) / e);
        }
        return mu;
    }

    double t_end() const noexcept { return t_end_; }
    double lower() const noexcept { return lower_; }
    double alpha() const noexcept { return alpha_; }
    const std::vector<double>& nodes() const noexcept { return nodes_; }
    const std::vector<double>& node_weights() const noexcept { return weights_; }
    std::size_t cells() const noexcept { return weights_.size(); }

    double total_mass() const {
        double s = 0.0;
        for (double w : weights_) s += w;
        return s;
    }

    /// Closed form of the total mass, (t - a)^{1-2 alpha} / (1 - 2 alpha).
    double exact_mass() const {
        const double e = 1.0 - 2.0 * alpha_;
        return std::pow(t_end_ - lower_, e) / e;
    }

private:
    WeightedTimeMeasure() = default;

    double alpha_ = 0.0;
    double t_end_ = 0.0;
    double lower_ = 0.0;
    std::vector<double> nodes_;
    std::vector<double> weights_;
};

/// Operator on L2(mu; R^K) represented by a kernel that is constant on the
/// measure cells: cell i carries the m x K matrix phi[i]. The orthonormal
/// basis is the normalized indicators of (cell, channel); zero-mass cells are
/// dropped.
inline FiniteRankOperator represent_kernel(std::span<const Matrix> phi, const WeightedTimeMeasure& mu, std::size_t K) {
    if (phi.size() != mu.cells()) throw ValidationError("kernel must be given on every measure cell");
    const auto Kc = static_cast<Eigen::Index>(K);
    std::vector<std::size_t> kept;
    for (std::size_t i = 0; i < mu.cells(); ++i) {
        if (phi[i].cols() != Kc) throw ValidationError("kernel values must have K columns");
        if (mu.node_weights()[i] > 0.0) kept.push_back(i);
    }
    if (kept.empty()) throw ValidationError("measure has no mass");
    const Eigen::Index rows = phi[kept.front()].rows();
    const auto d = static_cast<Eigen::Index>(mu.cells()) * Kc;
    const auto rank = static_cast<Eigen::Index>(kept.size()) * Kc;
    SparseMatrix basis(d, rank);
    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(static_cast<std::size_t>(rank));
    Vector weights(d);
    for (std::size_t i = 0; i < mu.cells(); ++i) {
        const double w = mu.node_weights()[i] > 0.0 ? mu.node_weights()[i] : 1.0;
        weights.segment(static_cast<Eigen::Index>(i) * Kc, Kc).setConstant(w);
    }
    Matrix images(rows, rank);
    Eigen::Index col = 0;
    for (std::size_t i : kept) {
        const double w = mu.node_weights()[i];
        const double root = std::sqrt(w);
        for (Eigen::Index k = 0; k < Kc; ++k, ++col) {
            trips.emplace_back(static_cast<Eigen::Index>(i) * Kc + k, col, 1.0 / root);
            images.col(col) = phi[i].col(k) * root;
        }
    }
    basis.setFromTriplets(trips.begin(), trips.end());
    return FiniteRankOperator(std::move(basis), std::move(weights), std::move(images));
}

/// Square-function norm || (sum_i mu_i |phi_i(.)|^2)^{1/2} ||_{Lr(O)}. Equals
/// the gamma(L2(mu), Lr) norm for r = 2 and is equivalent to it otherwise.
inline double square_function_norm(std::span<const Vector> phi, const WeightedTimeMeasure& mu, const SpatialGrid& grid) {
    if (phi.size() != mu.cells()) throw ValidationError("phi must be given on every measure cell");
    Vector acc = Vector::Zero(static_cast<Eigen::Index>(grid.m()));
    for (std::size_t i = 0; i < phi.size(); ++i) {
        if (phi[i].size() != acc.size()) throw ValidationError("phi values must live on the spatial grid");
        acc += mu.node_weights()[i] * phi[i].cwiseAbs2();
    }
    return grid.norm(Vector(acc.cwiseSqrt()));
}

/// Operator-valued variant: channels are summed into the square function.
inline double square_function_norm(std::span<const Matrix> phi, const WeightedTimeMeasure& mu, const SpatialGrid& grid) {
    if (phi.size() != mu.cells()) throw ValidationError("phi must be given on every measure cell");
    Vector acc = Vector::Zero(static_cast<Eigen::Index>(grid.m()));
    for (std::size_t i = 0; i < phi.size(); ++i) {
        if (phi[i].rows() != acc.size()) throw ValidationError("phi values must live on the spatial grid");
        acc += mu.node_weights()[i] * phi[i].cwiseAbs2().rowwise().sum();
    }
    return grid.norm(Vector(acc.cwiseSqrt()));
}

/// Slack allowed between the square function and the Monte Carlo gamma-norm
/// off r = 2. The equivalence constant has no closed form; 15% is our
/// calibration and is reported under kEquivalenceLabel.
inline constexpr double kEquivalenceTolerance = 0.15;
inline constexpr const char* kEquivalenceLabel = "equivalence-constant tolerance";

struct EquivalenceAudit {
    double square_function = 0.0;
    GammaEstimate gamma;
    double relative_gap = 0.0;  // |gamma / square_function - 1|
    bool within = true;

    nlohmann::json to_json() const {
        return nlohmann::json{{"square_function", square_function},
                              {"relative_gap", relative_gap},
                              {"tolerance", kEquivalenceTolerance},
                              {"tolerance_label", kEquivalenceLabel},
                              {"within_tolerance", within}};
    }
};

/// Compares ||(sum_j |x_j|^2)^{1/2}||_Lr with gamma_norm(R). Exact agreement
/// at r = 2.
inline EquivalenceAudit square_function_equivalence(const FiniteRankOperator& R, const SpatialGrid& grid,
                                                    std::size_t samples = kDefaultGammaSamples,
                                                    std::uint64_t seed = 0) {
    EquivalenceAudit a;
    a.gamma = gamma_norm(R, grid, samples, seed);
    if (R.rank() == 0) return a;
    a.square_function = grid.norm(Vector(R.images().cwiseAbs2().rowwise().sum().cwiseSqrt()));
    if (a.square_function > 0.0) a.relative_gap = std::abs(a.gamma.value / a.square_function - 1.0);
    a.within = a.relative_gap <= kEquivalenceTolerance;
    return a;
}

// ---------------------------------------------------------------------------
// gamma-bounds of operator families

/// t -> Phi(t) on (a, b). `derivative` may be empty (central differences are
/// used); `value_at_start` supplies Phi(a+) when the family is singular or
/// only defined in the open interval.
struct OperatorFamily {
    std::function<Matrix(double)> value;
    std::function<Matrix(double)> derivative;
    std::optional<Matrix> value_at_start;
};

inline double spectral_norm(const Matrix& A) {
    if (A.size() == 0) return 0.0;
    Eigen::JacobiSVD<Matrix> svd(A);
    return svd.singularValues()[0];
}

/// Upper bound ||Phi(a+)|| + int_a^b ||Phi'(t)|| dt on the gamma-bound of
/// {Phi(t)}. The integral is summed over dyadic panels [a + 2^{-k-1} L,
/// a + 2^{-k} L], which resolves endpoint singularities like s^{alpha-1} and
/// fast boundary layers. The part next to a is extrapolated from the decay
/// ratio of the last two panels; a derivative whose panel sums do not decay
/// geometrically (e.g. 1/s) is reported as NumericError.
inline double gamma_bound_upper(const OperatorFamily& family, double a, double b,
                                const std::function<double(const Matrix&)>& norm = spectral_norm) {
    if (!(a < b) || !std::isfinite(a) || !std::isfinite(b)) throw ValidationError("gamma bound needs a finite a < b");
    if (!family.value) throw ValidationError("operator family needs a value function");
    const double span = b - a;
    auto derivative = [&](double t) -> Matrix {
        if (family.derivative) return family.derivative(t);
        const double step = 1e-6 * span;
        if (t - a < step) return (family.value(t + step) - family.value(t)) / step;
        if (b - t < step) return (family.value(t) - family.value(t - step)) / step;
        return (family.value(t + step) - family.value(t - step)) / (2.0 * step);
    };
    auto integrand = [&](double t) { return norm(derivative(t)); };
    const Matrix start = family.value_at_start ? *family.value_at_start : family.value(a + 1e-14 * span);

    constexpr int kMaxPanels = 400;
    constexpr double kStop = 1e-10;
    double integral = 0.0;
    double error = 0.0;
    double last = 0.0;
    double prev = 0.0;
    double hi = b;
    try {
        for (int k = 0; k < kMaxPanels; ++k) {
            const double lo = a + span * std::ldexp(1.0, -(k + 1));
            if (!(lo > a) || !(lo < hi)) break;
            // map to [-1, 1] by hand: Boost reports the error estimate in
            // the unscaled variable, which is meaningless on short panels
            const double mid = 0.5 * (lo + hi), half = 0.5 * (hi - lo);
            double err = 0.0;
            const double piece = boost::math::quadrature::gauss_kronrod<double, 31>::integrate(
                [&](double x) { return half * integrand(mid + half * x); }, -1.0, 1.0, 8, 1e-12, &err);
            integral += piece;
            error += err;
            prev = last;
            last = piece;
            hi = lo;
            if (!std::isfinite(integral)) break;
            if (k >= 4 && piece <= kStop * std::max(1.0, integral)) break;
        }
    } catch (const std::exception& e) {
        throw NumericError(std::string("derivative of the operator family is not integrable: ") + e.what());
    }
    // remaining piece on [a, hi]: geometric tail last * q / (1 - q)
    const double q = prev > 0.0 ? last / prev : 0.0;
    const double tail = last <= 0.0 ? 0.0 : (q < 1.0 ? last * q / (1.0 - q) : INFINITY);
    integral += tail;
    error += tail;
    if (!std::isfinite(integral) || !(error <= 1e-6 * std::max(1.0, std::abs(integral)))) {
        throw NumericError("derivative of the operator family does not appear integrable (panel decay ratio " +
                           std::to_string(q) + ", error estimate " + std::to_string(error) + ")");
    }
    return norm(start) + integral;
}

/// Lower bound on the gamma-bound from the defining inequality: the largest
/// ratio (E||sum g_j T_j x_j||^2 / E||sum g_j x_j||^2)^{1/2} over `batches`
/// random choices of N operators T_j = Phi(t_j) and vectors x_j. Inputs are
/// Euclidean (the Hilbert space H); outputs live on `grid`.
inline double gamma_bound_lower(const OperatorFamily& family, double a, double b, const SpatialGrid& grid,
                                std::size_t batches = 64, std::size_t per_batch = 4, std::uint64_t seed = 0,
                                std::size_t samples = 20000) {
    if (!(a < b)) throw ValidationError("gamma bound needs a < b");
    double best = 0.0;
    for (std::size_t batch = 0; batch < batches; ++batch) {
        Matrix images;
        double denom2 = 0.0;
        for (std::size_t j = 0; j < per_batch; ++j) {
            const double u = uniform(seed, StreamDomain::probe, batch, static_cast<std::uint32_t>(j), 0);
            const Matrix T = family.value(a + u * (b - a));
            if (images.size() == 0) images.resize(T.rows(), static_cast<Eigen::Index>(per_batch));
            Vector x(T.cols());
            for (Eigen::Index c = 0; c < x.size(); ++c) {
                x[c] = gaussian(seed, StreamDomain::probe, batch, static_cast<std::uint32_t>(j),
                                static_cast<std::uint32_t>(c + 1));
            }
            denom2 += x.squaredNorm();
            images.col(static_cast<Eigen::Index>(j)) = T * x;
        }
        const GammaEstimate num = gamma_norm(FiniteRankOperator::from_images(images), grid, samples, seed + batch);
        if (denom2 > 0.0) best = std::max(best, num.value / std::sqrt(denom2));
    }
    return best;
}

// ---------------------------------------------------------------------------
// Multiplier convergence

struct MultiplierRow {
    double n = 0.0;
    GammaEstimate error;
};

/// ||M_n R - M R||_gamma for each n in `schedule`, R represented by the
/// cell-wise kernel `kernel` against `mu`. M_n(n, t) and M(t) map E -> E.
inline std::vector<MultiplierRow> multiplier_convergence_check(
    const std::function<Matrix(double, double)>& family, const std::function<Matrix(double)>& limit,
    std::span<const Matrix> kernel, const WeightedTimeMeasure& mu, const SpatialGrid& grid,
    std::span<const double> schedule, std::size_t samples = kDefaultGammaSamples, std::uint64_t seed = 0) {
    if (kernel.size() != mu.cells()) throw ValidationError("kernel must be given on every measure cell");
    std::vector<MultiplierRow> rows;
    const std::size_t K = kernel.empty() ? 0 : static_cast<std::size_t>(kernel.front().cols());
    std::vector<Matrix> limit_values;
    limit_values.reserve(kernel.size());
    for (std::size_t i = 0; i < kernel.size(); ++i) limit_values.push_back(limit(mu.nodes()[i]));
    for (double n : schedule) {
        if (K == 0) {
            rows.push_back(MultiplierRow{n, GammaEstimate{0.0, 0.0, 0, true}});
            continue;
        }
        std::vector<Matrix> diff;
        diff.reserve(kernel.size());
        for (std::size_t i = 0; i < kernel.size(); ++i) {
            diff.push_back((family(n, mu.nodes()[i]) - limit_values[i]) * kernel[i]);
        }
        rows.push_back(MultiplierRow{n, gamma_norm(represent_kernel(diff, mu, K), grid, samples, seed)});
    }
    return rows;
}

// ---------------------------------------------------------------------------
// Audit records

struct GammaAuditRecord {
    std::string op;
    std::string inputs_digest;
    GammaEstimate estimate;
    std::uint64_t seed = 0;

    nlohmann::json to_json() const {
        return nlohmann::json{{"op", op},
                              {"inputs_digest", inputs_digest},
                              {"value", estimate.value},
                              {"std_error", estimate.std_error},
                              {"samples", estimate.samples},
                              {"seed", seed}};
    }
};

inline std::string digest_of(const FiniteRankOperator& R, const SpatialGrid& grid) {
    Fnv1a h;
    h.update(R.images());
    h.update(R.inner_product());
    h.update(grid.x_lo()).update(grid.x_hi()).update(grid.r()).update_u64(grid.m());
    return h.hex();
}

}  // namespace spdelab
