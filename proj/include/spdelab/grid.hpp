#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <span>
#include <string>

#include <Eigen/Dense>

#include "spdelab/error.hpp"

namespace spdelab {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using CVector = Eigen::VectorXcd;
using CMatrix = Eigen::MatrixXcd;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Uniform interior-node grid on (x_lo, x_hi) with homogeneous Dirichlet
/// boundary nodes eliminated. Node i sits at x_lo + (i+1)h; every node carries
/// quadrature weight h (open composite midpoint rule).
class SpatialGrid {
public:
    SpatialGrid(double x_lo, double x_hi, std::size_t m, double r) : x_lo_(x_lo), x_hi_(x_hi), m_(m), r_(r) {
        if (!std::isfinite(x_lo) || !std::isfinite(x_hi)) {
            throw ValidationError("grid endpoints must be finite");
        }
        if (!(x_lo < x_hi)) throw ValidationError("grid requires x_lo < x_hi");
        if (m == 0) throw ValidationError("grid requires at least one interior node (m >= 1)");
        if (!(r > 1.0) || !std::isfinite(r)) {
            throw ValidationError("Lebesgue exponent r must satisfy 1 < r < inf, got " + std::to_string(r));
        }
        h_ = (x_hi - x_lo) / static_cast<double>(m + 1);
    }

    double x_lo() const noexcept { return x_lo_; }
    double x_hi() const noexcept { return x_hi_; }
    std::size_t m() const noexcept { return m_; }
    double h() const noexcept { return h_; }
    double r() const noexcept { return r_; }
    double length() const noexcept { return x_hi_ - x_lo_; }

    /// Interior node i in [0, m).
    double node(std::size_t i) const noexcept { return x_lo_ + static_cast<double>(i + 1) * h_; }

    /// Grid point j in [0, m+1], including both boundary points.
    double point(std::size_t j) const noexcept {
        return j == m_ + 1 ? x_hi_ : x_lo_ + static_cast<double>(j) * h_;
    }

    /// Half node i - 1/2 for i in [0, m]: midpoint between grid points i and i+1.
    double half_node(std::size_t i) const noexcept { return x_lo_ + (static_cast<double>(i) + 0.5) * h_; }

    double weight(std::size_t) const noexcept { return h_; }

    Vector weights() const { return Vector::Constant(static_cast<Eigen::Index>(m_), h_); }

    Vector nodes() const {
        Vector x(static_cast<Eigen::Index>(m_));
        for (std::size_t i = 0; i < m_; ++i) x[static_cast<Eigen::Index>(i)] = node(i);
        return x;
    }

    bool same_as(const SpatialGrid& o) const noexcept {
        return x_lo_ == o.x_lo_ && x_hi_ == o.x_hi_ && m_ == o.m_ && r_ == o.r_;
    }

    /// Lr(O) quadrature norm of a nodal function.
    template <typename Derived>
    double norm(const Eigen::MatrixBase<Derived>& v) const {
        return norm_r(v, r_);
    }

    template <typename Derived>
    double norm_r(const Eigen::MatrixBase<Derived>& v, double r) const {
        if (r == 2.0) return std::sqrt(h_ * v.cwiseAbs2().sum());
        double acc = 0.0;
        for (Eigen::Index i = 0; i < v.size(); ++i) acc += std::pow(std::abs(v[i]), r);
        return std::pow(h_ * acc, 1.0 / r);
    }

    /// Lr norm of the difference of two rows/vectors without a temporary.
    double distance(std::span<const double> a, std::span<const double> b) const {
        double acc = 0.0;
        const std::size_t n = a.size();
        if (r_ == 2.0) {
            for (std::size_t i = 0; i < n; ++i) {
                const double d = a[i] - b[i];
                acc += d * d;
            }
            return std::sqrt(h_ * acc);
        }
        if (r_ == 4.0) {
            for (std::size_t i = 0; i < n; ++i) {
                const double d = a[i] - b[i];
                const double d2 = d * d;
                acc += d2 * d2;
            }
            return std::pow(h_ * acc, 0.25);
        }
        for (std::size_t i = 0; i < n; ++i) acc += std::pow(std::abs(a[i] - b[i]), r_);
        return std::pow(h_ * acc, 1.0 / r_);
    }

private:
    double x_lo_;
    double x_hi_;
    std::size_t m_;
    double r_;
    double h_ = 0.0;
};

inline SpatialGrid build_grid(double x_lo, double x_hi, std::size_t m, double r) {
    return SpatialGrid(x_lo, x_hi, m, r);
}

/// Uniform time grid t_k = T k / N on [0, T]; t_N == T exactly.
class TimeGrid {
public:
    TimeGrid(double T, std::size_t steps) : T_(T), steps_(steps) {
        if (!(T > 0.0) || !std::isfinite(T)) throw ValidationError("time horizon T must be positive and finite");
        if (steps == 0) throw ValidationError("time grid needs at least one step");
        dt_ = T / static_cast<double>(steps);
    }

    /// Grid rebuilt from a stored step size (binary path records store dt).
    static TimeGrid from_step(double dt, std::size_t steps) {
        if (!(dt > 0.0) || !std::isfinite(dt)) throw ValidationError("time step must be positive and finite");
        TimeGrid g(dt * static_cast<double>(steps), steps);
        g.dt_ = dt;
        return g;
    }

    double T() const noexcept { return T_; }
    std::size_t steps() const noexcept { return steps_; }
    double dt() const noexcept { return dt_; }

    double node(std::size_t k) const noexcept {
        return k == steps_ ? T_ : T_ * static_cast<double>(k) / static_cast<double>(steps_);
    }

    bool same_as(const TimeGrid& o) const noexcept { return T_ == o.T_ && steps_ == o.steps_ && dt_ == o.dt_; }

private:
    double T_;
    std::size_t steps_;
    double dt_ = 0.0;
};

}  // namespace spdelab
