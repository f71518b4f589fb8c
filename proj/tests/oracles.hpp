#pragma once

// Independent reference computations for the unit tests. Nothing here calls
// into the library's numerics; only plain Eigen arithmetic is used.

#include <cmath>
#include <numbers>
#include <vector>

#include <Eigen/Dense>

namespace oracle {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

/// exp(tA) by scaling and squaring of a 40-term Taylor series.
inline Mat taylor_expm(const Mat& A, double t) {
    const Mat B = t * A;
    const double nrm = B.cwiseAbs().rowwise().sum().maxCoeff();
    int s = 0;
    while (nrm / std::pow(2.0, s) > 0.5) ++s;
    const Mat C = B / std::pow(2.0, s);
    Mat term = Mat::Identity(A.rows(), A.cols());
    Mat sum = term;
    for (int k = 1; k <= 40; ++k) {
        term = term * C / static_cast<double>(k);
        sum += term;
    }
    for (int i = 0; i < s; ++i) sum = sum * sum;
    return sum;
}

/// Dirichlet 3-point stencil for (a u')' + b u' with a, b given at the
/// half-nodes and nodes respectively; h = L / (m + 1).
template <class A, class B>
inline Mat stencil(std::size_t m, double x_lo, double x_hi, A a, B b) {
    const double h = (x_hi - x_lo) / static_cast<double>(m + 1);
    Mat M = Mat::Zero(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(m));
    for (std::size_t i = 0; i < m; ++i) {
        const double xl = x_lo + (static_cast<double>(i) + 0.5) * h;
        const double xr = x_lo + (static_cast<double>(i) + 1.5) * h;
        const double xi = x_lo + static_cast<double>(i + 1) * h;
        const auto k = static_cast<Eigen::Index>(i);
        M(k, k) = -(a(xl) + a(xr)) / (h * h);
        if (i > 0) M(k, k - 1) = a(xl) / (h * h) - b(xi) / (2 * h);
        if (i + 1 < m) M(k, k + 1) = a(xr) / (h * h) + b(xi) / (2 * h);
    }
    return M;
}

/// k-th eigenvalue (k = 1..m) of the constant-coefficient Dirichlet Laplacian.
inline double laplacian_eigenvalue(std::size_t k, std::size_t m, double L) {
    const double h = L / static_cast<double>(m + 1);
    const double s = std::sin(static_cast<double>(k) * std::numbers::pi / (2.0 * static_cast<double>(m + 1)));
    return -4.0 / (h * h) * s * s;
}

/// Quadrature Lr norm with uniform weight h.
inline double lr_norm(const Vec& v, double h, double r) {
    double s = 0.0;
    for (Eigen::Index i = 0; i < v.size(); ++i) s += h * std::pow(std::abs(v[i]), r);
    return std::pow(s, 1.0 / r);
}

/// sup over all pairs a < b of |X_b - X_a| / (t_b - t_a)^lambda, rows = times.
inline double holder_pairs(const Mat& X, double dt, double h, double lambda) {
    double best = 0.0;
    for (Eigen::Index a = 0; a < X.rows(); ++a)
        for (Eigen::Index b = a + 1; b < X.rows(); ++b) {
            const Vec d = (X.row(b) - X.row(a)).transpose();
            best = std::max(best, lr_norm(d, h, 2.0) / std::pow(static_cast<double>(b - a) * dt, lambda));
        }
    return best;
}

/// int_a^b (t - s)^{-2 alpha} ds by composite midpoint on n sub-cells (b < t).
inline double weight_mass_midpoint(double a, double b, double t, double alpha, int n = 200000) {
    const double w = (b - a) / n;
    double s = 0.0;
    for (int i = 0; i < n; ++i) s += std::pow(t - (a + (i + 0.5) * w), -2.0 * alpha) * w;
    return s;
}

/// Covariance of int_0^T exp((T-s)A) B dW(s) by midpoint quadrature on n cells.
inline Mat lyapunov(const Mat& A, const Mat& B, double T, int n = 4000) {
    const double ds = T / n;
    const Mat step = taylor_expm(A, ds);
    Mat S = taylor_expm(A, 0.5 * ds);
    Mat C = Mat::Zero(A.rows(), A.cols());
    for (int i = 0; i < n; ++i) {
        const Mat SB = S * B;
        C += SB * SB.transpose() * ds;
        S = step * S;
    }
    return C;
}

/// Probabilists' Gauss-Hermite rule (weight e^{-x^2/2}/sqrt(2 pi), total mass
/// 1) by Golub-Welsch on the Hermite Jacobi matrix.
inline void gauss_hermite(int n, Vec& nodes, Vec& weights) {
    Mat J = Mat::Zero(n, n);
    for (int k = 1; k < n; ++k) J(k - 1, k) = J(k, k - 1) = std::sqrt(static_cast<double>(k));
    Eigen::SelfAdjointEigenSolver<Mat> es(J);
    nodes = es.eigenvalues();
    weights = es.eigenvectors().row(0).transpose().cwiseAbs2();
}

/// (E (h sum_i |(X g)_i|^r)^{2/r})^{1/2} for g standard Gaussian in R^2, by
/// tensor Gauss-Hermite.
inline double gamma_norm_2channel(const Mat& X, double h, double r, int n = 80) {
    Vec x, w;
    gauss_hermite(n, x, w);
    double acc = 0.0;
    for (int a = 0; a < n; ++a)
        for (int b = 0; b < n; ++b) {
            const Vec y = X.col(0) * x[a] + X.col(1) * x[b];
            double s = 0.0;
            for (Eigen::Index i = 0; i < y.size(); ++i) s += h * std::pow(std::abs(y[i]), r);
            acc += w[a] * w[b] * std::pow(s, 2.0 / r);
        }
    return std::sqrt(acc);
}

}  // namespace oracle
