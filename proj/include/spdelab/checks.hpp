#pragma once

// Runnable property suites (semigroup, gamma, noise, solver, norms). Each
// assertion yields one pass/fail line; exceptions inside an assertion count
// as a failure of that line only.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <complex>
#include <cstdio>
#include <functional>
#include <memory>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include "spdelab/domain_ops.hpp"
#include "spdelab/experiments.hpp"
#include "spdelab/gamma_calc.hpp"
#include "spdelab/mild_solver.hpp"
#include "spdelab/noise.hpp"
#include "spdelab/path_norms.hpp"
#include "spdelab/rng.hpp"

namespace spdelab::checks {

struct CheckLine {
    std::string name;
    bool passed = false;
    std::string detail;
    double seconds = 0.0;
};

struct SuiteResult {
    std::string suite;
    std::vector<CheckLine> lines;

    bool passed() const {
        return !lines.empty() && std::all_of(lines.begin(), lines.end(), [](const CheckLine& l) { return l.passed; });
    }

    void run(const std::string& name, const std::function<std::pair<bool, std::string>()>& body) {
        const auto t0 = std::chrono::steady_clock::now();
        CheckLine line{name, false, {}, 0.0};
        try {
            std::tie(line.passed, line.detail) = body();
        } catch (const std::exception& e) {
            line.passed = false;
            line.detail = std::string("exception: ") + e.what();
        }
        line.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        lines.push_back(std::move(line));
    }
};

inline std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3e", v);
    return buf;
}

/// Sequential draws from one probe stream.
class ProbeRng {
public:
    ProbeRng(std::uint64_t seed, std::uint64_t stream) : seed_(seed), stream_(stream) {}
    double normal() { return gaussian(seed_, StreamDomain::probe, stream_, next(), 0); }
    double unit() { return uniform(seed_, StreamDomain::probe, stream_, next(), 1); }
    Vector normal_vector(Eigen::Index n) {
        Vector v(n);
        for (Eigen::Index i = 0; i < n; ++i) v[i] = normal();
        return v;
    }
    Matrix normal_matrix(Eigen::Index r, Eigen::Index c) {
        Matrix M(r, c);
        for (Eigen::Index j = 0; j < c; ++j)
            for (Eigen::Index i = 0; i < r; ++i) M(i, j) = normal();
        return M;
    }

private:
    std::uint32_t next() { return counter_++; }
    std::uint64_t seed_;
    std::uint64_t stream_;
    std::uint32_t counter_ = 0;
};

inline ProblemSpec heat_problem(std::size_t m = 32) {
    ProblemSpec p;
    p.m = m;
    p.a = "1";
    p.b = "0";
    p.T = 0.5;
    return p;
}

/// Nonlinear desk problem used when no config is supplied.
inline ProblemSpec nonlinear_problem() {
    ProblemSpec p;
    p.m = 64;
    p.f = "u/(1+abs(u))";
    p.L_F = 1.5;
    p.C_F = 1.5;
    p.g = {"0.5*sin(u)", "0.25*u/(1+abs(u)) + 0.25"};
    p.L_G = 1.0;
    p.C_G = 1.0;
    p.xi = "sin(pi*x)";
    p.T = 0.5;
    p.N = 512;
    return p;
}

inline std::shared_ptr<const SectorialGenerator> limit_generator(const ProblemSpec& p) {
    const SpatialGrid grid(p.x_lo, p.x_hi, p.m, p.r);
    const auto field = CoefficientField::from_expressions(Expression::parse(p.a, {ExprVar::x}),
                                                          Expression::parse(p.b, {ExprVar::x}), 0.0, p.kappa,
                                                          p.coeff_bound);
    return std::make_shared<const SectorialGenerator>(assemble_divergence_form(grid, field, p.w, p.probe_count));
}

inline std::shared_ptr<const SectorialGenerator> matrix_generator(const Matrix& A, double r = 2.0) {
    const SpatialGrid grid(0.0, 1.0, static_cast<std::size_t>(A.rows()), r);
    return std::make_shared<const SectorialGenerator>(grid, A, SectorBound{1.0, 0.0});
}

// ---------------------------------------------------------------------------
// semigroup

inline SuiteResult check_semigroup(const ProblemSpec& p) {
    SuiteResult R{"semigroup", {}};
    const auto g = limit_generator(p);
    const SemigroupEvaluator ev(g);
    const bool eig = ev.method() == ExpMethod::eigendecomposition;
    const double T = p.T;
    const double times[] = {0.1 * T, 0.25 * T, 0.5 * T};
    const auto m = static_cast<Eigen::Index>(p.m);
    ProbeRng rng(0x5e31, 1);

    R.run("S(0) = identity", [&] {
        const double err = (ev.matrix(0.0) - Matrix::Identity(m, m)).cwiseAbs().maxCoeff();
        return std::pair{err == 0.0, "max entry error " + fmt(err)};
    });

    R.run("semigroup law S(t+s) = S(t)S(s)", [&] {
        const double tol = eig ? 1e-8 : 1e-6;
        double worst = 0.0;
        for (double s : times)
            for (double t : times) {
                const Matrix D = ev.matrix(t + s) - ev.matrix(t) * ev.matrix(s);
                worst = std::max(worst, D.colwise().norm().maxCoeff());
            }
        return std::pair{worst <= tol, "max basis-vector error " + fmt(worst) + " (tol " + fmt(tol) + ", " +
                                           (eig ? "eigendecomposition" : "Pade") + ")"};
    });

    R.run("sector certificate", [&] {
        const SectorBound sb = g->sector();
        const bool ok = g->symmetric() ? sb.M <= 1.0 + 1e-8 : std::isfinite(sb.M);
        return std::pair{ok, "M = " + fmt(sb.M) + ", w = " + fmt(sb.w) + (g->symmetric() ? " (symmetric: M <= 1 + 1e-8)" : "")};
    });

    R.run("semigroup bound ||S(t)|| <= M e^{wt}", [&] {
        double worst = 0.0;
        for (double t : {0.01 * T, 0.1 * T, 0.5 * T, T}) {
            worst = std::max(worst, spectral_norm(ev.matrix(t)) / (g->sector().M * std::exp(g->sector().w * t)));
        }
        return std::pair{worst <= 1.0 + kTolSector, "max ratio " + fmt(worst)};
    });

    R.run("resolvent identity on 100 random triples", [&] {
        double worst = 0.0;
        for (int k = 0; k < 100; ++k) {
            const std::complex<double> l(p.w + 0.1 + 10.0 * rng.unit(), 20.0 * (rng.unit() - 0.5));
            const std::complex<double> mu(p.w + 0.1 + 10.0 * rng.unit(), 20.0 * (rng.unit() - 0.5));
            const CVector x = rng.normal_vector(m).cast<std::complex<double>>();
            const CVector rl = resolvent(*g, l, x);
            const CVector rm = resolvent(*g, mu, x);
            const CVector rhs = (mu - l) * resolvent(*g, l, rm);
            const double scale = std::max(rl.norm(), rm.norm());
            worst = std::max(worst, (rl - rm - rhs).norm() / scale);
        }
        return std::pair{worst <= 1e-10, "max relative error " + fmt(worst)};
    });

    R.run("Laplace transform of S matches the resolvent", [&] {
        const double lambda = p.w + 1.0;
        const double t_big = std::log(1e10) / (lambda - p.w) + 2.0;
        using GL = boost::math::quadrature::gauss<double, 20>;
        const auto& xs = GL::abscissa();
        const auto& ws = GL::weights();
        Vector x = rng.normal_vector(m);
        Vector acc = Vector::Zero(m);
        std::vector<double> edges{0.0};
        for (double e = 1e-6; e < t_big; e *= 2.0) edges.push_back(e);
        edges.push_back(t_big);
        for (std::size_t k = 0; k + 1 < edges.size(); ++k) {
            const double c = 0.5 * (edges[k] + edges[k + 1]);
            const double r = 0.5 * (edges[k + 1] - edges[k]);
            for (std::size_t i = 0; i < xs.size(); ++i) {
                const double wi = ws[i] * r;
                if (xs[i] == 0.0) {
                    acc += wi * std::exp(-lambda * c) * ev.apply(c, x);
                } else {
                    for (double sgn : {-1.0, 1.0}) {
                        const double t = c + sgn * r * xs[i];
                        acc += wi * std::exp(-lambda * t) * ev.apply(t, x);
                    }
                }
            }
        }
        const Vector rx = resolvent(*g, lambda, x);
        const double err = (acc - rx).norm() / rx.norm();
        return std::pair{err <= 1e-5, "relative error " + fmt(err) + " (T_big = " + fmt(t_big) + ")"};
    });

    R.run("Yosida scalar: A = (-2), n = 10 gives -5/3", [&] {
        const auto g1 = matrix_generator(Matrix::Constant(1, 1, -2.0));
        const double v = yosida(*g1, 10.0).matrix()(0, 0);
        const double err = std::abs(v + 20.0 / 12.0);
        return std::pair{err <= 1e-12, "A_10 = " + fmt(v)};
    });

    R.run("Yosida matrix bound ||A_n x - A x|| <= ||A||^2/(n - ||A||) ||x||", [&] {
        const double nA = g->operator_norm();
        double worst = 0.0;
        for (double factor : {2.0, 4.0, 16.0}) {
            const double n = factor * nA;
            const SectorialGenerator An = yosida(*g, n);
            for (int k = 0; k < 5; ++k) {
                const Vector x = rng.normal_vector(m);
                const double lhs = (An.matrix() * x - g->matrix() * x).norm();
                worst = std::max(worst, lhs / (nA * nA / (n - nA) * x.norm()));
            }
        }
        return std::pair{worst <= 1.0 + 1e-9, "max ratio to the bound " + fmt(worst)};
    });

    R.run("Yosida pointwise convergence A_n x -> A x", [&] {
        Vector x(m);
        for (Eigen::Index i = 0; i < m; ++i) x[i] = std::sin(std::numbers::pi * (g->grid().node(static_cast<std::size_t>(i)) - p.x_lo) / g->grid().length());
        std::vector<double> errs;
        for (double n : {10.0, 100.0, 1000.0}) errs.push_back((yosida(*g, n).matrix() * x - g->matrix() * x).norm());
        const bool ok = errs[0] > errs[1] && errs[1] > errs[2];
        return std::pair{ok, "errors " + fmt(errs[0]) + ", " + fmt(errs[1]) + ", " + fmt(errs[2])};
    });

    R.run("Trotter-Kato for the Yosida family", [&] {
        std::vector<std::shared_ptr<const SectorialGenerator>> fam;
        for (double n : {10.0, 100.0, 1000.0}) fam.push_back(std::make_shared<const SectorialGenerator>(yosida(*g, n)));
        const std::vector<Vector> probes{rng.normal_vector(m)};
        const double ts[] = {0.1 * T, 0.25 * T, 0.5 * T, T};
        const auto rows = trotter_kato_check(fam, g, std::complex<double>(p.w + 1.0, 0.0), probes, ts);
        const bool ok = rows[0].semigroup_error > rows[1].semigroup_error && rows[1].semigroup_error > rows[2].semigroup_error &&
                        rows[0].resolvent_error > rows[1].resolvent_error && rows[1].resolvent_error > rows[2].resolvent_error;
        return std::pair{ok, "semigroup errors " + fmt(rows[0].semigroup_error) + ", " + fmt(rows[1].semigroup_error) + ", " +
                                 fmt(rows[2].semigroup_error)};
    });

    R.run("degenerate algebra on the middle half", [&] {
        const double L = g->grid().length();
        const auto sub = std::make_shared<const SectorialGenerator>(restrict_to_subdomain(*g, p.x_lo + 0.25 * L, p.x_lo + 0.75 * L));
        const SemigroupEvaluator evs(sub);
        const Matrix P = sub->mask().asDiagonal();
        double worst = (P * P - P).cwiseAbs().maxCoeff();
        worst = std::max(worst, (evs.matrix(0.0) - P).cwiseAbs().maxCoeff());
        for (double t : times) {
            const Matrix& S = evs.matrix(t);
            worst = std::max({worst, (S * P - S).cwiseAbs().maxCoeff(), (P * S - S).cwiseAbs().maxCoeff()});
        }
        return std::pair{worst <= 1e-12, std::to_string(sub->active().size()) + " active nodes, max error " + fmt(worst)};
    });
    return R;
}

// ---------------------------------------------------------------------------
// gamma

inline SuiteResult check_gamma() {
    SuiteResult R{"gamma", {}};
    ProbeRng rng(0x6a33, 2);

    R.run("exactness at r = 2 on 50 random operators", [&] {
        double worst = 0.0;
        bool flags = true;
        for (int k = 0; k < 50; ++k) {
            const auto m = static_cast<std::size_t>(2 + rng.unit() * 10);
            const auto rank = static_cast<Eigen::Index>(rng.unit() * 6);
            const SpatialGrid grid(0.0, 1.0, m, 2.0);
            const Matrix X = rng.normal_matrix(static_cast<Eigen::Index>(m), rank);
            const GammaEstimate e = gamma_norm(FiniteRankOperator::from_images(X), grid);
            double s = 0.0;
            for (Eigen::Index j = 0; j < rank; ++j) s += std::pow(grid.norm(Vector(X.col(j))), 2);
            worst = std::max(worst, std::abs(e.value - std::sqrt(s)) / std::max(1.0, std::sqrt(s)));
            flags = flags && e.exact && e.std_error == 0.0;
        }
        return std::pair{flags && worst <= 1e-12, "max relative error " + fmt(worst) + ", std_error 0 on all"};
    });

    R.run("tensor identity ||f (x) S||_gamma = ||f||_L2(mu) ||S||_gamma", [&] {
        double worst = 0.0;
        for (int k = 0; k < 20; ++k) {
            const std::size_t m = 8;
            const SpatialGrid grid(0.0, 1.0, m, 2.0);
            const double alpha = 0.4 * rng.unit();
            const WeightedTimeMeasure mu = WeightedTimeMeasure::on_grid(TimeGrid(1.0, 40), 40, alpha);
            const Matrix S = rng.normal_matrix(static_cast<Eigen::Index>(m), 2);
            std::vector<Matrix> phi;
            double f2 = 0.0;
            for (std::size_t i = 0; i < mu.cells(); ++i) {
                const double f = rng.normal();
                phi.push_back(f * S);
                f2 += f * f * mu.node_weights()[i];
            }
            const double lhs = gamma_norm(represent_kernel(phi, mu, 2), grid).value;
            const double rhs = std::sqrt(f2) * gamma_norm(FiniteRankOperator::from_images(S), grid).value;
            worst = std::max(worst, std::abs(lhs - rhs) / rhs);
        }
        return std::pair{worst <= 1e-6, "max relative error " + fmt(worst)};
    });

    R.run("indicator tensor: (b'-a')^{1/2} ||S||_gamma", [&] {
        const SpatialGrid grid(0.0, 1.0, 6, 2.0);
        const WeightedTimeMeasure mu = WeightedTimeMeasure::on_grid(TimeGrid(1.0, 20), 20, 0.0);
        const Matrix S = rng.normal_matrix(6, 3);
        std::vector<Matrix> phi;
        for (std::size_t i = 0; i < mu.cells(); ++i) phi.push_back(i >= 5 && i < 13 ? S : Matrix::Zero(6, 3));
        const double lhs = gamma_norm(represent_kernel(phi, mu, 3), grid).value;
        const double rhs = std::sqrt(0.4) * gamma_norm(FiniteRankOperator::from_images(S), grid).value;
        const double err = std::abs(lhs - rhs) / rhs;
        return std::pair{err <= 1e-12, "relative error " + fmt(err)};
    });

    R.run("weighted measure total mass t^{1-2a}/(1-2a)", [&] {
        double worst = 0.0;
        for (double alpha : {0.0, 0.1, 0.25, 0.4}) {
            const auto mu = WeightedTimeMeasure::on_grid(TimeGrid(0.7, 100), 100, alpha);
            const double exact = std::pow(0.7, 1.0 - 2.0 * alpha) / (1.0 - 2.0 * alpha);
            worst = std::max(worst, std::abs(mu.total_mass() - exact) / exact);
            bool positive = true;
            for (double w : mu.node_weights()) positive = positive && w > 0.0 && std::isfinite(w);
            if (!positive) return std::pair{false, std::string("non-positive cell mass")};
        }
        return std::pair{worst <= 1e-8, "max relative error " + fmt(worst)};
    });

    R.run("multiplier convergence for Yosida families, n = 10, 100, 1000", [&] {
        const auto g = limit_generator(heat_problem(16));
        const SemigroupEvaluator ev(g);
        std::vector<std::shared_ptr<const SemigroupEvaluator>> evn;
        const double sched[] = {10.0, 100.0, 1000.0};
        for (double n : sched) evn.push_back(std::make_shared<const SemigroupEvaluator>(yosida(*g, n)));
        const double beta = 0.25;
        auto family = [&](double n, double t) -> Matrix {
            const std::size_t idx = n == 10.0 ? 0 : n == 100.0 ? 1 : 2;
            return std::pow(t, beta) * evn[idx]->matrix(t);
        };
        auto limit = [&](double t) -> Matrix { return std::pow(t, beta) * ev.matrix(t); };
        const auto mu = WeightedTimeMeasure::on_grid(TimeGrid(1.0, 32), 32, 0.0, 0);
        const Matrix x = rng.normal_matrix(16, 2);
        std::vector<Matrix> kernel(mu.cells(), x);
        const auto rows = multiplier_convergence_check(family, limit, kernel, mu, g->grid(), sched);
        const bool ok = rows[0].error.value > rows[1].error.value && rows[1].error.value > rows[2].error.value;
        return std::pair{ok, "errors " + fmt(rows[0].error.value) + ", " + fmt(rows[1].error.value) + ", " + fmt(rows[2].error.value)};
    });

    R.run("identical multipliers and rank-0 kernels give 0", [&] {
        const auto g = limit_generator(heat_problem(8));
        const SemigroupEvaluator ev(g);
        const auto mu = WeightedTimeMeasure::on_grid(TimeGrid(1.0, 8), 8, 0.2);
        std::vector<Matrix> kernel(mu.cells(), rng.normal_matrix(8, 1));
        const double sched[] = {1.0, 2.0};
        auto same = [&](double, double t) -> Matrix { return ev.matrix(t); };
        auto limit = [&](double t) -> Matrix { return ev.matrix(t); };
        const auto rows = multiplier_convergence_check(same, limit, kernel, mu, g->grid(), sched);
        std::vector<Matrix> empty(mu.cells(), Matrix(8, 0));
        const auto rows0 = multiplier_convergence_check([](double, double) { return Matrix::Identity(8, 8); }, limit, empty,
                                                        mu, g->grid(), sched);
        const bool ok = rows[0].error.value == 0.0 && rows[1].error.value == 0.0 && rows0[0].error.value == 0.0;
        return std::pair{ok, std::string("exact zeros")};
    });

    R.run("Monte Carlo consistency at r = 3, 4 (1e5 vs 1e6 samples)", [&] {
        std::string detail;
        bool ok = true;
        for (double r : {3.0, 4.0}) {
            const SpatialGrid grid(0.0, 1.0, 4, r);
            const auto op = FiniteRankOperator::from_images(rng.normal_matrix(4, 3));
            const auto a = gamma_norm(op, grid, 100000, 11);
            const auto b = gamma_norm(op, grid, 1000000, 12);
            const double z = std::abs(a.value - b.value) / std::hypot(a.std_error, b.std_error);
            ok = ok && z <= 3.0;
            detail += "r=" + fmt(r) + ": |diff|/se = " + fmt(z) + "; ";
        }
        return std::pair{ok, detail};
    });

    R.run("rank-one closed form at r = 4", [&] {
        const SpatialGrid grid(0.0, 1.0, 5, 4.0);
        Matrix X = Matrix::Zero(5, 1);
        X(0, 0) = 2.5;
        const auto e = gamma_norm(FiniteRankOperator::from_images(X), grid, 200000, 5);
        const double exact = 2.5 * grid.norm(Vector(Vector::Unit(5, 0)));
        const double z = std::abs(e.value - exact) / e.std_error;
        return std::pair{z <= 3.0, "estimate " + fmt(e.value) + " vs " + fmt(exact) + " (" + fmt(z) + " se)"};
    });

    R.run("ideal property ||S R T|| <= ||S|| ||R|| ||T||", [&] {
        bool ok = true;
        double worst = 0.0;
        for (int k = 0; k < 10; ++k) {
            const bool hilbert = k % 2 == 0;
            const SpatialGrid grid(0.0, 1.0, 5, hilbert ? 2.0 : 4.0);
            const Matrix X = rng.normal_matrix(5, 3);
            const Matrix Tm = rng.normal_matrix(3, 3);
            Matrix S;
            double nS = 0.0;
            if (hilbert) {
                S = rng.normal_matrix(5, 5);
                nS = spectral_norm(S);
            } else {
                const Vector d = rng.normal_vector(5);
                S = d.asDiagonal();
                nS = d.cwiseAbs().maxCoeff();
            }
            const auto lhs = gamma_norm(FiniteRankOperator::from_images(S * X * Tm), grid, 100000, 100 + k);
            const auto r = gamma_norm(FiniteRankOperator::from_images(X), grid, 100000, 200 + k);
            const double bound = nS * r.value * spectral_norm(Tm) + 3.0 * (lhs.std_error + nS * spectral_norm(Tm) * r.std_error);
            worst = std::max(worst, lhs.value / bound);
            ok = ok && lhs.value <= bound;
        }
        return std::pair{ok, "max ratio to the bound " + fmt(worst)};
    });

    R.run("gamma bound upper: constant family and e^{-s}", [&] {
        OperatorFamily I{[](double) { return Matrix::Identity(3, 3); }, {}, std::nullopt};
        const double b1 = gamma_bound_upper(I, 0.0, 1.0);
        OperatorFamily e{[](double s) { return Matrix::Constant(1, 1, std::exp(-s)); },
                         [](double s) { return Matrix::Constant(1, 1, -std::exp(-s)); }, std::nullopt};
        const double b2 = gamma_bound_upper(e, 0.0, 1.0);
        const double exact = 2.0 - std::exp(-1.0);
        const bool ok = std::abs(b1 - 1.0) <= 1e-12 && std::abs(b2 - exact) <= 1e-8;
        return std::pair{ok, "constant " + fmt(b1) + ", e^{-s} " + fmt(b2) + " vs " + fmt(exact)};
    });

    R.run("gamma bound of {s^a S(s)} scales like T^a", [&] {
        const auto g = limit_generator(heat_problem(16));
        const SemigroupEvaluator ev(g);
        const double a = 0.25;
        OperatorFamily fam{[&](double s) { return Matrix(std::pow(s, a) * ev.matrix(s)); },
                           [&](double s) {
                               const Matrix& S = ev.matrix(s);
                               return Matrix(a * std::pow(s, a - 1.0) * S + std::pow(s, a) * g->matrix() * S);
                           },
                           Matrix::Zero(16, 16)};
        std::vector<double> ratios;
        for (double T : {0.0625, 0.125, 0.25, 0.5, 1.0}) ratios.push_back(gamma_bound_upper(fam, 0.0, T) / std::pow(T, a));
        const double hi = *std::max_element(ratios.begin(), ratios.end());
        const double lo = *std::min_element(ratios.begin(), ratios.end());
        return std::pair{std::isfinite(hi) && hi / lo <= 2.0,
                         "bound / T^a in [" + fmt(lo) + ", " + fmt(hi) + "] over T = 1/16..1"};
    });

    R.run("gamma bound upper rejects a non-integrable derivative", [&] {
        OperatorFamily fam{[](double s) { return Matrix::Constant(1, 1, std::log(s)); },
                           [](double s) { return Matrix::Constant(1, 1, 1.0 / s); },
                           Matrix::Zero(1, 1)};
        try {
            (void)gamma_bound_upper(fam, 0.0, 1.0);
        } catch (const NumericError& e) {
            return std::pair{true, std::string(e.what())};
        }
        return std::pair{false, std::string("accepted 1/s")};
    });

    R.run("gamma bound lower <= upper", [&] {
        const auto g = limit_generator(heat_problem(8));
        const SemigroupEvaluator ev(g);
        OperatorFamily fam{[&](double s) { return ev.matrix(s); }, {}, std::nullopt};
        fam.value_at_start = Matrix::Identity(8, 8);
        const double lo = gamma_bound_lower(fam, 0.05, 1.0, g->grid(), 64, 4, 3, 1000);
        const double hi = gamma_bound_upper(fam, 0.05, 1.0);
        return std::pair{lo <= hi && lo > 0.0, "lower " + fmt(lo) + ", upper " + fmt(hi)};
    });

    R.run("square function equals gamma norm at r = 2", [&] {
        const SpatialGrid grid(0.0, 1.0, 6, 2.0);
        const auto mu = WeightedTimeMeasure::on_grid(TimeGrid(0.5, 25), 25, 0.3);
        std::vector<Vector> phi;
        std::vector<Matrix> phim;
        for (std::size_t i = 0; i < mu.cells(); ++i) {
            phi.push_back(rng.normal_vector(6));
            phim.push_back(phi.back());
        }
        const double a = square_function_norm(std::span<const Vector>(phi), mu, grid);
        const double b = gamma_norm(represent_kernel(phim, mu, 1), grid).value;
        const double err = std::abs(a - b) / b;
        return std::pair{err <= 1e-12, "relative error " + fmt(err)};
    });

    R.run(std::string("square function vs gamma norm at r = 4, two nodes (") + kEquivalenceLabel + ")", [&] {
        Matrix X(2, 2);
        X << 1.0, 0.3, 0.5, -1.0;
        const auto eq = square_function_equivalence(FiniteRankOperator::from_images(X), SpatialGrid(0.0, 1.0, 2, 4.0),
                                                    1000000, 0x5f4);
        return std::pair{eq.within, "gamma " + fmt(eq.gamma.value) + " (se " + fmt(eq.gamma.std_error) +
                                        "), square function " + fmt(eq.square_function) + ", gap " +
                                        fmt(eq.relative_gap) + " vs " + fmt(kEquivalenceTolerance)};
    });
    return R;
}

// ---------------------------------------------------------------------------
// noise

inline SuiteResult check_noise() {
    SuiteResult R{"noise", {}};

    R.run("determinism: same (seed, stream) gives identical paths", [&] {
        const TimeGrid grid(1.0, 200);
        const auto a = sample_path(grid, 3, 42, 7);
        const auto b = sample_path(grid, 3, 42, 7);
        const auto c = sample_path(grid, 3, 42, 8);
        return std::pair{a.bitwise_equal(b) && !a.bitwise_equal(c), std::string("bitwise")};
    });

    R.run("binary record round trip", [&] {
        const auto a = sample_path(TimeGrid(0.3, 77), 2, 0xdeadbeefULL, 123456789ULL);
        const auto b = PathRecord::decode(PathRecord::of(a).encode()).regenerate();
        return std::pair{a.bitwise_equal(b), std::string("40-byte record")};
    });

    R.run("increment mean and variance (4 sigma gate)", [&] {
        const TimeGrid grid(1.0, 250);
        const std::size_t paths = 400;
        double worst_mean = 0.0, worst_var = 0.0;
        for (std::size_t k = 0; k < 2; ++k) {
            double s = 0.0, s2 = 0.0;
            for (std::size_t p = 0; p < paths; ++p) {
                const auto path = sample_path(grid, 2, 1, p);
                s += path.increments().col(static_cast<Eigen::Index>(k)).sum();
                s2 += path.increments().col(static_cast<Eigen::Index>(k)).squaredNorm();
            }
            const double n = static_cast<double>(paths * grid.steps());
            worst_mean = std::max(worst_mean, std::abs(s / n) / std::sqrt(grid.dt() / n));
            worst_var = std::max(worst_var, std::abs(s2 / n / grid.dt() - 1.0) / std::sqrt(2.0 / n));
        }
        return std::pair{worst_mean <= 4.0 && worst_var <= 4.0,
                         "mean " + fmt(worst_mean) + " sigma, variance " + fmt(worst_var) + " sigma"};
    });

    R.run("cross-channel correlation over 1e5 increments", [&] {
        const TimeGrid grid(1.0, 1000);
        double sxy = 0.0, sxx = 0.0, syy = 0.0;
        for (std::size_t p = 0; p < 100; ++p) {
            const auto path = sample_path(grid, 2, 3, p);
            sxy += path.increments().col(0).dot(path.increments().col(1));
            sxx += path.increments().col(0).squaredNorm();
            syy += path.increments().col(1).squaredNorm();
        }
        const double corr = sxy / std::sqrt(sxx * syy);
        return std::pair{std::abs(corr) < 0.01, "correlation " + fmt(corr)};
    });

    R.run("Var W(T) over 1e4 paths within 5% of T", [&] {
        const TimeGrid grid(2.0, 50);
        double s2 = 0.0;
        const std::size_t paths = 10000;
        for (std::size_t p = 0; p < paths; ++p) {
            const double w = sample_path(grid, 1, 5, p).value_at(50)[0];
            s2 += w * w;
        }
        const double v = s2 / static_cast<double>(paths);
        return std::pair{std::abs(v / 2.0 - 1.0) <= 0.05, "Var W(T) = " + fmt(v) + " (T = 2)"};
    });

    R.run("independence across stream ids", [&] {
        const TimeGrid grid(1.0, 20);
        double sxy = 0.0, sxx = 0.0, syy = 0.0;
        for (std::size_t j = 0; j < 1000; ++j) {
            const double a = sample_path(grid, 1, 9, 2 * j).value_at(20)[0];
            const double b = sample_path(grid, 1, 9, 2 * j + 1).value_at(20)[0];
            sxy += a * b;
            sxx += a * a;
            syy += b * b;
        }
        const double corr = sxy / std::sqrt(sxx * syy);
        return std::pair{std::abs(corr) <= 4.0 / std::sqrt(1000.0), "correlation " + fmt(corr)};
    });

    R.run("coordinate projection", [&] {
        const auto path = sample_path(TimeGrid(1.0, 64), 3, 2, 0);
        const auto p1 = project(path, 1);
        const auto p3 = project(path, 3);
        bool ok = p3.bitwise_equal(path);
        ok = ok && p1.increments().col(1).isZero(0.0) && p1.increments().col(2).isZero(0.0);
        ok = ok && p1.increments().col(0) == path.increments().col(0);
        ok = ok && project(p1, 1).bitwise_equal(p1);
        for (std::size_t m = 0; m < 64; ++m) ok = ok && p1.increment(m).norm() <= path.increment(m).norm();
        bool rejects = false;
        try {
            (void)project(path, 0);
        } catch (const ValidationError&) {
            rejects = true;
        }
        return std::pair{ok && rejects, std::string("n = K identity, n = 1 zeroes 2..K, idempotent, contractive")};
    });

    R.run("discrete isometry of W_H over 2e4 paths", [&] {
        const TimeGrid grid(1.0, 16);
        ProbeRng rng(0x1503, 3);
        RowMatrix f1(16, 2), f2(16, 2);
        for (Eigen::Index i = 0; i < 16; ++i)
            for (Eigen::Index k = 0; k < 2; ++k) {
                f1(i, k) = rng.normal();
                f2(i, k) = rng.normal();
            }
        const double exact11 = f1.squaredNorm() * grid.dt();
        const double exact12 = (f1.array() * f2.array()).sum() * grid.dt();
        const std::size_t paths = 20000;
        double s11 = 0, q11 = 0, s12 = 0, q12 = 0;
        for (std::size_t p = 0; p < paths; ++p) {
            const auto path = sample_path(grid, 2, 17, p);
            const double a = pair_with_step(path, f1);
            const double b = pair_with_step(path, f2);
            s11 += a * a;
            q11 += a * a * a * a;
            s12 += a * b;
            q12 += a * b * a * b;
        }
        const double n = static_cast<double>(paths);
        const double m11 = s11 / n, m12 = s12 / n;
        const double se11 = std::sqrt((q11 / n - m11 * m11) / n);
        const double se12 = std::sqrt((q12 / n - m12 * m12) / n);
        const bool ok = std::abs(m11 - exact11) <= 3 * se11 && std::abs(m12 - exact12) <= 3 * se12;
        return std::pair{ok, "Var " + fmt(m11) + " vs " + fmt(exact11) + ", Cov " + fmt(m12) + " vs " + fmt(exact12)};
    });
    return R;
}

// ---------------------------------------------------------------------------
// solver

namespace detail {

/// sup_m |X_m - e^{-2 t_m}| for u' = -u - u on [0, 1], X_0 = 1.
inline double scalar_decay_error(std::size_t N) {
    const auto g = matrix_generator(Matrix::Constant(1, 1, -1.0));
    const SemigroupEvaluator ev(g);
    NonlinearityF F{Expression::parse("-u", {ExprVar::u}), 1.0, 1.0};
    const auto path = sample_path(TimeGrid(1.0, N), 1, 0, 0);
    const auto X = solve_exponential_euler(ev, F, NonlinearityG::zero(1), Vector::Ones(1), path);
    double err = 0.0;
    for (std::size_t m = 0; m <= N; ++m) err = std::max(err, std::abs(X.values()(static_cast<Eigen::Index>(m), 0) - std::exp(-2.0 * X.time().node(m))));
    return err;
}

}  // namespace detail

inline SuiteResult check_solver(const ProblemSpec& nonlinear) {
    SuiteResult R{"solver", {}};

    R.run("F = G = 0 reproduces S(t)xi", [&] {
        const auto g = limit_generator(heat_problem(16));
        const SemigroupEvaluator ev(g);
        Vector xi(16);
        for (Eigen::Index i = 0; i < 16; ++i) xi[i] = std::sin(std::numbers::pi * g->grid().node(static_cast<std::size_t>(i)));
        const auto path = sample_path(TimeGrid(0.5, 100), 1, 0, 0);
        const auto X = solve_exponential_euler(ev, NonlinearityF::zero(), NonlinearityG::zero(1), xi, path);
        double err = 0.0;
        for (std::size_t m = 0; m <= 100; ++m) err = std::max(err, (X.at(m) - ev.apply(X.time().node(m), xi)).norm());
        return std::pair{err <= 1e-9, "max error " + fmt(err)};
    });

    R.run("deterministic convolution, A = -1, f = 1", [&] {
        const SemigroupEvaluator ev(matrix_generator(Matrix::Constant(1, 1, -1.0)));
        const TimeGrid grid(1.0, 1000);
        const auto Y = det_convolution(ev, RowMatrix::Ones(1000, 1), grid);
        const double err = std::abs(Y.values()(1000, 0) - (1.0 - std::exp(-1.0)));
        return std::pair{err <= 5e-3, "|Y(1) - (1 - 1/e)| = " + fmt(err)};
    });

    R.run("scalar decay u' = -2u at dt = 1e-3", [&] {
        const double err = detail::scalar_decay_error(1000);
        return std::pair{err <= 5e-3, "sup error " + fmt(err)};
    });

    R.run("O(dt) ratio test, scalar", [&] {
        const double e1 = detail::scalar_decay_error(100), e2 = detail::scalar_decay_error(200),
                     e3 = detail::scalar_decay_error(400);
        const double r1 = e1 / e2, r2 = e2 / e3;
        return std::pair{r1 >= 1.6 && r1 <= 2.6 && r2 >= 1.6 && r2 <= 2.6, "ratios " + fmt(r1) + ", " + fmt(r2)};
    });

    R.run("O(dt) ratio test, eigenbasis-diagonal heat problem", [&] {
        const auto g = limit_generator(heat_problem(8));
        const SemigroupEvaluator ev(g);
        NonlinearityF F{Expression::parse("-u", {ExprVar::u}), 1.0, 1.0};
        Vector xi(8);
        for (Eigen::Index i = 0; i < 8; ++i) {
            const double x = g->grid().node(static_cast<std::size_t>(i));
            xi[i] = std::sin(std::numbers::pi * x) + 0.5 * std::sin(3 * std::numbers::pi * x);
        }
        std::vector<double> errs;
        for (std::size_t N : {50, 100, 200}) {
            const auto X = solve_exponential_euler(ev, F, NonlinearityG::zero(1), xi, sample_path(TimeGrid(1.0, N), 1, 0, 0));
            double err = 0.0;
            for (std::size_t m = 0; m <= N; ++m) {
                const double t = X.time().node(m);
                err = std::max(err, (X.at(m) - std::exp(-t) * ev.apply(t, xi)).norm());
            }
            errs.push_back(err);
        }
        const double r1 = errs[0] / errs[1], r2 = errs[1] / errs[2];
        return std::pair{r1 >= 1.6 && r1 <= 2.6 && r2 >= 1.6 && r2 <= 2.6, "ratios " + fmt(r1) + ", " + fmt(r2)};
    });

    // Additive noise: covariance of Z(T) against the Lyapunov integral in the
    // eigenbasis, and the Itô isometry for the scheme's own weights.
    {
        const auto g = limit_generator(heat_problem(4));
        const SemigroupEvaluator ev(g);
        const TimeGrid grid(0.1, 1000);
        NonlinearityG G{{Expression::parse("1", {}), Expression::parse("x", {ExprVar::x})}, 0.0, 1.0};
        const Matrix G0 = G.apply(g->grid(), Vector::Zero(4));
        const std::size_t paths = 10000;
        Matrix m2 = Matrix::Zero(4, 4), m4 = Matrix::Zero(4, 4);
        double n2 = 0.0, n4 = 0.0;
        bool ran = true;
        try {
            for (std::size_t p = 0; p < paths; ++p) {
                const auto X = solve_exponential_euler(ev, NonlinearityF::zero(), G, Vector::Zero(4), sample_path(grid, 2, 23, p));
                const Vector z = X.at(grid.steps());
                const Matrix zz = z * z.transpose();
                m2 += zz;
                m4 += zz.cwiseAbs2();
                const double nz = g->grid().h() * z.squaredNorm();
                n2 += nz;
                n4 += nz * nz;
            }
        } catch (const std::exception&) {
            ran = false;
        }
        const double n = static_cast<double>(paths);
        R.run("additive-noise covariance vs Lyapunov integral (1e4 paths)", [&] {
            if (!ran) return std::pair{false, std::string("sampling failed")};
            const auto& sp = *g->spectral();
            const Matrix B = sp.eigenvectors.transpose() * G0 * G0.transpose() * sp.eigenvectors;
            Matrix Cm(4, 4);
            for (Eigen::Index k = 0; k < 4; ++k)
                for (Eigen::Index l = 0; l < 4; ++l) {
                    const double s = sp.eigenvalues[k] + sp.eigenvalues[l];
                    Cm(k, l) = B(k, l) * std::expm1(s * grid.T()) / s;
                }
            const Matrix C = sp.eigenvectors * Cm * sp.eigenvectors.transpose();
            double worst = 0.0;
            for (Eigen::Index i = 0; i < 4; ++i)
                for (Eigen::Index j = i; j < 4; ++j) {
                    const double mean = m2(i, j) / n;
                    const double se = std::sqrt((m4(i, j) / n - mean * mean) / n);
                    worst = std::max(worst, std::abs(mean - C(i, j)) / se);
                }
            return std::pair{worst <= 3.0, "max entry deviation " + fmt(worst) + " std errors"};
        });
        R.run("Itô isometry at r = 2", [&] {
            if (!ran) return std::pair{false, std::string("sampling failed")};
            double exact = 0.0;
            for (std::size_t m = 0; m < grid.steps(); ++m) {
                const Matrix& S = ev.matrix(grid.T() - grid.node(m));
                exact += g->grid().h() * (S * G0).squaredNorm() * grid.dt();
            }
            const double mean = n2 / n;
            const double se = std::sqrt((n4 / n - mean * mean) / n);
            const double z = std::abs(mean - exact) / se;
            return std::pair{z <= 3.0, "E||Z(T)||^2 = " + fmt(mean) + " vs " + fmt(exact) + " (" + fmt(z) + " se)"};
        });
    }

    R.run("geometric case keeps E X(T) = xi (1e4 paths)", [&] {
        const SemigroupEvaluator ev(matrix_generator(Matrix::Zero(1, 1)));
        NonlinearityG G{{Expression::parse("u", {ExprVar::u})}, 1.0, 1.0};
        const TimeGrid grid(1.0, 100);
        double s = 0.0, s2 = 0.0;
        const std::size_t paths = 10000;
        for (std::size_t p = 0; p < paths; ++p) {
            const double x = solve_exponential_euler(ev, NonlinearityF::zero(), G, Vector::Ones(1), sample_path(grid, 1, 29, p))
                                 .values()(100, 0);
            s += x;
            s2 += x * x;
        }
        const double n = static_cast<double>(paths);
        const double mean = s / n;
        const double se = std::sqrt((s2 / n - mean * mean) / n);
        return std::pair{std::abs(mean - 1.0) <= 3.0 * se, "mean " + fmt(mean) + ", se " + fmt(se)};
    });

    R.run("adaptedness: truncated path reproduces the prefix bitwise", [&] {
        const auto g = limit_generator(nonlinear);
        const SemigroupEvaluator ev(g);
        const auto p = nonlinear;
        NonlinearityF F{Expression::parse(p.f, {ExprVar::x, ExprVar::u}), p.L_F, p.C_F};
        NonlinearityG G;
        for (const auto& gk : p.g) G.g.push_back(Expression::parse(gk, {ExprVar::x, ExprVar::u}));
        const Vector xi = InitialDatum{Expression::parse(p.xi, {ExprVar::x})}.sample(g->grid(), 0);
        const auto path = sample_path(TimeGrid(p.T, 64), p.K(), 31, 0);
        const auto full = solve_exponential_euler(ev, F, G, xi, path);
        const auto part = solve_exponential_euler(ev, F, G, xi, prefix(path, 32));
        const bool ok = std::memcmp(full.values().data(), part.values().data(), sizeof(double) * 33 * p.m) == 0;
        return std::pair{ok, std::string("rows 0..32")};
    });

    R.run("degenerate mode vanishes outside the sub-domain", [&] {
        const auto g = limit_generator(heat_problem(31));
        const auto sub = std::make_shared<const SectorialGenerator>(restrict_to_subdomain(*g, 0.25, 0.75));
        const SemigroupEvaluator ev(sub);
        NonlinearityG G{{Expression::parse("1 + 0.5*sin(u)", {ExprVar::u})}, 0.5, 1.5};
        const auto X = solve_exponential_euler(ev, NonlinearityF{Expression::parse("u/(1+abs(u))", {ExprVar::u}), 1, 1}, G,
                                               Vector::Ones(31), sample_path(TimeGrid(0.5, 64), 1, 37, 0));
        double worst = 0.0;
        for (std::size_t m = 0; m <= 64; ++m)
            for (Eigen::Index i = 0; i < 31; ++i)
                if (sub->mask()[i] == 0.0) worst = std::max(worst, std::abs(X.values()(static_cast<Eigen::Index>(m), i)));
        return std::pair{worst == 0.0, "max |X| on masked nodes " + fmt(worst)};
    });

    R.run("Picard: F = G = 0 converges in one iteration", [&] {
        const SemigroupEvaluator ev(limit_generator(heat_problem(8)));
        const auto res = picard_solve(ev, NonlinearityF::zero(), NonlinearityG::zero(1), Vector::Ones(8),
                                      sample_path(TimeGrid(0.5, 32), 1, 0, 0));
        return std::pair{res.converged && res.iterations == 1, "iterations " + std::to_string(res.iterations)};
    });

    R.run("Picard: linear F matches the Euler recursion", [&] {
        const SemigroupEvaluator ev(limit_generator(heat_problem(8)));
        NonlinearityF F{Expression::parse("-2*u + 0.5", {ExprVar::u}), 2.0, 2.0};
        const auto path = sample_path(TimeGrid(0.5, 64), 1, 0, 0);
        const auto res = picard_solve(ev, F, NonlinearityG::zero(1), Vector::Ones(8), path, PicardOptions{100, 1e-14});
        const auto X = solve_exponential_euler(ev, F, NonlinearityG::zero(1), Vector::Ones(8), path);
        const double err = sup_increment(res.process, X);
        return std::pair{err <= 1e-8, "sup difference " + fmt(err) + " after " + std::to_string(res.iterations) + " iterations"};
    });

    R.run("Picard vs Euler discrepancy shrinks under dt halving", [&] {
        const auto p = nonlinear;
        const auto g = limit_generator(p);
        const SemigroupEvaluator ev(g);
        NonlinearityF F{Expression::parse(p.f, {ExprVar::x, ExprVar::u}), p.L_F, p.C_F};
        NonlinearityG G;
        for (const auto& gk : p.g) G.g.push_back(Expression::parse(gk, {ExprVar::x, ExprVar::u}));
        const Vector xi = InitialDatum{Expression::parse(p.xi, {ExprVar::x})}.sample(g->grid(), 0);
        const std::size_t fine = 256;
        std::vector<double> rms(3, 0.0);
        const std::size_t paths = 16;
        for (std::size_t s = 0; s < paths; ++s) {
            const auto path = sample_path(TimeGrid(p.T, fine), p.K(), 41, s);
            for (std::size_t lvl = 0; lvl < 3; ++lvl) {
                const auto coarse = coarsen(path, std::size_t{4} >> lvl);
                const auto pic = picard_solve(ev, F, G, xi, coarse, PicardOptions{200, 1e-13, ConvolutionRule::trapezoidal});
                const auto eul = solve_exponential_euler(ev, F, G, xi, coarse);
                const double d = sup_increment(pic.process, eul);
                rms[lvl] += d * d / paths;
            }
        }
        for (double& v : rms) v = std::sqrt(v);
        const bool ok = rms[0] > rms[1] && rms[1] > rms[2];
        return std::pair{ok, "RMS sup discrepancy at N = 64, 128, 256: " + fmt(rms[0]) + ", " + fmt(rms[1]) + ", " + fmt(rms[2])};
    });
    return R;
}

// ---------------------------------------------------------------------------
// norms

inline SuiteResult check_norms() {
    SuiteResult R{"norms", {}};
    ProbeRng rng(0x7011, 4);

    // A pool of rough trajectories from an additive-noise heat problem.
    const auto g = limit_generator(heat_problem(16));
    const SemigroupEvaluator ev(g);
    NonlinearityG G{{Expression::parse("1", {}), Expression::parse("sin(pi*x)", {ExprVar::x})}, 0.0, 1.0};
    const TimeGrid grid(1.0, 64);
    auto trajectory = [&](std::size_t s) {
        Vector xi(16);
        for (Eigen::Index i = 0; i < 16; ++i) xi[i] = rng.normal();
        return solve_exponential_euler(ev, NonlinearityF{Expression::parse("u/(1+abs(u))", {ExprVar::u}), 1, 1}, G, xi,
                                       sample_path(grid, 2, 43, s));
    };

    R.run("sup norm of t x is ||x||", [&] {
        const Vector x = rng.normal_vector(16);
        RowMatrix v(65, 16);
        for (Eigen::Index m = 0; m <= 64; ++m) v.row(m) = (grid.node(static_cast<std::size_t>(m)) * x).transpose();
        const PathProcess X(grid, g->grid(), v);
        const double err = std::abs(sup_norm(X) - g->grid().norm(x));
        return std::pair{err <= 1e-12 * g->grid().norm(x), "error " + fmt(err)};
    });

    R.run("Hölder seminorm: constant 0, linear path at lambda = 1", [&] {
        const Vector x = rng.normal_vector(16);
        RowMatrix c = RowMatrix::Zero(65, 16), v(65, 16);
        for (Eigen::Index m = 0; m <= 64; ++m) {
            c.row(m) = x.transpose();
            v.row(m) = (grid.node(static_cast<std::size_t>(m)) * x).transpose();
        }
        const double h0 = holder_seminorm(PathProcess(grid, g->grid(), c), 0.25).value;
        const double h1 = holder_seminorm(PathProcess(grid, g->grid(), v), 1.0).value;
        const double err = std::abs(h1 - g->grid().norm(x)) / g->grid().norm(x);
        return std::pair{h0 == 0.0 && err <= 1e-12, "constant " + fmt(h0) + ", linear relative error " + fmt(err)};
    });

    R.run("Hölder at lambda = 0 is the oscillation", [&] {
        const auto X = trajectory(0);
        double osc = 0.0;
        for (std::size_t a = 0; a <= 64; ++a)
            for (std::size_t b = 0; b <= 64; ++b) osc = std::max(osc, g->grid().norm(Vector(X.at(a) - X.at(b))));
        const double h = holder_seminorm(X, 0.0).value;
        return std::pair{std::abs(h - osc) <= 1e-12 * osc && h <= 2.0 * sup_norm(X) * (1 + 1e-12),
                         "seminorm " + fmt(h) + ", oscillation " + fmt(osc)};
    });

    R.run("Hölder exponent monotonicity on the pair set", [&] {
        bool ok = true;
        for (std::size_t s = 0; s < 10; ++s) {
            const auto X = trajectory(100 + s);
            for (auto [mu, lam] : {std::pair{0.1, 0.25}, std::pair{0.25, 0.4}}) {
                ok = ok && holder_seminorm(X, mu).value <= std::pow(grid.T(), lam - mu) * holder_seminorm(X, lam).value * (1 + 1e-12);
            }
        }
        return std::pair{ok, std::string("10 trajectories")};
    });

    R.run("dyadic bound dominates the exact scan", [&] {
        bool ok = true;
        double worst = 0.0;
        for (std::size_t s = 0; s < 10; ++s) {
            const auto X = trajectory(200 + s);
            const double e = holder_seminorm(X, 0.25).value;
            const auto b = holder_seminorm(X, 0.25, HolderMode::dyadic_bound);
            ok = ok && b.is_bound && b.value >= e;
            worst = std::max(worst, b.value / e);
        }
        return std::pair{ok, "max bound / exact " + fmt(worst)};
    });

    R.run("grid refinement of the Hölder seminorm (N vs 2N)", [&] {
        std::string detail;
        bool ok = true;
        for (std::size_t s = 0; s < 3; ++s) {
            const auto path = sample_path(TimeGrid(1.0, 128), 2, 47, s);
            const Vector xi = Vector::Zero(16);
            NonlinearityF F{Expression::parse("u/(1+abs(u))", {ExprVar::u}), 1, 1};
            const double fine = holder_seminorm(solve_exponential_euler(ev, F, G, xi, path), 0.25).value;
            const double coarse = holder_seminorm(solve_exponential_euler(ev, F, G, xi, coarsen(path, 2)), 0.25).value;
            ok = ok && std::isfinite(fine) && std::isfinite(coarse);
            detail += fmt(coarse) + " -> " + fmt(fine) + "; ";
        }
        return std::pair{ok, "N = 64 -> 128: " + detail};
    });

    R.run("V_alpha of a constant path, closed form", [&] {
        const double alpha = 0.3, p = 8.0;
        const TimeGrid tg(1.0, 512);
        const Vector x = rng.normal_vector(16);
        RowMatrix v(513, 16);
        for (Eigen::Index m = 0; m <= 512; ++m) v.row(m) = x.transpose();
        const double got = v_alpha_seminorm(PathProcess(tg, g->grid(), v), alpha, p);
        const double e = 1.0 - 2.0 * alpha;
        const double k = p * e / 2.0;
        const double exact = g->grid().norm(x) * std::pow(1.0 / e, 0.5) * std::pow(1.0 / (k + 1.0), 1.0 / p);
        const double err = std::abs(got - exact) / exact;
        return std::pair{err <= 1e-4, "relative error " + fmt(err)};
    });

    R.run("V_alpha inner norm equals the direct gamma norm at r = 2", [&] {
        double worst = 0.0;
        for (std::size_t s = 0; s < 20; ++s) {
            const auto X = trajectory(300 + s);
            const auto mu = WeightedTimeMeasure::on_grid(grid, 64, 0.3);
            std::vector<Vector> phi;
            std::vector<Matrix> phim;
            for (std::size_t i = 0; i < 64; ++i) {
                phi.push_back(X.at(i));
                phim.push_back(X.at(i));
            }
            const double a = square_function_norm(std::span<const Vector>(phi), mu, g->grid());
            const double b = gamma_norm(represent_kernel(phim, mu, 1), g->grid()).value;
            worst = std::max(worst, std::abs(a - b) / b);
        }
        return std::pair{worst <= 1e-10, "max relative error " + fmt(worst)};
    });

    R.run("V_alpha glue inequality (fitted constant)", [&] {
        double C = 0.0;
        for (std::size_t s = 0; s < 100; ++s) {
            const auto X = trajectory(400 + s);
            const double whole = v_alpha_seminorm(X, 0.3, 8.0, 0, 64);
            const double left = v_alpha_seminorm(X, 0.3, 8.0, 0, 48);
            const double right = v_alpha_seminorm(X, 0.3, 8.0, 16, 64);
            C = std::max(C, whole / (left + right));
        }
        return std::pair{std::isfinite(C) && C > 0.0, "fitted glue constant " + fmt(C) + " over 100 trajectories"};
    });

    R.run("embedding constant stable across 3 batches", [&] {
        std::vector<double> Cs;
        for (std::size_t batch = 0; batch < 3; ++batch) {
            double C = 0.0;
            for (std::size_t s = 0; s < 20; ++s) {
                const auto X = trajectory(1000 + 20 * batch + s);
                C = std::max(C, v_alpha_seminorm(X, 0.3, 8.0) / (sup_norm(X) + holder_seminorm(X, 0.25).value));
            }
            Cs.push_back(C);
        }
        const double mean = (Cs[0] + Cs[1] + Cs[2]) / 3.0;
        bool ok = true;
        for (double c : Cs) ok = ok && std::abs(c / mean - 1.0) <= 0.2;
        return std::pair{ok, "C_embed per batch " + fmt(Cs[0]) + ", " + fmt(Cs[1]) + ", " + fmt(Cs[2])};
    });

    R.run("ensemble norm arithmetic", [&] {
        const std::vector<double> same(10, 3.5);
        const std::vector<double> two{0.0, 2.0};
        const double a = ensemble_norm(same, 2.0).mean_qth_root;
        const double b = ensemble_norm(two, 2.0).mean_qth_root;
        std::vector<double> v, rev, scaled;
        for (int i = 0; i < 101; ++i) v.push_back(std::abs(rng.normal()));
        rev.assign(v.rbegin(), v.rend());
        for (double x : v) scaled.push_back(2.5 * x);
        const double e = ensemble_norm(v, 3.0).mean_qth_root;
        const bool perm = std::abs(ensemble_norm(rev, 3.0).mean_qth_root - e) <= 1e-14 * e;
        const bool scale = std::abs(ensemble_norm(scaled, 3.0).mean_qth_root - 2.5 * e) <= 1e-12 * e;
        std::vector<double> bad = v;
        bad.push_back(std::numeric_limits<double>::quiet_NaN());
        const bool tally = ensemble_norm(bad, 3.0).rejected == 1;
        const bool ok = std::abs(a - 3.5) <= 1e-15 && std::abs(b - std::sqrt(2.0)) <= 1e-15 && perm && scale && tally;
        return std::pair{ok, std::string("constant, {0,2}, permutation, scaling, rejection tally")};
    });

    R.run("ensemble norm vs Gaussian absolute moments", [&] {
        std::vector<double> v;
        for (std::uint32_t i = 0; i < 100000; ++i) v.push_back(gaussian(53, StreamDomain::probe, 9, i, 0));
        bool ok = true;
        std::string detail;
        for (double q : {1.0, 2.0, 3.0}) {
            const double exact = std::pow(std::pow(2.0, q / 2.0) * boost::math::tgamma((q + 1.0) / 2.0) / std::sqrt(std::numbers::pi), 1.0 / q);
            const auto e = ensemble_norm(v, q);
            const double z = std::abs(e.mean_qth_root - exact) / e.std_error;
            ok = ok && z <= 3.0;
            detail += "q=" + fmt(q) + ": " + fmt(z) + " se; ";
        }
        return std::pair{ok, detail};
    });

    R.run("compensation: zero at t = 0, identity for xi = 0", [&] {
        const auto X = trajectory(7);
        const Vector xi = X.at(0);
        const auto C = compensate(X, ev, xi);
        const auto I = compensate(X, ev, Vector::Zero(16));
        const bool ok = C.at(0).isZero(0.0) && I.values() == X.values();
        return std::pair{ok, std::string("exact")};
    });
    return R;
}

inline const std::vector<std::string>& suite_names() {
    static const std::vector<std::string> names{"semigroup", "gamma", "noise", "solver", "norms"};
    return names;
}

/// Runs a named suite; `problem` feeds the config-aware suites (semigroup,
/// solver) and defaults to the built-in heat and nonlinear problems.
inline SuiteResult run_suite(const std::string& name, const std::optional<ProblemSpec>& problem = std::nullopt) {
    if (name == "semigroup") return check_semigroup(problem ? *problem : heat_problem());
    if (name == "gamma") return check_gamma();
    if (name == "noise") return check_noise();
    if (name == "solver") return check_solver(problem ? *problem : nonlinear_problem());
    if (name == "norms") return check_norms();
    throw ValidationError("unknown suite '" + name + "' (expected semigroup, gamma, noise, solver or norms)");
}

}  // namespace spdelab::checks
