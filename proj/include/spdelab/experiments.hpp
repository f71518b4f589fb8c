#pragma once

// Convergence studies: approximating sequences (A_n, F_n, G_n, xi_n), coupled
// ensembles on shared Brownian and initial-datum streams, and trend verdicts.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <memory>
#include <numeric>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"
#include "spdelab/digest.hpp"
#include "spdelab/domain_ops.hpp"
#include "spdelab/error.hpp"
#include "spdelab/expression.hpp"
#include "spdelab/mild_solver.hpp"
#include "spdelab/noise.hpp"
#include "spdelab/path_norms.hpp"
#include "spdelab/rng.hpp"

namespace spdelab {

// ---------------------------------------------------------------------------
// Problem and approximation data

/// Limit problem plus the shared constant set every sequence member is
/// audited against.
struct ProblemSpec {
    double x_lo = 0.0;
    double x_hi = 1.0;
    std::size_t m = 32;
    double r = 2.0;

    std::string a = "1";
    std::string b = "0";
    double kappa = 0.5;
    double coeff_bound = 2.0;

    double w = 0.0;
    double sector_M = 4.0;
    std::size_t probe_count = 16;

    std::string f = "0";
    double L_F = 0.0;
    double C_F = 0.0;
    std::vector<std::string> g = {"0"};
    double L_G = 0.0;
    double C_G = 0.0;
    double audit_range = 10.0;  // probe lattice half-width U

    std::string xi = "0";
    double xi_sigma = 0.0;

    double T = 0.5;
    std::size_t N = 128;

    std::size_t K() const noexcept { return g.size(); }
};

enum class ModeKind { coefficients, yosida, noise_projection, domain_mosco };
enum class MoscoDirection { increasing, decreasing };

inline const char* to_string(ModeKind k) {
    switch (k) {
        case ModeKind::coefficients: return "coefficients";
        case ModeKind::yosida: return "yosida";
        case ModeKind::noise_projection: return "noise_projection";
        case ModeKind::domain_mosco: return "domain_mosco";
    }
    return "?";
}

struct ApproximationSpec {
    std::vector<ModeKind> modes = {ModeKind::coefficients};
    std::vector<double> schedule;

    // Coefficient-mode templates in (x, n); unset members reuse the limit.
    std::optional<std::string> a_n;
    std::optional<std::string> b_n;
    std::optional<std::string> f_n;
    std::optional<std::vector<std::string>> g_n;
    std::optional<std::string> xi_n;

    MoscoDirection direction = MoscoDirection::increasing;
    std::optional<std::pair<double, double>> limit_domain;  // decreasing mode only

    bool has(ModeKind k) const { return std::find(modes.begin(), modes.end(), k) != modes.end(); }
    bool exploratory() const { return modes.size() > 1; }

    std::string label() const {
        std::string s;
        for (std::size_t i = 0; i < modes.size(); ++i) s += (i ? "+" : "") + std::string(to_string(modes[i]));
        return s;
    }
};

/// One assembled problem of the sequence (or the limit).
struct Instance {
    double n = 0.0;
    bool is_limit = false;
    std::shared_ptr<const SectorialGenerator> generator;
    std::shared_ptr<const SemigroupEvaluator> semigroup;
    std::optional<CoefficientField> coefficients;
    NonlinearityF F;
    NonlinearityG G;
    InitialDatum xi;
    std::size_t channels = 0;  // active noise channels

    ProblemData data() const { return ProblemData{semigroup, F, G, xi}; }

    std::string digest_A() const {
        Fnv1a h;
        h.update(generator->matrix()).update(generator->mask());
        return h.hex();
    }
    std::string digest_F() const { return expression_digest(F.f, F.n); }
    std::string digest_G() const {
        Fnv1a h;
        for (const auto& gk : G.g) h.update(expression_digest(gk, G.n));
        h.update_u64(channels);
        return h.hex();
    }
    std::string digest_xi() const {
        Fnv1a h;
        h.update(expression_digest(xi.profile, xi.n)).update(xi.sigma).update_u64(xi.seed);
        return h.hex();
    }

    static std::string expression_digest(const Expression& e, double n) {
        Fnv1a h;
        h.update(e.source());
        if (e.uses(ExprVar::n)) h.update(n);
        return h.hex();
    }
};

// ---------------------------------------------------------------------------
// Hypothesis audit

struct HypothesisCheck {
    std::string hypothesis;  // "(i)", "(ii)", "(A1)", "(A2)", "(F1)", "(F2)", "(G1)", "(G2)", "(iv)", "(v)"
    bool passed = true;
    double value = 0.0;
    std::string witness;
};

struct AuditRecord {
    double n = 0.0;
    bool is_limit = false;
    std::vector<HypothesisCheck> checks;

    bool passed() const {
        return std::all_of(checks.begin(), checks.end(), [](const HypothesisCheck& c) { return c.passed; });
    }

    const HypothesisCheck* first_failure() const {
        for (const auto& c : checks)
            if (!c.passed) return &c;
        return nullptr;
    }

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["n"] = n;
        j["limit"] = is_limit;
        j["passed"] = passed();
        for (const auto& c : checks) {
            j["checks"].push_back({{"hypothesis", c.hypothesis}, {"passed", c.passed}, {"value", c.value}, {"witness", c.witness}});
        }
        return j;
    }
};

/// Raised by build_sequence when a member breaks the shared constants.
class HypothesisViolation : public ValidationError {
public:
    HypothesisViolation(std::string hypothesis, const std::string& what)
        : ValidationError(what), hypothesis_(std::move(hypothesis)) {}
    const std::string& hypothesis() const noexcept { return hypothesis_; }

private:
    std::string hypothesis_;
};

struct SequenceBuild {
    std::shared_ptr<const Instance> limit;
    std::vector<std::shared_ptr<const Instance>> members;
    std::vector<AuditRecord> audits;  // limit first, then members in schedule order

    bool passed() const {
        return std::all_of(audits.begin(), audits.end(), [](const AuditRecord& a) { return a.passed(); });
    }
};

namespace detail {

constexpr std::size_t kSpotChecks = 64;

inline std::vector<std::pair<double, double>> spot_probes(const ProblemSpec& p) {
    std::vector<std::pair<double, double>> out;
    for (std::uint32_t i = 0; i < kSpotChecks; ++i) {
        const double x = p.x_lo + (p.x_hi - p.x_lo) * uniform(0, StreamDomain::probe, 0x5107, i, 0);
        const double u = p.audit_range * (2.0 * uniform(0, StreamDomain::probe, 0x5107, i, 1) - 1.0);
        out.emplace_back(x, u);
    }
    return out;
}

inline std::vector<double> lattice_x_probes(const ProblemSpec& p, const Expression& e) {
    if (!e.uses(ExprVar::x)) return {0.5 * (p.x_lo + p.x_hi)};
    std::vector<double> xs;
    for (int i = 0; i < 8; ++i) xs.push_back(p.x_lo + (p.x_hi - p.x_lo) * (i + 0.5) / 8.0);
    return xs;
}

inline HypothesisCheck from_lipschitz(const LipschitzAudit& a) {
    return HypothesisCheck{a.hypothesis, a.passed, std::max({a.lipschitz_base, a.lipschitz_refined, a.lipschitz_extended}),
                           a.passed ? "L~" + std::to_string(a.lipschitz_base) + ", C~" + std::to_string(a.growth) : a.message};
}

struct Templates {
    Expression a, b, f, xi;
    std::vector<Expression> g;
    Expression a_n, b_n, f_n, xi_n;
    std::vector<Expression> g_n;
};

inline Templates parse_templates(const ProblemSpec& p, const ApproximationSpec& s) {
    using V = ExprVar;
    Templates t;
    t.a = Expression::parse(p.a, {V::x});
    t.b = Expression::parse(p.b, {V::x});
    t.f = Expression::parse(p.f, {V::x, V::u});
    t.xi = Expression::parse(p.xi, {V::x});
    for (const auto& gk : p.g) t.g.push_back(Expression::parse(gk, {V::x, V::u}));
    t.a_n = s.a_n ? Expression::parse(*s.a_n, {V::x, V::n}) : t.a;
    t.b_n = s.b_n ? Expression::parse(*s.b_n, {V::x, V::n}) : t.b;
    t.f_n = s.f_n ? Expression::parse(*s.f_n, {V::x, V::n, V::u}) : t.f;
    t.xi_n = s.xi_n ? Expression::parse(*s.xi_n, {V::x, V::n}) : t.xi;
    if (s.g_n) {
        if (s.g_n->size() != p.g.size()) throw ValidationError("g_n must list one template per noise channel");
        for (const auto& gk : *s.g_n) t.g_n.push_back(Expression::parse(gk, {V::x, V::n, V::u}));
    } else {
        t.g_n = t.g;
    }
    return t;
}

inline void validate_schedule(const ProblemSpec& p, const ApproximationSpec& s) {
    if (s.modes.empty()) throw ValidationError("approximation needs at least one mode");
    if (s.schedule.size() < 1) throw ValidationError("schedule must not be empty");
    for (std::size_t i = 0; i < s.schedule.size(); ++i) {
        if (!(s.schedule[i] > 0.0) || !std::isfinite(s.schedule[i])) throw ValidationError("schedule entries must be positive");
        if (i > 0 && !(s.schedule[i] > s.schedule[i - 1])) throw ValidationError("schedule must be strictly increasing");
    }
    if (s.has(ModeKind::noise_projection)) {
        for (double n : s.schedule) {
            if (n != std::floor(n) || n < 1.0 || n > static_cast<double>(p.K())) {
                throw ValidationError("noise_projection schedule entries must be integers in [1, K = " + std::to_string(p.K()) + "]");
            }
        }
    }
    if (s.has(ModeKind::yosida)) {
        for (double n : s.schedule) {
            if (!(n > p.w)) throw ValidationError("yosida schedule entries must exceed w");
        }
    }
    if (s.has(ModeKind::domain_mosco) && s.direction == MoscoDirection::decreasing) {
        if (!s.limit_domain) throw ValidationError("decreasing Mosco mode needs limit_domain");
        const auto [lo, hi] = *s.limit_domain;
        if (!(p.x_lo <= lo && lo < hi && hi <= p.x_hi)) throw ValidationError("limit_domain must lie inside the domain");
    }
}

inline std::pair<double, double> mosco_domain(const ProblemSpec& p, const ApproximationSpec& s, double n) {
    const double L = p.x_hi - p.x_lo;
    if (s.direction == MoscoDirection::increasing) return {p.x_lo + L / (2.0 * n), p.x_hi - L / (2.0 * n)};
    const auto [lo, hi] = *s.limit_domain;
    return {lo - (lo - p.x_lo) / n, hi + (p.x_hi - hi) / n};
}

}  // namespace detail

/// Assembles limit and members and audits every one against the shared
/// constants. Hypothesis failures are recorded, never thrown; malformed input
/// (bad expressions, bad schedule) still raises ValidationError.
inline SequenceBuild prepare_sequence(const ProblemSpec& p, const ApproximationSpec& s) {
    detail::validate_schedule(p, s);
    const SpatialGrid grid(p.x_lo, p.x_hi, p.m, p.r);
    auto t = detail::parse_templates(p, s);
    const auto spots = detail::spot_probes(p);
    const std::size_t K = p.K();
    SequenceBuild out;

    // Probe vectors for the Trotter-Kato audit.
    std::vector<Vector> tk_probes(2, Vector(static_cast<Eigen::Index>(p.m)));
    for (std::size_t i = 0; i < p.m; ++i) {
        const double z = (grid.node(i) - p.x_lo) / grid.length();
        tk_probes[0][static_cast<Eigen::Index>(i)] = std::sin(std::numbers::pi * z);
        tk_probes[1][static_cast<Eigen::Index>(i)] = z * (1.0 - z) * 4.0;
    }
    const double tk_times[] = {0.5 * p.T, p.T};

    auto audit_nonlinear = [&](const Instance& inst, AuditRecord& rec) {
        rec.checks.push_back(detail::from_lipschitz(inst.F.audit(detail::lattice_x_probes(p, inst.F.f), p.audit_range)));
        for (std::size_t k = 0; k < inst.G.channels(); ++k) {
            auto xs = detail::lattice_x_probes(p, inst.G.g[k]);
            auto c = detail::from_lipschitz(audit_lipschitz(inst.G.g[k], p.L_G, p.C_G, "(G1)", xs, p.audit_range, inst.G.n));
            c.witness = "channel " + std::to_string(k + 1) + ": " + c.witness;
            rec.checks.push_back(c);
        }
    };

    auto audit_sector = [&](const SectorialGenerator& g, AuditRecord& rec) {
        const SectorBound sb = g.sector();
        const bool ok = sb.M <= p.sector_M * (1.0 + kTolSector) && sb.w <= p.w;
        std::ostringstream os;
        os << "M=" << sb.M << " (shared " << p.sector_M << "), w=" << sb.w;
        rec.checks.push_back(HypothesisCheck{"(A1)", ok, sb.M, os.str()});
    };

    auto build_coefficient_generator = [&](const Expression& a, const Expression& b, double n, AuditRecord& rec,
                                           std::optional<CoefficientField>& field) -> std::shared_ptr<const SectorialGenerator> {
        field = CoefficientField::from_expressions(a, b, n, p.kappa, p.coeff_bound);
        if (auto v = find_coefficient_violation(grid, *field)) {
            const bool ell = v->kind == CoefficientViolation::Kind::ellipticity;
            rec.checks.push_back(HypothesisCheck{ell ? "(i)" : "(ii)", false, v->value, v->describe()});
            return nullptr;
        }
        rec.checks.push_back(HypothesisCheck{"(i)", true, p.kappa, "a >= kappa on all half-nodes"});
        rec.checks.push_back(HypothesisCheck{"(ii)", true, p.coeff_bound, "|a|, |b| <= C on the stencil nodes"});
        try {
            return std::make_shared<const SectorialGenerator>(assemble_divergence_form(grid, *field, p.w, p.probe_count));
        } catch (const NumericError& e) {
            rec.checks.push_back(HypothesisCheck{"(A1)", false, 0.0, e.what()});
            return nullptr;
        }
    };

    // Limit.
    auto limit = std::make_shared<Instance>();
    limit->is_limit = true;
    limit->F = NonlinearityF{t.f, p.L_F, p.C_F, 0.0};
    limit->G = NonlinearityG{t.g, p.L_G, p.C_G, 0.0};
    limit->xi = InitialDatum{t.xi, 0.0, p.xi_sigma, 0};
    limit->channels = K;
    AuditRecord limit_rec;
    limit_rec.is_limit = true;
    std::shared_ptr<const SectorialGenerator> full_gen =
        build_coefficient_generator(t.a, t.b, 0.0, limit_rec, limit->coefficients);
    if (full_gen) {
        std::shared_ptr<const SectorialGenerator> lim_gen = full_gen;
        if (s.has(ModeKind::domain_mosco) && s.direction == MoscoDirection::decreasing) {
            lim_gen = std::make_shared<const SectorialGenerator>(
                restrict_to_subdomain(*full_gen, s.limit_domain->first, s.limit_domain->second));
        }
        limit->generator = lim_gen;
        limit->semigroup = std::make_shared<const SemigroupEvaluator>(lim_gen);
        audit_sector(*lim_gen, limit_rec);
        limit_rec.checks.push_back(HypothesisCheck{"(A2)", true, 0.0, "limit audited against itself"});
    }
    audit_nonlinear(*limit, limit_rec);
    out.limit = limit;
    out.audits.push_back(limit_rec);

    std::size_t prev_active = 0;
    for (std::size_t idx = 0; idx < s.schedule.size(); ++idx) {
        const double n = s.schedule[idx];
        auto inst = std::make_shared<Instance>();
        inst->n = n;
        AuditRecord rec;
        rec.n = n;
        const bool coeff = s.has(ModeKind::coefficients);
        inst->F = coeff ? NonlinearityF{t.f_n, p.L_F, p.C_F, n} : limit->F;
        inst->G = coeff ? NonlinearityG{t.g_n, p.L_G, p.C_G, n} : limit->G;
        inst->xi = coeff ? InitialDatum{t.xi_n, n, p.xi_sigma, 0} : limit->xi;
        inst->channels = s.has(ModeKind::noise_projection) ? static_cast<std::size_t>(n) : K;

        std::shared_ptr<const SectorialGenerator> gen;
        if (coeff) {
            gen = build_coefficient_generator(t.a_n, t.b_n, n, rec, inst->coefficients);
        } else {
            gen = full_gen;
            inst->coefficients = limit->coefficients;
        }
        if (gen && s.has(ModeKind::yosida)) {
            try {
                gen = std::make_shared<const SectorialGenerator>(yosida(*gen, n));
            } catch (const NumericError& e) {
                rec.checks.push_back(HypothesisCheck{"(A1)", false, 0.0, e.what()});
                gen = nullptr;
            }
        }
        if (gen && s.has(ModeKind::domain_mosco)) {
            const auto [lo, hi] = detail::mosco_domain(p, s, n);
            gen = std::make_shared<const SectorialGenerator>(restrict_to_subdomain(*gen, lo, hi));
            const std::size_t active = gen->active().size();
            const bool nested = idx == 0 || (s.direction == MoscoDirection::increasing ? active > prev_active : active < prev_active);
            if (!nested) {
                throw ValidationError("Mosco domains are not strictly nested at grid resolution (n = " + std::to_string(n) +
                                      "); refine m or thin the schedule");
            }
            prev_active = active;
        }
        if (gen) {
            inst->generator = gen;
            inst->semigroup = std::make_shared<const SemigroupEvaluator>(gen);
            audit_sector(*gen, rec);
            if (limit->generator) {
                const std::shared_ptr<const SectorialGenerator> fam[] = {gen};
                const auto rows = trotter_kato_check(fam, limit->generator, std::complex<double>(p.w + 1.0, 0.0),
                                                     tk_probes, tk_times);
                double worst = 0.0;
                for (const auto& r : rows) worst = std::max({worst, r.resolvent_error, r.semigroup_error});
                std::ostringstream os;
                os << "max resolvent/semigroup error " << worst;
                rec.checks.push_back(HypothesisCheck{"(A2)", std::isfinite(worst), worst, os.str()});
            }
        }
        audit_nonlinear(*inst, rec);

        // Pointwise convergence spot checks consumed by the trend, not gated.
        if (coeff) {
            double ef = 0.0, eg = 0.0, ea = 0.0, exi = 0.0;
            for (const auto& [x, u] : spots) {
                ef = std::max(ef, std::abs(t.f_n(x, n, u) - t.f(x, 0.0, u)));
                for (std::size_t k = 0; k < K; ++k) eg = std::max(eg, std::abs(t.g_n[k](x, n, u) - t.g[k](x, 0.0, u)));
                ea = std::max({ea, std::abs(t.a_n(x, n) - t.a(x)), std::abs(t.b_n(x, n) - t.b(x))});
                exi = std::max(exi, std::abs(t.xi_n(x, n) - t.xi(x)));
            }
            rec.checks.push_back(HypothesisCheck{"(F2)", std::isfinite(ef), ef, "max |f_n - f| on 64 probes"});
            rec.checks.push_back(HypothesisCheck{"(G2)", std::isfinite(eg), eg, "max |g_n - g| on 64 probes"});
            rec.checks.push_back(HypothesisCheck{"(iv)", std::isfinite(ea), ea, "max |a_n - a|, |b_n - b| on 64 probes"});
            rec.checks.push_back(HypothesisCheck{"(v)", std::isfinite(exi), exi, "max |xi_n - xi| on 64 probes"});
        }
        out.members.push_back(inst);
        out.audits.push_back(std::move(rec));
    }
    return out;
}

/// Instances for the requested mode; any audit failure raises
/// HypothesisViolation naming the first failing hypothesis.
inline SequenceBuild build_sequence(const ProblemSpec& p, const ApproximationSpec& s) {
    SequenceBuild b = prepare_sequence(p, s);
    for (const auto& rec : b.audits) {
        if (const auto* f = rec.first_failure()) {
            throw HypothesisViolation(f->hypothesis, (rec.is_limit ? std::string("limit problem: ")
                                                                   : "member n = " + std::to_string(rec.n) + ": ") +
                                                         f->witness);
        }
    }
    return b;
}

// ---------------------------------------------------------------------------
// Rate fitting

enum class Verdict { monotone_decreasing, decreasing_with_noise, non_decreasing, converged_below_noise_floor };

inline const char* to_string(Verdict v) {
    switch (v) {
        case Verdict::monotone_decreasing: return "monotone_decreasing";
        case Verdict::decreasing_with_noise: return "decreasing_with_noise";
        case Verdict::non_decreasing: return "non_decreasing";
        case Verdict::converged_below_noise_floor: return "converged_below_noise_floor";
    }
    return "?";
}

inline bool is_success(Verdict v) { return v != Verdict::non_decreasing; }

struct RatePoint {
    double n = 0.0;
    double estimate = 0.0;
    double std_error = 0.0;
};

struct RateFit {
    double slope = std::numeric_limits<double>::quiet_NaN();
    double r_squared = std::numeric_limits<double>::quiet_NaN();
    Verdict verdict = Verdict::non_decreasing;
    std::size_t fitted_rows = 0;
};

/// Least squares on (log n, log estimate) over rows above the noise floor
/// (estimate >= 10 std_error). Verdicts:
///   converged_below_noise_floor  every row at the floor;
///   monotone_decreasing          every step rises by at most 2 pooled std
///                                errors and the net drop exceeds 2 pooled;
///   decreasing_with_noise        significant net drop and negative slope;
///   non_decreasing               otherwise.
inline RateFit fit_rate(std::span<const RatePoint> rows) {
    if (rows.size() < 3) throw ValidationError("rate fit needs at least 3 rows");
    RateFit fit;
    auto at_floor = [](const RatePoint& r) { return !(r.estimate > 10.0 * r.std_error) || r.estimate == 0.0; };
    if (std::all_of(rows.begin(), rows.end(), at_floor)) {
        fit.verdict = Verdict::converged_below_noise_floor;
        return fit;
    }
    std::vector<double> lx, ly;
    for (const auto& r : rows) {
        if (at_floor(r)) continue;
        lx.push_back(std::log(r.n));
        ly.push_back(std::log(r.estimate));
    }
    fit.fitted_rows = lx.size();
    if (lx.size() >= 2) {
        const double k = static_cast<double>(lx.size());
        const double mx = std::accumulate(lx.begin(), lx.end(), 0.0) / k;
        const double my = std::accumulate(ly.begin(), ly.end(), 0.0) / k;
        double sxx = 0.0, sxy = 0.0, syy = 0.0;
        for (std::size_t i = 0; i < lx.size(); ++i) {
            sxx += (lx[i] - mx) * (lx[i] - mx);
            sxy += (lx[i] - mx) * (ly[i] - my);
            syy += (ly[i] - my) * (ly[i] - my);
        }
        fit.slope = sxy / sxx;
        fit.r_squared = syy > 0.0 ? (sxy * sxy) / (sxx * syy) : 1.0;
    }
    auto pooled = [](const RatePoint& a, const RatePoint& b) { return std::hypot(a.std_error, b.std_error); };
    bool monotone = true;
    for (std::size_t i = 1; i < rows.size(); ++i) {
        if (rows[i].estimate > rows[i - 1].estimate + 2.0 * pooled(rows[i - 1], rows[i])) monotone = false;
    }
    const bool net_drop = rows.front().estimate - rows.back().estimate > 2.0 * pooled(rows.front(), rows.back());
    if (monotone && net_drop) {
        fit.verdict = Verdict::monotone_decreasing;
    } else if (net_drop && fit.slope < 0.0) {
        fit.verdict = Verdict::decreasing_with_noise;
    }
    return fit;
}

// ---------------------------------------------------------------------------
// Convergence study

struct StudyOptions {
    std::vector<NormSpec> metrics = {NormSpec{NormKind::sup_C}};
    std::size_t ensemble = 64;
    std::uint64_t seed = 0;
    unsigned threads = 1;
    HolderMode holder_mode = HolderMode::exact;
};

struct ReportRow {
    double n = 0.0;
    NormSpec metric;
    EnsembleEstimate estimate;
};

struct MetricFit {
    NormSpec metric;
    RateFit fit;
};

struct ConvergenceReport {
    std::string mode;
    bool exploratory = false;
    std::vector<ReportRow> rows;  // ordered by n, then metric
    std::vector<MetricFit> fits;
    std::string config_digest;
    std::uint64_t seed = 0;
    std::size_t rejected = 0;
    std::vector<std::string> aborts;

    bool all_success() const {
        return std::all_of(fits.begin(), fits.end(), [](const MetricFit& f) { return is_success(f.fit.verdict); });
    }
};

inline double metric_parameter(const NormSpec& s) {
    switch (s.kind) {
        case NormKind::holder_C_lambda: return s.lambda;
        case NormKind::v_alpha_p: return s.alpha;
        default: return 0.0;
    }
}

namespace detail {

/// C^lambda norm (sup + seminorm) of a path.
inline double holder_norm(const PathProcess& X, double lambda, HolderMode mode) {
    return sup_norm(X) + holder_seminorm(X, lambda, mode).value;
}

}  // namespace detail

/// For every member n and stream s < ensemble: one shared Brownian path and
/// xi stream drive both X (limit) and X_n; the requested difference metrics
/// are aggregated by ensemble_norm and fitted per metric. Streams are split
/// across threads by index and reduced in stream order, so the report does
/// not depend on the thread count.
inline ConvergenceReport run_convergence_study(const SequenceBuild& seq, const ApproximationSpec& approx,
                                               const TimeGrid& time, const StudyOptions& opt) {
    if (!seq.passed()) throw ValidationError("sequence failed its hypothesis audit; refusing to run the study");
    if (opt.ensemble < 2) throw ValidationError("ensemble must contain at least 2 samples");
    if (opt.metrics.empty()) throw ValidationError("study needs at least one metric");
    const Instance& lim = *seq.limit;
    const SpatialGrid& space = lim.generator->grid();
    for (const auto& ms : opt.metrics) ms.validate(space.r());
    const std::size_t n_members = seq.members.size();
    const std::size_t n_metrics = opt.metrics.size();
    const std::size_t K = lim.G.channels();
    const bool need_comp = std::any_of(opt.metrics.begin(), opt.metrics.end(),
                                       [](const NormSpec& s) { return s.kind == NormKind::holder_C_lambda; });
    const double nan = std::numeric_limits<double>::quiet_NaN();

    // values[(member * n_metrics + metric) * ensemble + stream]
    std::vector<double> values(n_members * n_metrics * opt.ensemble, nan);
    std::vector<std::vector<std::string>> aborts(opt.ensemble);

    auto work = [&](std::size_t s) {
        const BrownianPath path = sample_path(time, K, opt.seed, s);
        std::optional<PathProcess> X, Xc;
        try {
            const Vector xi = lim.xi.sample(space, s);
            X.emplace(solve_exponential_euler(*lim.semigroup, lim.F, lim.G, xi, path));
            if (need_comp) Xc.emplace(compensate(*X, *lim.semigroup, xi));
        } catch (const SolverAbort& e) {
            aborts[s].push_back("limit, stream " + std::to_string(s) + ": " + e.what());
            return;
        }
        for (std::size_t j = 0; j < n_members; ++j) {
            const Instance& inst = *seq.members[j];
            try {
                const Vector xi_n = inst.xi.sample(space, s);
                const BrownianPath path_n = inst.channels < K ? project(path, inst.channels) : path;
                const PathProcess Xn = solve_exponential_euler(*inst.semigroup, inst.F, inst.G, xi_n, path_n);
                const PathProcess diff = Xn - *X;
                for (std::size_t k = 0; k < n_metrics; ++k) {
                    const NormSpec& ms = opt.metrics[k];
                    double v = nan;
                    switch (ms.kind) {
                        case NormKind::sup_C: v = sup_norm(diff); break;
                        case NormKind::holder_C_lambda:
                            v = detail::holder_norm(compensate(Xn, *inst.semigroup, xi_n) - *Xc, ms.lambda, opt.holder_mode);
                            break;
                        case NormKind::v_alpha_p: v = v_alpha_seminorm(diff, ms.alpha, ms.p); break;
                    }
                    values[(j * n_metrics + k) * opt.ensemble + s] = v;
                }
            } catch (const SolverAbort& e) {
                std::ostringstream os;
                os << "n = " << inst.n << ", stream " << s << ": " << e.what();
                aborts[s].push_back(os.str());
            }
        }
    };

    const unsigned threads = std::max(1u, std::min<unsigned>(opt.threads, static_cast<unsigned>(opt.ensemble)));
    if (threads == 1) {
        for (std::size_t s = 0; s < opt.ensemble; ++s) work(s);
    } else {
        std::vector<std::thread> pool;
        std::vector<std::exception_ptr> errors(threads);
        for (unsigned t = 0; t < threads; ++t) {
            pool.emplace_back([&, t] {
                try {
                    for (std::size_t s = t; s < opt.ensemble; s += threads) work(s);
                } catch (...) {
                    errors[t] = std::current_exception();
                }
            });
        }
        for (auto& th : pool) th.join();
        for (auto& e : errors)
            if (e) std::rethrow_exception(e);
    }

    ConvergenceReport rep;
    rep.mode = approx.label();
    rep.exploratory = approx.exploratory();
    rep.seed = opt.seed;
    for (const auto& a : aborts) rep.aborts.insert(rep.aborts.end(), a.begin(), a.end());
    for (std::size_t j = 0; j < n_members; ++j) {
        for (std::size_t k = 0; k < n_metrics; ++k) {
            const std::span<const double> v(values.data() + (j * n_metrics + k) * opt.ensemble, opt.ensemble);
            ReportRow row{seq.members[j]->n, opt.metrics[k], {}};
            row.estimate = ensemble_norm(v, opt.metrics[k].q);
            rep.rejected += row.estimate.rejected;
            rep.rows.push_back(row);
        }
    }
    if (n_members >= 3) {
        for (std::size_t k = 0; k < n_metrics; ++k) {
            std::vector<RatePoint> pts;
            for (std::size_t j = 0; j < n_members; ++j) {
                const auto& e = rep.rows[j * n_metrics + k].estimate;
                pts.push_back(RatePoint{seq.members[j]->n, e.mean_qth_root, e.std_error});
            }
            rep.fits.push_back(MetricFit{opt.metrics[k], fit_rate(pts)});
        }
    }
    return rep;
}

// ---------------------------------------------------------------------------
// Serialization

namespace detail {

inline std::string fmt_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace detail

/// Columns: mode, n, metric, lambda_or_alpha, q, estimate, std_error, samples.
inline void write_report_csv(std::ostream& os, const ConvergenceReport& rep) {
    os << "mode,n,metric,lambda_or_alpha,q,estimate,std_error,samples\n";
    for (const auto& r : rep.rows) {
        os << rep.mode << ',' << detail::fmt_double(r.n) << ',' << to_string(r.metric.kind) << ','
           << detail::fmt_double(metric_parameter(r.metric)) << ',' << detail::fmt_double(r.metric.q) << ','
           << detail::fmt_double(r.estimate.mean_qth_root) << ',' << detail::fmt_double(r.estimate.std_error) << ','
           << r.estimate.samples << '\n';
    }
}

inline nlohmann::json report_json(const ConvergenceReport& rep) {
    nlohmann::json j;
    j["mode"] = rep.mode;
    j["exploratory"] = rep.exploratory;
    j["config_digest"] = rep.config_digest;
    j["seed"] = rep.seed;
    j["rejected_samples"] = rep.rejected;
    j["aborts"] = rep.aborts;
    j["fits"] = nlohmann::json::array();
    for (const auto& f : rep.fits) {
        nlohmann::json e{{"metric", to_string(f.metric.kind)},
                         {"lambda_or_alpha", metric_parameter(f.metric)},
                         {"q", f.metric.q},
                         {"verdict", to_string(f.fit.verdict)},
                         {"fitted_rows", f.fit.fitted_rows}};
        e["slope"] = std::isfinite(f.fit.slope) ? nlohmann::json(f.fit.slope) : nlohmann::json(nullptr);
        e["r_squared"] = std::isfinite(f.fit.r_squared) ? nlohmann::json(f.fit.r_squared) : nlohmann::json(nullptr);
        j["fits"].push_back(e);
    }
    return j;
}

}  // namespace spdelab
