#pragma once

// Declarative experiment configs (JSON). Every field is validated at parse
// time and errors carry "name:line:col: field path: message".

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "spdelab/digest.hpp"
#include "spdelab/error.hpp"
#include "spdelab/experiments.hpp"
#include "spdelab/expression.hpp"
#include "spdelab/io.hpp"
#include "spdelab/path_norms.hpp"

namespace spdelab {

class ConfigError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

struct NormsSpec {
    std::vector<NormKind> metrics = {NormKind::sup_C, NormKind::holder_C_lambda};
    double lambda = 0.25;
    double alpha = 0.3;
    double p = 8.0;
    double q = 2.0;

    std::vector<NormSpec> specs() const {
        std::vector<NormSpec> out;
        for (NormKind k : metrics) out.push_back(NormSpec{k, lambda, alpha, p, q});
        return out;
    }
};

struct RunSpec {
    std::size_t ensemble = 64;
    std::uint64_t seed = 0;
    bool strict = false;
    std::string out_dir = "out";
    unsigned threads = 1;
    HolderMode holder_mode = HolderMode::exact;
};

struct ExperimentConfig {
    std::string name = "config";
    ProblemSpec problem;
    ApproximationSpec approximation;
    NormsSpec norms;
    RunSpec run;

    TimeGrid time() const { return TimeGrid(problem.T, problem.N); }

    StudyOptions study() const {
        StudyOptions o;
        o.metrics = norms.specs();
        o.ensemble = run.ensemble;
        o.seed = run.seed;
        o.threads = run.threads;
        o.holder_mode = run.holder_mode;
        return o;
    }

    /// Normalized config with defaults filled in. Output location and thread
    /// count are excluded: they do not change any reported number.
    nlohmann::json canonical() const {
        using nlohmann::json;
        const auto& p = problem;
        json j;
        j["problem"] = {{"domain", {p.x_lo, p.x_hi}}, {"m", p.m}, {"r", p.r}, {"a", p.a}, {"b", p.b},
                        {"kappa", p.kappa}, {"coeff_bound", p.coeff_bound}, {"w", p.w}, {"sector_M", p.sector_M},
                        {"probe_count", p.probe_count}, {"f", p.f}, {"L_F", p.L_F}, {"C_F", p.C_F}, {"g", p.g},
                        {"L_G", p.L_G}, {"C_G", p.C_G}, {"audit_range", p.audit_range}, {"xi", p.xi},
                        {"xi_sigma", p.xi_sigma}, {"T", p.T}, {"N", p.N}};
        const auto& a = approximation;
        json modes = json::array();
        for (ModeKind k : a.modes) modes.push_back(to_string(k));
        j["approximation"] = {{"mode", modes}, {"schedule", a.schedule},
                              {"direction", a.direction == MoscoDirection::increasing ? "increasing" : "decreasing"}};
        if (a.a_n) j["approximation"]["a_n"] = *a.a_n;
        if (a.b_n) j["approximation"]["b_n"] = *a.b_n;
        if (a.f_n) j["approximation"]["f_n"] = *a.f_n;
        if (a.g_n) j["approximation"]["g_n"] = *a.g_n;
        if (a.xi_n) j["approximation"]["xi_n"] = *a.xi_n;
        if (a.limit_domain) j["approximation"]["limit_domain"] = {a.limit_domain->first, a.limit_domain->second};
        json metrics = json::array();
        for (NormKind k : norms.metrics) metrics.push_back(to_string(k));
        j["norms"] = {{"metrics", metrics}, {"lambda", norms.lambda}, {"alpha", norms.alpha}, {"p", norms.p}, {"q", norms.q}};
        j["run"] = {{"ensemble", run.ensemble}, {"seed", run.seed}, {"strict", run.strict},
                    {"holder_mode", run.holder_mode == HolderMode::exact ? "exact" : "dyadic_bound"}};
        return j;
    }

    std::string digest() const {
        Fnv1a h;
        h.update(canonical().dump());
        return h.hex();
    }
};

namespace detail {

/// Best-effort source location of a dotted field path: each segment's quoted
/// key is searched after the previous one.
inline std::pair<std::size_t, std::size_t> locate_field(std::string_view text, const std::vector<std::string>& path) {
    std::size_t pos = 0;
    std::size_t found = std::string_view::npos;
    for (const auto& seg : path) {
        const std::size_t at = text.find("\"" + seg + "\"", pos);
        if (at == std::string_view::npos) break;
        found = at;
        pos = at + seg.size() + 2;
    }
    if (found == std::string_view::npos) return {1, 1};
    std::size_t line = 1, col = 1;
    for (std::size_t i = 0; i < found; ++i) {
        if (text[i] == '\n') {
            ++line;
            col = 1;
        } else {
            ++col;
        }
    }
    return {line, col};
}

class ConfigReader {
public:
    ConfigReader(std::string_view text, std::string name) : text_(text), name_(std::move(name)) {}

    [[noreturn]] void fail(const std::vector<std::string>& path, const std::string& msg) const {
        const auto [line, col] = locate_field(text_, path);
        std::string dotted;
        for (std::size_t i = 0; i < path.size(); ++i) dotted += (i ? "." : "") + path[i];
        throw ConfigError(name_ + ":" + std::to_string(line) + ":" + std::to_string(col) + ": field " + dotted + ": " + msg);
    }

    void check_keys(const nlohmann::json& obj, const std::vector<std::string>& path, const std::set<std::string>& allowed) const {
        if (!obj.is_object()) fail(path, "expected an object");
        for (auto it = obj.begin(); it != obj.end(); ++it) {
            if (!allowed.count(it.key())) {
                auto p = path;
                p.push_back(it.key());
                fail(p, "unknown field");
            }
        }
    }

    double number(const nlohmann::json& obj, const std::vector<std::string>& path, const std::string& key, double def) const {
        if (!obj.contains(key)) return def;
        const auto& v = obj.at(key);
        if (!v.is_number()) fail(sub(path, key), "expected a number");
        const double d = v.get<double>();
        if (!std::isfinite(d)) fail(sub(path, key), "must be finite");
        return d;
    }

    std::uint64_t count(const nlohmann::json& obj, const std::vector<std::string>& path, const std::string& key,
                        std::uint64_t def) const {
        if (!obj.contains(key)) return def;
        const auto& v = obj.at(key);
        if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0)) {
            fail(sub(path, key), "expected a non-negative integer");
        }
        return v.get<std::uint64_t>();
    }

    bool boolean(const nlohmann::json& obj, const std::vector<std::string>& path, const std::string& key, bool def) const {
        if (!obj.contains(key)) return def;
        if (!obj.at(key).is_boolean()) fail(sub(path, key), "expected true or false");
        return obj.at(key).get<bool>();
    }

    std::string expression(const nlohmann::json& obj, const std::vector<std::string>& path, const std::string& key,
                           const std::string& def, std::initializer_list<ExprVar> vars) const {
        if (!obj.contains(key)) return def;
        return checked_expression(obj.at(key), sub(path, key), vars);
    }

    std::string checked_expression(const nlohmann::json& v, const std::vector<std::string>& path,
                                   std::initializer_list<ExprVar> vars) const {
        if (!v.is_string()) fail(path, "expected an expression string");
        const std::string s = v.get<std::string>();
        try {
            (void)Expression::parse(s, vars);
        } catch (const ExpressionError& e) {
            fail(path, std::string(e.what()));
        }
        return s;
    }

    std::string string(const nlohmann::json& obj, const std::vector<std::string>& path, const std::string& key,
                       const std::string& def) const {
        if (!obj.contains(key)) return def;
        if (!obj.at(key).is_string()) fail(sub(path, key), "expected a string");
        return obj.at(key).get<std::string>();
    }

    static std::vector<std::string> sub(std::vector<std::string> path, const std::string& key) {
        path.push_back(key);
        return path;
    }

private:
    std::string_view text_;
    std::string name_;
};

inline ModeKind parse_mode(const ConfigReader& rd, const std::vector<std::string>& path, const std::string& s) {
    if (s == "coefficients") return ModeKind::coefficients;
    if (s == "yosida") return ModeKind::yosida;
    if (s == "noise_projection") return ModeKind::noise_projection;
    if (s == "domain_mosco") return ModeKind::domain_mosco;
    rd.fail(path, "unknown mode '" + s + "' (expected coefficients, yosida, noise_projection or domain_mosco)");
}

inline NormKind parse_metric(const ConfigReader& rd, const std::vector<std::string>& path, const std::string& s) {
    if (s == "sup_C") return NormKind::sup_C;
    if (s == "compensated_holder") return NormKind::holder_C_lambda;
    if (s == "v_alpha") return NormKind::v_alpha_p;
    rd.fail(path, "unknown metric '" + s + "' (expected sup_C, compensated_holder or v_alpha)");
}

}  // namespace detail

inline ExperimentConfig parse_config(std::string_view text, const std::string& name = "config") {
    using detail::ConfigReader;
    using V = ExprVar;
    ConfigReader rd(text, name);
    nlohmann::json root;
    try {
        root = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        std::size_t line = 1, col = 1;
        const std::size_t stop = std::min<std::size_t>(e.byte, text.size());
        for (std::size_t i = 0; i + 1 < stop; ++i) {
            if (text[i] == '\n') {
                ++line;
                col = 1;
            } else {
                ++col;
            }
        }
        throw ConfigError(name + ":" + std::to_string(line) + ":" + std::to_string(col) + ": malformed JSON: " + e.what());
    }
    rd.check_keys(root, {}, {"problem", "approximation", "norms", "run"});
    ExperimentConfig c;
    c.name = name;

    // problem
    const nlohmann::json pj = root.value("problem", nlohmann::json::object());
    const std::vector<std::string> P = {"problem"};
    rd.check_keys(pj, P, {"domain", "m", "r", "a", "b", "kappa", "coeff_bound", "w", "sector_M", "probe_count", "f", "L_F",
                          "C_F", "g", "L_G", "C_G", "audit_range", "xi", "xi_sigma", "T", "N"});
    auto& p = c.problem;
    if (pj.contains("domain")) {
        const auto& d = pj.at("domain");
        if (!d.is_array() || d.size() != 2 || !d[0].is_number() || !d[1].is_number()) {
            rd.fail({"problem", "domain"}, "expected [x_lo, x_hi]");
        }
        p.x_lo = d[0].get<double>();
        p.x_hi = d[1].get<double>();
        if (!(p.x_lo < p.x_hi)) rd.fail({"problem", "domain"}, "requires x_lo < x_hi");
    }
    p.m = rd.count(pj, P, "m", p.m);
    if (p.m == 0) rd.fail({"problem", "m"}, "m must be >= 1");
    p.r = rd.number(pj, P, "r", p.r);
    if (!(p.r > 1.0)) rd.fail({"problem", "r"}, "r must satisfy 1 < r < inf");
    p.a = rd.expression(pj, P, "a", p.a, {V::x});
    p.b = rd.expression(pj, P, "b", p.b, {V::x});
    p.kappa = rd.number(pj, P, "kappa", p.kappa);
    if (!(p.kappa > 0.0)) rd.fail({"problem", "kappa"}, "kappa must be > 0");
    p.coeff_bound = rd.number(pj, P, "coeff_bound", p.coeff_bound);
    p.w = rd.number(pj, P, "w", p.w);
    p.sector_M = rd.number(pj, P, "sector_M", p.sector_M);
    if (!(p.sector_M >= 1.0)) rd.fail({"problem", "sector_M"}, "sector_M must be >= 1");
    p.probe_count = rd.count(pj, P, "probe_count", p.probe_count);
    if (p.probe_count < 16) rd.fail({"problem", "probe_count"}, "probe_count must be >= 16");
    p.f = rd.expression(pj, P, "f", p.f, {V::x, V::u});
    p.L_F = rd.number(pj, P, "L_F", p.L_F);
    p.C_F = rd.number(pj, P, "C_F", p.C_F);
    if (pj.contains("g")) {
        const auto& g = pj.at("g");
        if (!g.is_array() || g.empty()) rd.fail({"problem", "g"}, "expected a non-empty list of expressions (one per channel)");
        p.g.clear();
        for (std::size_t k = 0; k < g.size(); ++k) p.g.push_back(rd.checked_expression(g[k], {"problem", "g"}, {V::x, V::u}));
    }
    p.L_G = rd.number(pj, P, "L_G", p.L_G);
    p.C_G = rd.number(pj, P, "C_G", p.C_G);
    if (p.L_F < 0 || p.C_F < 0 || p.L_G < 0 || p.C_G < 0) rd.fail(P, "Lipschitz and growth constants must be >= 0");
    p.audit_range = rd.number(pj, P, "audit_range", p.audit_range);
    if (!(p.audit_range > 0.0)) rd.fail({"problem", "audit_range"}, "audit_range must be > 0");
    p.xi = rd.expression(pj, P, "xi", p.xi, {V::x});
    p.xi_sigma = rd.number(pj, P, "xi_sigma", p.xi_sigma);
    if (p.xi_sigma < 0.0) rd.fail({"problem", "xi_sigma"}, "xi_sigma must be >= 0");
    p.T = rd.number(pj, P, "T", p.T);
    if (!(p.T > 0.0)) rd.fail({"problem", "T"}, "T must be > 0");
    p.N = rd.count(pj, P, "N", p.N);
    if (p.N == 0) rd.fail({"problem", "N"}, "N must be >= 1");

    // approximation
    const nlohmann::json aj = root.value("approximation", nlohmann::json::object());
    const std::vector<std::string> A = {"approximation"};
    rd.check_keys(aj, A, {"mode", "schedule", "a_n", "b_n", "f_n", "g_n", "xi_n", "direction", "limit_domain"});
    auto& a = c.approximation;
    if (aj.contains("mode")) {
        const auto& m = aj.at("mode");
        a.modes.clear();
        if (m.is_string()) {
            a.modes.push_back(detail::parse_mode(rd, {"approximation", "mode"}, m.get<std::string>()));
        } else if (m.is_array() && !m.empty()) {
            for (const auto& e : m) {
                if (!e.is_string()) rd.fail({"approximation", "mode"}, "modes must be strings");
                a.modes.push_back(detail::parse_mode(rd, {"approximation", "mode"}, e.get<std::string>()));
            }
        } else {
            rd.fail({"approximation", "mode"}, "expected a mode name or a list of mode names");
        }
    }
    if (aj.contains("schedule")) {
        const auto& s = aj.at("schedule");
        if (!s.is_array()) rd.fail({"approximation", "schedule"}, "expected a list of numbers");
        for (const auto& e : s) {
            if (!e.is_number()) rd.fail({"approximation", "schedule"}, "expected a list of numbers");
            a.schedule.push_back(e.get<double>());
        }
    }
    if (a.schedule.empty()) rd.fail({"approximation", "schedule"}, "schedule must list at least one n");
    for (std::size_t i = 0; i < a.schedule.size(); ++i) {
        if (!(a.schedule[i] > 0.0)) rd.fail({"approximation", "schedule"}, "schedule entries must be positive");
        if (i > 0 && !(a.schedule[i] > a.schedule[i - 1])) rd.fail({"approximation", "schedule"}, "schedule must be strictly increasing");
    }
    if (aj.contains("a_n")) a.a_n = rd.checked_expression(aj.at("a_n"), {"approximation", "a_n"}, {V::x, V::n});
    if (aj.contains("b_n")) a.b_n = rd.checked_expression(aj.at("b_n"), {"approximation", "b_n"}, {V::x, V::n});
    if (aj.contains("f_n")) a.f_n = rd.checked_expression(aj.at("f_n"), {"approximation", "f_n"}, {V::x, V::n, V::u});
    if (aj.contains("xi_n")) a.xi_n = rd.checked_expression(aj.at("xi_n"), {"approximation", "xi_n"}, {V::x, V::n});
    if (aj.contains("g_n")) {
        const auto& g = aj.at("g_n");
        if (!g.is_array() || g.size() != p.g.size()) rd.fail({"approximation", "g_n"}, "expected one template per noise channel");
        std::vector<std::string> gs;
        for (const auto& e : g) gs.push_back(rd.checked_expression(e, {"approximation", "g_n"}, {V::x, V::n, V::u}));
        a.g_n = gs;
    }
    const std::string dir = rd.string(aj, A, "direction", "increasing");
    if (dir == "increasing") {
        a.direction = MoscoDirection::increasing;
    } else if (dir == "decreasing") {
        a.direction = MoscoDirection::decreasing;
    } else {
        rd.fail({"approximation", "direction"}, "expected increasing or decreasing");
    }
    if (aj.contains("limit_domain")) {
        const auto& d = aj.at("limit_domain");
        if (!d.is_array() || d.size() != 2 || !d[0].is_number() || !d[1].is_number()) {
            rd.fail({"approximation", "limit_domain"}, "expected [lo, hi]");
        }
        a.limit_domain = std::make_pair(d[0].get<double>(), d[1].get<double>());
    }
    try {
        detail::validate_schedule(p, a);
    } catch (const ValidationError& e) {
        rd.fail({"approximation"}, e.what());
    }

    // norms
    const nlohmann::json nj = root.value("norms", nlohmann::json::object());
    const std::vector<std::string> Nn = {"norms"};
    rd.check_keys(nj, Nn, {"metrics", "lambda", "alpha", "p", "q"});
    auto& n = c.norms;
    if (nj.contains("metrics")) {
        const auto& m = nj.at("metrics");
        if (!m.is_array() || m.empty()) rd.fail({"norms", "metrics"}, "expected a non-empty list of metric names");
        n.metrics.clear();
        for (const auto& e : m) {
            if (!e.is_string()) rd.fail({"norms", "metrics"}, "metric names must be strings");
            n.metrics.push_back(detail::parse_metric(rd, {"norms", "metrics"}, e.get<std::string>()));
        }
    }
    n.lambda = rd.number(nj, Nn, "lambda", n.lambda);
    n.alpha = rd.number(nj, Nn, "alpha", n.alpha);
    n.p = rd.number(nj, Nn, "p", n.p);
    n.q = rd.number(nj, Nn, "q", n.q);
    if (!(n.p > 2.0)) rd.fail({"norms", "p"}, "p must satisfy 2 < p < inf");
    if (!(n.q > 0.0 && n.q < n.p)) rd.fail({"norms", "q"}, "q must satisfy 0 < q < p");
    if (!(n.lambda >= 0.0 && n.lambda < 0.5 - 1.0 / n.p)) {
        rd.fail({"norms", "lambda"}, "lambda must be >= 0 and < 1/2 - 1/p (= " + std::to_string(0.5 - 1.0 / n.p) + ")");
    }
    if (!(n.alpha > 1.0 / n.p && n.alpha < 0.5)) rd.fail({"norms", "alpha"}, "alpha must satisfy 1/p < alpha < 1/2");
    for (const auto& s : n.specs()) {
        try {
            s.validate(p.r);
        } catch (const ValidationError& e) {
            rd.fail(Nn, e.what());
        }
    }

    // run
    const nlohmann::json rj = root.value("run", nlohmann::json::object());
    const std::vector<std::string> R = {"run"};
    rd.check_keys(rj, R, {"ensemble", "seed", "strict", "out_dir", "threads", "holder_mode"});
    auto& r = c.run;
    r.ensemble = rd.count(rj, R, "ensemble", r.ensemble);
    if (r.ensemble < 2) rd.fail({"run", "ensemble"}, "ensemble must be >= 2");
    r.seed = rd.count(rj, R, "seed", r.seed);
    r.strict = rd.boolean(rj, R, "strict", r.strict);
    r.out_dir = rd.string(rj, R, "out_dir", r.out_dir);
    r.threads = static_cast<unsigned>(rd.count(rj, R, "threads", r.threads));
    if (r.threads == 0) rd.fail({"run", "threads"}, "threads must be >= 1");
    const std::string hm = rd.string(rj, R, "holder_mode", "exact");
    if (hm == "exact") {
        r.holder_mode = HolderMode::exact;
        if (p.N > kHolderExactCap) rd.fail({"run", "holder_mode"}, "exact Hölder scan is capped at N = 4096; use dyadic_bound");
    } else if (hm == "dyadic_bound") {
        r.holder_mode = HolderMode::dyadic_bound;
    } else {
        rd.fail({"run", "holder_mode"}, "expected exact or dyadic_bound");
    }
    return c;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
    return parse_config(read_text_file(path), path.filename().string());
}

}  // namespace spdelab
