#pragma once

// Command-line front end. Exit codes: 0 success, 1 study or check failure,
// 2 parse/validation error (including hypothesis violations).

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "spdelab/checks.hpp"
#include "spdelab/config.hpp"
#include "spdelab/experiments.hpp"
#include "spdelab/gamma_calc.hpp"
#include "spdelab/io.hpp"
#include "spdelab/mild_solver.hpp"

namespace spdelab::cli {

constexpr int kOk = 0;
constexpr int kFailure = 1;
constexpr int kInvalid = 2;

constexpr const char* kThreadsEnv = "SPDELAB_THREADS";

struct RunOverrides {
    std::optional<std::uint64_t> seed;
    bool strict = false;
    std::optional<std::string> out_dir;
    std::optional<unsigned> threads;
    std::optional<std::size_t> ensemble;
};

namespace detail {

inline unsigned env_threads() {
    const char* v = std::getenv(kThreadsEnv);
    if (!v || !*v) return 0;
    char* end = nullptr;
    const unsigned long n = std::strtoul(v, &end, 10);
    if (*end != '\0' || n == 0 || n > 1024) throw ValidationError(std::string(kThreadsEnv) + " must be an integer in [1, 1024]");
    return static_cast<unsigned>(n);
}

/// Flag > environment > config.
inline void apply(ExperimentConfig& c, const RunOverrides& o) {
    if (o.seed) c.run.seed = *o.seed;
    if (o.strict) c.run.strict = true;
    if (o.out_dir) c.run.out_dir = *o.out_dir;
    if (o.ensemble) {
        if (*o.ensemble < 2) throw ValidationError("--ensemble must be >= 2");
        c.run.ensemble = *o.ensemble;
    }
    if (o.threads) {
        if (*o.threads == 0) throw ValidationError("--threads must be >= 1");
        c.run.threads = *o.threads;
    } else if (const unsigned t = env_threads()) {
        c.run.threads = t;
    }
}

inline std::string stem_of(const std::string& path) { return std::filesystem::path(path).stem().string(); }

inline nlohmann::json audits_json(const SequenceBuild& b) {
    nlohmann::json a = nlohmann::json::array();
    for (const auto& rec : b.audits) a.push_back(rec.to_json());
    return a;
}

inline const HypothesisCheck* first_failure(const SequenceBuild& b, const AuditRecord** where) {
    for (const auto& rec : b.audits) {
        if (const auto* f = rec.first_failure()) {
            *where = &rec;
            return f;
        }
    }
    return nullptr;
}

inline int report_violation(const SequenceBuild& b, std::ostream& err) {
    const AuditRecord* rec = nullptr;
    const HypothesisCheck* f = first_failure(b, &rec);
    err << "hypothesis " << f->hypothesis << " violated ("
        << (rec->is_limit ? std::string("limit problem") : "member n = " + checks::fmt(rec->n)) << "): " << f->witness << '\n';
    return kInvalid;
}

inline std::vector<double> parse_csv_row(const std::string& line, std::size_t lineno) {
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
        char* end = nullptr;
        const double v = std::strtod(cell.c_str(), &end);
        while (end && (*end == ' ' || *end == '\t' || *end == '\r')) ++end;
        if (end == cell.c_str() || *end != '\0' || !std::isfinite(v)) {
            throw ValidationError("line " + std::to_string(lineno) + ": not a finite number: '" + cell + "'");
        }
        row.push_back(v);
    }
    return row;
}

/// Dense images matrix: one row per grid node, one column per basis vector.
inline Matrix read_images_csv(const std::string& path) {
    std::stringstream in(read_text_file(path));
    std::string line;
    std::vector<std::vector<double>> rows;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        rows.push_back(parse_csv_row(line, lineno));
        if (rows.back().size() != rows.front().size()) {
            throw ValidationError("line " + std::to_string(lineno) + ": expected " + std::to_string(rows.front().size()) + " columns");
        }
    }
    if (rows.empty()) throw ValidationError(path + ": no data rows");
    Matrix M(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < rows[i].size(); ++j) M(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    return M;
}

}  // namespace detail

inline int cmd_converge(const std::string& config_path, const RunOverrides& o, std::ostream& out, std::ostream& err) {
    ExperimentConfig cfg;
    SequenceBuild seq;
    try {
        cfg = load_config(config_path);
        detail::apply(cfg, o);
        seq = prepare_sequence(cfg.problem, cfg.approximation);
    } catch (const ValidationError& e) {
        err << "error: " << e.what() << '\n';
        return kInvalid;
    }
    if (!seq.passed()) return detail::report_violation(seq, err);

    ConvergenceReport rep;
    try {
        rep = run_convergence_study(seq, cfg.approximation, cfg.time(), cfg.study());
    } catch (const ValidationError& e) {
        err << "error: " << e.what() << '\n';
        return kInvalid;
    } catch (const std::exception& e) {
        err << "study failed: " << e.what() << '\n';
        return kFailure;
    }
    rep.config_digest = cfg.digest();

    std::ostringstream csv;
    write_report_csv(csv, rep);
    nlohmann::json js = report_json(rep);
    js["config"] = cfg.canonical();
    js["ensemble"] = cfg.run.ensemble;
    js["audits"] = detail::audits_json(seq);

    const std::filesystem::path dir(cfg.run.out_dir);
    const std::string stem = detail::stem_of(config_path);
    const auto csv_path = dir / (stem + "_report.csv");
    const auto json_path = dir / (stem + "_report.json");
    try {
        atomic_write_file(csv_path, csv.str());
        atomic_write_file(json_path, js.dump(2) + "\n");
    } catch (const std::exception& e) {
        err << "cannot write report: " << e.what() << '\n';
        return kFailure;
    }

    out << "mode " << rep.mode << (rep.exploratory ? " (exploratory)" : "") << ", config digest " << rep.config_digest << '\n';
    for (const auto& f : rep.fits) {
        out << "  " << to_string(f.metric.kind) << ": " << to_string(f.fit.verdict);
        if (std::isfinite(f.fit.slope)) out << ", slope " << checks::fmt(f.fit.slope);
        out << '\n';
    }
    if (rep.fits.empty()) out << "  fewer than 3 schedule entries: no verdicts\n";
    if (!rep.aborts.empty()) out << "  " << rep.aborts.size() << " solver aborts recorded\n";
    out << "wrote " << csv_path.string() << " and " << json_path.string() << '\n';
    if (cfg.run.strict && !rep.all_success()) {
        err << "strict mode: at least one metric did not converge\n";
        return kFailure;
    }
    return kOk;
}

/// One solve of the limit problem (or member `member`) on stream `stream`.
inline int cmd_simulate(const std::string& config_path, std::uint64_t stream, std::optional<double> member,
                        const RunOverrides& o, std::optional<std::string> output, std::ostream& out, std::ostream& err) {
    ExperimentConfig cfg;
    SequenceBuild seq;
    try {
        cfg = load_config(config_path);
        detail::apply(cfg, o);
        seq = prepare_sequence(cfg.problem, cfg.approximation);
    } catch (const ValidationError& e) {
        err << "error: " << e.what() << '\n';
        return kInvalid;
    }
    if (!seq.passed()) return detail::report_violation(seq, err);
    std::shared_ptr<const Instance> inst = seq.limit;
    if (member) {
        inst = nullptr;
        for (const auto& m : seq.members)
            if (m->n == *member) inst = m;
        if (!inst) {
            err << "error: n = " << *member << " is not in the schedule\n";
            return kInvalid;
        }
    }

    std::ostringstream csv;
    try {
        const auto& space = inst->generator->grid();
        const auto path = sample_path(cfg.time(), seq.limit->G.channels(), cfg.run.seed, stream);
        const auto used = inst->channels < seq.limit->G.channels() ? project(path, inst->channels) : path;
        const auto X = solve_exponential_euler(*inst->semigroup, inst->F, inst->G, inst->xi.sample(space, stream), used);
        write_trajectory_csv(csv, X);
    } catch (const SolverAbort& e) {
        err << "solver aborted: " << e.what() << '\n';
        return kFailure;
    }
    const std::string suffix = "_stream" + std::to_string(stream) + (member ? "_n" + checks::fmt(*member) : std::string());
    const std::filesystem::path target =
        output ? std::filesystem::path(*output) : std::filesystem::path(cfg.run.out_dir) / (detail::stem_of(config_path) + suffix + ".csv");
    try {
        atomic_write_file(target, csv.str());
    } catch (const std::exception& e) {
        err << "cannot write trajectory: " << e.what() << '\n';
        return kFailure;
    }
    out << "wrote " << target.string() << " (config digest " << cfg.digest() << ", seed " << cfg.run.seed << ", stream "
        << stream << ")\n";
    return kOk;
}

inline int cmd_check(const std::string& suite, const std::optional<std::string>& config_path, std::ostream& out,
                     std::ostream& err) {
    const auto& names = checks::suite_names();
    if (std::find(names.begin(), names.end(), suite) == names.end()) {
        err << "error: unknown suite '" << suite << "' (expected semigroup, gamma, noise, solver or norms)\n";
        return kInvalid;
    }
    std::optional<ProblemSpec> problem;
    if (config_path) {
        try {
            problem = load_config(*config_path).problem;
        } catch (const ValidationError& e) {
            err << "error: " << e.what() << '\n';
            return kInvalid;
        }
    }
    const auto res = checks::run_suite(suite, problem);
    std::size_t failed = 0;
    for (const auto& l : res.lines) {
        out << (l.passed ? "PASS " : "FAIL ") << suite << ": " << l.name << " | " << l.detail << '\n';
        failed += l.passed ? 0 : 1;
    }
    out << suite << ": " << res.lines.size() - failed << "/" << res.lines.size() << " passed\n";
    return failed == 0 ? kOk : kFailure;
}

inline int cmd_gamma(const std::string& images_path, double x_lo, double x_hi, double r, std::size_t samples,
                     std::uint64_t seed, std::ostream& out, std::ostream& err) {
    try {
        const Matrix images = detail::read_images_csv(images_path);
        const SpatialGrid grid(x_lo, x_hi, static_cast<std::size_t>(images.rows()), r);
        const auto op = FiniteRankOperator::from_images(images);
        const auto eq = square_function_equivalence(op, grid, samples, seed);
        GammaAuditRecord rec{"gamma_norm", digest_of(op, grid), eq.gamma, seed};
        auto j = rec.to_json();
        j["exact"] = rec.estimate.exact;
        if (!rec.estimate.exact) j["square_function"] = eq.to_json();
        out << j.dump(2) << '\n';
        return kOk;
    } catch (const ValidationError& e) {
        err << "error: " << e.what() << '\n';
        return kInvalid;
    } catch (const std::exception& e) {
        err << "gamma estimate failed: " << e.what() << '\n';
        return kFailure;
    }
}

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    CLI::App app{"spdelab: semilinear SPDE convergence laboratory"};
    app.require_subcommand(1);

    RunOverrides ov;
    std::string config;
    auto add_run_flags = [&](CLI::App* sub) {
        sub->add_option("--seed", ov.seed, "master seed (overrides run.seed)");
        sub->add_flag("--strict", ov.strict, "exit 1 unless every metric converges");
        sub->add_option("--out-dir", ov.out_dir, "output directory (overrides run.out_dir)");
        sub->add_option("--threads", ov.threads, std::string("worker threads (default: $") + kThreadsEnv + " or run.threads)");
        sub->add_option("--ensemble", ov.ensemble, "ensemble size (overrides run.ensemble)");
    };

    auto* conv = app.add_subcommand("converge", "run a convergence study and write <stem>_report.csv/.json");
    conv->add_option("config", config, "experiment config (JSON)")->required();
    add_run_flags(conv);

    auto* sim = app.add_subcommand("simulate", "solve once and write the trajectory CSV");
    std::uint64_t stream = 0;
    std::optional<double> member;
    std::optional<std::string> output;
    sim->add_option("config", config, "experiment config (JSON)")->required();
    sim->add_option("--stream", stream, "stream id of the Brownian path and initial datum");
    sim->add_option("--member", member, "solve sequence member n instead of the limit");
    sim->add_option("--output", output, "output file (default <out-dir>/<stem>_stream<id>.csv)");
    add_run_flags(sim);

    auto* chk = app.add_subcommand("check", "run a property suite: semigroup, gamma, noise, solver, norms");
    std::string suite;
    std::optional<std::string> check_config;
    chk->add_option("suite", suite, "suite name")->required();
    chk->add_option("--config", check_config, "problem used by the semigroup and solver suites");

    auto* gam = app.add_subcommand("gamma", "gamma-norm of a finite-rank operator given by its images (CSV)");
    std::string images;
    std::vector<double> domain{0.0, 1.0};
    double r = 2.0;
    std::size_t samples = 100000;
    std::uint64_t gseed = 0;
    gam->add_option("images", images, "CSV: one row per grid node, one column per basis vector")->required();
    gam->add_option("--domain", domain, "x_lo x_hi")->expected(2);
    gam->add_option("--r", r, "Lebesgue exponent");
    gam->add_option("--samples", samples, "Monte Carlo samples when r != 2");
    gam->add_option("--seed", gseed, "Monte Carlo seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::Success&) {
        out << app.help();
        return kOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << '\n' << "run with --help for usage\n";
        return kInvalid;
    }

    try {
        if (conv->parsed()) return cmd_converge(config, ov, out, err);
        if (sim->parsed()) return cmd_simulate(config, stream, member, ov, output, out, err);
        if (chk->parsed()) return cmd_check(suite, check_config, out, err);
        if (gam->parsed()) return cmd_gamma(images, domain[0], domain[1], r, samples, gseed, out, err);
    } catch (const ValidationError& e) {
        err << "error: " << e.what() << '\n';
        return kInvalid;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kFailure;
    }
    return kInvalid;
}

}  // namespace spdelab::cli
