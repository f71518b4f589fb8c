// Acceptance run: one PASS/FAIL line per criterion. Exit status is the number
// of failed criteria (0 when all pass).

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <string>

#include <unistd.h>

#include "spdelab/checks.hpp"
#include "spdelab/config.hpp"
#include "spdelab/experiments.hpp"
#include "spdelab/io.hpp"

using namespace spdelab;
namespace fs = std::filesystem;

namespace {

const fs::path kConfigs = SPDELAB_CONFIG_DIR;
const std::string kCli = SPDELAB_CLI;

struct Outcome {
    bool passed = false;
    std::string detail;
};

int g_failed = 0;

void criterion(int id, const std::string& title, double budget_s, const std::function<Outcome()>& body) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
        o = body();
    } catch (const std::exception& e) {
        o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_time = secs <= budget_s;
    const bool ok = o.passed && in_time;
    if (!ok) ++g_failed;
    char t[64];
    std::snprintf(t, sizeof t, "%.1f s of %.0f s", secs, budget_s);
    std::cout << (ok ? "PASS" : "FAIL") << " criterion " << id << ": " << title << " | " << o.detail << " | " << t
              << (in_time ? "" : " (over budget)") << std::endl;
}

Outcome suite_outcome(const checks::SuiteResult& r, const std::string& label) {
    std::string failed;
    for (const auto& l : r.lines)
        if (!l.passed) failed += " [" + l.name + ": " + l.detail + "]";
    const std::size_t n_ok = static_cast<std::size_t>(
        std::count_if(r.lines.begin(), r.lines.end(), [](const checks::CheckLine& l) { return l.passed; }));
    return {r.passed(), label + " " + std::to_string(n_ok) + "/" + std::to_string(r.lines.size()) + failed};
}

bool good(Verdict v) { return is_success(v); }

/// Runs a shipped study through the library and applies the acceptance rule
/// to the sup_C and compensated_holder metrics.
Outcome study(const std::string& name, const std::function<std::string(const ExperimentConfig&)>& pins = {}) {
    const auto cfg = load_config(kConfigs / (name + ".json"));
    if (pins) {
        const std::string bad = pins(cfg);
        if (!bad.empty()) return {false, name + ": config pin mismatch: " + bad};
    }
    const auto seq = build_sequence(cfg.problem, cfg.approximation);
    auto opt = cfg.study();
    if (const char* env = std::getenv("SPDELAB_THREADS")) opt.threads = static_cast<unsigned>(std::max(1, std::atoi(env)));
    const auto rep = run_convergence_study(seq, cfg.approximation, cfg.time(), opt);
    bool ok = !rep.fits.empty();
    std::string detail = name + ":";
    for (const auto& f : rep.fits) {
        if (f.metric.kind == NormKind::sup_C || f.metric.kind == NormKind::holder_C_lambda) ok = ok && good(f.fit.verdict);
        detail += std::string(" ") + to_string(f.metric.kind) + "=" + to_string(f.fit.verdict);
        if (std::isfinite(f.fit.slope)) detail += " (slope " + checks::fmt(f.fit.slope) + ")";
    }
    const bool has_sup = std::any_of(rep.fits.begin(), rep.fits.end(), [](const MetricFit& f) { return f.metric.kind == NormKind::sup_C; });
    const bool has_hol = std::any_of(rep.fits.begin(), rep.fits.end(),
                                     [](const MetricFit& f) { return f.metric.kind == NormKind::holder_C_lambda; });
    if (!has_sup || !has_hol) return {false, detail + " (missing sup_C or compensated_holder)"};
    if (!rep.aborts.empty()) detail += "; " + std::to_string(rep.aborts.size()) + " aborts";
    return {ok, detail};
}

std::string pin(bool ok, const std::string& what) { return ok ? std::string() : what + "; "; }

bool same_bytes(const fs::path& a, const fs::path& b) {
    return fs::exists(a) && fs::exists(b) && read_text_file(a) == read_text_file(b);
}

}  // namespace

int main() {
    std::cout << "acceptance: configs from " << kConfigs.string() << std::endl;

    criterion(1, "semigroup/resolvent suite on heat and drift", 30.0, [] {
        const auto heat = checks::check_semigroup(load_config(kConfigs / "heat.json").problem);
        const auto drift = checks::check_semigroup(load_config(kConfigs / "drift.json").problem);
        const Outcome a = suite_outcome(heat, "heat"), b = suite_outcome(drift, "drift");
        return Outcome{a.passed && b.passed, a.detail + "; " + b.detail};
    });

    criterion(2, "gamma-calculus suite", 120.0, [] { return suite_outcome(checks::check_gamma(), "gamma"); });

    criterion(3, "solver oracle suite on the shipped nonlinear config", 600.0, [] {
        return suite_outcome(checks::check_solver(load_config(kConfigs / "theorem_1_1.json").problem), "solver");
    });

    criterion(4, "divergence-form desk reproduction (coefficients, f, g, xi)", 1800.0, [] {
        return study("theorem_1_1", [](const ExperimentConfig& c) {
            const auto& p = c.problem;
            const auto& a = c.approximation;
            std::string bad;
            bad += pin(p.x_lo == 0.0 && p.x_hi == 1.0, "domain");
            bad += pin(p.m == 64 && p.T == 0.5 && p.N == 512 && p.K() == 2 && p.r == 2.0, "m/T/N/K/r");
            bad += pin(c.norms.p == 8.0 && c.norms.q == 2.0 && c.norms.lambda == 0.25, "p/q/lambda");
            bad += pin(a.schedule == std::vector<double>{2, 4, 8, 16, 32}, "schedule");
            bad += pin(c.run.ensemble == 512, "ensemble");
            return bad;
        });
    });

    criterion(5, "Yosida and noise-projection modes", 1800.0, [] {
        const Outcome y = study("yosida", [](const ExperimentConfig& c) {
            return pin(c.approximation.schedule == std::vector<double>{8, 32, 128, 512}, "schedule");
        });
        const Outcome n = study("noise_projection", [](const ExperimentConfig& c) {
            return pin(c.problem.K() == 4 && c.approximation.schedule == std::vector<double>{1, 2, 3, 4}, "K/schedule");
        });
        return Outcome{y.passed && n.passed, y.detail + "; " + n.detail};
    });

    criterion(6, "Mosco mode on increasing domains", 1800.0, [] {
        return study("mosco", [](const ExperimentConfig& c) {
            return pin(c.approximation.direction == MoscoDirection::increasing, "direction");
        });
    });

    criterion(7, "byte-identical reports across two independent runs", 600.0, [] {
        const fs::path root = fs::temp_directory_path() / ("spdelab_acceptance_" + std::to_string(::getpid()));
        fs::remove_all(root);
        bool ok = true;
        std::string detail;
        for (const std::string name : {"trivial", "initial_datum", "noise_projection", "mosco"}) {
            const std::string cfg = (kConfigs / (name + ".json")).string();
            for (const char* run : {"a", "b"}) {
                // second run on more threads: thread count must not leak into the bytes
                const std::string cmd = "\"" + kCli + "\" converge \"" + cfg + "\" --out-dir \"" + (root / run).string() +
                                        "\" --threads " + (std::string(run) == "a" ? "1" : "3") + " > /dev/null 2>&1";
                ok = ok && std::system(cmd.c_str()) == 0;
            }
            const bool same = same_bytes(root / "a" / (name + "_report.csv"), root / "b" / (name + "_report.csv")) &&
                              same_bytes(root / "a" / (name + "_report.json"), root / "b" / (name + "_report.json"));
            ok = ok && same;
            detail += name + (same ? " identical; " : " DIFFERS; ");
        }
        for (const char* run : {"a", "b"}) {
            const std::string cmd = "\"" + kCli + "\" simulate \"" + (kConfigs / "theorem_1_1.json").string() +
                                    "\" --stream 5 --output \"" + (root / run / "sim.csv").string() + "\" > /dev/null 2>&1";
            ok = ok && std::system(cmd.c_str()) == 0;
        }
        const bool sim = same_bytes(root / "a" / "sim.csv", root / "b" / "sim.csv");
        ok = ok && sim;
        detail += std::string("simulate ") + (sim ? "identical" : "DIFFERS");
        fs::remove_all(root);
        return Outcome{ok, detail};
    });

    criterion(8, "negative controls name the violated hypothesis", 120.0, [] {
        bool ok = true;
        std::string detail;
        for (auto [name, want] : {std::pair{"violation_kappa", "(i)"}, std::pair{"violation_lipschitz", "(F1)"}}) {
            const auto cfg = load_config(kConfigs / (std::string(name) + ".json"));
            const auto seq = prepare_sequence(cfg.problem, cfg.approximation);
            std::string got = "none";
            for (const auto& rec : seq.audits)
                if (const auto* f = rec.first_failure()) {
                    got = f->hypothesis;
                    break;
                }
            ok = ok && got == want;
            detail += std::string(name) + " -> " + got + " (want " + want + "); ";
        }
        return Outcome{ok, detail};
    });

    std::cout << "acceptance: " << 8 - g_failed << "/8 criteria passed" << std::endl;
    return g_failed;
}
