#include <catch_amalgamated.hpp>

#include <filesystem>
#include <sstream>

#include "spdelab/cli.hpp"

using namespace spdelab;
namespace fs = std::filesystem;

namespace {

const fs::path kConfigs = SPDELAB_CONFIG_DIR;

struct Run {
    int code;
    std::string out, err;
};

Run run_cli(std::vector<std::string> args) {
    args.insert(args.begin(), "spdelab");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
    return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("spdelab_test_" + std::to_string(::getpid())) / name;
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

fs::path write(const fs::path& dir, const std::string& name, const std::string& text) {
    atomic_write_file(dir / name, text);
    return dir / name;
}

}  // namespace

TEST_CASE("usage errors exit 2", "[cli]") {
    REQUIRE(run_cli({}).code == 2);
    REQUIRE(run_cli({"frobnicate"}).code == 2);
    REQUIRE(run_cli({"check", "foo"}).code == 2);
    REQUIRE(run_cli({"converge", "/nonexistent.json"}).code == 2);
    REQUIRE(run_cli({"--help"}).code == 0);
}

TEST_CASE("out-of-window lambda exits 2 and cites the window", "[cli]") {
    const auto dir = scratch("lambda");
    const auto cfg = write(dir, "bad.json", R"json({"approximation": {"schedule": [1, 2, 3]}, "norms": {"lambda": 0.6}})json");
    const auto r = run_cli({"converge", cfg.string(), "--out-dir", dir.string()});
    REQUIRE(r.code == 2);
    REQUIRE(r.err.find("lambda must be >= 0 and < 1/2 - 1/p") != std::string::npos);
    REQUIRE_FALSE(fs::exists(dir / "bad_report.csv"));
}

TEST_CASE("hypothesis violations exit 2 without output", "[cli]") {
    const auto dir = scratch("violation");
    auto r = run_cli({"converge", (kConfigs / "violation_kappa.json").string(), "--out-dir", dir.string()});
    REQUIRE(r.code == 2);
    REQUIRE(r.err.find("hypothesis (i)") != std::string::npos);
    r = run_cli({"converge", (kConfigs / "violation_lipschitz.json").string(), "--out-dir", dir.string()});
    REQUIRE(r.code == 2);
    REQUIRE(r.err.find("hypothesis (F1)") != std::string::npos);
    REQUIRE(fs::is_empty(dir));
}

TEST_CASE("trivial sequence converges with zero estimates", "[cli]") {
    const auto dir = scratch("trivial");
    const auto r = run_cli({"converge", (kConfigs / "trivial.json").string(), "--out-dir", dir.string()});
    REQUIRE(r.code == 0);
    const std::string csv = read_text_file(dir / "trivial_report.csv");
    REQUIRE(csv.find(",0,0,16\n") != std::string::npos);
    const auto js = nlohmann::json::parse(read_text_file(dir / "trivial_report.json"));
    REQUIRE(js["config_digest"] == load_config(kConfigs / "trivial.json").digest());
    REQUIRE(js["fits"][0]["verdict"] == "converged_below_noise_floor");
    REQUIRE(js["audits"].size() == 4);
}

TEST_CASE("strict mode fails a non-decreasing study", "[cli]") {
    const auto dir = scratch("strict");
    const auto cfg = write(dir, "up.json", R"json({
  "problem": {"m": 8, "xi": "sin(pi*x)", "T": 0.25, "N": 16},
  "approximation": {"schedule": [1, 2, 4], "xi_n": "sin(pi*x)*(1 + n/10)"},
  "norms": {"metrics": ["sup_C"]},
  "run": {"ensemble": 4}
})json");
    REQUIRE(run_cli({"converge", cfg.string(), "--out-dir", dir.string()}).code == 0);
    const auto r = run_cli({"converge", cfg.string(), "--out-dir", dir.string(), "--strict"});
    REQUIRE(r.code == 1);
    REQUIRE(r.out.find("non_decreasing") != std::string::npos);
}

TEST_CASE("simulate is deterministic per stream", "[cli]") {
    const auto dir = scratch("simulate");
    const std::string cfg = (kConfigs / "trivial.json").string();
    REQUIRE(run_cli({"simulate", cfg, "--stream", "3", "--output", (dir / "a.csv").string()}).code == 0);
    REQUIRE(run_cli({"simulate", cfg, "--stream", "3", "--output", (dir / "b.csv").string()}).code == 0);
    REQUIRE(run_cli({"simulate", cfg, "--stream", "4", "--output", (dir / "c.csv").string()}).code == 0);
    const auto a = read_text_file(dir / "a.csv"), b = read_text_file(dir / "b.csv"), c = read_text_file(dir / "c.csv");
    REQUIRE(a == b);
    REQUIRE(a != c);
    REQUIRE(a.substr(0, a.find('\n')) == c.substr(0, c.find('\n')));
    REQUIRE(std::count(a.begin(), a.end(), '\n') == std::count(c.begin(), c.end(), '\n'));
    REQUIRE(run_cli({"simulate", cfg, "--member", "7"}).code == 2);
}

TEST_CASE("simulate with F = G = 0 writes S(t_m) xi", "[cli]") {
    const auto dir = scratch("free");
    const auto cfg = write(dir, "free.json", R"json({
  "problem": {"m": 4, "xi": "sin(pi*x)", "T": 0.1, "N": 5},
  "approximation": {"schedule": [1]}
})json");
    REQUIRE(run_cli({"simulate", cfg.string(), "--output", (dir / "x.csv").string()}).code == 0);
    std::stringstream in(read_text_file(dir / "x.csv"));
    std::string line;
    std::getline(in, line);
    REQUIRE(line == "t,x_1,x_2,x_3,x_4");
    const auto g = std::make_shared<const SectorialGenerator>(
        assemble_divergence_form(SpatialGrid(0, 1, 4, 2.0), CoefficientField::constant(1.0)));
    const SemigroupEvaluator ev(g);
    Vector xi(4);
    for (Eigen::Index i = 0; i < 4; ++i) xi[i] = std::sin(std::numbers::pi * 0.2 * (i + 1));
    for (std::size_t m = 0; m <= 5; ++m) {
        std::getline(in, line);
        std::stringstream ls(line);
        std::string cell;
        std::getline(ls, cell, ',');
        const Vector ref = ev.apply(0.02 * m, xi);
        for (Eigen::Index i = 0; i < 4; ++i) {
            std::getline(ls, cell, ',');
            REQUIRE(std::stod(cell) == Catch::Approx(ref[i]).epsilon(1e-12).margin(1e-300));
        }
    }
}

TEST_CASE("gamma command reports an exact Hilbert estimate", "[cli]") {
    const auto dir = scratch("gamma");
    const auto csv = write(dir, "imgs.csv", "1,0\n0,2\n# comment\n3,0\n");
    const auto r = run_cli({"gamma", csv.string()});
    REQUIRE(r.code == 0);
    const auto j = nlohmann::json::parse(r.out);
    REQUIRE(j["exact"] == true);
    REQUIRE(j["value"].get<double>() == Catch::Approx(std::sqrt(0.25 * 14.0)));
    const auto bad = write(dir, "bad.csv", "1,x\n");
    REQUIRE(run_cli({"gamma", bad.string()}).code == 2);
    REQUIRE_FALSE(j.contains("square_function"));

    const auto mc = run_cli({"gamma", csv.string(), "--r", "4", "--samples", "20000", "--seed", "3"});
    REQUIRE(mc.code == 0);
    const auto k = nlohmann::json::parse(mc.out);
    REQUIRE(k["exact"] == false);
    REQUIRE(k["square_function"]["tolerance_label"] == "equivalence-constant tolerance");
    REQUIRE(k["square_function"]["relative_gap"].get<double>() >= 0.0);
}

TEST_CASE("check runs a suite and prints one line per assertion", "[cli]") {
    const auto r = run_cli({"check", "semigroup", "--config", (kConfigs / "heat.json").string()});
    REQUIRE(r.code == 0);
    REQUIRE(r.out.find("PASS semigroup: resolvent identity") != std::string::npos);
    REQUIRE(r.out.find("FAIL") == std::string::npos);
}
