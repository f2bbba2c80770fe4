#include "gpmatch/cli.hpp"
#include "gpmatch/errors.hpp"
#include "gpmatch/io.hpp"
#include "gpmatch/pipeline.hpp"
#include "gpmatch/report.hpp"
#include "gpmatch/simharness.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <unistd.h>

using namespace gpmatch;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& tag) {
        path = fs::temp_directory_path() / ("gpmatch_test_" + tag + "_" + std::to_string(::getpid()));
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

void spit(const fs::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary);
    out << text;
}

int run(std::vector<std::string> args) {
    args.insert(args.begin(), "gpmatch");
    std::vector<char*> argv;
    for (auto& a : args) {
        argv.push_back(a.data());
    }
    return cli::run(static_cast<int>(argv.size()), argv.data());
}

void write_study2(const fs::path& p, Index n, std::uint64_t seed) {
    Rng rng(seed);
    std::ostringstream s;
    io::write_dataset_csv(s, sim::gen_study2(n, rng).data);
    spit(p, s.str());
}

}  // namespace

TEST_CASE("config parsing is strict") {
    const cli::RunConfig c = cli::parse_config(json::parse(R"({
        "seed": 5, "data": "d.csv",
        "columns": {"outcome": "out", "mean_covariates": ["x1"]},
        "model": {"mean_terms": "full_covariates", "interactions": false},
        "prior": {"omega": 100.0},
        "mcmc": {"n_burnin": 10, "n_keep": 20},
        "simulate": {"study": "kang_schafer", "n": 100, "replicates": 3, "desk_scale": true}
    })"));
    CHECK(*c.seed == 5);
    CHECK(c.columns.outcome == "out");
    CHECK(c.model.mean_terms == MeanTerms::FullCovariates);
    CHECK_FALSE(c.model.interactions);
    CHECK(c.prior.omega == 100.0);
    const McmcConfig m = c.mcmc();
    CHECK(m.n_burnin == 10);
    CHECK(m.seed == 5);
    const sim::StudySpec s = c.study_spec();
    CHECK(s.study == sim::Study::KangSchafer);
    CHECK(s.n_replicates == 3);
    CHECK(s.mcmc.n_keep == 20);

    CHECK_THROWS_AS(cli::parse_config(json::parse(R"({"sed": 1})")), ConfigError);
    CHECK_THROWS_AS(cli::parse_config(json::parse(R"({"mcmc": {"n_keep": "many"}})")), ConfigError);
    CHECK_THROWS_AS(cli::parse_config(json::parse(R"({"model": {"mean_terms": "all"}})")), ConfigError);
    CHECK_THROWS_AS(cli::RunConfig{}.mcmc(), ConfigError);

    cli::RunConfig d;
    d.seed = 1;
    d.simulate.desk_scale = true;
    CHECK(d.study_spec().n_replicates == 50);
    CHECK(d.study_spec().mcmc.n_burnin == 2000);
}

TEST_CASE("analyze is deterministic and recovers the Study 2 effect") {
    TempDir dir("analyze");
    write_study2(dir.path / "s2.csv", 200, 17);
    const std::vector<std::string> base{"analyze", "--data", (dir.path / "s2.csv").string(), "--seed", "3"};
    auto args = base;
    args.insert(args.end(), {"-o", (dir.path / "a").string()});
    REQUIRE(run(args) == 0);
    args = base;
    args.insert(args.end(), {"-o", (dir.path / "b").string()});
    REQUIRE(run(args) == 0);
    for (const char* f : {"ate_summary.json", "trace.csv", "diagnostics.json"}) {
        CHECK(slurp(dir.path / "a" / f) == slurp(dir.path / "b" / f));
    }
    const json s = json::parse(slurp(dir.path / "a" / "ate_summary.json"));
    CHECK(std::abs(s["ate"]["mean"].get<double>() - 5.0) < 0.6);
    CHECK(s["unit_effects"].size() == 200);
    const json d = json::parse(slurp(dir.path / "a" / "diagnostics.json"));
    CHECK(std::abs(d["at_root"]["residual_correlation"].get<double>()) < 1e-8);
    // trace: header plus 5000 retained draws
    std::istringstream trace(slurp(dir.path / "a" / "trace.csv"));
    std::string line;
    Index lines = 0;
    while (std::getline(trace, line)) {
        ++lines;
    }
    CHECK(lines == 5001);
}

TEST_CASE("exit codes") {
    TempDir dir("codes");
    spit(dir.path / "bad.csv", "y,a,x\n1,0,1\n2,2,2\n3,1,3\n4,0,4\n5,1,5\n");
    spit(dir.path / "one.csv", "y,a,x\n1,0,1\n2,0,2\n3,0,3\n4,0,4\n5,0,5\n");
    const std::string out = (dir.path / "o").string();
    CHECK(run({"analyze", "--data", (dir.path / "bad.csv").string(), "--seed", "1", "-o", out}) == 2);
    CHECK(run({"analyze", "--data", (dir.path / "one.csv").string(), "--seed", "1", "-o", out}) == 2);
    CHECK(run({"analyze", "--data", (dir.path / "missing.csv").string(), "--seed", "1", "-o", out}) == 2);
    CHECK(run({"analyze", "--data", (dir.path / "one.csv").string(), "-o", out}) == 4);
    CHECK(run({"simulate", "--study", "nope", "--seed", "1", "-o", out}) == 4);
    CHECK(run({"frobnicate"}) == 4);
    CHECK(run({"--help"}) == 0);
}

TEST_CASE("matched on twins gives the difference in means") {
    TempDir dir("matched");
    spit(dir.path / "twin.csv", "y,a,pair\n1,0,1\n3,1,1\n2,0,2\n5,1,2\n0.5,0,3\n4,1,3\n");
    const std::string out = (dir.path / "o").string();
    REQUIRE(run({"matched", "--data", (dir.path / "twin.csv").string(), "--block", "pair", "--sigma02", "0.7", "-o",
                 out}) == 0);
    const json m = json::parse(slurp(dir.path / "o" / "matched.json"));
    CHECK(m["tau_hat"].get<double>() == doctest::Approx(12.0 / 3.0 - 3.5 / 3.0).epsilon(1e-12));
    CHECK(m["n_mixed_blocks"] == 3);
    CHECK(run({"matched", "--data", (dir.path / "twin.csv").string(), "--sigma02", "1", "-o", out}) == 4);
}

TEST_CASE("diagnose with supplied kernel parameters") {
    TempDir dir("diagnose");
    write_study2(dir.path / "s2.csv", 120, 4);
    const std::string out = (dir.path / "o").string();
    REQUIRE(run({"diagnose", "--data", (dir.path / "s2.csv").string(), "--sigma-f2", "2", "--phi", "1,4",
                 "--sigma-02", "0.5", "--tau", "5", "-o", out}) == 0);
    const json d = json::parse(slurp(dir.path / "o" / "diagnostics.json"));
    CHECK(std::abs(d["at_root"]["residual_correlation"].get<double>()) < 1e-10);
    CHECK(d["at_supplied"]["tau"].get<double>() == 5.0);
    CHECK(d["kernel_params"]["phi"]["x2"].get<double>() == 4.0);
    CHECK(run({"diagnose", "--data", (dir.path / "s2.csv").string(), "--sigma-f2", "2", "--phi", "1", "--sigma-02",
               "0.5", "-o", out}) == 4);
}

TEST_CASE("simulate writes one row per replicate and estimator") {
    TempDir dir("simulate");
    const std::string out = (dir.path / "o").string();
    REQUIRE(run({"simulate", "--study", "kang_schafer", "--n", "100", "--replicates", "2", "--desk-scale", "--seed",
                 "9", "--burnin", "20", "--keep", "20", "-q", "-o", out}) == 0);
    std::istringstream rows(slurp(dir.path / "o" / "replicates.csv"));
    std::string line;
    std::getline(rows, line);
    CHECK(line == "replicate,estimator,estimate,se,ci_low,ci_high,true_ate,failed");
    Index n = 0;
    while (std::getline(rows, line)) {
        ++n;
    }
    CHECK(n == 2 * 8);
    const json m = json::parse(slurp(dir.path / "o" / "metrics.json"));
    CHECK(m["n_replicates"] == 2);
    CHECK(m["estimators"].size() == 8);
    CHECK(m["estimators"]["Gold"]["n_ok"] == 2);
}

TEST_CASE("error document") {
    const auto j = report::error("numerical", "boom", 3, {1e-10, 1e-8});
    CHECK(j["error"]["exit_code"] == 3);
    CHECK(j["error"]["jitter_levels"].size() == 2);
    CHECK(report::dump(j).back() == '\n');
}
