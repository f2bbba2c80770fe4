#pragma once

#include "gpmatch/io.hpp"
#include "gpmatch/model.hpp"
#include "gpmatch/sampler.hpp"
#include "gpmatch/simharness.hpp"

#include <json.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace gpmatch::cli {

enum ExitCode : int { kOk = 0, kInternal = 1, kDataError = 2, kNumericalError = 3, kConfigError = 4 };

struct SimulateOptions {
    std::string study = "single_covariate";
    int setting = 1;
    std::optional<std::vector<double>> gammas;
    Index n = 400;
    std::optional<Index> replicates;
    bool desk_scale = false;
    std::vector<std::string> estimators;
    std::vector<double> calipers;
    bool gpmatch2_interactions = true;
    int threads = 0;
    std::string dataset_out;
    bool quiet = false;
};

struct DiagnoseOptions {
    std::optional<double> sigma_f2;
    std::optional<std::vector<double>> phi;
    std::optional<double> sigma_02;
    std::optional<double> tau;
    bool standardize = true;
    bool normalize = true;
};

/// Everything a command needs. Defaults reproduce the published settings
/// (5000 + 5000 sweeps, omega = 1e6, IG(2, .) and IG(1, 1) priors).
struct RunConfig {
    std::string command;
    std::string data;
    std::string output_dir = ".";
    std::optional<std::uint64_t> seed;
    io::ColumnRoles columns;
    ModelSpec model;
    PriorConfig prior;
    std::optional<Index> n_burnin;
    std::optional<Index> n_keep;
    bool adapt_burnin = true;
    std::vector<double> proposal_scales;
    SimulateOptions simulate;
    std::optional<double> sigma02;
    DiagnoseOptions diagnose;

    /// MCMC settings with the seed; throws ConfigError when no seed was given.
    McmcConfig mcmc() const;
    sim::StudySpec study_spec() const;
};

/// Strict: unknown keys and wrongly typed values raise ConfigError.
RunConfig parse_config(const nlohmann::json& j);
RunConfig read_config(const std::string& path);

int cmd_analyze(const RunConfig& cfg);
int cmd_simulate(const RunConfig& cfg);
int cmd_matched(const RunConfig& cfg);
int cmd_diagnose(const RunConfig& cfg);

/// Parses arguments, dispatches and maps exceptions to exit codes, printing
/// an error JSON document on stderr.
int run(int argc, char** argv);

}  // namespace gpmatch::cli
