#pragma once

#include "gpmatch/diagnostics.hpp"
#include "gpmatch/matched.hpp"
#include "gpmatch/model.hpp"
#include "gpmatch/sampler.hpp"

#include <optional>
#include <string>
#include <vector>

namespace gpmatch {

struct DiagnosticsResult {
    KernelParams params;
    std::vector<std::string> kernel_columns;
    bool standardized = true;
    bool normalized = true;
    Index n = 0;
    double tau_root = 0.0;
    ResidualReport at_root;
    /// Report at an externally supplied effect (e.g. the posterior mean ATE).
    std::optional<ResidualReport> at_supplied;
    std::vector<std::string> warnings;
};

/// Weight-space diagnostics on the kernel covariates `ds.v`. With `standardize`
/// set, v is centered and scaled first and constant columns are dropped
/// together with their length scales; `params.phi` must have one entry per
/// column of v.
DiagnosticsResult diagnose(const Dataset& ds, const KernelParams& params, const std::vector<std::string>& v_names,
                           std::optional<double> tau, bool standardize = true, bool normalize = true);

struct AnalysisResult {
    PosteriorChain chain;
    AteEstimate ate;
    ModelSpec spec;
    McmcConfig mcmc;
    DiagnosticsResult diagnostics;
};

/// Runs the sampler, summarizes the ATE and evaluates the diagnostics at the
/// posterior-mean kernel parameters.
AnalysisResult analyze(const Dataset& ds, const ModelSpec& spec, const PriorConfig& prior, const McmcConfig& mcmc,
                       const std::vector<std::string>& v_names);

struct MatchedResult {
    GlsEstimate estimate;
    double sigma02 = 0.0;
    Index n = 0;
    Index n_blocks = 0;
    Index n_mixed_blocks = 0;
};

MatchedResult matched(const Dataset& ds, const std::vector<long long>& blocks, double sigma02);

}  // namespace gpmatch
