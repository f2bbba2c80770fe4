#pragma once

#include "gpmatch/io.hpp"
#include "gpmatch/pipeline.hpp"
#include "gpmatch/simharness.hpp"

#include <json.hpp>

#include <iosfwd>
#include <string>
#include <vector>

namespace gpmatch::report {

using Json = nlohmann::ordered_json;

inline constexpr const char* kSchemaVersion = "1.0.0";

/// Column names used to label covariate-dependent output.
struct Labels {
    std::vector<std::string> mean_covariates;
    std::vector<std::string> kernel_covariates;
};

Json ate_summary(const AnalysisResult& r, const Labels& labels, const io::LoadReport* load = nullptr);
Json diagnostics(const DiagnosticsResult& r, const io::LoadReport* load = nullptr);
Json matched(const MatchedResult& r, const io::LoadReport* load = nullptr);
Json simulation_metrics(const sim::StudyResult& r);
Json error(const std::string& kind, const std::string& message, int exit_code,
           const std::vector<double>& jitter_levels = {});

/// iteration, gamma columns, kernel parameters, ate; one row per retained draw.
void write_trace_csv(std::ostream& out, const PosteriorChain& chain, const Labels& labels);
/// replicate, estimator, estimate, se, ci_low, ci_high, true_ate, failed.
void write_replicates_csv(std::ostream& out, const sim::StudyResult& r);

/// Two-space indented JSON with a trailing newline.
std::string dump(const Json& j);

}  // namespace gpmatch::report
