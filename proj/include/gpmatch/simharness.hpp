#pragma once

#include "gpmatch/model.hpp"
#include "gpmatch/rng.hpp"
#include "gpmatch/sampler.hpp"

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace gpmatch::sim {

enum class Study { SingleCovariate, MdComparison, KangSchafer };

std::string study_name(Study s);
/// Accepts the canonical names plus "study1", "study2", "study3". Throws ConfigError.
Study parse_study(const std::string& name);

/// (gamma0, gamma1, gamma2, gamma3) of the single-covariate design.
struct Study1Gammas {
    double g0 = 0.0;
    double g1 = 0.0;
    double g2 = 0.0;
    double g3 = 0.0;
};

/// The four published settings, indexed 1..4.
Study1Gammas study1_setting(int setting);

struct SimData {
    Dataset data;
    MatrixXd latent;        ///< unobserved inputs (U0, U1, U2) or (z1..z4)
    VectorXd unit_effects;  ///< tau_i
    double true_ate = 0.0;  ///< sample average of tau_i
};

/// x ~ N(0,1); logit P(A=1) = -0.2 + cbrt(1.8 x) + g2 U2^2 (real signed cube root);
/// y = e^x + (1 + g1 U1) a + g0 U0 + g3 eps.
SimData gen_study1(Index n, const Study1Gammas& g, Rng& rng);

struct Study2Options {
    double noise_sd = 1.0;
    bool confounded = true;  ///< false fixes the assignment probability at 0.5
};

/// x1, x2 ~ U(-2, 2); logit pi = -x1 - x2; y = 3 + 5a + x1^3 + N(0, noise_sd^2).
SimData gen_study2(Index n, Rng& rng, const Study2Options& opt = {});

/// Latent z ~ N(0, I4); observed x1..x4 are the usual nonlinear transforms;
/// logit pi = -z1 + 0.5 z2 - 0.25 z3 - 0.1 z4; y = 210 + 5a + 27.4 z1 + 13.7 (z2 + z3 + z4) + N(0, 1).
SimData gen_kang_schafer(Index n, Rng& rng);

struct StudySpec {
    Study study = Study::SingleCovariate;
    int setting = 1;  ///< single-covariate design only
    std::optional<Study1Gammas> gammas;  ///< overrides the published setting
    Index n = 400;
    Index n_replicates = 100;
    std::uint64_t seed = 20190101;
    std::vector<std::string> estimators;  ///< empty selects default_estimators()
    McmcConfig mcmc;                      ///< seed is re-derived per replicate
    PriorConfig prior;
    bool gpmatch2_interactions = true;
    std::vector<double> calipers;  ///< empty selects 0.125, 0.150, ..., 1.000
    int threads = 0;               ///< 0: GPMATCH_THREADS, else hardware concurrency

    /// 50 replicates and 2000 + 2000 sweeps.
    void apply_desk_scale();
    void validate() const;
};

std::vector<std::string> default_estimators(const StudySpec& spec);
std::vector<double> default_calipers();
/// Name of the matching estimator at a caliper, e.g. "MD_0.250".
std::string md_name(double caliper);

struct ReplicateRecord {
    Index replicate = 0;
    std::string estimator;
    double estimate = 0.0;
    double se = 0.0;
    double ci_low = 0.0;
    double ci_high = 0.0;
    double true_ate = 0.0;
    bool failed = false;
    std::string error;
};

/// Summary over the successful replicates of one estimator.
struct Metrics {
    Index n_ok = 0;
    Index n_failed = 0;
    double rmse = 0.0;
    double mae = 0.0;  ///< median absolute error
    double bias = 0.0;
    double rc = 0.0;   ///< coverage of the interval estimate
    double se_avg = 0.0;
    std::optional<double> se_emp;  ///< missing with fewer than two replicates
    double mean_estimate = 0.0;
    double err_q05 = 0.0;  ///< 5th percentile of estimate - truth
    double err_q95 = 0.0;
};

/// Aggregates per-replicate rows (failed rows are counted and skipped).
Metrics aggregate(const std::vector<ReplicateRecord>& rows);

struct StudyResult {
    StudySpec spec;
    std::vector<std::string> estimators;
    std::vector<ReplicateRecord> records;  ///< replicate-major, estimator order within
    std::vector<Metrics> metrics;          ///< parallel to `estimators`

    const Metrics& metric(const std::string& estimator) const;
};

std::uint64_t replicate_seed(const StudySpec& spec, Index replicate);

/// Generates replicate `r` of the study's design.
SimData generate(const StudySpec& spec, Index replicate);

/// Runs every configured estimator on one replicate.
std::vector<ReplicateRecord> run_replicate(const StudySpec& spec, Index replicate);

using Progress = std::function<void(Index done, Index total)>;

/// Replicates run on a bounded worker pool; the result does not depend on the
/// number of workers or their scheduling.
StudyResult run_study(const StudySpec& spec, const Progress& progress = {});

int resolve_threads(int requested);

}  // namespace gpmatch::sim
