#pragma once

#include "gpmatch/covkernel.hpp"
#include "gpmatch/model.hpp"
#include "gpmatch/rng.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace gpmatch {

struct McmcConfig {
    Index n_burnin = 5000;
    Index n_keep = 5000;
    std::uint64_t seed = 0;
    /// Random-walk step sizes on the log scale, ordered
    /// (sigma_f2, phi_1..phi_q, sigma_02). Empty means 0.5 for every parameter.
    std::vector<double> proposal_scales;
    /// Robbins-Monro adaptation of the step sizes during burn-in, frozen afterwards.
    bool adapt_burnin = true;
    double target_acceptance = 0.44;
    /// When false the kernel update targets the priors only (used to check
    /// that the sampler recovers them).
    bool likelihood_enabled = true;

    static McmcConfig desk_scale(std::uint64_t seed);
    void validate() const;
};

/// Conditional posterior gamma | y, Sigma under the g-type prior:
///   precision = Z' Sigma^{-1} Z + Z'Z / (omega sigma_lm2),
///   mean = precision^{-1} Z' Sigma^{-1} y.
struct GammaConditional {
    VectorXd mean;
    MatrixXd precision;
    MatrixXd covariance() const;
};

GammaConditional gamma_conditional(const MatrixXd& z, const VectorXd& y, const CholeskyFactor& sigma,
                                   const PriorConfig& prior);

VectorXd sample_gamma(const MatrixXd& z, const VectorXd& y, const CholeskyFactor& sigma,
                      const PriorConfig& prior, Rng& rng);

/// Metropolis-within-Gibbs state for the kernel parameters. Keeps the
/// correlation matrix and Cholesky factor of the current Sigma so rejected
/// proposals cost nothing beyond their own factorization.
///
/// With q = 0 there is no GP term: Sigma = sigma_02 I and sigma_f2 is held fixed.
class KernelSampler {
public:
    KernelSampler(const MatrixXd& v, KernelParams initial, const PriorConfig& prior,
                  bool likelihood_enabled = true);

    /// One sweep of component-wise log-scale random-walk updates, in the order
    /// sigma_f2, phi_1..phi_q, sigma_02. Returns the acceptance flag per parameter.
    std::vector<bool> sweep(const VectorXd& residual, const VectorXd& scales, Rng& rng);

    const KernelParams& params() const noexcept { return params_; }
    Index n_params() const noexcept { return params_.q() + 2; }

    /// Cholesky factor of Sigma at the current parameters.
    const CholeskyFactor& factor();

    /// Log marginal density of `residual` under N(0, Sigma(current)), up to a constant.
    double log_likelihood(const VectorXd& residual);

private:
    struct Proposal {
        KernelParams params;
        MatrixXd corr;
        std::optional<CholeskyFactor> factor;
    };

    double log_prior_term(Index which, double value) const;
    MatrixXd assemble(const MatrixXd& corr, const KernelParams& p) const;
    double log_lik_with(const CholeskyFactor& f, const VectorXd& residual) const;

    SquaredDistanceCache cache_;
    PriorConfig prior_;
    bool likelihood_enabled_;
    bool has_kernel_;
    KernelParams params_;
    MatrixXd corr_;
    std::optional<CholeskyFactor> factor_;
};

struct KernelUpdate {
    KernelParams params;
    std::vector<bool> accepted;
};

/// Single sweep for a given residual y - Z gamma (convenience wrapper).
KernelUpdate sample_kernel_params(const MatrixXd& v, const VectorXd& residual, const KernelParams& current,
                                  const PriorConfig& prior, const VectorXd& scales, Rng& rng,
                                  bool likelihood_enabled = true);

/// Retained draws of one chain.
struct PosteriorChain {
    MatrixXd gamma_draws;   ///< n_keep x d
    MatrixXd kernel_draws;  ///< n_keep x (q + 2): sigma_f2, phi_1..phi_q, sigma_02
    VectorXd ate_draws;
    VectorXd acceptance_rates;  ///< over retained sweeps
    VectorXd final_scales;
    VectorXd unit_tau_mean;     ///< posterior mean tau(x_i)

    std::vector<std::string> gamma_names;
    std::vector<std::string> kernel_names;
    std::vector<Index> kernel_columns;  ///< columns of v actually used
    VectorXd v_center;
    VectorXd v_scale;
    PriorConfig prior;
    std::vector<std::string> warnings;

    /// Design bookkeeping so ATE draws can be recomputed from gamma draws.
    Index treatment_col = 1;
    Index interaction_col = -1;
    Index n_interactions = 0;
    VectorXd x_mean;

    KernelParams posterior_mean_kernel() const;
};

/// Alternates the kernel sweep and the gamma draw for n_burnin + n_keep sweeps.
/// Kernel covariates are standardized first; length scales are on that scale.
/// Deterministic given mcmc.seed.
PosteriorChain run_chain(const Dataset& ds, const ModelSpec& spec, const PriorConfig& prior,
                         const McmcConfig& mcmc);

struct AteEstimate {
    double mean = 0.0;
    double sd = 0.0;
    double ci_low = 0.0;
    double ci_high = 0.0;
    VectorXd tau_i;
};

/// Mean, sd and equal-tailed 95% percentile interval of the ATE draws.
AteEstimate summarize(const PosteriorChain& chain);

/// Sample quantile with linear interpolation between order statistics
/// (Hyndman-Fan type 7).
double quantile(std::vector<double> values, double prob);

}  // namespace gpmatch
