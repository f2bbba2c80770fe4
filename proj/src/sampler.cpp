#include "gpmatch/sampler.hpp"

#include "gpmatch/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace gpmatch {

McmcConfig McmcConfig::desk_scale(std::uint64_t seed) {
    McmcConfig c;
    c.n_burnin = 2000;
    c.n_keep = 2000;
    c.seed = seed;
    return c;
}

void McmcConfig::validate() const {
    if (n_burnin < 0) {
        throw std::invalid_argument("n_burnin must be nonnegative");
    }
    if (n_keep < 1) {
        throw std::invalid_argument("n_keep must be at least 1");
    }
    for (double s : proposal_scales) {
        if (!(s >= 0.0) || !std::isfinite(s)) {
            throw std::invalid_argument("proposal scales must be finite and nonnegative");
        }
    }
    if (!(target_acceptance > 0.0 && target_acceptance < 1.0)) {
        throw std::invalid_argument("target acceptance must lie in (0, 1)");
    }
}

// ---------------------------------------------------------------------------
// gamma | Sigma
// ---------------------------------------------------------------------------

MatrixXd GammaConditional::covariance() const {
    const MatrixXd eye = MatrixXd::Identity(precision.rows(), precision.cols());
    return CholeskyFactor(precision).solve(eye);
}

GammaConditional gamma_conditional(const MatrixXd& z, const VectorXd& y, const CholeskyFactor& sigma,
                                   const PriorConfig& prior) {
    if (!prior.sigma_lm2) {
        throw std::invalid_argument("gamma_conditional: prior is not resolved (sigma_lm2 unset)");
    }
    if (z.rows() != y.size() || sigma.size() != y.size()) {
        throw std::invalid_argument("gamma_conditional: dimension mismatch");
    }
    const MatrixXd lz = sigma.half_solve(z);
    const VectorXd ly = sigma.half_solve(y);
    GammaConditional out;
    out.precision = lz.transpose() * lz;
    out.precision.noalias() += (z.transpose() * z) / (prior.omega * *prior.sigma_lm2);
    const VectorXd rhs = lz.transpose() * ly;
    out.mean = CholeskyFactor(out.precision).solve(rhs);
    return out;
}

VectorXd sample_gamma(const MatrixXd& z, const VectorXd& y, const CholeskyFactor& sigma,
                      const PriorConfig& prior, Rng& rng) {
    const GammaConditional cond = gamma_conditional(z, y, sigma, prior);
    const CholeskyFactor prec(cond.precision);
    std::normal_distribution<double> norm;
    VectorXd eps(cond.mean.size());
    for (Index i = 0; i < eps.size(); ++i) {
        eps(i) = norm(rng);
    }
    return cond.mean + prec.transpose_half_solve(eps);
}

// ---------------------------------------------------------------------------
// Kernel parameters
// ---------------------------------------------------------------------------

KernelSampler::KernelSampler(const MatrixXd& v, KernelParams initial, const PriorConfig& prior,
                             bool likelihood_enabled)
    : cache_(v),
      prior_(prior),
      likelihood_enabled_(likelihood_enabled),
      has_kernel_(v.cols() > 0),
      params_(std::move(initial)) {
    if (!prior_.is_resolved()) {
        throw std::invalid_argument("KernelSampler: prior is not resolved");
    }
    params_.validate();
    if (params_.q() != v.cols()) {
        throw std::invalid_argument("KernelSampler: length-scale count does not match kernel covariates");
    }
    corr_ = MatrixXd::Zero(cache_.n(), cache_.n());
    if (has_kernel_) {
        cache_.correlation_lower(params_.phi, corr_);
    }
}

MatrixXd KernelSampler::assemble(const MatrixXd& corr, const KernelParams& p) const {
    const Index n = cache_.n();
    MatrixXd s(n, n);
    if (has_kernel_) {
        s.triangularView<Eigen::Lower>() = corr * p.sigma_f2;
    } else {
        s.triangularView<Eigen::Lower>().setZero();
    }
    s.triangularView<Eigen::StrictlyUpper>().setZero();
    s.diagonal().array() += p.sigma_02;
    return s;
}

const CholeskyFactor& KernelSampler::factor() {
    if (!factor_) {
        factor_.emplace(assemble(corr_, params_));
    }
    return *factor_;
}

double KernelSampler::log_lik_with(const CholeskyFactor& f, const VectorXd& residual) const {
    const VectorXd u = f.half_solve(residual);
    return -0.5 * f.log_det() - 0.5 * u.squaredNorm();
}

double KernelSampler::log_likelihood(const VectorXd& residual) {
    return log_lik_with(factor(), residual);
}

double KernelSampler::log_prior_term(Index which, double value) const {
    // IG(a, b) density of `value` times the Jacobian of the log transform.
    double a = prior_.a_phi;
    double b = prior_.b_phi;
    if (which == 0) {
        a = prior_.af;
        b = *prior_.bf;
    } else if (which == params_.q() + 1) {
        a = prior_.a0;
        b = *prior_.b0;
    }
    return -a * std::log(value) - b / value;
}

namespace {

double& param_ref(KernelParams& p, Index which) {
    if (which == 0) {
        return p.sigma_f2;
    }
    if (which == p.q() + 1) {
        return p.sigma_02;
    }
    return p.phi(which - 1);
}

}  // namespace

std::vector<bool> KernelSampler::sweep(const VectorXd& residual, const VectorXd& scales, Rng& rng) {
    const Index np = n_params();
    if (scales.size() != np) {
        throw std::invalid_argument("KernelSampler::sweep: need one proposal scale per kernel parameter");
    }
    if (residual.size() != cache_.n()) {
        throw std::invalid_argument("KernelSampler::sweep: residual length mismatch");
    }
    std::normal_distribution<double> norm;
    std::uniform_real_distribution<double> unif;
    std::vector<bool> accepted(static_cast<std::size_t>(np), false);

    double current_ll = likelihood_enabled_ ? log_lik_with(factor(), residual) : 0.0;
    MatrixXd corr_prop;

    for (Index j = 0; j < np; ++j) {
        const double step = scales(j) * norm(rng);
        const double log_u = std::log(unif(rng));
        if (j == 0 && !has_kernel_) {
            accepted[0] = true;
            continue;
        }
        KernelParams prop = params_;
        double& slot = param_ref(prop, j);
        const double current = slot;
        slot = current * std::exp(step);
        if (!(slot > 0.0) || !std::isfinite(slot)) {
            continue;
        }

        const bool is_phi = j >= 1 && j <= params_.q();
        double prop_ll = 0.0;
        std::optional<CholeskyFactor> prop_factor;
        if (likelihood_enabled_) {
            if (is_phi) {
                cache_.correlation_lower(prop.phi, corr_prop);
                prop_factor = CholeskyFactor::try_factor(assemble(corr_prop, prop));
            } else {
                prop_factor = CholeskyFactor::try_factor(assemble(corr_, prop));
            }
            if (!prop_factor) {
                continue;  // unfactorable proposals are rejections
            }
            prop_ll = log_lik_with(*prop_factor, residual);
        }
        const double log_ratio =
            prop_ll - current_ll + log_prior_term(j, slot) - log_prior_term(j, current);
        if (log_u < log_ratio) {
            accepted[static_cast<std::size_t>(j)] = true;
            params_ = std::move(prop);
            current_ll = prop_ll;
            if (is_phi) {
                if (likelihood_enabled_) {
                    corr_.swap(corr_prop);
                } else {
                    cache_.correlation_lower(params_.phi, corr_);
                }
            }
            if (likelihood_enabled_) {
                factor_ = std::move(prop_factor);
            } else {
                factor_.reset();
            }
        }
    }
    return accepted;
}

KernelUpdate sample_kernel_params(const MatrixXd& v, const VectorXd& residual, const KernelParams& current,
                                  const PriorConfig& prior, const VectorXd& scales, Rng& rng,
                                  bool likelihood_enabled) {
    KernelSampler ks(v, current, prior, likelihood_enabled);
    KernelUpdate out;
    out.accepted = ks.sweep(residual, scales, rng);
    out.params = ks.params();
    return out;
}

// ---------------------------------------------------------------------------
// Full chain
// ---------------------------------------------------------------------------

KernelParams PosteriorChain::posterior_mean_kernel() const {
    KernelParams p;
    const VectorXd m = kernel_draws.colwise().mean();
    const Index q = m.size() - 2;
    p.sigma_f2 = m(0);
    p.phi = m.segment(1, q);
    p.sigma_02 = m(q + 1);
    return p;
}

PosteriorChain run_chain(const Dataset& ds, const ModelSpec& spec, const PriorConfig& prior,
                         const McmcConfig& mcmc) {
    ds.validate();
    mcmc.validate();
    prior.validate();

    PosteriorChain chain;

    // Kernel covariates: optional column subset, then standardization.
    std::vector<Index> selected = spec.kernel_columns;
    if (selected.empty()) {
        for (Index k = 0; k < ds.q(); ++k) {
            selected.push_back(k);
        }
    }
    MatrixXd v_sel(ds.n(), static_cast<Index>(selected.size()));
    for (std::size_t c = 0; c < selected.size(); ++c) {
        if (selected[c] < 0 || selected[c] >= ds.q()) {
            throw std::invalid_argument("kernel column index out of range");
        }
        v_sel.col(static_cast<Index>(c)) = ds.v.col(selected[c]);
    }
    StandardizedCovariates stdv = standardize_covariates(v_sel);
    chain.warnings = stdv.warnings;
    for (Index k : stdv.kept_columns) {
        chain.kernel_columns.push_back(selected[static_cast<std::size_t>(k)]);
    }
    chain.v_center = stdv.center;
    chain.v_scale = stdv.scale;
    const Index q = stdv.values.cols();

    const DesignMatrix design = build_design(ds, spec);
    const Index d = design.cols();
    chain.gamma_names = design.column_names();
    chain.treatment_col = design.treatment_col;
    chain.interaction_col = design.interaction_col;
    chain.n_interactions = design.n_interactions;
    chain.x_mean = ds.p() > 0 ? VectorXd(ds.x.colwise().mean().transpose()) : VectorXd();

    double anchor = 1.0;
    if (!prior.sigma_lm2) {
        AnchorResult ar = sigma_lm2_anchor(ds);
        anchor = ar.sigma_lm2;
        chain.warnings.insert(chain.warnings.end(), ar.warnings.begin(), ar.warnings.end());
    }
    chain.prior = prior.resolved(anchor);
    const double s_lm2 = *chain.prior.sigma_lm2;

    KernelParams init;
    init.sigma_f2 = s_lm2 / 2.0;
    init.sigma_02 = s_lm2 / 2.0;
    init.phi = VectorXd::Ones(q);

    chain.kernel_names.emplace_back("sigma_f2");
    for (Index k = 0; k < q; ++k) {
        chain.kernel_names.push_back("phi_" + std::to_string(chain.kernel_columns[static_cast<std::size_t>(k)] + 1));
    }
    chain.kernel_names.emplace_back("sigma_02");

    const Index np = q + 2;
    VectorXd scales = VectorXd::Constant(np, 0.5);
    if (!mcmc.proposal_scales.empty()) {
        if (static_cast<Index>(mcmc.proposal_scales.size()) != np) {
            throw std::invalid_argument("proposal_scales must have q + 2 entries (q = " + std::to_string(q) + ")");
        }
        for (Index j = 0; j < np; ++j) {
            scales(j) = mcmc.proposal_scales[static_cast<std::size_t>(j)];
        }
    }

    Rng rng = make_rng(mcmc.seed);
    VectorXd gamma = Eigen::ColPivHouseholderQR<MatrixXd>(design.z).solve(ds.y);
    KernelSampler ks(stdv.values, init, chain.prior, mcmc.likelihood_enabled);

    chain.gamma_draws.resize(mcmc.n_keep, d);
    chain.kernel_draws.resize(mcmc.n_keep, np);
    chain.ate_draws.resize(mcmc.n_keep);
    VectorXd accept_count = VectorXd::Zero(np);

    const Index total = mcmc.n_burnin + mcmc.n_keep;
    for (Index s = 0; s < total; ++s) {
        try {
            const VectorXd residual = ds.y - design.z * gamma;
            const std::vector<bool> acc = ks.sweep(residual, scales, rng);
            if (s < mcmc.n_burnin) {
                if (mcmc.adapt_burnin) {
                    const double rate = std::pow(static_cast<double>(s + 1), -0.6);
                    for (Index j = 0; j < np; ++j) {
                        const double hit = acc[static_cast<std::size_t>(j)] ? 1.0 : 0.0;
                        scales(j) *= std::exp(rate * (hit - mcmc.target_acceptance));
                    }
                }
            }
            gamma = sample_gamma(design.z, ds.y, ks.factor(), chain.prior, rng);
            if (s >= mcmc.n_burnin) {
                const Index k = s - mcmc.n_burnin;
                for (Index j = 0; j < np; ++j) {
                    accept_count(j) += acc[static_cast<std::size_t>(j)] ? 1.0 : 0.0;
                }
                chain.gamma_draws.row(k) = gamma.transpose();
                const KernelParams& kp = ks.params();
                chain.kernel_draws(k, 0) = kp.sigma_f2;
                chain.kernel_draws.row(k).segment(1, q) = kp.phi.transpose();
                chain.kernel_draws(k, q + 1) = kp.sigma_02;
                chain.ate_draws(k) = design.average_effect(gamma, chain.x_mean);
            }
        } catch (const NumericalError& e) {
            throw NumericalError("sweep " + std::to_string(s) + ": " + e.what(), e.jitter_levels());
        }
    }

    chain.acceptance_rates = accept_count / static_cast<double>(mcmc.n_keep);
    chain.final_scales = scales;
    const VectorXd gamma_mean = chain.gamma_draws.colwise().mean().transpose();
    chain.unit_tau_mean = design.unit_effects(gamma_mean, ds.x);
    return chain;
}

// ---------------------------------------------------------------------------
// Summaries
// ---------------------------------------------------------------------------

double quantile(std::vector<double> values, double prob) {
    if (values.empty()) {
        throw std::invalid_argument("quantile of empty sample");
    }
    if (!(prob >= 0.0 && prob <= 1.0)) {
        throw std::invalid_argument("quantile probability outside [0, 1]");
    }
    std::sort(values.begin(), values.end());
    const double h = static_cast<double>(values.size() - 1) * prob;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, values.size() - 1);
    return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

AteEstimate summarize(const PosteriorChain& chain) {
    const Index n = chain.ate_draws.size();
    if (n < 2) {
        throw std::invalid_argument("summarize needs at least two retained draws");
    }
    AteEstimate est;
    // Shift by the first draw so a constant chain summarizes exactly.
    const double shift = chain.ate_draws(0);
    const VectorXd centered = chain.ate_draws.array() - shift;
    const double m = centered.mean();
    est.mean = shift + m;
    est.sd = std::sqrt((centered.array() - m).square().sum() / static_cast<double>(n - 1));
    std::vector<double> draws(chain.ate_draws.data(), chain.ate_draws.data() + n);
    est.ci_low = quantile(draws, 0.025);
    est.ci_high = quantile(std::move(draws), 0.975);
    est.tau_i = chain.unit_tau_mean;
    return est;
}

}  // namespace gpmatch
