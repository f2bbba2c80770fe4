#pragma once

#include "gpmatch/covkernel.hpp"

#include <string>
#include <vector>

namespace gpmatch {

/// Assignment of units to matched blocks (or strata) with per-arm counts.
struct MatchingStructure {
    std::vector<Index> block_of;  ///< contiguous labels 0..L-1
    std::vector<Index> n_block;
    std::vector<Index> n_control;
    std::vector<Index> n_treated;

    Index n_blocks() const noexcept { return static_cast<Index>(n_block.size()); }
    Index n_units() const noexcept { return static_cast<Index>(block_of.size()); }

    /// Arbitrary integer labels are mapped to 0..L-1 in increasing label order.
    static MatchingStructure from_labels(const std::vector<long long>& labels, const VectorXd& a);
};

/// Dense block-diagonal covariance sigma0^2 I + J_block, i.e. blocks
/// sigma2 [(1 - rho) I + rho J] with sigma2 = 1 + sigma0^2, rho = 1 / sigma2.
MatrixXd block_covariance(const MatchingStructure& ms, double sigma02);

struct GlsFit {
    double mu_hat = 0.0;
    double tau_hat = 0.0;
};

/// GLS of y on (1, a) with covariance sigma.
GlsFit gls_estimate(const VectorXd& y, const VectorXd& a, const MatrixXd& sigma);

/// Weighted-sum decomposition of the block-covariance GLS estimate:
///   tau = lambda tau1 + (1 - lambda) tau0,  tau1 = C1/D1,  tau0 = C2/D2,
///   lambda = rho D1 / (rho D1 + (1 - rho) D2),  q_l = 1 / (1 - rho + rho n_l).
struct GlsEstimate {
    double mu_hat = 0.0;
    double tau_hat = 0.0;
    double lambda = 0.0;
    double tau1_hat = 0.0;  ///< NaN when no block contains both arms
    double tau0_hat = 0.0;
    double c1 = 0.0;
    double c2 = 0.0;
    double d1 = 0.0;
    double d2 = 0.0;
    double rho = 1.0;
    VectorXd q_l;
    std::vector<std::string> warnings;
};

GlsEstimate weighted_sum_estimate(const VectorXd& y, const VectorXd& a, const MatchingStructure& ms,
                                  double sigma02);

/// N sum n_l0 n_l1 / (n1 n0 sigma0^2 + N sum n_l0 n_l1), as written for
/// equal-sized strata (equal sizes are not enforced).
double stratified_lambda(const MatchingStructure& ms, double sigma02);

}  // namespace gpmatch
