#pragma once

#include "gpmatch/covkernel.hpp"

#include <string>

namespace gpmatch {

/// Weight-space view of the GP fit: rows of K Sigma^{-1}, optionally
/// row-normalized, and the smoothed outcome and treatment they produce.
struct WeightSpace {
    MatrixXd w;
    VectorXd y_tilde;  ///< W y
    VectorXd a_tilde;  ///< W a
    bool normalized = true;
};

/// kappa = K Sigma^{-1} with Sigma = K + sigma_02 I; w_ij = kappa_ij / sum_j kappa_ij
/// when `normalize` is set. Throws NumericalError naming the first row whose
/// weights sum to a non-positive value. `v` is used as given (no standardization).
WeightSpace weight_matrix(const MatrixXd& v, const KernelParams& params, const VectorXd& y, const VectorXd& a,
                          bool normalize = true);

/// (Y_i - Ytilde_i - tau (A_i - Atilde_i)) (A_i - Atilde_i).
VectorXd psi(double tau, const WeightSpace& ws, const VectorXd& y, const VectorXd& a);

/// Root of sum_i psi_i(tau) = 0:
///   sum (Y - Ytilde)(A - Atilde) / sum (A - Atilde)^2.
/// Throws DataError when the treatment residuals carry no information.
double solve_tau(const WeightSpace& ws, const VectorXd& y, const VectorXd& a);

struct OverlapProfile {
    double min = 0.0;
    double q25 = 0.0;
    double median = 0.0;
    double q75 = 0.0;
    double max = 0.0;
    Index n_near_zero = 0;  ///< |A_i - Atilde_i| < near_zero_threshold
    double near_zero_threshold = 1e-3;
};

struct ResidualReport {
    double tau = 0.0;
    double sum_psi = 0.0;
    /// Uncentered correlation sum(e d) / sqrt(sum e^2 sum d^2) between outcome
    /// residuals e = Y - Ytilde - tau (A - Atilde) and treatment residuals
    /// d = A - Atilde; zero exactly at the estimating-equation root.
    double residual_correlation = 0.0;
    /// Ordinary (centered) Pearson correlation of the same residuals.
    double pearson_correlation = 0.0;
    bool zero_variance = false;
    bool no_overlap = false;  ///< every |A_i - Atilde_i| is (near) zero
    OverlapProfile overlap;
};

ResidualReport residual_independence_report(const WeightSpace& ws, const VectorXd& y, const VectorXd& a,
                                            double tau);

}  // namespace gpmatch
