#pragma once

#include <Eigen/Dense>

#include <optional>
#include <string>
#include <vector>

namespace gpmatch {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Squared-exponential kernel parameters: signal variance, one length scale
/// per kernel covariate, and the noise variance added on the diagonal.
struct KernelParams {
    double sigma_f2 = 1.0;
    VectorXd phi;
    double sigma_02 = 1.0;

    Index q() const noexcept { return phi.size(); }

    /// Throws std::invalid_argument unless sigma_f2 > 0, phi > 0, sigma_02 >= 0.
    void validate() const;
};

/// sigma_f2 * exp(-sum_k (vi_k - vj_k)^2 / phi_k). The squared distance is
/// divided by phi_k directly: no factor of two and phi is not squared.
double se_kernel(const Eigen::Ref<const VectorXd>& vi, const Eigen::Ref<const VectorXd>& vj,
                 const KernelParams& params);

/// K(V, V) with rows of V as units.
MatrixXd kernel_matrix(const MatrixXd& v, const KernelParams& params);

/// K + sigma_02 * I. Throws DataError on non-finite covariates.
MatrixXd build_covariance(const MatrixXd& v, const KernelParams& params);

/// Jitter levels, as fractions of mean(diag), tried in order after a plain
/// factorization fails.
inline constexpr double kJitterLevels[] = {1e-10, 1e-9, 1e-8, 1e-7, 1e-6};

/// Lower Cholesky factor of an SPD matrix with the escalating-jitter policy.
/// Only the lower triangle of the input is read.
class CholeskyFactor {
public:
    /// Throws NumericalError carrying the attempted jitter levels.
    explicit CholeskyFactor(const MatrixXd& sigma);

    /// Returns std::nullopt instead of throwing.
    static std::optional<CholeskyFactor> try_factor(const MatrixXd& sigma);

    MatrixXd solve(const MatrixXd& b) const;
    VectorXd solve(const VectorXd& b) const;

    /// L^{-1} b, so that ||L^{-1} b||^2 = b' Sigma^{-1} b.
    MatrixXd half_solve(const MatrixXd& b) const;
    VectorXd half_solve(const VectorXd& b) const;
    /// L'^{-1} b; maps iid normals to draws with covariance Sigma^{-1}.
    VectorXd transpose_half_solve(const VectorXd& b) const;

    double log_det() const;
    double jitter() const noexcept { return jitter_; }
    Index size() const noexcept { return llt_.rows(); }
    MatrixXd lower() const { return llt_.matrixL(); }

private:
    CholeskyFactor() = default;
    bool factor(const MatrixXd& sigma);

    Eigen::LLT<MatrixXd, Eigen::Lower> llt_;
    double jitter_ = 0.0;
};

/// Sigma^{-1} B through triangular solves.
MatrixXd chol_solve(const MatrixXd& sigma, const MatrixXd& b);

/// One block sigma2 * [(1 - rho) I + rho J] of a block compound-symmetry covariance.
struct CompoundSymmetryBlock {
    Index size = 1;
    double rho = 0.0;
    double sigma2 = 1.0;

    MatrixXd dense() const;
};

/// Closed-form inverse
///   [(1 + (n-1) rho) I - rho J] / (sigma2 (1 - rho) (1 - rho + n rho)).
/// Throws NumericalError when the block is singular (rho == 1 with n > 1).
MatrixXd block_inverse(const CompoundSymmetryBlock& block);

/// Kernel covariates after centering and scaling by the sample standard
/// deviation; constant columns are removed.
struct StandardizedCovariates {
    MatrixXd values;
    std::vector<Index> kept_columns;
    VectorXd center;
    VectorXd scale;
    std::vector<std::string> warnings;
};

StandardizedCovariates standardize_covariates(const MatrixXd& v);

/// Per-dimension squared distances, cached so the kernel can be rebuilt for
/// new length scales without revisiting the covariates. Only the lower
/// triangle is populated.
class SquaredDistanceCache {
public:
    explicit SquaredDistanceCache(const MatrixXd& v);

    Index n() const noexcept { return n_; }
    Index q() const noexcept { return static_cast<Index>(dims_.size()); }

    /// exp(-sum_k D_k / phi_k), lower triangle only (diagonal = 1).
    void correlation_lower(const VectorXd& phi, MatrixXd& out) const;

private:
    Index n_;
    std::vector<MatrixXd> dims_;
};

}  // namespace gpmatch
