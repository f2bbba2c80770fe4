#include "gpmatch/covkernel.hpp"

#include "gpmatch/errors.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace gpmatch {

void KernelParams::validate() const {
    if (!(sigma_f2 > 0.0) || !std::isfinite(sigma_f2)) {
        throw std::invalid_argument("kernel signal variance must be positive and finite");
    }
    if (!(sigma_02 >= 0.0) || !std::isfinite(sigma_02)) {
        throw std::invalid_argument("kernel noise variance must be nonnegative and finite");
    }
    for (Index k = 0; k < phi.size(); ++k) {
        if (!(phi(k) > 0.0) || !std::isfinite(phi(k))) {
            throw std::invalid_argument("length scale " + std::to_string(k) + " must be positive and finite");
        }
    }
}

double se_kernel(const Eigen::Ref<const VectorXd>& vi, const Eigen::Ref<const VectorXd>& vj,
                 const KernelParams& params) {
    if (vi.size() != vj.size() || vi.size() != params.phi.size()) {
        throw std::invalid_argument("se_kernel: dimension mismatch between covariates and length scales");
    }
    double s = 0.0;
    for (Index k = 0; k < vi.size(); ++k) {
        const double d = vi(k) - vj(k);
        s += d * d / params.phi(k);
    }
    return params.sigma_f2 * std::exp(-s);
}

MatrixXd kernel_matrix(const MatrixXd& v, const KernelParams& params) {
    if (v.cols() != params.phi.size()) {
        throw std::invalid_argument("kernel_matrix: covariate columns do not match length scales");
    }
    if (!v.allFinite()) {
        throw DataError("kernel covariates contain non-finite values");
    }
    const Index n = v.rows();
    MatrixXd k(n, n);
    const VectorXd inv_phi = params.phi.cwiseInverse();
    for (Index j = 0; j < n; ++j) {
        k(j, j) = params.sigma_f2;
        for (Index i = j + 1; i < n; ++i) {
            const double s = ((v.row(i) - v.row(j)).array().square() * inv_phi.transpose().array()).sum();
            k(i, j) = params.sigma_f2 * std::exp(-s);
            k(j, i) = k(i, j);
        }
    }
    return k;
}

MatrixXd build_covariance(const MatrixXd& v, const KernelParams& params) {
    if (v.rows() < 1) {
        throw std::invalid_argument("build_covariance: need at least one unit");
    }
    MatrixXd sigma = kernel_matrix(v, params);
    sigma.diagonal().array() += params.sigma_02;
    return sigma;
}

// ---------------------------------------------------------------------------
// Cholesky with jitter
// ---------------------------------------------------------------------------

namespace {

bool factor_ok(const Eigen::LLT<MatrixXd, Eigen::Lower>& llt) {
    if (llt.info() != Eigen::Success) {
        return false;
    }
    const auto& m = llt.matrixLLT();
    for (Index i = 0; i < m.rows(); ++i) {
        const double d = m(i, i);
        if (!(d > 0.0) || !std::isfinite(d)) {
            return false;
        }
    }
    return true;
}

}  // namespace

bool CholeskyFactor::factor(const MatrixXd& sigma) {
    if (sigma.rows() != sigma.cols()) {
        throw std::invalid_argument("Cholesky: matrix is not square");
    }
    llt_.compute(sigma);
    jitter_ = 0.0;
    if (factor_ok(llt_)) {
        return true;
    }
    const double scale = sigma.diagonal().mean();
    if (!(scale > 0.0) || !std::isfinite(scale)) {
        return false;
    }
    MatrixXd work = sigma;
    double applied = 0.0;
    for (double eps : kJitterLevels) {
        const double add = eps * scale;
        work.diagonal().array() += add - applied;
        applied = add;
        llt_.compute(work);
        if (factor_ok(llt_)) {
            jitter_ = add;
            return true;
        }
    }
    return false;
}

CholeskyFactor::CholeskyFactor(const MatrixXd& sigma) {
    if (!factor(sigma)) {
        std::ostringstream msg;
        msg << "Cholesky factorization failed after jitter levels";
        std::vector<double> levels;
        for (double eps : kJitterLevels) {
            msg << ' ' << eps;
            levels.push_back(eps);
        }
        msg << " (relative to mean diagonal)";
        throw NumericalError(msg.str(), std::move(levels));
    }
}

std::optional<CholeskyFactor> CholeskyFactor::try_factor(const MatrixXd& sigma) {
    CholeskyFactor f;
    if (!f.factor(sigma)) {
        return std::nullopt;
    }
    return f;
}

MatrixXd CholeskyFactor::solve(const MatrixXd& b) const { return llt_.solve(b); }
VectorXd CholeskyFactor::solve(const VectorXd& b) const { return llt_.solve(b); }

MatrixXd CholeskyFactor::half_solve(const MatrixXd& b) const {
    return llt_.matrixL().solve(b);
}
VectorXd CholeskyFactor::half_solve(const VectorXd& b) const {
    return llt_.matrixL().solve(b);
}

VectorXd CholeskyFactor::transpose_half_solve(const VectorXd& b) const {
    return llt_.matrixU().solve(b);
}

double CholeskyFactor::log_det() const {
    return 2.0 * llt_.matrixLLT().diagonal().array().log().sum();
}

MatrixXd chol_solve(const MatrixXd& sigma, const MatrixXd& b) {
    if (sigma.rows() != b.rows()) {
        throw std::invalid_argument("chol_solve: row mismatch");
    }
    return CholeskyFactor(sigma).solve(b);
}

// ---------------------------------------------------------------------------
// Compound symmetry blocks
// ---------------------------------------------------------------------------

MatrixXd CompoundSymmetryBlock::dense() const {
    MatrixXd m = MatrixXd::Constant(size, size, sigma2 * rho);
    m.diagonal().array() = sigma2;
    return m;
}

MatrixXd block_inverse(const CompoundSymmetryBlock& block) {
    const Index n = block.size;
    if (n < 1) {
        throw std::invalid_argument("block_inverse: empty block");
    }
    if (n == 1) {
        if (!(block.sigma2 != 0.0)) {
            throw NumericalError("block_inverse: zero-variance block");
        }
        return MatrixXd::Constant(1, 1, 1.0 / block.sigma2);
    }
    const double rho = block.rho;
    const double nd = static_cast<double>(n);
    const double denom = block.sigma2 * (1.0 - rho) * (1.0 - rho + nd * rho);
    if (rho == 1.0 || denom == 0.0 || !std::isfinite(denom)) {
        throw NumericalError("block_inverse: singular compound-symmetry block (rho = " + std::to_string(rho) +
                             ", size " + std::to_string(n) + ")");
    }
    MatrixXd inv = MatrixXd::Constant(n, n, -rho / denom);
    inv.diagonal().array() = (1.0 + (nd - 1.0) * rho - rho) / denom;
    return inv;
}

// ---------------------------------------------------------------------------
// Standardization
// ---------------------------------------------------------------------------

StandardizedCovariates standardize_covariates(const MatrixXd& v) {
    if (!v.allFinite()) {
        throw DataError("kernel covariates contain non-finite values");
    }
    StandardizedCovariates out;
    const Index n = v.rows();
    std::vector<double> centers;
    std::vector<double> scales;
    for (Index k = 0; k < v.cols(); ++k) {
        const double mean = n > 0 ? v.col(k).mean() : 0.0;
        const double ss = (v.col(k).array() - mean).square().sum();
        const double sd = n > 1 ? std::sqrt(ss / static_cast<double>(n - 1)) : 0.0;
        if (!(sd > 0.0)) {
            out.warnings.push_back("kernel covariate column " + std::to_string(k) +
                                   " is constant and was dropped");
            continue;
        }
        out.kept_columns.push_back(k);
        centers.push_back(mean);
        scales.push_back(sd);
    }
    const Index q = static_cast<Index>(out.kept_columns.size());
    out.values.resize(n, q);
    out.center.resize(q);
    out.scale.resize(q);
    for (Index c = 0; c < q; ++c) {
        out.center(c) = centers[c];
        out.scale(c) = scales[c];
        out.values.col(c) = (v.col(out.kept_columns[c]).array() - centers[c]) / scales[c];
    }
    return out;
}

// ---------------------------------------------------------------------------
// Distance cache
// ---------------------------------------------------------------------------

SquaredDistanceCache::SquaredDistanceCache(const MatrixXd& v) : n_(v.rows()) {
    if (!v.allFinite()) {
        throw DataError("kernel covariates contain non-finite values");
    }
    dims_.reserve(v.cols());
    for (Index k = 0; k < v.cols(); ++k) {
        MatrixXd d = MatrixXd::Zero(n_, n_);
        for (Index j = 0; j < n_; ++j) {
            for (Index i = j + 1; i < n_; ++i) {
                const double diff = v(i, k) - v(j, k);
                d(i, j) = diff * diff;
            }
        }
        dims_.push_back(std::move(d));
    }
}

void SquaredDistanceCache::correlation_lower(const VectorXd& phi, MatrixXd& out) const {
    if (phi.size() != q()) {
        throw std::invalid_argument("correlation_lower: length-scale count mismatch");
    }
    out.resize(n_, n_);
    for (Index j = 0; j < n_; ++j) {
        out(j, j) = 1.0;
        const Index len = n_ - j - 1;
        if (len == 0) {
            continue;
        }
        auto col = out.col(j).tail(len);
        col.setZero();
        for (Index k = 0; k < q(); ++k) {
            col.noalias() += dims_[k].col(j).tail(len) * (1.0 / phi(k));
        }
        col = (-col.array()).exp().matrix();
    }
}

}  // namespace gpmatch
