#include "gpmatch/matched.hpp"

#include "gpmatch/errors.hpp"

#include <cmath>
#include <limits>
#include <map>
#include <stdexcept>

namespace gpmatch {

MatchingStructure MatchingStructure::from_labels(const std::vector<long long>& labels, const VectorXd& a) {
    if (static_cast<Index>(labels.size()) != a.size()) {
        throw DataError("block labels and treatment have different lengths");
    }
    std::map<long long, Index> index;
    for (long long l : labels) {
        index.emplace(l, 0);
    }
    Index next = 0;
    for (auto& [label, idx] : index) {
        idx = next++;
    }
    MatchingStructure ms;
    ms.n_block.assign(static_cast<std::size_t>(next), 0);
    ms.n_control.assign(static_cast<std::size_t>(next), 0);
    ms.n_treated.assign(static_cast<std::size_t>(next), 0);
    ms.block_of.reserve(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const Index b = index.at(labels[i]);
        const double ai = a(static_cast<Index>(i));
        if (ai != 0.0 && ai != 1.0) {
            throw DataError("treatment of unit " + std::to_string(i) + " is not 0/1");
        }
        ms.block_of.push_back(b);
        const auto bs = static_cast<std::size_t>(b);
        ++ms.n_block[bs];
        if (ai == 1.0) {
            ++ms.n_treated[bs];
        } else {
            ++ms.n_control[bs];
        }
    }
    return ms;
}

MatrixXd block_covariance(const MatchingStructure& ms, double sigma02) {
    const Index n = ms.n_units();
    MatrixXd sigma = MatrixXd::Zero(n, n);
    for (Index i = 0; i < n; ++i) {
        for (Index j = 0; j < n; ++j) {
            if (ms.block_of[static_cast<std::size_t>(i)] == ms.block_of[static_cast<std::size_t>(j)]) {
                sigma(i, j) = 1.0;
            }
        }
        sigma(i, i) += sigma02;
    }
    return sigma;
}

GlsFit gls_estimate(const VectorXd& y, const VectorXd& a, const MatrixXd& sigma) {
    const Index n = y.size();
    if (a.size() != n || sigma.rows() != n || sigma.cols() != n) {
        throw std::invalid_argument("gls_estimate: dimension mismatch");
    }
    const double n1 = a.sum();
    if (!(n1 > 0.0) || !(n1 < static_cast<double>(n))) {
        throw DataError("gls_estimate: (1, A) is rank deficient; both arms are required");
    }
    MatrixXd rhs(n, 3);
    rhs.col(0).setOnes();
    rhs.col(1) = a;
    rhs.col(2) = y;
    const MatrixXd w = CholeskyFactor(sigma).solve(rhs);
    const double s11 = w.col(0).sum();
    const double s1a = a.dot(w.col(0));
    const double saa = a.dot(w.col(1));
    const double s1y = w.col(2).sum();
    const double say = a.dot(w.col(2));
    const double det = s11 * saa - s1a * s1a;
    if (!(std::abs(det) > 0.0)) {
        throw NumericalError("gls_estimate: singular normal equations");
    }
    GlsFit fit;
    fit.tau_hat = (s11 * say - s1a * s1y) / det;
    fit.mu_hat = (saa * s1y - s1a * say) / det;
    return fit;
}

GlsEstimate weighted_sum_estimate(const VectorXd& y, const VectorXd& a, const MatchingStructure& ms,
                                  double sigma02) {
    const Index n = y.size();
    if (a.size() != n || ms.n_units() != n) {
        throw std::invalid_argument("weighted_sum_estimate: dimension mismatch");
    }
    if (!(sigma02 >= 0.0) || !std::isfinite(sigma02)) {
        throw std::invalid_argument("weighted_sum_estimate: sigma0^2 must be finite and nonnegative");
    }
    const Index nb = ms.n_blocks();
    VectorXd sum_treated = VectorXd::Zero(nb);
    VectorXd sum_control = VectorXd::Zero(nb);
    for (Index i = 0; i < n; ++i) {
        const Index b = ms.block_of[static_cast<std::size_t>(i)];
        if (a(i) == 1.0) {
            sum_treated(b) += y(i);
        } else {
            sum_control(b) += y(i);
        }
    }

    GlsEstimate est;
    const double rho = 1.0 / (1.0 + sigma02);
    est.rho = rho;
    est.q_l.resize(nb);
    double sq_n = 0.0, sq_n1 = 0.0, sq_n0 = 0.0;
    double sq_n1n0 = 0.0, sq_n1n0_diff = 0.0;
    double sq_y1 = 0.0, sq_y0 = 0.0;  // sum q_l n_l(a) Ybar_l(a), i.e. q_l times the arm sums
    for (Index l = 0; l < nb; ++l) {
        const auto ls = static_cast<std::size_t>(l);
        const double nl = static_cast<double>(ms.n_block[ls]);
        const double n1 = static_cast<double>(ms.n_treated[ls]);
        const double n0 = static_cast<double>(ms.n_control[ls]);
        const double ql = 1.0 / (1.0 - rho + rho * nl);
        est.q_l(l) = ql;
        sq_n += ql * nl;
        sq_n1 += ql * n1;
        sq_n0 += ql * n0;
        sq_n1n0 += ql * n1 * n0;
        if (n1 > 0.0 && n0 > 0.0) {
            sq_n1n0_diff += ql * n1 * n0 * (sum_treated(l) / n1 - sum_control(l) / n0);
        }
        sq_y1 += ql * sum_treated(l);
        sq_y0 += ql * sum_control(l);
    }
    if (!(sq_n1 > 0.0) || !(sq_n0 > 0.0)) {
        throw DataError("weighted_sum_estimate: both arms are required");
    }
    est.c1 = sq_n * sq_n1n0_diff;
    est.c2 = sq_n0 * sq_y1 - sq_n1 * sq_y0;
    est.d1 = sq_n * sq_n1n0;
    est.d2 = sq_n1 * sq_n0;
    est.tau0_hat = est.c2 / est.d2;
    if (est.d1 > 0.0) {
        est.tau1_hat = est.c1 / est.d1;
        est.lambda = rho * est.d1 / (rho * est.d1 + (1.0 - rho) * est.d2);
        est.tau_hat = est.lambda * est.tau1_hat + (1.0 - est.lambda) * est.tau0_hat;
    } else {
        est.tau1_hat = std::numeric_limits<double>::quiet_NaN();
        est.lambda = 0.0;
        est.tau_hat = est.tau0_hat;
        est.warnings.emplace_back("no block contains both treatment arms; lambda is undefined and tau0 is returned");
    }
    est.mu_hat = (sq_y1 + sq_y0 - est.tau_hat * sq_n1) / sq_n;
    return est;
}

double stratified_lambda(const MatchingStructure& ms, double sigma02) {
    double big_n = 0.0, n1 = 0.0, n0 = 0.0, s = 0.0;
    for (Index l = 0; l < ms.n_blocks(); ++l) {
        const auto ls = static_cast<std::size_t>(l);
        big_n += static_cast<double>(ms.n_block[ls]);
        n1 += static_cast<double>(ms.n_treated[ls]);
        n0 += static_cast<double>(ms.n_control[ls]);
        s += static_cast<double>(ms.n_treated[ls]) * static_cast<double>(ms.n_control[ls]);
    }
    if (std::isinf(sigma02)) {
        return 0.0;
    }
    const double num = big_n * s;
    return num / (n1 * n0 * sigma02 + num);
}

}  // namespace gpmatch
