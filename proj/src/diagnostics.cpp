#include "gpmatch/diagnostics.hpp"

#include "gpmatch/errors.hpp"
#include "gpmatch/sampler.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

namespace gpmatch {

WeightSpace weight_matrix(const MatrixXd& v, const KernelParams& params, const VectorXd& y, const VectorXd& a,
                          bool normalize) {
    params.validate();
    if (y.size() != v.rows() || a.size() != v.rows()) {
        throw std::invalid_argument("weight_matrix: dimension mismatch");
    }
    const MatrixXd k = kernel_matrix(v, params);
    MatrixXd sigma = k;
    sigma.diagonal().array() += params.sigma_02;
    // K and Sigma are symmetric, so K Sigma^{-1} = (Sigma^{-1} K)'.
    WeightSpace ws;
    ws.normalized = normalize;
    ws.w = CholeskyFactor(sigma).solve(k).transpose();
    if (normalize) {
        for (Index i = 0; i < ws.w.rows(); ++i) {
            const double s = ws.w.row(i).sum();
            if (!(s > 0.0)) {
                throw NumericalError("weight_matrix: weights of row " + std::to_string(i) +
                                     " sum to a non-positive value");
            }
            ws.w.row(i) /= s;
        }
    }
    ws.y_tilde = ws.w * y;
    ws.a_tilde = ws.w * a;
    return ws;
}

VectorXd psi(double tau, const WeightSpace& ws, const VectorXd& y, const VectorXd& a) {
    const VectorXd d = a - ws.a_tilde;
    return ((y - ws.y_tilde - tau * d).array() * d.array()).matrix();
}

double solve_tau(const WeightSpace& ws, const VectorXd& y, const VectorXd& a) {
    const VectorXd d = a - ws.a_tilde;
    const double denom = d.squaredNorm();
    if (!(denom > 0.0)) {
        throw DataError("no overlap information: every unit has A_i equal to its smoothed treatment");
    }
    return (y - ws.y_tilde).dot(d) / denom;
}

ResidualReport residual_independence_report(const WeightSpace& ws, const VectorXd& y, const VectorXd& a,
                                            double tau) {
    ResidualReport r;
    r.tau = tau;
    const VectorXd d = a - ws.a_tilde;
    const VectorXd e = y - ws.y_tilde - tau * d;
    r.sum_psi = e.dot(d);

    const double ee = e.squaredNorm();
    const double dd = d.squaredNorm();
    if (ee > 0.0 && dd > 0.0) {
        r.residual_correlation = r.sum_psi / std::sqrt(ee * dd);
    } else {
        r.zero_variance = true;
    }
    const VectorXd ec = e.array() - e.mean();
    const VectorXd dc = d.array() - d.mean();
    const double eec = ec.squaredNorm();
    const double ddc = dc.squaredNorm();
    if (eec > 0.0 && ddc > 0.0) {
        r.pearson_correlation = ec.dot(dc) / std::sqrt(eec * ddc);
    } else {
        r.zero_variance = true;
    }

    std::vector<double> abs_d(static_cast<std::size_t>(d.size()));
    for (Index i = 0; i < d.size(); ++i) {
        abs_d[static_cast<std::size_t>(i)] = std::abs(d(i));
        if (std::abs(d(i)) < r.overlap.near_zero_threshold) {
            ++r.overlap.n_near_zero;
        }
    }
    if (!abs_d.empty()) {
        r.overlap.min = quantile(abs_d, 0.0);
        r.overlap.q25 = quantile(abs_d, 0.25);
        r.overlap.median = quantile(abs_d, 0.5);
        r.overlap.q75 = quantile(abs_d, 0.75);
        r.overlap.max = quantile(abs_d, 1.0);
    }
    r.no_overlap = r.overlap.n_near_zero == d.size();
    return r;
}

}  // namespace gpmatch
