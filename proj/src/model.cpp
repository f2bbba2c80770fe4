#include "gpmatch/model.hpp"

#include "gpmatch/errors.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace gpmatch {

Index Dataset::n_treated() const {
    return static_cast<Index>((a.array() == 1.0).count());
}

void Dataset::validate() const {
    const Index n = y.size();
    if (n == 0) {
        throw DataError("dataset is empty");
    }
    if (a.size() != n || x.rows() != n || v.rows() != n) {
        throw DataError("dataset components have inconsistent lengths");
    }
    if (!y.allFinite() || !x.allFinite() || !v.allFinite()) {
        throw DataError("dataset contains non-finite values");
    }
    for (Index i = 0; i < n; ++i) {
        if (a(i) != 0.0 && a(i) != 1.0) {
            throw DataError("treatment of unit " + std::to_string(i) + " is not 0/1");
        }
    }
    const Index n1 = n_treated();
    if (n1 == 0 || n1 == n) {
        throw DataError("both treatment arms must be present");
    }
}

DesignMatrix build_design(const Dataset& ds, const ModelSpec& spec) {
    ds.validate();
    const Index n = ds.n();
    const Index p = spec.mean_terms == MeanTerms::FullCovariates ? ds.p() : 0;
    const bool inter = p > 0 && spec.interactions;

    DesignMatrix d;
    const Index cols = 2 + p + (inter ? p : 0);
    d.z.resize(n, cols);
    d.z.col(0).setOnes();
    if (p > 0) {
        d.z.middleCols(1, p) = ds.x;
    }
    d.treatment_col = 1 + p;
    d.z.col(d.treatment_col) = ds.a;
    if (inter) {
        d.interaction_col = 2 + p;
        d.n_interactions = p;
        d.z.middleCols(d.interaction_col, p) = ds.x.array().colwise() * ds.a.array();
    }
    return d;
}

std::vector<std::string> DesignMatrix::column_names() const {
    std::vector<std::string> names;
    names.emplace_back("intercept");
    for (Index k = 1; k < treatment_col; ++k) {
        names.push_back("x" + std::to_string(k));
    }
    names.emplace_back("a");
    for (Index k = 0; k < n_interactions; ++k) {
        names.push_back("a:x" + std::to_string(k + 1));
    }
    return names;
}

VectorXd DesignMatrix::unit_effects(const VectorXd& gamma, const MatrixXd& x) const {
    VectorXd tau = VectorXd::Constant(x.rows(), gamma(treatment_col));
    if (n_interactions > 0) {
        tau.noalias() += x.leftCols(n_interactions) * gamma.segment(interaction_col, n_interactions);
    }
    return tau;
}

double DesignMatrix::average_effect(const VectorXd& gamma, const VectorXd& x_mean) const {
    double ate = gamma(treatment_col);
    if (n_interactions > 0) {
        ate += x_mean.head(n_interactions).dot(gamma.segment(interaction_col, n_interactions));
    }
    return ate;
}

PriorConfig PriorConfig::resolved(double anchor) const {
    PriorConfig p = *this;
    if (!p.sigma_lm2) {
        p.sigma_lm2 = anchor;
    }
    if (!p.b0) {
        p.b0 = *p.sigma_lm2 / 2.0;
    }
    if (!p.bf) {
        p.bf = *p.sigma_lm2 / 2.0;
    }
    return p;
}

void PriorConfig::validate() const {
    auto check = [](double v, const char* name) {
        if (!(v > 0.0) || !std::isfinite(v)) {
            throw std::invalid_argument(std::string("prior hyperparameter ") + name + " must be positive and finite");
        }
    };
    check(omega, "omega");
    check(a0, "a0");
    check(af, "af");
    check(a_phi, "a_phi");
    check(b_phi, "b_phi");
    if (b0) check(*b0, "b0");
    if (bf) check(*bf, "bf");
    if (sigma_lm2) check(*sigma_lm2, "sigma_lm2");
}

double sample_variance(const VectorXd& v) {
    if (v.size() < 2) {
        return 0.0;
    }
    const double m = v.mean();
    return (v.array() - m).square().sum() / static_cast<double>(v.size() - 1);
}

AnchorResult sigma_lm2_anchor(const Dataset& ds) {
    ds.validate();
    const Index n = ds.n();
    const Index p = ds.p();
    if (n <= p + 2) {
        throw DataError("sigma_lm2 anchor needs n > p + 2 (n = " + std::to_string(n) + ", p = " +
                        std::to_string(p) + ")");
    }
    MatrixXd design(n, 2 + p);
    design.col(0).setOnes();
    design.col(1) = ds.a;
    if (p > 0) {
        design.rightCols(p) = ds.x;
    }

    AnchorResult out;
    const double var_y = sample_variance(ds.y);
    Eigen::ColPivHouseholderQR<MatrixXd> qr(design);
    if (qr.rank() < design.cols()) {
        out.fallback = true;
        out.raw = var_y;
        out.warnings.emplace_back("pilot regression design is rank deficient; using var(y) as sigma_lm2");
    } else {
        const VectorXd coef = qr.solve(ds.y);
        const VectorXd resid = ds.y - design * coef;
        out.raw = resid.squaredNorm() / static_cast<double>(n - p - 2);
    }
    const double floor = std::max(1e-8 * var_y, 1e-12);
    out.sigma_lm2 = out.raw;
    if (!(out.raw >= floor)) {
        out.sigma_lm2 = floor;
        out.floored = true;
        out.warnings.emplace_back("pilot residual variance below floor; sigma_lm2 floored");
    }
    return out;
}

}  // namespace gpmatch
