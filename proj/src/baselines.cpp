#include "gpmatch/baselines.hpp"

#include "gpmatch/errors.hpp"
#include "gpmatch/sampler.hpp"

#include <gsl/gsl_bspline.h>
#include <gsl/gsl_errno.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <sstream>
#include <stdexcept>

namespace gpmatch::baselines {

namespace {

constexpr double kEtaCap = 30.0;
constexpr double kScoreTol = 1e-8;
constexpr int kMaxIrls = 50;

void check_binary(const VectorXd& a, const char* who) {
    for (Index i = 0; i < a.size(); ++i) {
        if (a(i) != 0.0 && a(i) != 1.0) {
            throw DataError(std::string(who) + ": treatment entry " + std::to_string(i) + " is not 0/1");
        }
    }
}

void check_sizes(Index n, Index other, const char* who) {
    if (n != other) {
        throw std::invalid_argument(std::string(who) + ": length mismatch");
    }
}

EstimatorResult wald(double ate, double se) {
    EstimatorResult r;
    r.ate = ate;
    r.se = se;
    r.ci_low = ate - kZ975 * se;
    r.ci_high = ate + kZ975 * se;
    return r;
}

double logistic(double eta) {
    if (eta >= 0.0) {
        return 1.0 / (1.0 + std::exp(-eta));
    }
    const double e = std::exp(eta);
    return e / (1.0 + e);
}

double log_likelihood(const VectorXd& a, const VectorXd& eta) {
    double ll = 0.0;
    for (Index i = 0; i < a.size(); ++i) {
        // log(1 + e^eta) computed without overflow
        const double softplus = eta(i) > 0.0 ? eta(i) + std::log1p(std::exp(-eta(i))) : std::log1p(std::exp(eta(i)));
        ll += a(i) * eta(i) - softplus;
    }
    return ll;
}

// Greedy left-to-right rank check: a column is dependent when its residual
// after projecting on the kept columns is negligible.
std::vector<Index> greedy_dependent(const MatrixXd& x) {
    std::vector<Index> dependent;
    std::vector<Index> kept;
    for (Index j = 0; j < x.cols(); ++j) {
        const VectorXd col = x.col(j);
        const double norm = col.norm();
        if (!(norm > 0.0)) {
            dependent.push_back(j);
            continue;
        }
        double resid = norm;
        if (!kept.empty()) {
            MatrixXd basis(x.rows(), static_cast<Index>(kept.size()));
            for (std::size_t c = 0; c < kept.size(); ++c) {
                basis.col(static_cast<Index>(c)) = x.col(kept[c]);
            }
            const VectorXd b = basis.colPivHouseholderQr().solve(col);
            resid = (col - basis * b).norm();
        }
        if (resid <= 1e-9 * norm * std::sqrt(static_cast<double>(x.rows()))) {
            dependent.push_back(j);
        } else {
            kept.push_back(j);
        }
    }
    return dependent;
}

MatrixXd drop_columns(const MatrixXd& x, const std::vector<Index>& drop) {
    std::vector<Index> keep;
    for (Index j = 0; j < x.cols(); ++j) {
        if (std::find(drop.begin(), drop.end(), j) == drop.end()) {
            keep.push_back(j);
        }
    }
    MatrixXd out(x.rows(), static_cast<Index>(keep.size()));
    for (std::size_t c = 0; c < keep.size(); ++c) {
        out.col(static_cast<Index>(c)) = x.col(keep[c]);
    }
    return out;
}

void gsl_quiet() {
    static const bool once = [] {
        gsl_set_error_handler_off();
        return true;
    }();
    (void)once;
}

}  // namespace

// ---------------------------------------------------------------------------
// OLS
// ---------------------------------------------------------------------------

double OlsFit::se(Index j) const { return std::sqrt(cov(j, j)); }

std::vector<Index> dependent_columns(const MatrixXd& design) { return greedy_dependent(design); }

OlsFit ols(const VectorXd& y, const MatrixXd& design) {
    check_sizes(y.size(), design.rows(), "ols");
    if (!y.allFinite() || !design.allFinite()) {
        throw DataError("ols: non-finite input");
    }
    const Index n = design.rows();
    const Index k = design.cols();
    if (n < k) {
        throw DataError("ols: " + std::to_string(n) + " rows for " + std::to_string(k) + " columns");
    }
    const auto dep = greedy_dependent(design);
    if (!dep.empty()) {
        std::ostringstream msg;
        msg << "ols: design is rank deficient; dependent columns:";
        for (Index j : dep) {
            msg << ' ' << j;
        }
        throw DataError(msg.str());
    }
    Eigen::ColPivHouseholderQR<MatrixXd> qr(design);
    OlsFit fit;
    fit.coef = qr.solve(y);
    fit.fitted = design * fit.coef;
    fit.df = n - k;
    const double rss = (y - fit.fitted).squaredNorm();
    fit.sigma2 = fit.df > 0 ? rss / static_cast<double>(fit.df) : std::numeric_limits<double>::quiet_NaN();
    // (X'X)^{-1} = P R^{-1} R^{-T} P'
    const MatrixXd r = qr.matrixR().topLeftCorner(k, k).triangularView<Eigen::Upper>();
    const MatrixXd rinv = r.triangularView<Eigen::Upper>().solve(MatrixXd::Identity(k, k));
    const MatrixXd xtx_inv_perm = rinv * rinv.transpose();
    const auto& perm = qr.colsPermutation();
    fit.cov = perm * xtx_inv_perm * perm.transpose() * fit.sigma2;
    return fit;
}

// ---------------------------------------------------------------------------
// Logistic propensity score
// ---------------------------------------------------------------------------

PropensityFit logistic_ps(const VectorXd& a, const MatrixXd& covariates) {
    const Index n = a.size();
    check_sizes(n, covariates.rows(), "logistic_ps");
    check_binary(a, "logistic_ps");
    if (!covariates.allFinite()) {
        throw DataError("logistic_ps: non-finite covariates");
    }
    const double n1 = a.sum();
    if (n1 < 1.0 || n1 > static_cast<double>(n) - 1.0) {
        throw DataError("logistic_ps: both treatment classes are required");
    }

    // Internal standardization; constant columns are carried with a zero slope.
    const Index k = covariates.cols();
    VectorXd center = VectorXd::Zero(k);
    VectorXd scale = VectorXd::Ones(k);
    std::vector<Index> active;
    for (Index j = 0; j < k; ++j) {
        center(j) = covariates.col(j).mean();
        const double sd = std::sqrt((covariates.col(j).array() - center(j)).square().sum() /
                                    std::max<double>(1.0, static_cast<double>(n - 1)));
        if (sd > 0.0) {
            scale(j) = sd;
            active.push_back(j);
        }
    }
    const Index m = static_cast<Index>(active.size()) + 1;
    MatrixXd x(n, m);
    x.col(0).setOnes();
    for (std::size_t c = 0; c < active.size(); ++c) {
        const Index j = active[c];
        x.col(static_cast<Index>(c) + 1) = (covariates.col(j).array() - center(j)) / scale(j);
    }

    VectorXd beta = VectorXd::Zero(m);
    const double pbar = n1 / static_cast<double>(n);
    beta(0) = std::log(pbar / (1.0 - pbar));
    VectorXd eta = x * beta;
    double ll = log_likelihood(a, eta);

    PropensityFit fit;
    bool cap_hit = false;
    for (int it = 0; it < kMaxIrls; ++it) {
        VectorXd p(n);
        VectorXd w(n);
        for (Index i = 0; i < n; ++i) {
            p(i) = logistic(eta(i));
            w(i) = p(i) * (1.0 - p(i));
        }
        const VectorXd score = x.transpose() * (a - p);
        fit.gradient_norm = score.norm();
        fit.iterations = it;
        if (fit.gradient_norm < kScoreTol) {
            fit.converged = true;
            break;
        }
        const MatrixXd info = x.transpose() * w.asDiagonal() * x;
        Eigen::LDLT<MatrixXd> ldlt(info);
        VectorXd step = ldlt.solve(score);
        if (ldlt.info() != Eigen::Success || !step.allFinite()) {
            step = (info + 1e-8 * MatrixXd::Identity(m, m)).ldlt().solve(score);
        }
        if (step.dot(score) < 1e-24) {
            // Newton decrement at machine precision: nothing left to gain.
            fit.converged = fit.gradient_norm < 1e-6 * std::max<double>(1.0, static_cast<double>(n));
            break;
        }
        double t = 1.0;
        bool moved = false;
        for (int h = 0; h < 60; ++h, t *= 0.5) {
            const VectorXd trial = beta + t * step;
            const VectorXd trial_eta = x * trial;
            if (trial_eta.cwiseAbs().maxCoeff() > kEtaCap) {
                cap_hit = true;
                continue;
            }
            const double trial_ll = log_likelihood(a, trial_eta);
            if (trial_ll >= ll - 1e-12 * std::abs(ll)) {
                beta = trial;
                eta = trial_eta;
                ll = trial_ll;
                moved = true;
                break;
            }
        }
        if (!moved) {
            break;
        }
        fit.iterations = it + 1;
    }
    if (!fit.converged) {
        VectorXd p(n);
        for (Index i = 0; i < n; ++i) {
            p(i) = logistic(eta(i));
        }
        fit.gradient_norm = (x.transpose() * (a - p)).norm();
        fit.converged = fit.gradient_norm < kScoreTol;
    }
    fit.separated = !fit.converged && cap_hit;

    fit.coef = VectorXd::Zero(k + 1);
    fit.coef(0) = beta(0);
    for (std::size_t c = 0; c < active.size(); ++c) {
        const Index j = active[c];
        const double slope = beta(static_cast<Index>(c) + 1) / scale(j);
        fit.coef(j + 1) = slope;
        fit.coef(0) -= slope * center(j);
    }
    fit.linear_predictor = (covariates * fit.coef.tail(k)).array() + fit.coef(0);
    fit.ps.resize(n);
    for (Index i = 0; i < n; ++i) {
        fit.ps(i) = logistic(fit.linear_predictor(i));
    }
    return fit;
}

// ---------------------------------------------------------------------------
// Quintile subclassification
// ---------------------------------------------------------------------------

EstimatorResult qnt_ps(const VectorXd& y, const VectorXd& a, const VectorXd& ps) {
    const Index n = y.size();
    check_sizes(n, a.size(), "qnt_ps");
    check_sizes(n, ps.size(), "qnt_ps");
    check_binary(a, "qnt_ps");
    if (n == 0) {
        throw DataError("qnt_ps: empty sample");
    }
    // interior quintile cut points; a unit's stratum is the number of cuts below it
    std::vector<double> values(ps.data(), ps.data() + n);
    std::vector<double> cuts;
    for (int k = 1; k <= 4; ++k) {
        const double c = quantile(values, k / 5.0);
        if (cuts.empty() || c > cuts.back()) {
            cuts.push_back(c);
        }
    }
    const Index n_strata = static_cast<Index>(cuts.size()) + 1;
    std::vector<Index> stratum(n, 0);
    for (Index i = 0; i < n; ++i) {
        stratum[i] = static_cast<Index>(std::lower_bound(cuts.begin(), cuts.end(), ps(i)) - cuts.begin());
    }

    std::vector<double> n1(n_strata, 0.0), n0(n_strata, 0.0), s1(n_strata, 0.0), s0(n_strata, 0.0);
    for (Index i = 0; i < n; ++i) {
        if (a(i) == 1.0) {
            n1[stratum[i]] += 1.0;
            s1[stratum[i]] += y(i);
        } else {
            n0[stratum[i]] += 1.0;
            s0[stratum[i]] += y(i);
        }
    }
    std::vector<bool> ok(n_strata, false);
    double n_adm = 0.0;
    Index dropped_strata = 0;
    Index dropped_units = 0;
    EstimatorResult out;
    for (Index s = 0; s < n_strata; ++s) {
        if (n1[s] + n0[s] == 0.0) {
            continue;
        }
        ok[s] = n1[s] > 0.0 && n0[s] > 0.0;
        if (ok[s]) {
            n_adm += n1[s] + n0[s];
        } else {
            ++dropped_strata;
            dropped_units += static_cast<Index>(n1[s] + n0[s]);
            out.warnings.push_back("stratum " + std::to_string(s) + " lacks one treatment arm and was dropped");
        }
    }
    if (n_adm == 0.0) {
        throw DataError("qnt_ps: estimator undefined, no stratum contains both arms");
    }

    // pooled within-stratum residual variance per arm
    double ss1 = 0.0, ss0 = 0.0, df1 = 0.0, df0 = 0.0;
    for (Index i = 0; i < n; ++i) {
        const Index s = stratum[i];
        if (!ok[s]) {
            continue;
        }
        if (a(i) == 1.0) {
            ss1 += std::pow(y(i) - s1[s] / n1[s], 2);
        } else {
            ss0 += std::pow(y(i) - s0[s] / n0[s], 2);
        }
    }
    double ate = 0.0;
    double inv1 = 0.0, inv0 = 0.0;
    for (Index s = 0; s < n_strata; ++s) {
        if (!ok[s]) {
            continue;
        }
        const double w = (n1[s] + n0[s]) / n_adm;
        ate += w * (s1[s] / n1[s] - s0[s] / n0[s]);
        inv1 += w * w / n1[s];
        inv0 += w * w / n0[s];
        df1 += n1[s] - 1.0;
        df0 += n0[s] - 1.0;
    }
    const double var1 = df1 > 0.0 ? ss1 / df1 : std::numeric_limits<double>::quiet_NaN();
    const double var0 = df0 > 0.0 ? ss0 / df0 : std::numeric_limits<double>::quiet_NaN();
    const double se = std::sqrt(var1 * inv1 + var0 * inv0);
    auto warnings = std::move(out.warnings);
    out = wald(ate, se);
    out.warnings = std::move(warnings);
    if (!std::isfinite(se)) {
        out.warnings.push_back("standard error undefined: an arm has no within-stratum replication");
    }
    Index nonempty = 0;
    for (Index s = 0; s < n_strata; ++s) {
        nonempty += n1[s] + n0[s] > 0.0 ? 1 : 0;
    }
    out.extras["strata"] = static_cast<double>(nonempty);
    out.extras["strata_dropped"] = static_cast<double>(dropped_strata);
    out.extras["units_dropped"] = static_cast<double>(dropped_units);
    return out;
}

// ---------------------------------------------------------------------------
// AIPTW
// ---------------------------------------------------------------------------

EstimatorResult aiptw(const VectorXd& y, const VectorXd& a, const VectorXd& ps, const VectorXd& m1,
                      const VectorXd& m0) {
    const Index n = y.size();
    check_sizes(n, a.size(), "aiptw");
    check_sizes(n, ps.size(), "aiptw");
    check_sizes(n, m1.size(), "aiptw");
    check_sizes(n, m0.size(), "aiptw");
    check_binary(a, "aiptw");
    if (n < 2) {
        throw DataError("aiptw: need at least two units");
    }
    VectorXd phi(n);
    Index clipped = 0;
    for (Index i = 0; i < n; ++i) {
        double e = ps(i);
        if (!std::isfinite(e)) {
            throw DataError("aiptw: propensity " + std::to_string(i) + " is not finite");
        }
        const double c = std::clamp(e, kPsClip, 1.0 - kPsClip);
        if (c != e) {
            ++clipped;
        }
        e = c;
        phi(i) = a(i) * (y(i) - m1(i)) / e + m1(i) - (1.0 - a(i)) * (y(i) - m0(i)) / (1.0 - e) - m0(i);
    }
    const double ate = phi.mean();
    const double var = (phi.array() - ate).square().sum() / static_cast<double>(n - 1);
    EstimatorResult out = wald(ate, std::sqrt(var / static_cast<double>(n)));
    out.extras["ps_clipped"] = static_cast<double>(clipped);
    return out;
}

OutcomeFits arm_outcome_fits(const VectorXd& y, const VectorXd& a, const MatrixXd& covariates) {
    const Index n = y.size();
    check_sizes(n, a.size(), "arm_outcome_fits");
    check_sizes(n, covariates.rows(), "arm_outcome_fits");
    check_binary(a, "arm_outcome_fits");
    MatrixXd full(n, covariates.cols() + 1);
    full.col(0).setOnes();
    full.rightCols(covariates.cols()) = covariates;
    OutcomeFits out;
    for (int arm = 0; arm <= 1; ++arm) {
        std::vector<Index> rows;
        for (Index i = 0; i < n; ++i) {
            if (a(i) == static_cast<double>(arm)) {
                rows.push_back(i);
            }
        }
        MatrixXd xa(static_cast<Index>(rows.size()), full.cols());
        VectorXd ya(static_cast<Index>(rows.size()));
        for (std::size_t r = 0; r < rows.size(); ++r) {
            xa.row(static_cast<Index>(r)) = full.row(rows[r]);
            ya(static_cast<Index>(r)) = y(rows[r]);
        }
        const OlsFit fit = ols(ya, xa);
        (arm == 1 ? out.m1 : out.m0) = full * fit.coef;
    }
    return out;
}

// ---------------------------------------------------------------------------
// PS-adjusted regression
// ---------------------------------------------------------------------------

MatrixXd bspline_basis(const VectorXd& x, const std::vector<double>& interior_knots, double lo, double hi) {
    if (!(hi > lo)) {
        throw std::invalid_argument("bspline_basis: boundary knots must satisfy lo < hi");
    }
    std::vector<double> breaks{lo};
    for (double k : interior_knots) {
        if (k > breaks.back() && k < hi) {
            breaks.push_back(k);
        }
    }
    breaks.push_back(hi);
    gsl_quiet();
    constexpr std::size_t order = 4;
    std::unique_ptr<gsl_bspline_workspace, decltype(&gsl_bspline_free)> ws(
        gsl_bspline_alloc(order, breaks.size()), gsl_bspline_free);
    std::unique_ptr<gsl_vector, decltype(&gsl_vector_free)> bp(gsl_vector_alloc(breaks.size()), gsl_vector_free);
    if (!ws || !bp) {
        throw std::bad_alloc();
    }
    for (std::size_t i = 0; i < breaks.size(); ++i) {
        gsl_vector_set(bp.get(), i, breaks[i]);
    }
    gsl_bspline_knots(bp.get(), ws.get());
    const std::size_t ncoef = gsl_bspline_ncoeffs(ws.get());
    std::unique_ptr<gsl_vector, decltype(&gsl_vector_free)> b(gsl_vector_alloc(ncoef), gsl_vector_free);
    MatrixXd out(x.size(), static_cast<Index>(ncoef));
    for (Index i = 0; i < x.size(); ++i) {
        if (!(x(i) >= lo && x(i) <= hi)) {
            throw std::invalid_argument("bspline_basis: value outside the boundary knots");
        }
        if (gsl_bspline_eval(x(i), b.get(), ws.get()) != GSL_SUCCESS) {
            throw NumericalError("bspline_basis: basis evaluation failed");
        }
        for (std::size_t c = 0; c < ncoef; ++c) {
            out(i, static_cast<Index>(c)) = gsl_vector_get(b.get(), c);
        }
    }
    return out;
}

EstimatorResult lm_ps(const VectorXd& y, const VectorXd& a, const VectorXd& ps, PsAdjustment mode) {
    const Index n = y.size();
    check_sizes(n, a.size(), "lm_ps");
    check_sizes(n, ps.size(), "lm_ps");
    check_binary(a, "lm_ps");
    if (!ps.allFinite()) {
        throw DataError("lm_ps: non-finite propensity scores");
    }
    std::vector<std::string> warnings;
    MatrixXd basis;
    const double lo = ps.minCoeff();
    const double hi = ps.maxCoeff();
    if (mode == PsAdjustment::Linear) {
        basis = ps;
    } else if (hi > lo) {
        std::vector<double> values(ps.data(), ps.data() + n);
        std::vector<double> knots;
        for (int k = 1; k <= 4; ++k) {
            knots.push_back(quantile(values, k / 5.0));
        }
        // drop the first function so the basis does not duplicate the intercept
        const MatrixXd full = bspline_basis(ps, knots, lo, hi);
        basis = full.rightCols(full.cols() - 1);
    } else {
        warnings.push_back("propensity scores are constant; spline basis omitted");
    }

    MatrixXd design(n, 2 + basis.cols());
    design.col(0).setOnes();
    design.col(1) = a;
    if (basis.cols() > 0) {
        design.rightCols(basis.cols()) = basis;
    }
    const auto dep = greedy_dependent(design);
    for (Index j : dep) {
        if (j < 2) {
            throw DataError("lm_ps: treatment indicator is collinear with the intercept");
        }
        warnings.push_back("propensity basis column " + std::to_string(j - 2) + " is collinear and was dropped");
    }
    const MatrixXd reduced = drop_columns(design, dep);
    if (n <= reduced.cols()) {
        throw DataError("lm_ps: " + std::to_string(n) + " units for " + std::to_string(reduced.cols()) +
                        " parameters");
    }
    const OlsFit fit = ols(y, reduced);
    EstimatorResult out = wald(fit.coef(1), fit.se(1));
    out.warnings = std::move(warnings);
    out.extras["basis_columns"] = static_cast<double>(reduced.cols() - 2);
    return out;
}

// ---------------------------------------------------------------------------
// Mahalanobis caliper matching
// ---------------------------------------------------------------------------

EstimatorResult md_match(const VectorXd& y, const VectorXd& a, const MatrixXd& covariates, double caliper) {
    const Index n = y.size();
    check_sizes(n, a.size(), "md_match");
    check_sizes(n, covariates.rows(), "md_match");
    check_binary(a, "md_match");
    if (!(caliper > 0.0)) {
        throw std::invalid_argument("md_match: caliper must be positive");
    }
    if (!covariates.allFinite() || !y.allFinite()) {
        throw DataError("md_match: non-finite input");
    }
    const Index k = covariates.cols();
    if (n < 2 || k < 1) {
        throw DataError("md_match: need at least two units and one covariate");
    }
    const Eigen::RowVectorXd mean = covariates.colwise().mean();
    const MatrixXd centered = covariates.rowwise() - mean;
    const MatrixXd cov = centered.transpose() * centered / static_cast<double>(n - 1);
    Eigen::LLT<MatrixXd> llt(cov);
    if (llt.info() != Eigen::Success || !(llt.matrixLLT().diagonal().minCoeff() > 0.0)) {
        throw DataError("md_match: covariate covariance is not invertible");
    }
    // whitened coordinates: Euclidean distance equals Mahalanobis distance
    const MatrixXd u = llt.matrixL().solve(centered.transpose()).transpose();
    const VectorXd sd = cov.diagonal().cwiseSqrt();

    std::vector<Index> controls;
    std::vector<Index> treated;
    for (Index i = 0; i < n; ++i) {
        (a(i) == 1.0 ? treated : controls).push_back(i);
    }
    if (controls.empty() || treated.empty()) {
        throw DataError("md_match: both treatment arms are required");
    }
    auto nearest = [&](Index i, Index exclude) {
        Index best = -1;
        double best_d = std::numeric_limits<double>::infinity();
        for (Index j : controls) {
            if (j == exclude) {
                continue;
            }
            const double d = (u.row(i) - u.row(j)).squaredNorm();
            if (d < best_d) {
                best_d = d;
                best = j;
            }
        }
        return best;
    };

    std::vector<double> diffs;
    std::vector<Index> uses(n, 0);
    Index dropped = 0;
    for (Index i : treated) {
        const Index j = nearest(i, -1);
        bool within = true;
        for (Index c = 0; c < k; ++c) {
            if (std::abs(covariates(i, c) - covariates(j, c)) > caliper * sd(c)) {
                within = false;
                break;
            }
        }
        if (!within) {
            ++dropped;
            continue;
        }
        diffs.push_back(y(i) - y(j));
        ++uses[j];
    }
    if (diffs.empty()) {
        throw DataError("md_match: estimator undefined, every treated unit was dropped by the caliper");
    }
    const double n_m = static_cast<double>(diffs.size());
    double ate = 0.0;
    for (double d : diffs) {
        ate += d;
    }
    ate /= n_m;
    double var = 0.0;
    for (double d : diffs) {
        var += (d - ate) * (d - ate);
    }
    // reuse term: control outcome variance from its nearest fellow control
    for (Index j : controls) {
        if (uses[j] < 2) {
            continue;
        }
        const Index other = nearest(j, j);
        const double s2 = other < 0 ? 0.0 : 0.5 * std::pow(y(j) - y(other), 2);
        var += static_cast<double>(uses[j] * (uses[j] - 1)) * s2;
    }
    EstimatorResult out = wald(ate, std::sqrt(var) / n_m);
    out.n_dropped = dropped;
    out.extras["matched"] = n_m;
    Index distinct = 0;
    for (Index j : controls) {
        distinct += uses[j] > 0 ? 1 : 0;
    }
    out.extras["distinct_controls"] = static_cast<double>(distinct);
    return out;
}

}  // namespace gpmatch::baselines
