#pragma once

#include "gpmatch/covkernel.hpp"

#include <map>
#include <string>
#include <vector>

namespace gpmatch::baselines {

/// Normal quantile used for every Wald interval in this module.
inline constexpr double kZ975 = 1.959963984540054;

struct OlsFit {
    VectorXd coef;
    MatrixXd cov;        ///< sigma2 (X'X)^{-1}
    VectorXd fitted;
    double sigma2 = 0.0; ///< RSS / (n - k); NaN when n == k
    Index df = 0;

    double se(Index j) const;
};

/// Least squares through a column-pivoted QR. Throws DataError naming the
/// dependent columns when the design is rank deficient.
OlsFit ols(const VectorXd& y, const MatrixXd& design);

/// Columns of `design` that are linearly dependent on earlier ones (by QR pivot order).
std::vector<Index> dependent_columns(const MatrixXd& design);

struct PropensityFit {
    VectorXd coef;  ///< intercept first
    VectorXd ps;
    VectorXd linear_predictor;
    bool converged = false;
    bool separated = false;  ///< the linear-predictor cap was reached
    int iterations = 0;
    double gradient_norm = 0.0;
};

/// Logistic regression of a on (1, covariates) by Newton/IRLS with step
/// halving; stops when the score norm falls below 1e-8 or after 50
/// iterations. |linear predictor| is capped at 30; reaching the cap marks the
/// fit as separated and not converged.
PropensityFit logistic_ps(const VectorXd& a, const MatrixXd& covariates);

/// Probabilities used for weighting are clipped to [kPsClip, 1 - kPsClip].
inline constexpr double kPsClip = 1e-6;

struct EstimatorResult {
    double ate = 0.0;
    double se = 0.0;
    double ci_low = 0.0;
    double ci_high = 0.0;
    Index n_dropped = 0;
    std::map<std::string, double> extras;
    std::vector<std::string> warnings;
};

/// Subclassification on PS quintiles; strata lacking either arm are dropped.
EstimatorResult qnt_ps(const VectorXd& y, const VectorXd& a, const VectorXd& ps);

/// Augmented IPW with outcome predictions m1 (treated) and m0 (control).
EstimatorResult aiptw(const VectorXd& y, const VectorXd& a, const VectorXd& ps, const VectorXd& m1,
                      const VectorXd& m0);

/// Arm-specific OLS predictions of y on (1, covariates), evaluated for all units.
struct OutcomeFits {
    VectorXd m1;
    VectorXd m0;
};
OutcomeFits arm_outcome_fits(const VectorXd& y, const VectorXd& a, const MatrixXd& covariates);

enum class PsAdjustment { Linear, CubicBSpline };

/// OLS of y on (1, a, basis(ps)); ATE is the coefficient on a.
EstimatorResult lm_ps(const VectorXd& y, const VectorXd& a, const VectorXd& ps, PsAdjustment mode);

/// Full cubic B-spline basis (degree 3) with the given interior knots and
/// boundary knots at [lo, hi]. Rows sum to one on [lo, hi].
MatrixXd bspline_basis(const VectorXd& x, const std::vector<double>& interior_knots, double lo, double hi);

/// Nearest-control Mahalanobis matching with replacement for every treated
/// unit (ties go to the lowest index). A pair is dropped when any
/// covariate differs by more than `caliper` standard deviations.
EstimatorResult md_match(const VectorXd& y, const VectorXd& a, const MatrixXd& covariates, double caliper);

}  // namespace gpmatch::baselines
