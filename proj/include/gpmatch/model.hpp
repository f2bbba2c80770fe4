#pragma once

#include "gpmatch/covkernel.hpp"

#include <optional>
#include <string>
#include <vector>

namespace gpmatch {

/// Observed data: outcome y, binary treatment a, mean-function covariates x
/// (n x p) and kernel covariates v (n x q).
struct Dataset {
    VectorXd y;
    VectorXd a;
    MatrixXd x;
    MatrixXd v;

    Index n() const noexcept { return y.size(); }
    Index p() const noexcept { return x.cols(); }
    Index q() const noexcept { return v.cols(); }
    Index n_treated() const;

    /// Throws DataError on length mismatch, non-binary treatment, a missing
    /// treatment arm, or non-finite values.
    void validate() const;
};

enum class MeanTerms {
    TreatmentOnly,   ///< (1, a)
    FullCovariates,  ///< (1, x, a, a*x) or (1, x, a) without interactions
};

struct ModelSpec {
    MeanTerms mean_terms = MeanTerms::TreatmentOnly;
    /// Include a*x columns when x enters the mean. Ignored for TreatmentOnly.
    bool interactions = true;
    /// Subset of kernel covariate columns; empty selects all of them.
    std::vector<Index> kernel_columns;
};

/// Design matrix with column bookkeeping for recovering unit-level effects.
struct DesignMatrix {
    MatrixXd z;
    Index treatment_col = 1;
    /// First a*x column, or -1 when the effect is homogeneous.
    Index interaction_col = -1;
    /// Number of x columns carried by the interaction block.
    Index n_interactions = 0;

    Index cols() const noexcept { return z.cols(); }
    std::vector<std::string> column_names() const;

    /// tau(x_i) = alpha_0 + x_i' alpha_x for every unit.
    VectorXd unit_effects(const VectorXd& gamma, const MatrixXd& x) const;
    /// mean_i tau(x_i) = (1, xbar') alpha.
    double average_effect(const VectorXd& gamma, const VectorXd& x_mean) const;
};

DesignMatrix build_design(const Dataset& ds, const ModelSpec& spec);

/// Hyperparameters of the prior hierarchy:
///   gamma ~ MVN(0, omega * sigma_lm2 * (Z'Z)^{-1}),
///   sigma_02 ~ IG(a0, b0), sigma_f2 ~ IG(af, bf), phi_k ~ IG(a_phi, b_phi).
/// sigma_lm2, b0 and bf are filled from the pilot regression at fit time
/// unless set explicitly (b0 = bf = sigma_lm2 / 2 by default).
struct PriorConfig {
    double omega = 1e6;
    double a0 = 2.0;
    double af = 2.0;
    double a_phi = 1.0;
    double b_phi = 1.0;
    std::optional<double> b0;
    std::optional<double> bf;
    std::optional<double> sigma_lm2;

    /// Copy with every optional engaged, using `anchor` where unset.
    PriorConfig resolved(double anchor) const;
    bool is_resolved() const noexcept { return b0 && bf && sigma_lm2; }

    /// Throws std::invalid_argument on non-positive hyperparameters.
    void validate() const;
};

struct AnchorResult {
    double sigma_lm2 = 1.0;  ///< after the floor
    double raw = 0.0;        ///< residual variance before flooring
    bool floored = false;
    bool fallback = false;   ///< design was rank deficient; var(y) used
    std::vector<std::string> warnings;
};

/// Residual variance of OLS y ~ (1, a, x), floored at
/// max(., 1e-8 var(y), 1e-12).
AnchorResult sigma_lm2_anchor(const Dataset& ds);

double sample_variance(const VectorXd& v);

}  // namespace gpmatch
