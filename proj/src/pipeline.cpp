#include "gpmatch/pipeline.hpp"

#include "gpmatch/errors.hpp"

#include <cmath>

namespace gpmatch {

DiagnosticsResult diagnose(const Dataset& ds, const KernelParams& params, const std::vector<std::string>& v_names,
                           std::optional<double> tau, bool standardize, bool normalize) {
    ds.validate();
    if (params.phi.size() != ds.q()) {
        throw ConfigError("expected " + std::to_string(ds.q()) + " length scales, got " +
                          std::to_string(params.phi.size()));
    }
    params.validate();
    DiagnosticsResult out;
    out.standardized = standardize;
    out.normalized = normalize;
    out.n = ds.n();

    MatrixXd v = ds.v;
    KernelParams p = params;
    std::vector<Index> kept;
    if (standardize) {
        StandardizedCovariates s = standardize_covariates(ds.v);
        v = std::move(s.values);
        kept = s.kept_columns;
        out.warnings = std::move(s.warnings);
        p.phi.resize(static_cast<Index>(kept.size()));
        for (std::size_t k = 0; k < kept.size(); ++k) {
            p.phi(static_cast<Index>(k)) = params.phi(kept[k]);
        }
    } else {
        for (Index k = 0; k < ds.q(); ++k) {
            kept.push_back(k);
        }
    }
    for (Index k : kept) {
        out.kernel_columns.push_back(static_cast<std::size_t>(k) < v_names.size()
                                         ? v_names[static_cast<std::size_t>(k)]
                                         : "v" + std::to_string(k + 1));
    }
    out.params = p;

    const WeightSpace ws = weight_matrix(v, p, ds.y, ds.a, normalize);
    out.tau_root = solve_tau(ws, ds.y, ds.a);
    out.at_root = residual_independence_report(ws, ds.y, ds.a, out.tau_root);
    if (tau) {
        out.at_supplied = residual_independence_report(ws, ds.y, ds.a, *tau);
    }
    return out;
}

AnalysisResult analyze(const Dataset& ds, const ModelSpec& spec, const PriorConfig& prior, const McmcConfig& mcmc,
                       const std::vector<std::string>& v_names) {
    AnalysisResult out;
    out.spec = spec;
    out.mcmc = mcmc;
    out.chain = run_chain(ds, spec, prior, mcmc);
    out.ate = summarize(out.chain);

    // The chain's length scales refer to the standardized kept columns.
    Dataset sub = ds;
    const auto& cols = out.chain.kernel_columns;
    sub.v.resize(ds.n(), static_cast<Index>(cols.size()));
    std::vector<std::string> names;
    for (std::size_t k = 0; k < cols.size(); ++k) {
        sub.v.col(static_cast<Index>(k)) = ds.v.col(cols[k]);
        names.push_back(static_cast<std::size_t>(cols[k]) < v_names.size()
                            ? v_names[static_cast<std::size_t>(cols[k])]
                            : "v" + std::to_string(cols[k] + 1));
    }
    if (!cols.empty()) {
        sub.v = (sub.v.rowwise() - out.chain.v_center.transpose()).array().rowwise() /
                out.chain.v_scale.transpose().array();
    }
    out.diagnostics = diagnose(sub, out.chain.posterior_mean_kernel(), names, out.ate.mean, false, true);
    out.diagnostics.standardized = true;
    return out;
}

MatchedResult matched(const Dataset& ds, const std::vector<long long>& blocks, double sigma02) {
    if (static_cast<Index>(blocks.size()) != ds.n()) {
        throw DataError("block labels and outcome differ in length");
    }
    if (!(sigma02 >= 0.0) || !std::isfinite(sigma02)) {
        throw ConfigError("sigma02 must be finite and non-negative");
    }
    const MatchingStructure ms = MatchingStructure::from_labels(blocks, ds.a);
    MatchedResult out;
    out.estimate = weighted_sum_estimate(ds.y, ds.a, ms, sigma02);
    out.sigma02 = sigma02;
    out.n = ds.n();
    out.n_blocks = ms.n_blocks();
    for (Index l = 0; l < ms.n_blocks(); ++l) {
        const auto u = static_cast<std::size_t>(l);
        if (ms.n_treated[u] > 0 && ms.n_control[u] > 0) {
            ++out.n_mixed_blocks;
        }
    }
    return out;
}

}  // namespace gpmatch
