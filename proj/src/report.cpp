#include "gpmatch/report.hpp"

#include <cmath>
#include <ostream>

namespace gpmatch::report {

namespace {

Json header(const char* schema) {
    Json j;
    j["schema"] = schema;
    j["schema_version"] = kSchemaVersion;
    return j;
}

Json number(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

Json vector_json(const VectorXd& v) {
    Json arr = Json::array();
    for (Index i = 0; i < v.size(); ++i) {
        arr.push_back(number(v(i)));
    }
    return arr;
}

Json strings(const std::vector<std::string>& v) {
    Json arr = Json::array();
    for (const auto& s : v) {
        arr.push_back(s);
    }
    return arr;
}

Json load_json(const io::LoadReport* load) {
    if (!load) {
        return nullptr;
    }
    Json j;
    j["rows_read"] = load->rows_read;
    j["rows_used"] = load->rows_used;
    Json rej = Json::array();
    for (Index r : load->rejected_rows) {
        rej.push_back(r);
    }
    j["rejected_rows"] = rej;
    return j;
}

Json residual_json(const ResidualReport& r) {
    Json j;
    j["tau"] = number(r.tau);
    j["sum_psi"] = number(r.sum_psi);
    j["residual_correlation"] = number(r.residual_correlation);
    j["pearson_correlation"] = number(r.pearson_correlation);
    j["zero_variance"] = r.zero_variance;
    j["no_overlap"] = r.no_overlap;
    Json o;
    o["min"] = number(r.overlap.min);
    o["q25"] = number(r.overlap.q25);
    o["median"] = number(r.overlap.median);
    o["q75"] = number(r.overlap.q75);
    o["max"] = number(r.overlap.max);
    o["n_near_zero"] = r.overlap.n_near_zero;
    o["near_zero_threshold"] = r.overlap.near_zero_threshold;
    j["overlap"] = o;
    return j;
}

Json kernel_json(const KernelParams& p, const std::vector<std::string>& names) {
    Json j;
    j["sigma_f2"] = number(p.sigma_f2);
    Json phi;
    for (Index k = 0; k < p.phi.size(); ++k) {
        const auto u = static_cast<std::size_t>(k);
        phi[u < names.size() ? names[u] : "v" + std::to_string(k + 1)] = number(p.phi(k));
    }
    j["phi"] = phi.is_null() ? Json::object() : phi;
    j["sigma_02"] = number(p.sigma_02);
    return j;
}

std::vector<std::string> kernel_labels(const PosteriorChain& chain, const Labels& labels) {
    std::vector<std::string> names;
    for (Index c : chain.kernel_columns) {
        const auto u = static_cast<std::size_t>(c);
        names.push_back(u < labels.kernel_covariates.size() ? labels.kernel_covariates[u]
                                                            : "v" + std::to_string(c + 1));
    }
    return names;
}

// Design columns are named x1.., a:x1..; swap in the data's column names.
std::vector<std::string> gamma_labels(const PosteriorChain& chain, const Labels& labels) {
    std::vector<std::string> out;
    for (const auto& g : chain.gamma_names) {
        std::string name = g;
        const std::size_t pos = g.rfind('x');
        if (pos != std::string::npos && (pos == 0 || g.compare(0, 2, "a:") == 0)) {
            const std::size_t k = std::stoul(g.substr(pos + 1)) - 1;
            if (k < labels.mean_covariates.size()) {
                name = g.substr(0, pos) + labels.mean_covariates[k];
            }
        }
        out.push_back(name);
    }
    return out;
}

std::string mean_terms_name(MeanTerms m) {
    return m == MeanTerms::TreatmentOnly ? "treatment_only" : "full_covariates";
}

Json prior_json(const PriorConfig& p) {
    Json j;
    j["omega"] = p.omega;
    j["a0"] = p.a0;
    j["b0"] = p.b0 ? number(*p.b0) : Json(nullptr);
    j["af"] = p.af;
    j["bf"] = p.bf ? number(*p.bf) : Json(nullptr);
    j["a_phi"] = p.a_phi;
    j["b_phi"] = p.b_phi;
    j["sigma_lm2"] = p.sigma_lm2 ? number(*p.sigma_lm2) : Json(nullptr);
    return j;
}

Json mcmc_json(const McmcConfig& m) {
    Json j;
    j["n_burnin"] = m.n_burnin;
    j["n_keep"] = m.n_keep;
    j["seed"] = m.seed;
    j["adapt_burnin"] = m.adapt_burnin;
    return j;
}

}  // namespace

Json ate_summary(const AnalysisResult& r, const Labels& labels, const io::LoadReport* load) {
    Json j = header("gpmatch/ate_summary");
    Json ate;
    ate["mean"] = number(r.ate.mean);
    ate["sd"] = number(r.ate.sd);
    ate["ci_low"] = number(r.ate.ci_low);
    ate["ci_high"] = number(r.ate.ci_high);
    ate["ci_level"] = 0.95;
    j["ate"] = ate;
    j["unit_effects"] = vector_json(r.ate.tau_i);
    j["n"] = r.chain.unit_tau_mean.size();

    Json model;
    model["mean_terms"] = mean_terms_name(r.spec.mean_terms);
    model["interactions"] = r.spec.mean_terms == MeanTerms::FullCovariates && r.spec.interactions;
    Json coefs = Json::array();
    const auto gnames = gamma_labels(r.chain, labels);
    const VectorXd gm = r.chain.gamma_draws.colwise().mean();
    for (Index k = 0; k < gm.size(); ++k) {
        const VectorXd col = r.chain.gamma_draws.col(k);
        const double sd = col.size() > 1 ? std::sqrt((col.array() - gm(k)).square().sum() / (col.size() - 1.0)) : 0.0;
        Json c;
        c["name"] = gnames[static_cast<std::size_t>(k)];
        c["mean"] = number(gm(k));
        c["sd"] = number(sd);
        coefs.push_back(c);
    }
    model["coefficients"] = coefs;
    j["model"] = model;

    const auto knames = kernel_labels(r.chain, labels);
    Json kernel;
    kernel["columns"] = strings(knames);
    kernel["posterior_mean"] = kernel_json(r.chain.posterior_mean_kernel(), knames);
    Json acc;
    Json scales;
    for (Index k = 0; k < r.chain.acceptance_rates.size(); ++k) {
        std::string name = r.chain.kernel_names[static_cast<std::size_t>(k)];
        if (k > 0 && k <= static_cast<Index>(knames.size())) {
            name = "phi_" + knames[static_cast<std::size_t>(k - 1)];
        }
        acc[name] = number(r.chain.acceptance_rates(k));
        scales[name] = number(r.chain.final_scales(k));
    }
    kernel["acceptance_rates"] = acc;
    kernel["proposal_scales"] = scales;
    Json stdz;
    stdz["center"] = vector_json(r.chain.v_center);
    stdz["scale"] = vector_json(r.chain.v_scale);
    kernel["standardization"] = stdz;
    j["kernel"] = kernel;

    j["prior"] = prior_json(r.chain.prior);
    j["mcmc"] = mcmc_json(r.mcmc);
    j["data"] = load_json(load);
    std::vector<std::string> warnings = load ? load->warnings : std::vector<std::string>{};
    warnings.insert(warnings.end(), r.chain.warnings.begin(), r.chain.warnings.end());
    j["warnings"] = strings(warnings);
    return j;
}

Json diagnostics(const DiagnosticsResult& r, const io::LoadReport* load) {
    Json j = header("gpmatch/diagnostics");
    j["n"] = r.n;
    j["kernel_columns"] = strings(r.kernel_columns);
    j["kernel_params"] = kernel_json(r.params, r.kernel_columns);
    j["standardized"] = r.standardized;
    j["normalized"] = r.normalized;
    j["tau_root"] = number(r.tau_root);
    j["at_root"] = residual_json(r.at_root);
    j["at_supplied"] = r.at_supplied ? residual_json(*r.at_supplied) : Json(nullptr);
    j["data"] = load_json(load);
    std::vector<std::string> warnings = load ? load->warnings : std::vector<std::string>{};
    warnings.insert(warnings.end(), r.warnings.begin(), r.warnings.end());
    j["warnings"] = strings(warnings);
    return j;
}

Json matched(const MatchedResult& r, const io::LoadReport* load) {
    Json j = header("gpmatch/matched");
    const GlsEstimate& e = r.estimate;
    j["sigma02"] = r.sigma02;
    j["n"] = r.n;
    j["n_blocks"] = r.n_blocks;
    j["n_mixed_blocks"] = r.n_mixed_blocks;
    j["tau_hat"] = number(e.tau_hat);
    j["mu_hat"] = number(e.mu_hat);
    j["lambda"] = number(e.lambda);
    j["tau1_hat"] = number(e.tau1_hat);
    j["tau0_hat"] = number(e.tau0_hat);
    j["rho"] = number(e.rho);
    j["c1"] = number(e.c1);
    j["c2"] = number(e.c2);
    j["d1"] = number(e.d1);
    j["d2"] = number(e.d2);
    j["data"] = load_json(load);
    std::vector<std::string> warnings = load ? load->warnings : std::vector<std::string>{};
    warnings.insert(warnings.end(), e.warnings.begin(), e.warnings.end());
    j["warnings"] = strings(warnings);
    return j;
}

Json simulation_metrics(const sim::StudyResult& r) {
    Json j = header("gpmatch/simulation_metrics");
    const sim::StudySpec& s = r.spec;
    j["study"] = sim::study_name(s.study);
    if (s.study == sim::Study::SingleCovariate) {
        const sim::Study1Gammas g = s.gammas ? *s.gammas : sim::study1_setting(s.setting);
        j["setting"] = s.gammas ? Json(nullptr) : Json(s.setting);
        j["gammas"] = Json::array({g.g0, g.g1, g.g2, g.g3});
    } else {
        j["setting"] = nullptr;
        j["gammas"] = nullptr;
    }
    j["n"] = s.n;
    j["n_replicates"] = s.n_replicates;
    j["seed"] = s.seed;
    j["mcmc"] = {{"n_burnin", s.mcmc.n_burnin}, {"n_keep", s.mcmc.n_keep}};
    j["gpmatch2_interactions"] = s.gpmatch2_interactions;
    j["estimator_order"] = strings(r.estimators);
    Json est = Json::object();
    for (std::size_t i = 0; i < r.estimators.size(); ++i) {
        const sim::Metrics& m = r.metrics[i];
        Json e;
        e["rmse"] = number(m.rmse);
        e["mae"] = number(m.mae);
        e["bias"] = number(m.bias);
        e["rc"] = number(m.rc);
        e["se_avg"] = number(m.se_avg);
        e["se_emp"] = m.se_emp ? number(*m.se_emp) : Json(nullptr);
        e["mean_estimate"] = number(m.mean_estimate);
        e["err_q05"] = number(m.err_q05);
        e["err_q95"] = number(m.err_q95);
        e["n_ok"] = m.n_ok;
        e["n_failed"] = m.n_failed;
        est[r.estimators[i]] = e;
    }
    j["estimators"] = est;
    Json notes = Json::array();
    if (s.study == sim::Study::KangSchafer) {
        notes.push_back("propensity scores come from a logistic model on x1-x4 (variant a)");
    }
    if (s.study == sim::Study::SingleCovariate) {
        notes.push_back("suffix 1: propensity model logit(A) ~ x; suffix 2: logit(A) ~ x^(1/3)");
    }
    j["notes"] = notes;
    return j;
}

Json error(const std::string& kind, const std::string& message, int exit_code,
           const std::vector<double>& jitter_levels) {
    Json j = header("gpmatch/error");
    Json e;
    e["kind"] = kind;
    e["message"] = message;
    e["exit_code"] = exit_code;
    if (!jitter_levels.empty()) {
        Json jl = Json::array();
        for (double v : jitter_levels) {
            jl.push_back(v);
        }
        e["jitter_levels"] = jl;
    }
    j["error"] = e;
    return j;
}

void write_trace_csv(std::ostream& out, const PosteriorChain& chain, const Labels& labels) {
    const auto gnames = gamma_labels(chain, labels);
    const auto knames = kernel_labels(chain, labels);
    out << "iteration";
    for (const auto& g : gnames) {
        out << ',' << io::csv_escape(g);
    }
    out << ",sigma_f2";
    for (const auto& k : knames) {
        out << ',' << io::csv_escape("phi_" + k);
    }
    out << ",sigma_02,ate\n";
    for (Index t = 0; t < chain.gamma_draws.rows(); ++t) {
        out << (t + 1);
        for (Index k = 0; k < chain.gamma_draws.cols(); ++k) {
            out << ',' << io::format_double(chain.gamma_draws(t, k));
        }
        for (Index k = 0; k < chain.kernel_draws.cols(); ++k) {
            out << ',' << io::format_double(chain.kernel_draws(t, k));
        }
        out << ',' << io::format_double(chain.ate_draws(t)) << '\n';
    }
}

void write_replicates_csv(std::ostream& out, const sim::StudyResult& r) {
    out << "replicate,estimator,estimate,se,ci_low,ci_high,true_ate,failed\n";
    for (const auto& rec : r.records) {
        out << rec.replicate << ',' << io::csv_escape(rec.estimator) << ',' << io::format_double(rec.estimate) << ','
            << io::format_double(rec.se) << ',' << io::format_double(rec.ci_low) << ','
            << io::format_double(rec.ci_high) << ',' << io::format_double(rec.true_ate) << ','
            << (rec.failed ? 1 : 0) << '\n';
    }
}

std::string dump(const Json& j) { return j.dump(2) + "\n"; }

}  // namespace gpmatch::report
