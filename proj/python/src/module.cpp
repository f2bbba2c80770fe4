#include "gpmatch/errors.hpp"
#include "gpmatch/matched.hpp"
#include "gpmatch/pipeline.hpp"
#include "gpmatch/report.hpp"
#include "gpmatch/simharness.hpp"

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

namespace py = pybind11;
using namespace gpmatch;

namespace {

std::vector<std::string> default_names(Index k, const char* prefix) {
    std::vector<std::string> out;
    for (Index i = 0; i < k; ++i) {
        out.push_back(prefix + std::to_string(i + 1));
    }
    return out;
}

Dataset make_dataset(const VectorXd& y, const VectorXd& a, const MatrixXd& x, const std::optional<MatrixXd>& v) {
    Dataset d;
    d.y = y;
    d.a = a;
    d.x = x.rows() == 0 && x.cols() == 0 ? MatrixXd(y.size(), 0) : x;
    d.v = v ? *v : d.x;
    return d;
}

py::dict py_analyze(const VectorXd& y, const VectorXd& a, const MatrixXd& x, const std::optional<MatrixXd>& v,
                    std::uint64_t seed, const std::string& mean_terms, bool interactions, Index n_burnin, Index n_keep,
                    double omega) {
    const Dataset d = make_dataset(y, a, x, v);
    ModelSpec spec;
    if (mean_terms == "full_covariates") {
        spec.mean_terms = MeanTerms::FullCovariates;
    } else if (mean_terms != "treatment_only") {
        throw ConfigError("mean_terms must be treatment_only or full_covariates");
    }
    spec.interactions = interactions;
    PriorConfig prior;
    prior.omega = omega;
    McmcConfig mcmc;
    mcmc.seed = seed;
    mcmc.n_burnin = n_burnin;
    mcmc.n_keep = n_keep;

    const report::Labels labels{default_names(d.p(), "x"), default_names(d.q(), "v")};
    AnalysisResult r;
    {
        py::gil_scoped_release release;
        r = gpmatch::analyze(d, spec, prior, mcmc, labels.kernel_covariates);
    }
    py::dict out;
    out["summary"] = report::ate_summary(r, labels).dump();
    out["diagnostics"] = report::diagnostics(r.diagnostics).dump();
    out["gamma_draws"] = r.chain.gamma_draws;
    out["kernel_draws"] = r.chain.kernel_draws;
    out["ate_draws"] = r.chain.ate_draws;
    out["gamma_names"] = r.chain.gamma_names;
    out["kernel_names"] = r.chain.kernel_names;
    return out;
}

std::string py_matched(const VectorXd& y, const VectorXd& a, const std::vector<long long>& blocks, double sigma02) {
    Dataset d = make_dataset(y, a, MatrixXd(y.size(), 0), std::nullopt);
    return report::matched(gpmatch::matched(d, blocks, sigma02)).dump();
}

std::string py_diagnose(const VectorXd& y, const VectorXd& a, const MatrixXd& v, double sigma_f2, const VectorXd& phi,
                        double sigma_02, std::optional<double> tau, bool standardize, bool normalize) {
    const Dataset d = make_dataset(y, a, MatrixXd(y.size(), 0), v);
    KernelParams p;
    p.sigma_f2 = sigma_f2;
    p.phi = phi;
    p.sigma_02 = sigma_02;
    return report::diagnostics(gpmatch::diagnose(d, p, default_names(d.q(), "v"), tau, standardize, normalize))
        .dump();
}

sim::StudySpec study_spec(const std::string& study, Index n, std::uint64_t seed, int setting,
                          std::optional<Index> replicates, bool desk_scale, const std::vector<std::string>& estimators,
                          std::optional<Index> n_burnin, std::optional<Index> n_keep, int threads) {
    sim::StudySpec s;
    s.study = sim::parse_study(study);
    s.n = n;
    s.seed = seed;
    s.setting = setting;
    if (desk_scale) {
        s.apply_desk_scale();
    }
    if (replicates) s.n_replicates = *replicates;
    if (n_burnin) s.mcmc.n_burnin = *n_burnin;
    if (n_keep) s.mcmc.n_keep = *n_keep;
    s.estimators = estimators;
    s.threads = threads;
    return s;
}

py::dict py_simulate(const std::string& study, Index n, std::uint64_t seed, int setting, std::optional<Index> replicates,
                     bool desk_scale, const std::vector<std::string>& estimators, std::optional<Index> n_burnin,
                     std::optional<Index> n_keep, int threads) {
    const sim::StudySpec s =
        study_spec(study, n, seed, setting, replicates, desk_scale, estimators, n_burnin, n_keep, threads);
    sim::StudyResult r;
    {
        py::gil_scoped_release release;
        r = sim::run_study(s);
    }
    std::ostringstream rows;
    report::write_replicates_csv(rows, r);
    py::dict out;
    out["metrics"] = report::simulation_metrics(r).dump();
    out["replicates_csv"] = rows.str();
    return out;
}

py::dict py_generate(const std::string& study, Index n, std::uint64_t seed, int setting, Index replicate) {
    sim::StudySpec s;
    s.study = sim::parse_study(study);
    s.n = n;
    s.seed = seed;
    s.setting = setting;
    s.validate();
    const sim::SimData g = sim::generate(s, replicate);
    py::dict out;
    out["y"] = g.data.y;
    out["a"] = g.data.a;
    out["x"] = g.data.x;
    out["latent"] = g.latent;
    out["unit_effects"] = g.unit_effects;
    out["true_ate"] = g.true_ate;
    return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Gaussian-process matching core";

    static py::exception<DataError> data_error(m, "DataError", PyExc_ValueError);
    static py::exception<NumericalError> numerical_error(m, "NumericalError", PyExc_ArithmeticError);
    static py::exception<ConfigError> config_error(m, "ConfigError", PyExc_ValueError);
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) {
                std::rethrow_exception(p);
            }
        } catch (const DataError& e) {
            py::set_error(data_error, e.what());
        } catch (const NumericalError& e) {
            py::set_error(numerical_error, e.what());
        } catch (const ConfigError& e) {
            py::set_error(config_error, e.what());
        }
    });

    m.def("analyze", &py_analyze, py::arg("y"), py::arg("a"), py::arg("x"), py::arg("v") = py::none(), py::kw_only(),
          py::arg("seed"), py::arg("mean_terms") = "treatment_only", py::arg("interactions") = true,
          py::arg("n_burnin") = 5000, py::arg("n_keep") = 5000, py::arg("omega") = 1e6);
    m.def("matched", &py_matched, py::arg("y"), py::arg("a"), py::arg("blocks"), py::arg("sigma02"));
    m.def("diagnose", &py_diagnose, py::arg("y"), py::arg("a"), py::arg("v"), py::kw_only(), py::arg("sigma_f2"),
          py::arg("phi"), py::arg("sigma_02"), py::arg("tau") = py::none(), py::arg("standardize") = true,
          py::arg("normalize") = true);
    m.def("simulate", &py_simulate, py::arg("study"), py::kw_only(), py::arg("n"), py::arg("seed"),
          py::arg("setting") = 1, py::arg("replicates") = py::none(), py::arg("desk_scale") = false,
          py::arg("estimators") = std::vector<std::string>{}, py::arg("n_burnin") = py::none(),
          py::arg("n_keep") = py::none(), py::arg("threads") = 0);
    m.def("generate", &py_generate, py::arg("study"), py::kw_only(), py::arg("n"), py::arg("seed"),
          py::arg("setting") = 1, py::arg("replicate") = 0);
    m.def(
        "weighted_sum_estimate",
        [](const VectorXd& y, const VectorXd& a, const std::vector<long long>& blocks, double sigma02) {
            const GlsEstimate e = weighted_sum_estimate(y, a, MatchingStructure::from_labels(blocks, a), sigma02);
            return py::make_tuple(e.tau_hat, e.mu_hat, e.lambda);
        },
        py::arg("y"), py::arg("a"), py::arg("blocks"), py::arg("sigma02"));
    m.attr("SCHEMA_VERSION") = report::kSchemaVersion;
}
