#include "gpmatch/cli.hpp"

#include "gpmatch/errors.hpp"
#include "gpmatch/pipeline.hpp"
#include "gpmatch/report.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

namespace gpmatch::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void check_keys(const json& obj, const std::string& where, std::initializer_list<const char*> allowed) {
    if (!obj.is_object()) {
        throw ConfigError(where + ": expected an object");
    }
    for (const auto& [key, _] : obj.items()) {
        bool ok = false;
        for (const char* a : allowed) {
            ok = ok || key == a;
        }
        if (!ok) {
            throw ConfigError(where + ": unknown key '" + key + "'");
        }
    }
}

template <class T>
void read(const json& obj, const char* key, T& out, const std::string& where) {
    if (!obj.contains(key)) {
        return;
    }
    try {
        out = obj.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError(where + "." + key + ": wrong type");
    }
}

template <class T>
void read(const json& obj, const char* key, std::optional<T>& out, const std::string& where) {
    if (!obj.contains(key) || obj.at(key).is_null()) {
        return;
    }
    T v{};
    read(obj, key, v, where);
    out = v;
}

MeanTerms parse_mean_terms(const std::string& s) {
    if (s == "treatment_only") return MeanTerms::TreatmentOnly;
    if (s == "full_covariates") return MeanTerms::FullCovariates;
    throw ConfigError("mean_terms must be treatment_only or full_covariates, got '" + s + "'");
}

void write_file(const fs::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw DataError("cannot write '" + path.string() + "'");
    }
    out << content;
    if (!out) {
        throw DataError("failed writing '" + path.string() + "'");
    }
}

fs::path prepare_output(const RunConfig& cfg) {
    const fs::path dir(cfg.output_dir.empty() ? "." : cfg.output_dir);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) {
        throw DataError("cannot create output directory '" + dir.string() + "': " + ec.message());
    }
    return dir;
}

io::LoadedData load(const RunConfig& cfg) {
    if (cfg.data.empty()) {
        throw ConfigError("no data file given (--data or \"data\")");
    }
    return io::load_csv(cfg.data, cfg.columns);
}

report::Labels labels_of(const io::LoadedData& d) {
    return {d.roles.mean_covariates, d.roles.kernel_covariates};
}

}  // namespace

McmcConfig RunConfig::mcmc() const {
    if (!seed) {
        throw ConfigError("a seed is required (--seed or \"seed\")");
    }
    McmcConfig m;
    m.seed = *seed;
    if (n_burnin) m.n_burnin = *n_burnin;
    if (n_keep) m.n_keep = *n_keep;
    m.adapt_burnin = adapt_burnin;
    m.proposal_scales = proposal_scales;
    try {
        m.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    return m;
}

sim::StudySpec RunConfig::study_spec() const {
    if (!seed) {
        throw ConfigError("a seed is required (--seed or \"seed\")");
    }
    const SimulateOptions& o = simulate;
    sim::StudySpec s;
    s.study = sim::parse_study(o.study);
    s.setting = o.setting;
    if (o.gammas) {
        if (o.gammas->size() != 4) {
            throw ConfigError("gammas must have four entries (g0, g1, g2, g3)");
        }
        s.gammas = sim::Study1Gammas{(*o.gammas)[0], (*o.gammas)[1], (*o.gammas)[2], (*o.gammas)[3]};
    }
    s.n = o.n;
    s.seed = *seed;
    s.mcmc.adapt_burnin = adapt_burnin;
    s.mcmc.proposal_scales = proposal_scales;
    if (o.desk_scale) {
        s.apply_desk_scale();
    }
    if (o.replicates) s.n_replicates = *o.replicates;
    if (n_burnin) s.mcmc.n_burnin = *n_burnin;
    if (n_keep) s.mcmc.n_keep = *n_keep;
    s.estimators = o.estimators;
    s.calipers = o.calipers;
    s.gpmatch2_interactions = o.gpmatch2_interactions;
    s.threads = o.threads;
    s.prior = prior;
    s.validate();
    return s;
}

RunConfig parse_config(const json& j) {
    RunConfig c;
    check_keys(j, "config", {"command", "data", "output_dir", "seed", "columns", "model", "prior", "mcmc",
                             "simulate", "matched", "diagnose"});
    read(j, "command", c.command, "config");
    read(j, "data", c.data, "config");
    read(j, "output_dir", c.output_dir, "config");
    read(j, "seed", c.seed, "config");
    if (j.contains("columns")) {
        const json& o = j.at("columns");
        check_keys(o, "columns", {"outcome", "treatment", "mean_covariates", "kernel_covariates", "block"});
        read(o, "outcome", c.columns.outcome, "columns");
        read(o, "treatment", c.columns.treatment, "columns");
        read(o, "mean_covariates", c.columns.mean_covariates, "columns");
        read(o, "kernel_covariates", c.columns.kernel_covariates, "columns");
        read(o, "block", c.columns.block, "columns");
    }
    if (j.contains("model")) {
        const json& o = j.at("model");
        check_keys(o, "model", {"mean_terms", "interactions"});
        std::string mt;
        read(o, "mean_terms", mt, "model");
        if (!mt.empty()) {
            c.model.mean_terms = parse_mean_terms(mt);
        }
        read(o, "interactions", c.model.interactions, "model");
    }
    if (j.contains("prior")) {
        const json& o = j.at("prior");
        check_keys(o, "prior", {"omega", "a0", "b0", "af", "bf", "a_phi", "b_phi", "sigma_lm2"});
        read(o, "omega", c.prior.omega, "prior");
        read(o, "a0", c.prior.a0, "prior");
        read(o, "b0", c.prior.b0, "prior");
        read(o, "af", c.prior.af, "prior");
        read(o, "bf", c.prior.bf, "prior");
        read(o, "a_phi", c.prior.a_phi, "prior");
        read(o, "b_phi", c.prior.b_phi, "prior");
        read(o, "sigma_lm2", c.prior.sigma_lm2, "prior");
    }
    if (j.contains("mcmc")) {
        const json& o = j.at("mcmc");
        check_keys(o, "mcmc", {"n_burnin", "n_keep", "adapt_burnin", "proposal_scales"});
        read(o, "n_burnin", c.n_burnin, "mcmc");
        read(o, "n_keep", c.n_keep, "mcmc");
        read(o, "adapt_burnin", c.adapt_burnin, "mcmc");
        read(o, "proposal_scales", c.proposal_scales, "mcmc");
    }
    if (j.contains("simulate")) {
        const json& o = j.at("simulate");
        SimulateOptions& s = c.simulate;
        check_keys(o, "simulate", {"study", "setting", "gammas", "n", "replicates", "desk_scale", "estimators",
                                   "calipers", "gpmatch2_interactions", "threads", "dataset_out"});
        read(o, "study", s.study, "simulate");
        read(o, "setting", s.setting, "simulate");
        read(o, "gammas", s.gammas, "simulate");
        read(o, "n", s.n, "simulate");
        read(o, "replicates", s.replicates, "simulate");
        read(o, "desk_scale", s.desk_scale, "simulate");
        read(o, "estimators", s.estimators, "simulate");
        read(o, "calipers", s.calipers, "simulate");
        read(o, "gpmatch2_interactions", s.gpmatch2_interactions, "simulate");
        read(o, "threads", s.threads, "simulate");
        read(o, "dataset_out", s.dataset_out, "simulate");
    }
    if (j.contains("matched")) {
        const json& o = j.at("matched");
        check_keys(o, "matched", {"sigma02"});
        read(o, "sigma02", c.sigma02, "matched");
    }
    if (j.contains("diagnose")) {
        const json& o = j.at("diagnose");
        DiagnoseOptions& d = c.diagnose;
        check_keys(o, "diagnose", {"sigma_f2", "phi", "sigma_02", "tau", "standardize", "normalize"});
        read(o, "sigma_f2", d.sigma_f2, "diagnose");
        read(o, "phi", d.phi, "diagnose");
        read(o, "sigma_02", d.sigma_02, "diagnose");
        read(o, "tau", d.tau, "diagnose");
        read(o, "standardize", d.standardize, "diagnose");
        read(o, "normalize", d.normalize, "diagnose");
    }
    return c;
}

RunConfig read_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("cannot open config file '" + path + "'");
    }
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError("config file '" + path + "' is not valid JSON: " + e.what());
    }
    return parse_config(j);
}

int cmd_analyze(const RunConfig& cfg) {
    const McmcConfig mcmc = cfg.mcmc();
    const io::LoadedData d = load(cfg);
    const AnalysisResult r = analyze(d.data, cfg.model, cfg.prior, mcmc, d.roles.kernel_covariates);
    const report::Labels labels = labels_of(d);

    const fs::path dir = prepare_output(cfg);
    write_file(dir / "ate_summary.json", report::dump(report::ate_summary(r, labels, &d.report)));
    std::ostringstream trace;
    report::write_trace_csv(trace, r.chain, labels);
    write_file(dir / "trace.csv", trace.str());
    write_file(dir / "diagnostics.json", report::dump(report::diagnostics(r.diagnostics, &d.report)));
    std::cout << "ate " << io::format_double(r.ate.mean) << " sd " << io::format_double(r.ate.sd) << " ci ["
              << io::format_double(r.ate.ci_low) << ", " << io::format_double(r.ate.ci_high) << "]\n";
    return kOk;
}

int cmd_simulate(const RunConfig& cfg) {
    const sim::StudySpec spec = cfg.study_spec();
    const fs::path dir = prepare_output(cfg);
    if (!cfg.simulate.dataset_out.empty()) {
        std::ostringstream data;
        io::write_dataset_csv(data, sim::generate(spec, 0).data);
        write_file(cfg.simulate.dataset_out, data.str());
    }
    sim::Progress progress;
    if (!cfg.simulate.quiet) {
        progress = [](Index done, Index total) {
            std::cerr << "replicate " << done << "/" << total << "\n";
        };
    }
    const sim::StudyResult r = sim::run_study(spec, progress);
    std::ostringstream rows;
    report::write_replicates_csv(rows, r);
    write_file(dir / "replicates.csv", rows.str());
    write_file(dir / "metrics.json", report::dump(report::simulation_metrics(r)));
    for (std::size_t i = 0; i < r.estimators.size(); ++i) {
        const sim::Metrics& m = r.metrics[i];
        std::cout << r.estimators[i] << " rmse " << io::format_double(m.rmse) << " bias "
                  << io::format_double(m.bias) << " rc " << io::format_double(m.rc) << "\n";
    }
    return kOk;
}

int cmd_matched(const RunConfig& cfg) {
    if (cfg.columns.block.empty()) {
        throw ConfigError("matched needs a block column (--block or columns.block)");
    }
    if (!cfg.sigma02) {
        throw ConfigError("matched needs sigma02 (--sigma02 or matched.sigma02)");
    }
    // Only y, a and the blocks are used.
    io::ColumnRoles roles = cfg.columns;
    roles.mean_covariates.clear();
    roles.kernel_covariates.clear();
    if (cfg.data.empty()) {
        throw ConfigError("no data file given (--data or \"data\")");
    }
    const io::CsvTable table = io::read_csv(cfg.data);
    const std::size_t yc = table.column(roles.outcome), ac = table.column(roles.treatment),
                      bc = table.column(roles.block);
    io::CsvTable slim;
    slim.header = {roles.outcome, roles.treatment, roles.block};
    for (const auto& row : table.rows) {
        slim.rows.push_back({row[yc], row[ac], row[bc]});
    }
    const io::LoadedData d = io::load_csv(slim, roles);
    const MatchedResult r = matched(d.data, d.blocks, *cfg.sigma02);
    const fs::path dir = prepare_output(cfg);
    write_file(dir / "matched.json", report::dump(report::matched(r, &d.report)));
    std::cout << "tau " << io::format_double(r.estimate.tau_hat) << " lambda " << io::format_double(r.estimate.lambda)
              << "\n";
    return kOk;
}

int cmd_diagnose(const RunConfig& cfg) {
    const io::LoadedData d = load(cfg);
    const DiagnoseOptions& o = cfg.diagnose;
    DiagnosticsResult r;
    if (o.sigma_f2 || o.phi || o.sigma_02) {
        if (!(o.sigma_f2 && o.phi && o.sigma_02)) {
            throw ConfigError("kernel parameters need sigma_f2, phi and sigma_02 together");
        }
        KernelParams p;
        p.sigma_f2 = *o.sigma_f2;
        p.phi = Eigen::Map<const VectorXd>(o.phi->data(), static_cast<Index>(o.phi->size()));
        p.sigma_02 = *o.sigma_02;
        r = diagnose(d.data, p, d.roles.kernel_covariates, o.tau, o.standardize, o.normalize);
    } else {
        // No parameters supplied: fit the model and use the posterior means;
        // the residuals are also evaluated at the posterior mean ATE.
        if (o.tau) {
            throw ConfigError("--tau needs explicit kernel parameters");
        }
        r = analyze(d.data, cfg.model, cfg.prior, cfg.mcmc(), d.roles.kernel_covariates).diagnostics;
    }
    const fs::path dir = prepare_output(cfg);
    write_file(dir / "diagnostics.json", report::dump(report::diagnostics(r, &d.report)));
    std::cout << "tau_root " << io::format_double(r.tau_root) << " residual_correlation "
              << io::format_double(r.at_root.residual_correlation) << "\n";
    return kOk;
}

int run(int argc, char** argv) {
    CLI::App app{"Gaussian-process matching for causal effect estimation"};
    app.require_subcommand(1);
    app.set_version_flag("--version", "gpmatch 0.1.0");

    std::string config_path;
    std::string output_dir;
    std::uint64_t seed = 0;
    std::string data;
    std::string outcome, treatment, block;
    std::vector<std::string> mean_cov, kernel_cov;
    std::string mean_terms;
    bool no_interactions = false;
    Index burnin = 0, keep = 0;
    double omega = 0.0;

    auto common = [&](CLI::App* sub, bool data_cmd) {
        sub->add_option("-c,--config", config_path, "JSON config file; flags override it")->check(CLI::ExistingFile);
        sub->add_option("-o,--output-dir", output_dir, "Directory for result files");
        sub->add_option("--seed", seed, "Random seed");
        if (data_cmd) {
            sub->add_option("--data", data, "Input CSV with a header row");
            sub->add_option("--outcome", outcome, "Outcome column");
            sub->add_option("--treatment", treatment, "Binary treatment column");
        }
    };
    auto model_flags = [&](CLI::App* sub) {
        sub->add_option("--mean-covariates", mean_cov, "Covariates in the mean function")->delimiter(',');
        sub->add_option("--kernel-covariates", kernel_cov, "Covariates in the GP kernel")->delimiter(',');
        sub->add_option("--mean-terms", mean_terms, "treatment_only or full_covariates")
            ->check(CLI::IsMember({"treatment_only", "full_covariates"}));
        sub->add_flag("--no-interactions", no_interactions, "Drop a*x terms from a full-covariate mean");
        sub->add_option("--burnin", burnin, "Burn-in sweeps")->check(CLI::NonNegativeNumber);
        sub->add_option("--keep", keep, "Retained sweeps")->check(CLI::PositiveNumber);
        sub->add_option("--omega", omega, "Prior scale of the mean coefficients")->check(CLI::PositiveNumber);
    };

    CLI::App* analyze_cmd = app.add_subcommand("analyze", "Fit the model to a dataset and summarize the ATE");
    common(analyze_cmd, true);
    model_flags(analyze_cmd);

    SimulateOptions sim_flags;
    Index replicates = 0;
    std::vector<double> gammas;
    bool no_gp2_interactions = false;
    CLI::App* sim_cmd = app.add_subcommand("simulate", "Run a replicated simulation study");
    common(sim_cmd, false);
    sim_cmd->add_option("--study", sim_flags.study, "single_covariate, md_comparison or kang_schafer");
    sim_cmd->add_option("--setting", sim_flags.setting, "Parameter setting 1-4 (single_covariate)");
    sim_cmd->add_option("--gammas", gammas, "Explicit g0,g1,g2,g3 (single_covariate)")->delimiter(',')->expected(4);
    sim_cmd->add_option("--n", sim_flags.n, "Sample size")->check(CLI::PositiveNumber);
    sim_cmd->add_option("--replicates", replicates, "Number of replicates")->check(CLI::PositiveNumber);
    sim_cmd->add_flag("--desk-scale", sim_flags.desk_scale, "50 replicates, 2000 + 2000 sweeps");
    sim_cmd->add_option("--estimators", sim_flags.estimators, "Subset of estimators")->delimiter(',');
    sim_cmd->add_option("--calipers", sim_flags.calipers, "Matching calipers (md_comparison)")->delimiter(',');
    sim_cmd->add_flag("--no-gpmatch2-interactions", no_gp2_interactions, "GPMatch2 without a*x terms");
    sim_cmd->add_option("--threads", sim_flags.threads, "Worker threads (default: GPMATCH_THREADS or all cores)")
        ->check(CLI::NonNegativeNumber);
    sim_cmd->add_option("--dataset-out", sim_flags.dataset_out, "Also write replicate 0's data to this CSV");
    sim_cmd->add_flag("-q,--quiet", sim_flags.quiet, "No progress output");
    sim_cmd->add_option("--burnin", burnin, "Burn-in sweeps")->check(CLI::NonNegativeNumber);
    sim_cmd->add_option("--keep", keep, "Retained sweeps")->check(CLI::PositiveNumber);

    double sigma02 = 0.0;
    CLI::App* matched_cmd = app.add_subcommand("matched", "Closed-form estimate for an exact matching structure");
    common(matched_cmd, true);
    matched_cmd->add_option("--block", block, "Integer matching-block column");
    matched_cmd->add_option("--sigma02", sigma02, "Noise-to-signal ratio sigma_0^2 / sigma_f^2")
        ->check(CLI::NonNegativeNumber);

    double sigma_f2 = 0.0, sigma_02 = 0.0, tau = 0.0;
    std::vector<double> phi;
    bool no_standardize = false, raw_weights = false;
    CLI::App* diag_cmd = app.add_subcommand("diagnose", "Weight-space residual diagnostics");
    common(diag_cmd, true);
    model_flags(diag_cmd);
    diag_cmd->add_option("--sigma-f2", sigma_f2, "Kernel signal variance")->check(CLI::PositiveNumber);
    diag_cmd->add_option("--phi", phi, "Length scales, one per kernel covariate")->delimiter(',');
    diag_cmd->add_option("--sigma-02", sigma_02, "Noise variance")->check(CLI::NonNegativeNumber);
    diag_cmd->add_option("--tau", tau, "Also evaluate the residuals at this effect");
    diag_cmd->add_flag("--no-standardize", no_standardize, "Use kernel covariates on their original scale");
    diag_cmd->add_flag("--raw-weights", raw_weights, "Skip row normalization of the weights");

    auto fail = [](const std::string& kind, const std::string& msg, int code,
                   const std::vector<double>& jitter = {}) {
        std::cerr << report::dump(report::error(kind, msg, code, jitter));
        return code;
    };

    try {
        try {
            app.parse(argc, argv);
        } catch (const CLI::CallForHelp& e) {
            return app.exit(e);
        } catch (const CLI::CallForAllHelp& e) {
            return app.exit(e);
        } catch (const CLI::CallForVersion& e) {
            return app.exit(e);
        } catch (const CLI::ParseError& e) {
            return fail("config", e.what(), kConfigError);
        }

        CLI::App* sub = app.get_subcommands().front();
        RunConfig cfg = config_path.empty() ? RunConfig{} : read_config(config_path);
        cfg.command = sub->get_name();
        auto given = [&](const char* name) { return sub->get_option_no_throw(name) && sub->count(name) > 0; };

        if (given("--output-dir")) cfg.output_dir = output_dir;
        if (given("--seed")) cfg.seed = seed;
        if (given("--data")) cfg.data = data;
        if (given("--outcome")) cfg.columns.outcome = outcome;
        if (given("--treatment")) cfg.columns.treatment = treatment;
        if (given("--block")) cfg.columns.block = block;
        if (given("--mean-covariates")) cfg.columns.mean_covariates = mean_cov;
        if (given("--kernel-covariates")) cfg.columns.kernel_covariates = kernel_cov;
        if (given("--mean-terms")) cfg.model.mean_terms = parse_mean_terms(mean_terms);
        if (given("--no-interactions")) cfg.model.interactions = false;
        if (given("--burnin")) cfg.n_burnin = burnin;
        if (given("--keep")) cfg.n_keep = keep;
        if (given("--omega")) cfg.prior.omega = omega;

        if (sub == sim_cmd) {
            SimulateOptions& s = cfg.simulate;
            if (given("--study")) s.study = sim_flags.study;
            if (given("--setting")) s.setting = sim_flags.setting;
            if (given("--gammas")) s.gammas = gammas;
            if (given("--n")) s.n = sim_flags.n;
            if (given("--replicates")) s.replicates = replicates;
            if (given("--desk-scale")) s.desk_scale = true;
            if (given("--estimators")) s.estimators = sim_flags.estimators;
            if (given("--calipers")) s.calipers = sim_flags.calipers;
            if (given("--no-gpmatch2-interactions")) s.gpmatch2_interactions = false;
            if (given("--threads")) s.threads = sim_flags.threads;
            if (given("--dataset-out")) s.dataset_out = sim_flags.dataset_out;
            s.quiet = sim_flags.quiet;
            return cmd_simulate(cfg);
        }
        if (sub == matched_cmd) {
            if (given("--sigma02")) cfg.sigma02 = sigma02;
            return cmd_matched(cfg);
        }
        if (sub == diag_cmd) {
            DiagnoseOptions& d = cfg.diagnose;
            if (given("--sigma-f2")) d.sigma_f2 = sigma_f2;
            if (given("--phi")) d.phi = phi;
            if (given("--sigma-02")) d.sigma_02 = sigma_02;
            if (given("--tau")) d.tau = tau;
            if (given("--no-standardize")) d.standardize = false;
            if (given("--raw-weights")) d.normalize = false;
            return cmd_diagnose(cfg);
        }
        return cmd_analyze(cfg);
    } catch (const ConfigError& e) {
        return fail("config", e.what(), kConfigError);
    } catch (const DataError& e) {
        return fail("data", e.what(), kDataError);
    } catch (const NumericalError& e) {
        return fail("numerical", e.what(), kNumericalError, e.jitter_levels());
    } catch (const std::invalid_argument& e) {
        return fail("config", e.what(), kConfigError);
    } catch (const std::exception& e) {
        return fail("internal", e.what(), kInternal);
    }
}

}  // namespace gpmatch::cli
