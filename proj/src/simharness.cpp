#include "gpmatch/simharness.hpp"

#include "gpmatch/baselines.hpp"
#include "gpmatch/errors.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <limits>
#include <mutex>
#include <thread>

namespace gpmatch::sim {

namespace {

double logistic(double t) {
    return t >= 0.0 ? 1.0 / (1.0 + std::exp(-t)) : std::exp(t) / (1.0 + std::exp(t));
}

std::uint64_t setting_key(const StudySpec& spec) {
    return spec.study == Study::SingleCovariate ? static_cast<std::uint64_t>(spec.setting) : 0;
}

ReplicateRecord from_wald(const baselines::EstimatorResult& r) {
    ReplicateRecord rec;
    rec.estimate = r.ate;
    rec.se = r.se;
    rec.ci_low = r.ci_low;
    rec.ci_high = r.ci_high;
    return rec;
}

baselines::EstimatorResult ols_effect(const VectorXd& y, const MatrixXd& design, Index col) {
    const baselines::OlsFit f = baselines::ols(y, design);
    baselines::EstimatorResult r;
    r.ate = f.coef(col);
    r.se = f.se(col);
    r.ci_low = r.ate - baselines::kZ975 * r.se;
    r.ci_high = r.ate + baselines::kZ975 * r.se;
    return r;
}

// Everything the estimators of one replicate share.
struct Replicate {
    SimData sim;
    std::uint64_t seed = 0;
    std::optional<baselines::PropensityFit> ps1;
    std::optional<baselines::PropensityFit> ps2;
};

const VectorXd& ps_variant(Replicate& rep, int variant) {
    const Dataset& d = rep.sim.data;
    if (variant == 2) {
        if (!rep.ps2) {
            const MatrixXd c = d.x.unaryExpr([](double v) { return std::cbrt(v); });
            rep.ps2 = baselines::logistic_ps(d.a, c);
        }
        return rep.ps2->ps;
    }
    if (!rep.ps1) {
        rep.ps1 = baselines::logistic_ps(d.a, d.x);
    }
    return rep.ps1->ps;
}

ReplicateRecord run_gpmatch(const StudySpec& spec, const Replicate& rep, const std::string& name) {
    ModelSpec ms;
    ms.mean_terms = MeanTerms::TreatmentOnly;
    if (name == "GPMatch2") {
        ms.mean_terms = MeanTerms::FullCovariates;
        ms.interactions = spec.gpmatch2_interactions;
    }
    McmcConfig mc = spec.mcmc;
    mc.seed = derive_seed(rep.seed, {hash_name(name)});
    const PosteriorChain chain = run_chain(rep.sim.data, ms, spec.prior, mc);
    const AteEstimate est = summarize(chain);
    ReplicateRecord rec;
    rec.estimate = est.mean;
    rec.se = est.sd;
    rec.ci_low = est.ci_low;
    rec.ci_high = est.ci_high;
    return rec;
}

ReplicateRecord run_gold(const StudySpec& spec, const Replicate& rep) {
    const Dataset& d = rep.sim.data;
    const Index n = d.n();
    switch (spec.study) {
        case Study::SingleCovariate: {
            MatrixXd m(n, 3);
            m.col(0).setOnes();
            m.col(1) = d.x.col(0).array().exp().matrix();
            m.col(2) = d.a;
            return from_wald(ols_effect(d.y, m, 2));
        }
        case Study::MdComparison: {
            MatrixXd m(n, 3);
            m.col(0).setOnes();
            m.col(1) = d.x.col(0).array().cube().matrix();
            m.col(2) = d.a;
            return from_wald(ols_effect(d.y, m, 2));
        }
        case Study::KangSchafer: {
            MatrixXd m(n, 6);
            m.col(0).setOnes();
            m.col(1) = d.a;
            m.rightCols(4) = rep.sim.latent;
            return from_wald(ols_effect(d.y, m, 1));
        }
    }
    throw ConfigError("unknown study");
}

ReplicateRecord run_one(const StudySpec& spec, Replicate& rep, const std::string& name) {
    const Dataset& d = rep.sim.data;
    if (name == "Gold") {
        return run_gold(spec, rep);
    }
    if (name == "GPMatch" || name == "GPMatch1" || name == "GPMatch2") {
        return run_gpmatch(spec, rep, name);
    }
    if (name == "LM") {
        MatrixXd m(d.n(), d.p() + 2);
        m.col(0).setOnes();
        m.col(1) = d.a;
        m.rightCols(d.p()) = d.x;
        return from_wald(ols_effect(d.y, m, 1));
    }
    if (name.rfind("MD_", 0) == 0) {
        const double caliper = std::stod(name.substr(3));
        return from_wald(baselines::md_match(d.y, d.a, d.x, caliper));
    }
    // Propensity-based estimators; a trailing 2 selects the cube-root PS model.
    const int variant = (!name.empty() && (name.back() == '2' || name.ends_with("2)"))) ? 2 : 1;
    if (name.rfind("QNT_PS", 0) == 0) {
        return from_wald(baselines::qnt_ps(d.y, d.a, ps_variant(rep, variant)));
    }
    if (name.rfind("AIPTW", 0) == 0) {
        const baselines::OutcomeFits m = baselines::arm_outcome_fits(d.y, d.a, d.x);
        return from_wald(baselines::aiptw(d.y, d.a, ps_variant(rep, variant), m.m1, m.m0));
    }
    if (name.rfind("LM_sp", 0) == 0) {
        return from_wald(baselines::lm_ps(d.y, d.a, ps_variant(rep, variant), baselines::PsAdjustment::CubicBSpline));
    }
    if (name.rfind("LM_PS", 0) == 0) {
        return from_wald(baselines::lm_ps(d.y, d.a, ps_variant(rep, variant), baselines::PsAdjustment::Linear));
    }
    throw ConfigError("unknown estimator '" + name + "'");
}

bool known_estimator(const StudySpec& spec, const std::string& name) {
    if (name.rfind("MD_", 0) == 0) {
        if (spec.study != Study::MdComparison) {
            return false;
        }
        try {
            std::size_t pos = 0;
            const double c = std::stod(name.substr(3), &pos);
            return pos == name.size() - 3 && c > 0.0 && std::isfinite(c);
        } catch (const std::exception&) {
            return false;
        }
    }
    static const std::vector<std::string> generic{"Gold", "LM"};
    if (std::find(generic.begin(), generic.end(), name) != generic.end()) {
        return true;
    }
    switch (spec.study) {
        case Study::SingleCovariate: {
            static const std::vector<std::string> s1{"GPMatch", "QNT_PS", "AIPTW1", "AIPTW2", "LM_PS1",
                                                     "LM_PS2", "LM_sp(PS1)", "LM_sp(PS2)"};
            return std::find(s1.begin(), s1.end(), name) != s1.end();
        }
        case Study::MdComparison:
            return name == "GPMatch" || name == "QNT_PS" || name == "AIPTW";
        case Study::KangSchafer: {
            static const std::vector<std::string> ks{"GPMatch1", "GPMatch2", "QNT_PS", "AIPTW", "LM_PS", "LM_sp(PS)"};
            return std::find(ks.begin(), ks.end(), name) != ks.end();
        }
    }
    return false;
}

}  // namespace

std::string study_name(Study s) {
    switch (s) {
        case Study::SingleCovariate: return "single_covariate";
        case Study::MdComparison: return "md_comparison";
        case Study::KangSchafer: return "kang_schafer";
    }
    return "unknown";
}

Study parse_study(const std::string& name) {
    if (name == "single_covariate" || name == "study1") return Study::SingleCovariate;
    if (name == "md_comparison" || name == "study2") return Study::MdComparison;
    if (name == "kang_schafer" || name == "study3") return Study::KangSchafer;
    throw ConfigError("unknown study '" + name + "' (expected single_covariate, md_comparison or kang_schafer)");
}

Study1Gammas study1_setting(int setting) {
    const double s = std::sqrt(0.75);
    switch (setting) {
        case 1: return {0.5, 0.0, 0.0, s};
        case 2: return {1.0, 0.15, 0.0, 0.0};
        case 3: return {0.5, 0.0, 0.7, s};
        case 4: return {1.0, 0.15, 0.7, 0.0};
        default: throw ConfigError("single_covariate setting must be 1..4, got " + std::to_string(setting));
    }
}

SimData gen_study1(Index n, const Study1Gammas& g, Rng& rng) {
    std::normal_distribution<double> nd;
    std::uniform_real_distribution<double> ud;
    SimData s;
    Dataset& d = s.data;
    d.y.resize(n);
    d.a.resize(n);
    d.x.resize(n, 1);
    s.latent.resize(n, 3);
    s.unit_effects.resize(n);
    for (Index i = 0; i < n; ++i) {
        const double x = nd(rng);
        const double u0 = nd(rng), u1 = nd(rng), u2 = nd(rng), eps = nd(rng);
        const double p = logistic(-0.2 + std::cbrt(1.8 * x) + g.g2 * u2 * u2);
        const double a = ud(rng) < p ? 1.0 : 0.0;
        const double tau = 1.0 + g.g1 * u1;
        d.x(i, 0) = x;
        d.a(i) = a;
        d.y(i) = std::exp(x) + tau * a + g.g0 * u0 + g.g3 * eps;
        s.latent.row(i) << u0, u1, u2;
        s.unit_effects(i) = tau;
    }
    d.v = d.x;
    s.true_ate = s.unit_effects.mean();
    return s;
}

SimData gen_study2(Index n, Rng& rng, const Study2Options& opt) {
    std::normal_distribution<double> nd;
    std::uniform_real_distribution<double> ud;
    std::uniform_real_distribution<double> cov(-2.0, 2.0);
    SimData s;
    Dataset& d = s.data;
    d.y.resize(n);
    d.a.resize(n);
    d.x.resize(n, 2);
    for (Index i = 0; i < n; ++i) {
        const double x1 = cov(rng), x2 = cov(rng);
        const double p = opt.confounded ? logistic(-x1 - x2) : 0.5;
        const double a = ud(rng) < p ? 1.0 : 0.0;
        const double e = nd(rng);
        d.x(i, 0) = x1;
        d.x(i, 1) = x2;
        d.a(i) = a;
        d.y(i) = 3.0 + 5.0 * a + x1 * x1 * x1 + opt.noise_sd * e;
    }
    d.v = d.x;
    s.latent.resize(n, 0);
    s.unit_effects = VectorXd::Constant(n, 5.0);
    s.true_ate = 5.0;
    return s;
}

SimData gen_kang_schafer(Index n, Rng& rng) {
    std::normal_distribution<double> nd;
    std::uniform_real_distribution<double> ud;
    SimData s;
    Dataset& d = s.data;
    d.y.resize(n);
    d.a.resize(n);
    d.x.resize(n, 4);
    s.latent.resize(n, 4);
    for (Index i = 0; i < n; ++i) {
        const double z1 = nd(rng), z2 = nd(rng), z3 = nd(rng), z4 = nd(rng);
        const double p = logistic(-z1 + 0.5 * z2 - 0.25 * z3 - 0.1 * z4);
        const double a = ud(rng) < p ? 1.0 : 0.0;
        const double e = nd(rng);
        d.a(i) = a;
        d.y(i) = 210.0 + 5.0 * a + 27.4 * z1 + 13.7 * (z2 + z3 + z4) + e;
        d.x(i, 0) = std::exp(z1 / 2.0);
        d.x(i, 1) = z2 / (1.0 + std::exp(z1)) + 10.0;
        d.x(i, 2) = std::pow(z1 * z3 / 25.0 + 0.6, 3);
        d.x(i, 3) = std::pow(z2 + z4 + 20.0, 2);
        s.latent.row(i) << z1, z2, z3, z4;
    }
    d.v = d.x;
    s.unit_effects = VectorXd::Constant(n, 5.0);
    s.true_ate = 5.0;
    return s;
}

void StudySpec::apply_desk_scale() {
    n_replicates = 50;
    mcmc.n_burnin = 2000;
    mcmc.n_keep = 2000;
}

void StudySpec::validate() const {
    if (study == Study::SingleCovariate && !gammas) {
        (void)study1_setting(setting);
    }
    if (n < 10) {
        throw ConfigError("n must be at least 10");
    }
    if (n_replicates < 1) {
        throw ConfigError("n_replicates must be positive");
    }
    if (threads < 0) {
        throw ConfigError("threads must be non-negative");
    }
    for (double c : calipers) {
        if (!(c > 0.0) || !std::isfinite(c)) {
            throw ConfigError("calipers must be positive");
        }
    }
    try {
        mcmc.validate();
        prior.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    for (const auto& e : estimators) {
        if (!known_estimator(*this, e)) {
            throw ConfigError("estimator '" + e + "' is not available for study " + study_name(study));
        }
    }
}

std::vector<double> default_calipers() {
    std::vector<double> c;
    for (int k = 5; k <= 40; ++k) {
        c.push_back(0.025 * k);
    }
    return c;
}

std::string md_name(double caliper) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "MD_%.3f", caliper);
    return buf;
}

std::vector<std::string> default_estimators(const StudySpec& spec) {
    switch (spec.study) {
        case Study::SingleCovariate:
            return {"Gold", "GPMatch", "QNT_PS", "LM", "AIPTW1", "AIPTW2", "LM_PS1", "LM_PS2", "LM_sp(PS1)",
                    "LM_sp(PS2)"};
        case Study::MdComparison: {
            std::vector<std::string> out{"Gold", "GPMatch"};
            for (double c : spec.calipers.empty() ? default_calipers() : spec.calipers) {
                out.push_back(md_name(c));
            }
            return out;
        }
        case Study::KangSchafer:
            return {"Gold", "GPMatch1", "GPMatch2", "QNT_PS", "LM", "AIPTW", "LM_PS", "LM_sp(PS)"};
    }
    return {};
}

Metrics aggregate(const std::vector<ReplicateRecord>& rows) {
    Metrics m;
    std::vector<double> err, abs_err, est;
    double se_sum = 0.0, covered = 0.0;
    for (const auto& r : rows) {
        if (r.failed) {
            ++m.n_failed;
            continue;
        }
        const double e = r.estimate - r.true_ate;
        err.push_back(e);
        abs_err.push_back(std::abs(e));
        est.push_back(r.estimate);
        se_sum += r.se;
        if (r.ci_low <= r.true_ate && r.true_ate <= r.ci_high) {
            covered += 1.0;
        }
    }
    m.n_ok = static_cast<Index>(err.size());
    if (m.n_ok == 0) {
        const double nan = std::numeric_limits<double>::quiet_NaN();
        m.rmse = m.mae = m.bias = m.rc = m.se_avg = m.mean_estimate = m.err_q05 = m.err_q95 = nan;
        return m;
    }
    const double n = static_cast<double>(m.n_ok);
    double sq = 0.0, sum = 0.0, est_sum = 0.0;
    for (std::size_t i = 0; i < err.size(); ++i) {
        sq += err[i] * err[i];
        sum += err[i];
        est_sum += est[i];
    }
    m.rmse = std::sqrt(sq / n);
    m.bias = sum / n;
    m.mae = quantile(abs_err, 0.5);
    m.rc = covered / n;
    m.se_avg = se_sum / n;
    m.mean_estimate = est_sum / n;
    if (m.n_ok > 1) {
        double ss = 0.0;
        for (double v : est) {
            ss += (v - m.mean_estimate) * (v - m.mean_estimate);
        }
        m.se_emp = std::sqrt(ss / (n - 1.0));
    }
    m.err_q05 = quantile(err, 0.05);
    m.err_q95 = quantile(err, 0.95);
    return m;
}

const Metrics& StudyResult::metric(const std::string& estimator) const {
    for (std::size_t i = 0; i < estimators.size(); ++i) {
        if (estimators[i] == estimator) {
            return metrics[i];
        }
    }
    throw std::out_of_range("no estimator '" + estimator + "' in result");
}

std::uint64_t replicate_seed(const StudySpec& spec, Index replicate) {
    return derive_seed(spec.seed, {hash_name(study_name(spec.study)), setting_key(spec),
                                   static_cast<std::uint64_t>(spec.n), static_cast<std::uint64_t>(replicate)});
}

SimData generate(const StudySpec& spec, Index replicate) {
    Rng rng(replicate_seed(spec, replicate));
    switch (spec.study) {
        case Study::SingleCovariate:
            return gen_study1(spec.n, spec.gammas ? *spec.gammas : study1_setting(spec.setting), rng);
        case Study::MdComparison:
            return gen_study2(spec.n, rng);
        case Study::KangSchafer:
            return gen_kang_schafer(spec.n, rng);
    }
    throw ConfigError("unknown study");
}

std::vector<ReplicateRecord> run_replicate(const StudySpec& spec, Index replicate) {
    Replicate rep;
    rep.seed = replicate_seed(spec, replicate);
    rep.sim = generate(spec, replicate);
    const std::vector<std::string> names = spec.estimators.empty() ? default_estimators(spec) : spec.estimators;
    std::vector<ReplicateRecord> out;
    out.reserve(names.size());
    for (const auto& name : names) {
        ReplicateRecord rec;
        try {
            rec = run_one(spec, rep, name);
            if (!std::isfinite(rec.estimate)) {
                throw NumericalError("non-finite estimate");
            }
        } catch (const std::exception& e) {
            rec = ReplicateRecord{};
            rec.failed = true;
            rec.error = e.what();
            rec.estimate = rec.se = rec.ci_low = rec.ci_high = std::numeric_limits<double>::quiet_NaN();
        }
        rec.replicate = replicate;
        rec.estimator = name;
        rec.true_ate = rep.sim.true_ate;
        out.push_back(std::move(rec));
    }
    return out;
}

int resolve_threads(int requested) {
    if (requested > 0) {
        return requested;
    }
    if (const char* env = std::getenv("GPMATCH_THREADS")) {
        char* end = nullptr;
        const long v = std::strtol(env, &end, 10);
        if (end != env && *end == '\0' && v > 0) {
            return static_cast<int>(std::min<long>(v, 256));
        }
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
}

StudyResult run_study(const StudySpec& spec, const Progress& progress) {
    spec.validate();
    StudyResult res;
    res.spec = spec;
    res.estimators = spec.estimators.empty() ? default_estimators(spec) : spec.estimators;

    const Index total = spec.n_replicates;
    std::vector<std::vector<ReplicateRecord>> slots(static_cast<std::size_t>(total));
    std::atomic<Index> next{0};
    std::atomic<Index> done{0};
    std::mutex progress_mutex;
    std::exception_ptr fatal;
    std::mutex fatal_mutex;

    auto worker = [&] {
        for (;;) {
            const Index r = next.fetch_add(1);
            if (r >= total) {
                return;
            }
            try {
                slots[static_cast<std::size_t>(r)] = run_replicate(spec, r);
            } catch (...) {
                std::lock_guard<std::mutex> lock(fatal_mutex);
                if (!fatal) {
                    fatal = std::current_exception();
                }
                next.store(total);
                return;
            }
            const Index d = ++done;
            if (progress) {
                std::lock_guard<std::mutex> lock(progress_mutex);
                progress(d, total);
            }
        }
    };

    const int n_threads = static_cast<int>(std::min<Index>(resolve_threads(spec.threads), total));
    if (n_threads <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(static_cast<std::size_t>(n_threads));
        for (int t = 0; t < n_threads; ++t) {
            pool.emplace_back(worker);
        }
        for (auto& t : pool) {
            t.join();
        }
    }
    if (fatal) {
        std::rethrow_exception(fatal);
    }

    for (auto& slot : slots) {
        for (auto& rec : slot) {
            res.records.push_back(std::move(rec));
        }
    }
    for (const auto& name : res.estimators) {
        std::vector<ReplicateRecord> rows;
        for (const auto& r : res.records) {
            if (r.estimator == name) {
                rows.push_back(r);
            }
        }
        res.metrics.push_back(aggregate(rows));
    }
    return res;
}

}  // namespace gpmatch::sim
