#include "gpmatch/baselines.hpp"
#include "gpmatch/errors.hpp"
#include "gpmatch/sampler.hpp"

#include "../support/oracles.hpp"

#include <doctest.h>

#include <cmath>

using namespace gpmatch;
using namespace gpmatch::baselines;

namespace {

double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

struct KsDraw {
    MatrixXd z;
    MatrixXd x;
    VectorXd a;
    VectorXd y;
};

// Latent-normal design with a known logistic assignment and a linear outcome.
KsDraw ks_like(Index n, std::uint64_t seed) {
    Rng rng(seed);
    KsDraw d;
    d.z = oracle::normal_matrix(n, 4, rng);
    d.x.resize(n, 4);
    d.a.resize(n);
    d.y.resize(n);
    std::uniform_real_distribution<double> u;
    std::normal_distribution<double> nd;
    for (Index i = 0; i < n; ++i) {
        const auto z = d.z.row(i);
        d.x(i, 0) = std::exp(z(0) / 2.0);
        d.x(i, 1) = z(1) / (1.0 + std::exp(z(0))) + 10.0;
        d.x(i, 2) = std::pow(z(0) * z(2) / 25.0 + 0.6, 3);
        d.x(i, 3) = std::pow(z(1) + z(3) + 20.0, 2);
        const double pi = logistic(-z(0) + 0.5 * z(1) - 0.25 * z(2) - 0.1 * z(3));
        d.a(i) = u(rng) < pi ? 1.0 : 0.0;
        d.y(i) = 210.0 + 5.0 * d.a(i) + 27.4 * z(0) + 13.7 * (z(1) + z(2) + z(3)) + nd(rng);
    }
    return d;
}

MatrixXd with_intercept(const MatrixXd& x) {
    MatrixXd d(x.rows(), x.cols() + 1);
    d.col(0).setOnes();
    d.rightCols(x.cols()) = x;
    return d;
}

}  // namespace

TEST_CASE("ols exact line and hand-computed normal equations") {
    VectorXd x = VectorXd::LinSpaced(6, -1.0, 4.0);
    MatrixXd d(6, 2);
    d.col(0).setOnes();
    d.col(1) = x;
    const VectorXd y = (3.0 + 2.0 * x.array()).matrix();
    const OlsFit f = ols(y, d);
    CHECK(f.coef(0) == doctest::Approx(3.0).epsilon(1e-12));
    CHECK(f.coef(1) == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(f.sigma2 < 1e-25);

    // points (0,1), (1,2), (2,4): slope 1.5, intercept 5/6, RSS 1/6 on 1 df
    MatrixXd h(3, 2);
    h << 1, 0, 1, 1, 1, 2;
    VectorXd hy(3);
    hy << 1, 2, 4;
    const OlsFit g = ols(hy, h);
    CHECK(g.coef(0) == doctest::Approx(5.0 / 6.0));
    CHECK(g.coef(1) == doctest::Approx(1.5));
    CHECK(g.sigma2 == doctest::Approx(1.0 / 6.0));
    // (X'X)^{-1} = [[5, -3], [-3, 3]] / 6
    CHECK(g.cov(0, 0) == doctest::Approx(5.0 / 36.0));
    CHECK(g.cov(0, 1) == doctest::Approx(-3.0 / 36.0));
    CHECK(g.cov(1, 1) == doctest::Approx(3.0 / 36.0));
}

TEST_CASE("ols reports dependent columns") {
    MatrixXd d(5, 3);
    d << 1, 2, 2,
         1, 3, 3,
         1, 5, 5,
         1, 7, 7,
         1, 1, 1;
    try {
        ols(VectorXd::Ones(5), d);
        FAIL("expected DataError");
    } catch (const DataError& e) {
        CHECK(std::string(e.what()).find("dependent columns: 2") != std::string::npos);
    }
    CHECK(dependent_columns(d) == std::vector<Index>{2});
}

TEST_CASE("logistic_ps with an uninformative covariate") {
    Rng rng(1);
    const Index n = 4000;
    const MatrixXd x = oracle::normal_matrix(n, 1, rng);
    VectorXd a(n);
    std::bernoulli_distribution coin(0.5);
    for (Index i = 0; i < n; ++i) {
        a(i) = coin(rng) ? 1.0 : 0.0;
    }
    const PropensityFit f = logistic_ps(a, x);
    CHECK(f.converged);
    const double pbar = a.mean();
    CHECK(std::abs(f.coef(0) - std::log(pbar / (1.0 - pbar))) < 0.1);
    CHECK(std::abs(f.coef(1)) < 0.1);
    for (Index i = 0; i < n; ++i) {
        CHECK(f.ps(i) == logistic(f.linear_predictor(i)));
    }
}

TEST_CASE("logistic_ps recovers the latent assignment model") {
    const KsDraw d = ks_like(2000, 7);
    const PropensityFit f = logistic_ps(d.a, d.z);
    REQUIRE(f.converged);
    // score equations on the original covariates
    const VectorXd score = with_intercept(d.z).transpose() * (d.a - f.ps);
    CHECK(score.cwiseAbs().maxCoeff() < 1e-6);
    // standard errors from the observed information
    const MatrixXd xd = with_intercept(d.z);
    const VectorXd w = (f.ps.array() * (1.0 - f.ps.array())).matrix();
    const MatrixXd cov = (xd.transpose() * w.asDiagonal() * xd).inverse();
    const double truth[5] = {0.0, -1.0, 0.5, -0.25, -0.1};
    for (Index j = 0; j < 5; ++j) {
        CHECK(std::abs(f.coef(j) - truth[j]) < 3.0 * std::sqrt(cov(j, j)));
    }
}

TEST_CASE("logistic_ps flags separation") {
    VectorXd a(8);
    a << 0, 0, 0, 0, 1, 1, 1, 1;
    MatrixXd x(8, 1);
    x << -4, -3, -2, -1, 1, 2, 3, 4;
    const PropensityFit f = logistic_ps(a, x);
    CHECK_FALSE(f.converged);
    CHECK(f.separated);
    CHECK(f.coef.allFinite());
    CHECK(f.linear_predictor.cwiseAbs().maxCoeff() <= 30.0 + 1e-9);
    CHECK_THROWS_AS(logistic_ps(VectorXd::Ones(8), x), DataError);
}

TEST_CASE("qnt_ps special cases") {
    VectorXd y(6), a(6);
    y << 1, 2, 3, 6, 7, 9;
    a << 0, 0, 0, 1, 1, 1;
    const EstimatorResult one = qnt_ps(y, a, VectorXd::Constant(6, 0.4));
    CHECK(one.ate == doctest::Approx(22.0 / 3.0 - 2.0).epsilon(1e-14));
    CHECK(one.extras.at("strata") == 1.0);
    CHECK(one.ci_low <= one.ci_high);

    // two strata by hand: 10 low-PS units then 10 high-PS units
    VectorXd y2(20), a2(20), ps(20);
    for (Index i = 0; i < 20; ++i) {
        ps(i) = i < 10 ? 0.2 : 0.8;
        a2(i) = i % 2;
        y2(i) = (i < 10 ? 1.0 : 5.0) + (i < 10 ? 2.0 : 4.0) * a2(i) + 0.01 * i;
    }
    const EstimatorResult two = qnt_ps(y2, a2, ps);
    CHECK(two.extras.at("strata") == 2.0);
    CHECK(two.ate == doctest::Approx(0.5 * (2.0 + 0.01) + 0.5 * (4.0 + 0.01)).epsilon(1e-12));
}

TEST_CASE("qnt_ps drops single-arm strata") {
    VectorXd y(10), a(10), ps(10);
    for (Index i = 0; i < 10; ++i) {
        ps(i) = 0.1 * i;
        a(i) = i >= 8 ? 1.0 : static_cast<double>(i % 2);
        y(i) = a(i);
    }
    a(0) = 0;
    a(1) = 0;
    const EstimatorResult r = qnt_ps(y, a, ps);
    CHECK(r.extras.at("strata_dropped") >= 1.0);
    CHECK_FALSE(r.warnings.empty());

    VectorXd sorted_a(4);
    sorted_a << 0, 0, 1, 1;
    VectorXd sps(4);
    sps << 0.1, 0.2, 0.8, 0.9;
    // quintile boundaries split the arms completely
    VectorXd y4(4);
    y4 << 1, 2, 3, 4;
    CHECK_THROWS_AS(qnt_ps(y4, sorted_a, sps), DataError);
}

TEST_CASE("qnt_ps under randomization approaches the naive difference") {
    Rng rng(3);
    const Index n = 5000;
    std::normal_distribution<double> nd;
    std::bernoulli_distribution coin(0.5);
    VectorXd y(n), a(n), ps(n);
    for (Index i = 0; i < n; ++i) {
        a(i) = coin(rng) ? 1.0 : 0.0;
        ps(i) = 0.5 + 0.01 * nd(rng);
        y(i) = 1.0 + 2.0 * a(i) + nd(rng);
    }
    const double naive = a.dot(y) / a.sum() - (VectorXd::Ones(n) - a).dot(y) / (n - a.sum());
    const EstimatorResult r = qnt_ps(y, a, ps);
    CHECK(std::abs(r.ate - naive) < 3.0 * r.se);
}

TEST_CASE("aiptw reduces to Horvitz-Thompson") {
    VectorXd y(4), a(4);
    y << 1, 3, 2, 6;
    a << 0, 0, 1, 1;
    const VectorXd e = VectorXd::Constant(4, 0.5);
    const EstimatorResult r = aiptw(y, a, e, VectorXd::Zero(4), VectorXd::Zero(4));
    // mean(a y / 0.5) - mean((1-a) y / 0.5)
    CHECK(r.ate == doctest::Approx((2.0 + 6.0) / 2.0 - (1.0 + 3.0) / 2.0));
    CHECK(r.ci_low < r.ate);
    VectorXd bad = e;
    bad(1) = std::nan("");
    CHECK_THROWS_AS(aiptw(y, a, bad, VectorXd::Zero(4), VectorXd::Zero(4)), DataError);
}

TEST_CASE("aiptw is doubly robust") {
    const KsDraw d = ks_like(5000, 21);
    const Index n = d.y.size();
    // correct outcome model (on z) with a useless propensity
    const OutcomeFits good = arm_outcome_fits(d.y, d.a, d.z);
    const EstimatorResult r1 = aiptw(d.y, d.a, VectorXd::Constant(n, 0.5), good.m1, good.m0);
    CHECK(std::abs(r1.ate - 5.0) < 3.0 * r1.se);
    // correct propensity with a misspecified (intercept-only) outcome model
    const PropensityFit ps = logistic_ps(d.a, d.z);
    const OutcomeFits bad = arm_outcome_fits(d.y, d.a, MatrixXd(n, 0));
    const EstimatorResult r2 = aiptw(d.y, d.a, ps.ps, bad.m1, bad.m0);
    CHECK(std::abs(r2.ate - 5.0) < 3.0 * r2.se);
}

TEST_CASE("aiptw ignores an outcome shift absorbed by the outcome models") {
    const KsDraw d = ks_like(500, 5);
    const PropensityFit ps = logistic_ps(d.a, d.x);
    const OutcomeFits m = arm_outcome_fits(d.y, d.a, d.x);
    const VectorXd shifted = (d.y.array() + 123.0).matrix();
    const OutcomeFits ms = arm_outcome_fits(shifted, d.a, d.x);
    const EstimatorResult r = aiptw(d.y, d.a, ps.ps, m.m1, m.m0);
    const EstimatorResult s = aiptw(shifted, d.a, ps.ps, ms.m1, ms.m0);
    CHECK(std::abs(r.ate - s.ate) < 1e-10);
}

TEST_CASE("lm_ps") {
    VectorXd y(6), a(6);
    y << 1, 2, 3, 6, 7, 9;
    a << 0, 0, 0, 1, 1, 1;
    const EstimatorResult c = lm_ps(y, a, VectorXd::Constant(6, 0.3), PsAdjustment::Linear);
    CHECK(c.ate == doctest::Approx(22.0 / 3.0 - 2.0));
    CHECK_FALSE(c.warnings.empty());

    Rng rng(2);
    std::uniform_real_distribution<double> u(0.1, 0.9);
    VectorXd ps(40), a2(40);
    for (Index i = 0; i < 40; ++i) {
        ps(i) = u(rng);
        a2(i) = i % 2;
    }
    const VectorXd y2 = a2 + ps;
    CHECK(lm_ps(y2, a2, ps, PsAdjustment::Linear).ate == doctest::Approx(1.0).epsilon(1e-10));
    const EstimatorResult sp = lm_ps(y2, a2, ps, PsAdjustment::CubicBSpline);
    CHECK(sp.ate == doctest::Approx(1.0).epsilon(1e-8));
    CHECK(sp.extras.at("basis_columns") == 7.0);
}

TEST_CASE("cubic B-spline basis is a partition of unity") {
    Rng rng(6);
    std::uniform_real_distribution<double> u;
    VectorXd x(50);
    for (Index i = 0; i < 50; ++i) {
        x(i) = u(rng);
    }
    std::vector<double> values(x.data(), x.data() + 50);
    std::vector<double> knots;
    for (int k = 1; k <= 4; ++k) {
        knots.push_back(quantile(values, k / 5.0));
    }
    const MatrixXd b = bspline_basis(x, knots, x.minCoeff(), x.maxCoeff());
    CHECK(b.cols() == 8);
    CHECK((b.rowwise().sum().array() - 1.0).abs().maxCoeff() < 1e-10);
    CHECK((b.array() >= -1e-15).all());
    CHECK_THROWS_AS(bspline_basis(x, knots, 0.5, 0.5), std::invalid_argument);
}

TEST_CASE("md_match exact duplicates") {
    MatrixXd x(6, 2);
    x << 0, 1,
         2, 0,
         4, 5,
         0, 1,
         2, 0,
         4, 5;
    VectorXd a(6), y(6);
    a << 1, 1, 1, 0, 0, 0;
    y << 5, 7, 9, 1, 2, 3;
    const EstimatorResult r = md_match(y, a, x, 1e-6);
    CHECK(r.n_dropped == 0);
    CHECK(r.ate == doctest::Approx((4.0 + 5.0 + 6.0) / 3.0));
}

TEST_CASE("md_match drops a minority class without same-class controls") {
    // binary covariate; treated units with x2 = 1 have no control partner with x2 = 1
    const Index n = 40;
    Rng rng(12);
    std::normal_distribution<double> nd;
    MatrixXd x(n, 2);
    VectorXd a(n), y(n);
    Index minority_treated = 0;
    for (Index i = 0; i < n; ++i) {
        a(i) = i < 20 ? 1.0 : 0.0;
        x(i, 0) = nd(rng);
        x(i, 1) = (i < 4) ? 1.0 : 0.0;
        minority_treated += i < 4 ? 1 : 0;
        y(i) = x(i, 0) + a(i);
    }
    const double sd1 = std::sqrt(4.0 * 36.0 / 40.0 / 39.0);
    const EstimatorResult tight = md_match(y, a, x, 0.9 / sd1);
    CHECK(tight.n_dropped >= minority_treated);
    Index prev = n;
    for (double c = 0.125; c <= 1.0 + 1e-12; c += 0.025) {
        const EstimatorResult r = md_match(y, a, x, c);
        CHECK(r.n_dropped <= prev);
        CHECK(r.n_dropped >= 0);
        CHECK(r.n_dropped <= 20);
        prev = r.n_dropped;
    }
}

TEST_CASE("md_match errors") {
    MatrixXd x(4, 1);
    x << 0, 0.1, 10, 10.1;
    VectorXd a(4), y(4);
    a << 1, 1, 0, 0;
    y << 1, 2, 3, 4;
    CHECK_THROWS_AS(md_match(y, a, x, 0.01), DataError);
    CHECK_THROWS_AS(md_match(y, a, x, -1.0), std::invalid_argument);
    MatrixXd coll(4, 2);
    coll.col(0) = x.col(0);
    coll.col(1) = 2.0 * x.col(0);
    CHECK_THROWS_AS(md_match(y, a, coll, 1.0), DataError);
}
