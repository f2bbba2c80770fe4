#include "gpmatch/errors.hpp"
#include "gpmatch/matched.hpp"

#include "../support/oracles.hpp"

#include <doctest.h>

#include <cmath>

using namespace gpmatch;

namespace {

double arm_mean(const VectorXd& y, const VectorXd& a, double arm) {
    double s = 0.0, c = 0.0;
    for (Index i = 0; i < y.size(); ++i) {
        if (a(i) == arm) {
            s += y(i);
            c += 1.0;
        }
    }
    return s / c;
}

}  // namespace

TEST_CASE("gls_estimate with identity and scaled identity covariance") {
    VectorXd y(6), a(6);
    y << 1.0, 2.0, 4.0, 3.5, 7.0, 0.5;
    a << 0, 0, 1, 1, 1, 0;
    const GlsFit f1 = gls_estimate(y, a, MatrixXd::Identity(6, 6));
    CHECK(f1.tau_hat == doctest::Approx(arm_mean(y, a, 1) - arm_mean(y, a, 0)).epsilon(1e-12));
    CHECK(f1.mu_hat == doctest::Approx(arm_mean(y, a, 0)).epsilon(1e-12));
    const GlsFit f2 = gls_estimate(y, a, 2.0 * MatrixXd::Identity(6, 6));
    CHECK(std::abs(f2.tau_hat - f1.tau_hat) < 1e-12);
    CHECK(std::abs(f2.mu_hat - f1.mu_hat) < 1e-12);
    CHECK_THROWS_AS(gls_estimate(y, VectorXd::Ones(6), MatrixXd::Identity(6, 6)), DataError);
}

TEST_CASE("gls_estimate matches a dense oracle and is scale invariant") {
    Rng rng(17);
    for (int rep = 0; rep < 10; ++rep) {
        const MatrixXd m = oracle::normal_matrix(8, 8, rng);
        const MatrixXd sigma = m * m.transpose() + 0.3 * MatrixXd::Identity(8, 8);
        VectorXd a(8);
        a << 0, 1, 0, 1, 1, 0, 0, 1;
        const VectorXd y = oracle::normal_matrix(8, 1, rng).col(0);
        const auto [mu, tau] = oracle::dense_gls(y, a, sigma);
        const GlsFit f = gls_estimate(y, a, sigma);
        CHECK(std::abs(f.tau_hat - tau) < 1e-10);
        CHECK(std::abs(f.mu_hat - mu) < 1e-10);
        const GlsFit g = gls_estimate(y, a, 7.5 * sigma);
        CHECK(std::abs(g.tau_hat - f.tau_hat) < 1e-10);
    }
}

TEST_CASE("matched twins give the difference in means") {
    std::vector<long long> labels;
    VectorXd y(10), a(10);
    Rng rng(5);
    std::normal_distribution<double> nd;
    for (Index i = 0; i < 10; ++i) {
        labels.push_back(i / 2);
        a(i) = static_cast<double>(i % 2);
        y(i) = nd(rng) + 3.0 * a(i);
    }
    const auto ms = MatchingStructure::from_labels(labels, a);
    for (double s02 : {0.0, 0.3, 5.0}) {
        const GlsEstimate e = weighted_sum_estimate(y, a, ms, s02);
        CHECK(e.tau_hat == doctest::Approx(arm_mean(y, a, 1) - arm_mean(y, a, 0)).epsilon(1e-12));
    }
}

TEST_CASE("weighted sum equals dense GLS on random structures") {
    Rng rng(2024);
    std::uniform_int_distribution<int> size(4, 30);
    for (int rep = 0; rep < 50; ++rep) {
        const auto s = oracle::random_structure(size(rng), rng);
        for (double s02 : {0.5, 2.0, 0.7}) {
            const GlsEstimate e = weighted_sum_estimate(s.y, s.a, s.ms, s02);
            const auto [mu, tau] = oracle::dense_gls(s.y, s.a, block_covariance(s.ms, s02));
            CHECK(std::abs(e.tau_hat - tau) < 1e-8);
            CHECK(std::abs(e.mu_hat - mu) < 1e-8);
            CHECK(std::abs(e.tau_hat - (e.lambda * e.tau1_hat + (1.0 - e.lambda) * e.tau0_hat)) < 1e-10);
            CHECK(e.lambda >= 0.0);
            CHECK(e.lambda <= 1.0);
        }
        const GlsEstimate z = weighted_sum_estimate(s.y, s.a, s.ms, 0.0);
        CHECK(z.lambda == 1.0);
        CHECK(std::abs(z.tau_hat - oracle::block_fixed_effects(s.y, s.a, s.ms)) < 1e-8);
    }
}

TEST_CASE("blocks without both arms trigger the tau0 path") {
    std::vector<long long> labels{1, 1, 2, 2};
    VectorXd a(4), y(4);
    a << 1, 1, 0, 0;
    y << 5, 6, 1, 2;
    const auto ms = MatchingStructure::from_labels(labels, a);
    const GlsEstimate e = weighted_sum_estimate(y, a, ms, 1.0);
    CHECK(std::isnan(e.tau1_hat));
    CHECK(e.tau_hat == e.tau0_hat);
    CHECK_FALSE(e.warnings.empty());
    const auto [mu, tau] = oracle::dense_gls(y, a, block_covariance(ms, 1.0));
    CHECK(std::abs(e.tau_hat - tau) < 1e-10);
}

TEST_CASE("stratified lambda") {
    std::vector<long long> labels{0, 0, 0, 0, 1, 1, 1, 1};
    VectorXd a(8);
    a << 1, 1, 0, 0, 1, 1, 0, 0;
    const auto ms = MatchingStructure::from_labels(labels, a);
    CHECK(stratified_lambda(ms, 0.0) == 1.0);
    CHECK(stratified_lambda(ms, 1.0) == doctest::Approx(0.8));
    CHECK(stratified_lambda(ms, std::numeric_limits<double>::infinity()) == 0.0);
    CHECK(stratified_lambda(ms, 1e12) < 1e-10);
    double prev = 1.0;
    for (double s = 0.1; s < 50.0; s *= 1.5) {
        const double l = stratified_lambda(ms, s);
        CHECK(l < prev);
        prev = l;
    }
}

TEST_CASE("equal strata: sigma0 -> 0 limit and shrinkage direction") {
    Rng rng(8);
    std::normal_distribution<double> nd;
    std::vector<long long> labels;
    VectorXd a(24), y(24);
    for (Index i = 0; i < 24; ++i) {
        labels.push_back(i / 6);
        a(i) = (i % 6) < 2 + (i / 6) % 3 ? 1.0 : 0.0;
        y(i) = 2.0 * (i / 6) + a(i) + nd(rng);
    }
    const auto ms = MatchingStructure::from_labels(labels, a);
    double num = 0.0, den = 0.0;
    for (Index l = 0; l < ms.n_blocks(); ++l) {
        double s1 = 0, s0 = 0;
        for (Index i = 0; i < 24; ++i) {
            if (ms.block_of[static_cast<std::size_t>(i)] == l) {
                (a(i) == 1.0 ? s1 : s0) += y(i);
            }
        }
        const double n1 = static_cast<double>(ms.n_treated[static_cast<std::size_t>(l)]);
        const double n0 = static_cast<double>(ms.n_control[static_cast<std::size_t>(l)]);
        num += n1 * n0 * (s1 / n1 - s0 / n0);
        den += n1 * n0;
    }
    const GlsEstimate tiny = weighted_sum_estimate(y, a, ms, 1e-9);
    CHECK(tiny.lambda == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(tiny.tau_hat == doctest::Approx(num / den).epsilon(1e-6));

    double prev = INFINITY;
    for (double s = 0.01; s < 100.0; s *= 2.0) {
        const GlsEstimate e = weighted_sum_estimate(y, a, ms, s);
        const double gap = std::abs(e.tau_hat - e.tau0_hat);
        CHECK(gap <= prev + 1e-12);
        prev = gap;
    }
}

TEST_CASE("from_labels maps labels to contiguous ids") {
    std::vector<long long> labels{42, -3, 42, 7};
    VectorXd a(4);
    a << 1, 0, 0, 1;
    const auto ms = MatchingStructure::from_labels(labels, a);
    CHECK(ms.n_blocks() == 3);
    CHECK(ms.block_of == std::vector<Index>{2, 0, 2, 1});
    CHECK(ms.n_block == std::vector<Index>{1, 1, 2});
    CHECK(ms.n_treated == std::vector<Index>{0, 1, 1});
    a(2) = 3.0;
    CHECK_THROWS_AS(MatchingStructure::from_labels(labels, a), DataError);
}
