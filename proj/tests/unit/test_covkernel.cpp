#include "gpmatch/covkernel.hpp"
#include "gpmatch/errors.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace gpmatch;

namespace {

KernelParams make_params(double sf2, std::initializer_list<double> phi, double s02) {
    KernelParams p;
    p.sigma_f2 = sf2;
    p.phi.resize(static_cast<Index>(phi.size()));
    Index k = 0;
    for (double v : phi) {
        p.phi(k++) = v;
    }
    p.sigma_02 = s02;
    return p;
}

MatrixXd random_matrix(Index r, Index c, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd;
    MatrixXd m(r, c);
    for (Index j = 0; j < c; ++j) {
        for (Index i = 0; i < r; ++i) {
            m(i, j) = nd(rng);
        }
    }
    return m;
}

// Scalar loop used as an oracle for the vectorized construction.
double loop_kernel(const MatrixXd& v, Index i, Index j, const KernelParams& p) {
    double s = 0.0;
    for (Index k = 0; k < v.cols(); ++k) {
        s += std::pow(v(i, k) - v(j, k), 2) / p.phi(k);
    }
    return p.sigma_f2 * std::exp(-s);
}

}  // namespace

TEST_CASE("se_kernel hand values") {
    VectorXd a(1), b(1);
    a << 0.0;
    b << 1.0;
    CHECK(se_kernel(a, a, make_params(1.0, {1.0}, 0.0)) == doctest::Approx(1.0));
    CHECK(se_kernel(a, b, make_params(1.0, {1.0}, 0.0)) == doctest::Approx(0.36787944117144233).epsilon(1e-14));

    VectorXd c(2), d(2);
    c << 1.0, 2.0;
    d << 3.0, 5.0;
    CHECK(se_kernel(c, d, make_params(2.0, {2.0, 9.0}, 0.0)) ==
          doctest::Approx(2.0 * std::exp(-3.0)).epsilon(1e-14));
}

TEST_CASE("se_kernel rejects mismatched dimensions") {
    VectorXd a(2), b(2);
    a << 0, 0;
    b << 1, 1;
    CHECK_THROWS_AS(se_kernel(a, b, make_params(1.0, {1.0}, 0.0)), std::invalid_argument);
}

TEST_CASE("se_kernel symmetry, diagonal and monotonicity") {
    const MatrixXd v = random_matrix(30, 3, 7);
    const KernelParams p = make_params(1.7, {0.5, 2.0, 3.0}, 0.1);
    for (Index i = 0; i < v.rows(); ++i) {
        CHECK(se_kernel(v.row(i).transpose(), v.row(i).transpose(), p) == 1.7);
        for (Index j = 0; j < i; ++j) {
            const double kij = se_kernel(v.row(i).transpose(), v.row(j).transpose(), p);
            CHECK(kij == se_kernel(v.row(j).transpose(), v.row(i).transpose(), p));
            CHECK(kij >= 0.0);
            CHECK(kij <= 1.7);
        }
    }
    VectorXd x = VectorXd::Zero(3);
    VectorXd y = VectorXd::Zero(3);
    double prev = se_kernel(x, y, p);
    for (int s = 1; s <= 20; ++s) {
        y(1) = 0.1 * s;
        const double cur = se_kernel(x, y, p);
        CHECK(cur < prev);
        prev = cur;
    }
}

TEST_CASE("build_covariance matches a double loop") {
    KernelParams p = make_params(1.0, {1.0}, 0.5);
    MatrixXd one(1, 1);
    one << 3.0;
    const MatrixXd s1 = build_covariance(one, p);
    CHECK(s1.rows() == 1);
    CHECK(s1(0, 0) == doctest::Approx(1.5));

    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        const Index n = 5 + static_cast<Index>(seed) * 3;
        const MatrixXd v = random_matrix(n, 2, seed);
        const KernelParams q = make_params(0.8, {0.7, 1.9}, 0.3);
        const MatrixXd s = build_covariance(v, q);
        double err = 0.0;
        for (Index i = 0; i < n; ++i) {
            for (Index j = 0; j < n; ++j) {
                const double oracle = loop_kernel(v, i, j, q) + (i == j ? 0.3 : 0.0);
                err = std::max(err, std::abs(s(i, j) - oracle));
            }
        }
        CHECK(err < 1e-12);
    }
}

TEST_CASE("build_covariance rejects non-finite covariates") {
    MatrixXd v(2, 1);
    v << 0.0, std::nan("");
    CHECK_THROWS_AS(build_covariance(v, make_params(1.0, {1.0}, 0.1)), DataError);
}

TEST_CASE("duplicate rows factor after jitter") {
    MatrixXd v(2, 1);
    v << 0.4, 0.4;
    const MatrixXd s = build_covariance(v, make_params(1.0, {1.0}, 0.0));
    CHECK(s(0, 1) == 1.0);
    CholeskyFactor f(s);
    CHECK(f.jitter() > 0.0);
    CHECK(f.jitter() <= 1e-6);
}

TEST_CASE("Cholesky failure reports jitter levels") {
    MatrixXd bad(2, 2);
    bad << 1.0, 0.0, 0.0, -1.0;
    try {
        CholeskyFactor f(bad);
        FAIL("expected NumericalError");
    } catch (const NumericalError& e) {
        CHECK(e.jitter_levels().size() == 5);
        CHECK(e.jitter_levels().front() == 1e-10);
        CHECK(e.jitter_levels().back() == 1e-6);
    }
    CHECK_FALSE(CholeskyFactor::try_factor(bad).has_value());
}

TEST_CASE("chol_solve") {
    const MatrixXd b = random_matrix(3, 2, 3);
    CHECK((chol_solve(MatrixXd::Identity(3, 3), b) - b).cwiseAbs().maxCoeff() < 1e-15);

    MatrixXd d = MatrixXd::Zero(2, 2);
    d.diagonal() << 2.0, 4.0;
    const MatrixXd x = chol_solve(d, MatrixXd::Ones(2, 1));
    CHECK(x(0, 0) == doctest::Approx(0.5));
    CHECK(x(1, 0) == doctest::Approx(0.25));

    const MatrixXd m = random_matrix(6, 6, 11);
    const MatrixXd spd = m * m.transpose() + 0.5 * MatrixXd::Identity(6, 6);
    const MatrixXd rhs = random_matrix(6, 3, 12);
    const MatrixXd sol = chol_solve(spd, rhs);
    CHECK((spd * sol - rhs).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("CholeskyFactor helpers are consistent") {
    const MatrixXd m = random_matrix(5, 5, 21);
    const MatrixXd spd = m * m.transpose() + MatrixXd::Identity(5, 5);
    CholeskyFactor f(spd);
    const VectorXd b = random_matrix(5, 1, 22).col(0);
    CHECK(std::abs(f.half_solve(b).squaredNorm() - b.dot(spd.ldlt().solve(b))) < 1e-10);
    CHECK(std::abs(f.log_det() - std::log(spd.determinant())) < 1e-10);
    const MatrixXd l = f.lower();
    CHECK((l * l.transpose() - spd).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("block_inverse closed form") {
    CompoundSymmetryBlock one{1, 0.3, 2.5};
    CHECK(block_inverse(one)(0, 0) == doctest::Approx(0.4));

    CompoundSymmetryBlock two{2, 0.5, 2.0};
    MatrixXd fwd(2, 2);
    fwd << 2.0, 1.0, 1.0, 2.0;
    const MatrixXd direct = fwd.inverse();
    CHECK((block_inverse(two) - direct).cwiseAbs().maxCoeff() < 1e-14);

    for (Index n = 1; n <= 10; ++n) {
        for (double rho : {0.1, 0.5, 0.9}) {
            CompoundSymmetryBlock b{n, rho, 1.3};
            const MatrixXd inv = block_inverse(b);
            const MatrixXd dense = b.dense();
            CHECK((inv * dense - MatrixXd::Identity(n, n)).cwiseAbs().maxCoeff() < 1e-10);
            CHECK((inv - dense.inverse()).cwiseAbs().maxCoeff() < 1e-8);
        }
    }
}

TEST_CASE("block_inverse rejects a singular block") {
    CompoundSymmetryBlock b{3, 1.0, 1.0};
    CHECK_THROWS_AS(block_inverse(b), NumericalError);
    CompoundSymmetryBlock single{1, 1.0, 1.0};
    CHECK(block_inverse(single)(0, 0) == 1.0);
}

TEST_CASE("standardize_covariates drops constant columns") {
    MatrixXd v(4, 3);
    v << 1, 5, 2,
         2, 5, 4,
         3, 5, 6,
         4, 5, 8;
    const StandardizedCovariates s = standardize_covariates(v);
    REQUIRE(s.kept_columns.size() == 2);
    CHECK(s.kept_columns[0] == 0);
    CHECK(s.kept_columns[1] == 2);
    CHECK(s.warnings.size() == 1);
    for (Index c = 0; c < 2; ++c) {
        CHECK(std::abs(s.values.col(c).mean()) < 1e-14);
        const double var = s.values.col(c).squaredNorm() / 3.0;
        CHECK(var == doctest::Approx(1.0));
    }
}

TEST_CASE("distance cache reproduces the kernel") {
    const MatrixXd v = random_matrix(12, 3, 5);
    const KernelParams p = make_params(2.0, {0.3, 1.1, 4.0}, 0.0);
    SquaredDistanceCache cache(v);
    MatrixXd corr;
    cache.correlation_lower(p.phi, corr);
    const MatrixXd k = kernel_matrix(v, p);
    for (Index j = 0; j < 12; ++j) {
        for (Index i = j; i < 12; ++i) {
            CHECK(std::abs(2.0 * corr(i, j) - k(i, j)) < 1e-14);
        }
    }
}
