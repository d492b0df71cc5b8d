#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "apekit/lasso.hpp"
#include "apekit/rng.hpp"

using namespace apekit;

namespace {

Eigen::MatrixXd random_matrix(Eigen::Index n, Eigen::Index k, RngStream& rng) {
    Eigen::MatrixXd x(n, k);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < k; ++j) x(i, j) = rng.normal();
    }
    return x;
}

double objective(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const Eigen::VectorXd& w,
                 double penalty, const std::vector<bool>& penalized, const Eigen::VectorXd& b) {
    const double n = static_cast<double>(x.rows());
    const double w_mean = w.sum() / n;
    const Eigen::VectorXd r = y - x * b;
    double value = 0.0;
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        value += (w(i) / w_mean) * r(i) * r(i);
    }
    value /= 2.0 * n;
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
        if (penalized[static_cast<std::size_t>(j)]) value += penalty * std::abs(b(j));
    }
    return value;
}

std::vector<std::int64_t> singleton_clusters(Eigen::Index n) {
    std::vector<std::int64_t> c(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) c[static_cast<std::size_t>(i)] = i;
    return c;
}

}  // namespace

TEST_CASE("zero penalty reproduces weighted least squares") {
    RngStream rng(derive_seed(7001, Stream::oracle, 0));
    const Eigen::Index n = 200, k = 6;
    const Eigen::MatrixXd x = random_matrix(n, k, rng);
    Eigen::VectorXd beta(k);
    beta << 1.0, -2.0, 0.5, 0.0, 3.0, -0.25;
    Eigen::VectorXd y = x * beta;
    Eigen::VectorXd w(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        y(i) += 0.3 * rng.normal();
        w(i) = 0.5 + rng.uniform();
    }
    const std::vector<bool> penalized(static_cast<std::size_t>(k), true);
    const LassoFit fit = lasso(x, y, w, 0.0, penalized);

    const Eigen::MatrixXd xw = w.cwiseSqrt().asDiagonal() * x;
    const Eigen::VectorXd yw = w.cwiseSqrt().cwiseProduct(y);
    const Eigen::VectorXd ols = (xw.transpose() * xw).ldlt().solve(xw.transpose() * yw);
    for (Eigen::Index j = 0; j < k; ++j) {
        CHECK(fit.coef(j) == doctest::Approx(ols(j)).epsilon(1e-6));
    }
}

TEST_CASE("penalty at or above the critical value zeroes every penalized coefficient") {
    RngStream rng(derive_seed(7002, Stream::oracle, 0));
    const Eigen::Index n = 150, k = 5;
    const Eigen::MatrixXd x = random_matrix(n, k, rng);
    Eigen::VectorXd y(n);
    for (Eigen::Index i = 0; i < n; ++i) y(i) = x(i, 0) - 0.5 * x(i, 2) + 0.2 * rng.normal();
    const Eigen::VectorXd w = Eigen::VectorXd::Ones(n);

    SUBCASE("all columns penalized") {
        const std::vector<bool> penalized(static_cast<std::size_t>(k), true);
        const double p_max = lasso_penalty_max(x, y, w, penalized);
        CHECK(p_max > 0.0);
        for (const double factor : {1.0, 1.5, 10.0}) {
            const LassoFit fit = lasso(x, y, w, factor * p_max, penalized);
            for (Eigen::Index j = 0; j < k; ++j) CHECK(fit.coef(j) == 0.0);
        }
        const LassoFit below = lasso(x, y, w, 0.95 * p_max, penalized);
        CHECK(below.coef.cwiseAbs().maxCoeff() > 0.0);
    }

    SUBCASE("an unpenalized column survives") {
        std::vector<bool> penalized(static_cast<std::size_t>(k), true);
        penalized[2] = false;
        const double p_max = lasso_penalty_max(x, y, w, penalized);
        const LassoFit fit = lasso(x, y, w, 1.01 * p_max, penalized);
        for (Eigen::Index j = 0; j < k; ++j) {
            if (j == 2) continue;
            CHECK(fit.coef(j) == 0.0);
        }
        // The surviving coefficient equals the solo least-squares fit.
        const double solo = x.col(2).dot(y) / x.col(2).squaredNorm();
        CHECK(fit.coef(2) == doctest::Approx(solo).epsilon(1e-8));
    }
}

TEST_CASE("orthonormal design matches the soft-threshold closed form") {
    RngStream rng(derive_seed(7003, Stream::oracle, 0));
    const Eigen::Index n = 256, k = 8;
    const Eigen::MatrixXd raw = random_matrix(n, k, rng);
    const Eigen::HouseholderQR<Eigen::MatrixXd> qr(raw);
    const Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(n, k);
    const Eigen::MatrixXd x = std::sqrt(static_cast<double>(n)) * q;  // columns have unit mean square
    Eigen::VectorXd y(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        y(i) = 1.2 * x(i, 0) - 0.8 * x(i, 3) + 0.05 * x(i, 5) + 0.4 * rng.normal();
    }
    const Eigen::VectorXd w = Eigen::VectorXd::Ones(n);
    const std::vector<bool> penalized(static_cast<std::size_t>(k), true);

    for (const double penalty : {0.01, 0.1, 0.5}) {
        const LassoFit fit = lasso(x, y, w, penalty, penalized);
        for (Eigen::Index j = 0; j < k; ++j) {
            const double c = x.col(j).dot(y) / static_cast<double>(n);
            const double oracle = std::abs(c) <= penalty ? 0.0 : (c > 0 ? c - penalty : c + penalty);
            CHECK(fit.coef(j) == doctest::Approx(oracle).epsilon(1e-7));
        }
    }
}

TEST_CASE("solutions certify optimality and beat nearby perturbations") {
    RngStream rng(derive_seed(7004, Stream::oracle, 0));
    const Eigen::Index n = 120, k = 10;
    const Eigen::MatrixXd x = random_matrix(n, k, rng);
    Eigen::VectorXd y(n);
    Eigen::VectorXd w(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        y(i) = 0.7 * x(i, 1) - 1.1 * x(i, 4) + 0.5 * rng.normal();
        w(i) = 0.25 + 2.0 * rng.uniform();
    }
    std::vector<bool> penalized(static_cast<std::size_t>(k), true);
    penalized[0] = false;  // keep one unpenalized column in the mix

    const double penalty = 0.05;
    const LassoFit fit = lasso(x, y, w, penalty, penalized);
    CHECK(fit.gap <= 1e-8);

    const double at_solution = objective(x, y, w, penalty, penalized, fit.coef);
    for (int trial = 0; trial < 50; ++trial) {
        Eigen::VectorXd b = fit.coef;
        for (Eigen::Index j = 0; j < k; ++j) b(j) += 0.02 * rng.normal();
        CHECK(objective(x, y, w, penalty, penalized, b) >= at_solution - 1e-9);
    }
}

TEST_CASE("rescaling all weights leaves the solution unchanged") {
    RngStream rng(derive_seed(7005, Stream::oracle, 0));
    const Eigen::Index n = 100, k = 6;
    const Eigen::MatrixXd x = random_matrix(n, k, rng);
    Eigen::VectorXd y(n);
    Eigen::VectorXd w(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        y(i) = x(i, 0) - x(i, 5) + 0.3 * rng.normal();
        w(i) = 0.5 + rng.uniform();
    }
    const std::vector<bool> penalized(static_cast<std::size_t>(k), true);
    const LassoFit base = lasso(x, y, w, 0.07, penalized);
    const LassoFit scaled = lasso(x, y, 7.0 * w, 0.07, penalized);
    for (Eigen::Index j = 0; j < k; ++j) {
        CHECK(scaled.coef(j) == doctest::Approx(base.coef(j)).epsilon(1e-10));
    }
    CHECK(lasso_penalty_max(x, y, w, penalized) ==
          doctest::Approx(lasso_penalty_max(x, y, 7.0 * w, penalized)).epsilon(1e-12));
}

TEST_CASE("cross-validation grid shape and determinism") {
    RngStream rng(derive_seed(7006, Stream::oracle, 0));
    const Eigen::Index n = 240, k = 8;
    const Eigen::MatrixXd x = random_matrix(n, k, rng);
    Eigen::VectorXd y(n);
    for (Eigen::Index i = 0; i < n; ++i) y(i) = 1.5 * x(i, 2) + 0.5 * rng.normal();
    const Eigen::VectorXd w = Eigen::VectorXd::Ones(n);
    std::vector<std::int64_t> clusters(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) clusters[static_cast<std::size_t>(i)] = i / 8;
    const std::vector<bool> penalized(static_cast<std::size_t>(k), true);

    const CvLassoResult a = cv_lasso(x, y, w, clusters, 10, 99, penalized);
    const CvLassoResult b = cv_lasso(x, y, w, clusters, 10, 99, penalized);

    REQUIRE(a.grid.size() == 100);
    CHECK(a.grid.front() == doctest::Approx(a.penalty_max).epsilon(1e-12));
    CHECK(a.grid.back() == doctest::Approx(a.penalty_max * 1e-4).epsilon(1e-9));
    for (std::size_t i = 1; i < a.grid.size(); ++i) CHECK(a.grid[i] < a.grid[i - 1]);

    CHECK(a.penalty == b.penalty);
    REQUIRE(a.cv_error.size() == b.cv_error.size());
    for (std::size_t i = 0; i < a.cv_error.size(); ++i) {
        CHECK(a.cv_error[i] == b.cv_error[i]);
        CHECK(std::isfinite(a.cv_error[i]));
    }
    CHECK(a.penalty >= a.grid.back());
    CHECK(a.penalty <= a.grid.front());
}

TEST_CASE("cross-validation rejects degenerate fold requests") {
    RngStream rng(derive_seed(7007, Stream::oracle, 0));
    const Eigen::Index n = 30, k = 3;
    const Eigen::MatrixXd x = random_matrix(n, k, rng);
    Eigen::VectorXd y = x.col(0);
    const Eigen::VectorXd w = Eigen::VectorXd::Ones(n);
    const std::vector<bool> penalized(static_cast<std::size_t>(k), true);

    std::vector<std::int64_t> few(static_cast<std::size_t>(n), 0);
    for (Eigen::Index i = 0; i < n; ++i) few[static_cast<std::size_t>(i)] = i % 4;
    CHECK_THROWS_AS(cv_lasso(x, y, w, few, 10, 1, penalized), std::invalid_argument);
    CHECK_THROWS_AS(cv_lasso(x, y, w, singleton_clusters(n), 1, 1, penalized),
                    std::invalid_argument);
}

TEST_CASE("pure noise drives cross-validation toward heavy shrinkage") {
    RngStream rng(derive_seed(7008, Stream::oracle, 0));
    const Eigen::Index n = 400, k = 20;
    const Eigen::MatrixXd x = random_matrix(n, k, rng);
    Eigen::VectorXd y(n);
    for (Eigen::Index i = 0; i < n; ++i) y(i) = rng.normal();
    const Eigen::VectorXd w = Eigen::VectorXd::Ones(n);
    std::vector<std::int64_t> clusters(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) clusters[static_cast<std::size_t>(i)] = i / 10;
    const std::vector<bool> penalized(static_cast<std::size_t>(k), true);

    const CvLassoResult cv = cv_lasso(x, y, w, clusters, 10, 4242, penalized);
    CHECK(cv.penalty >= 0.1 * cv.penalty_max);
}

TEST_CASE("cross-validated fits recover strong sparse supports") {
    const Eigen::Index n = 300, k = 20;
    int hits = 0;
    for (int rep = 0; rep < 100; ++rep) {
        RngStream rng(derive_seed(7009, Stream::oracle, static_cast<std::uint64_t>(rep)));
        const Eigen::MatrixXd x = random_matrix(n, k, rng);
        Eigen::VectorXd y(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            y(i) = 2.0 * x(i, 0) - 1.5 * x(i, 1) + 1.0 * x(i, 2) + 0.5 * rng.normal();
        }
        const Eigen::VectorXd w = Eigen::VectorXd::Ones(n);
        std::vector<std::int64_t> clusters(static_cast<std::size_t>(n));
        for (Eigen::Index i = 0; i < n; ++i) clusters[static_cast<std::size_t>(i)] = i / 3;
        const std::vector<bool> penalized(static_cast<std::size_t>(k), true);

        const CvLassoResult cv = cv_lasso(x, y, w, clusters, 10,
                                          static_cast<std::uint64_t>(1000 + rep), penalized);
        const LassoFit fit = lasso(x, y, w, cv.penalty, penalized);
        if (fit.coef(0) != 0.0 && fit.coef(1) != 0.0 && fit.coef(2) != 0.0) ++hits;
    }
    CHECK(hits >= 90);
}

TEST_CASE("constant columns are tolerated and stay at zero") {
    RngStream rng(derive_seed(7010, Stream::oracle, 0));
    const Eigen::Index n = 80, k = 4;
    Eigen::MatrixXd x = random_matrix(n, k, rng);
    x.col(2).setZero();
    Eigen::VectorXd y(n);
    for (Eigen::Index i = 0; i < n; ++i) y(i) = x(i, 0) + 0.1 * rng.normal();
    const Eigen::VectorXd w = Eigen::VectorXd::Ones(n);
    const std::vector<bool> penalized(static_cast<std::size_t>(k), true);
    const LassoFit fit = lasso(x, y, w, 0.01, penalized);
    CHECK(fit.coef(2) == 0.0);
    CHECK(fit.coef(0) != 0.0);
    const LassoFit fit0 = lasso(x, y, w, 0.0, penalized);
    CHECK(fit0.coef(2) == 0.0);
}
