#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

#include "apekit/rng.hpp"
#include "apekit/stats.hpp"

using namespace apekit;

TEST_CASE("normal cdf, quantile, and density reference values") {
    CHECK(norm_cdf(0.0) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(norm_cdf(1.959963984540054) == doctest::Approx(0.975).epsilon(1e-12));
    CHECK(norm_cdf(-1.959963984540054) == doctest::Approx(0.025).epsilon(1e-10));
    CHECK(norm_ppf(0.975) == doctest::Approx(1.959963984540054).epsilon(1e-12));
    CHECK(norm_ppf(0.5) == doctest::Approx(0.0));
    CHECK(norm_pdf(0.0) == doctest::Approx(1.0 / std::sqrt(2.0 * std::numbers::pi)).epsilon(1e-14));

    for (double x : {-3.0, -1.2, -0.1, 0.0, 0.4, 2.7}) {
        CHECK(norm_ppf(norm_cdf(x)) == doctest::Approx(x).epsilon(1e-9));
        CHECK(norm_cdf(x) + norm_cdf(-x) == doctest::Approx(1.0).epsilon(1e-13));
    }
    CHECK_THROWS(norm_ppf(0.0));
    CHECK_THROWS(norm_ppf(1.0));
    CHECK_THROWS(norm_ppf(-0.2));
}

TEST_CASE("weighted mean") {
    CHECK(weighted_mean({1.0, 2.0, 3.0}, {1.0, 1.0, 1.0}) == doctest::Approx(2.0));
    CHECK(weighted_mean({1.0, 2.0, 3.0}, {0.0, 0.0, 5.0}) == doctest::Approx(3.0));
    CHECK(weighted_mean({4.0}, {0.25}) == doctest::Approx(4.0));
    CHECK_THROWS(weighted_mean({1.0, 2.0}, {1.0}));
    CHECK_THROWS(weighted_mean({1.0, 2.0}, {0.0, 0.0}));
    CHECK_THROWS(weighted_mean({}, {}));
}

TEST_CASE("quantile groups with equal weights split by rank") {
    std::vector<double> values = {5, 1, 3, 2, 4, 0, 6, 7, 8, 9};
    std::vector<double> w(10, 1.0);
    std::vector<std::int64_t> keys = {0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
    std::vector<int> g = weighted_quantile_groups(values, w, keys, 5);
    for (int i = 0; i < 10; ++i) {
        CHECK(g[i] == static_cast<int>(values[i]) / 2);
    }
}

TEST_CASE("quantile groups break ties by key") {
    std::vector<double> values(4, 7.0);
    std::vector<double> w(4, 1.0);
    std::vector<std::int64_t> keys = {11, 3, 7, 5};
    std::vector<int> g = weighted_quantile_groups(values, w, keys, 2);
    // Ascending key order: 3, 5, 7, 11 -> groups 0, 0, 1, 1.
    CHECK(g[0] == 1);
    CHECK(g[1] == 0);
    CHECK(g[2] == 1);
    CHECK(g[3] == 0);
}

TEST_CASE("quantile groups follow cumulative weight, not counts") {
    std::vector<double> values = {1.0, 2.0, 3.0};
    std::vector<double> w = {1.0, 1.0, 8.0};
    std::vector<std::int64_t> keys = {0, 1, 2};
    std::vector<int> g = weighted_quantile_groups(values, w, keys, 2);
    // Cumulative midpoints at 0.05, 0.15, 0.60 of total weight.
    CHECK(g[0] == 0);
    CHECK(g[1] == 0);
    CHECK(g[2] == 1);
}

TEST_CASE("equal weights produce exactly balanced groups at scale") {
    RngStream rng(derive_seed(123456789ULL, Stream::oracle, 0));
    const int n = 1000, k = 10;
    std::vector<double> values(n);
    std::vector<double> w(n, 2.5);
    std::vector<std::int64_t> keys(n);
    for (int i = 0; i < n; ++i) {
        values[i] = rng.normal();
        keys[i] = i;
    }
    std::vector<int> g = weighted_quantile_groups(values, w, keys, k);
    std::vector<int> count(k, 0);
    for (int i = 0; i < n; ++i) {
        REQUIRE(g[i] >= 0);
        REQUIRE(g[i] < k);
        ++count[g[i]];
    }
    for (int c : count) CHECK(c == n / k);
    // Group labels are monotone in the underlying value.
    std::vector<double> max_in_group(k, -1e300), min_in_group(k, 1e300);
    for (int i = 0; i < n; ++i) {
        max_in_group[g[i]] = std::max(max_in_group[g[i]], values[i]);
        min_in_group[g[i]] = std::min(min_in_group[g[i]], values[i]);
    }
    for (int j = 1; j < k; ++j) CHECK(min_in_group[j] >= max_in_group[j - 1]);
}

TEST_CASE("seed derivation separates streams and counters") {
    const std::uint64_t master = 20240815ULL;
    std::uint64_t a = derive_seed(master, Stream::household, 0);
    std::uint64_t b = derive_seed(master, Stream::household, 1);
    std::uint64_t c = derive_seed(master, Stream::survey, 0);
    std::uint64_t d = derive_seed(master + 1, Stream::household, 0);
    CHECK(a != b);
    CHECK(a != c);
    CHECK(a != d);
    CHECK(b != c);
    // Deterministic.
    CHECK(a == derive_seed(master, Stream::household, 0));

    RngStream r1(a), r2(a);
    CHECK(r1.uniform() == r2.uniform());
    CHECK(r1.normal() == r2.normal());
}

TEST_CASE("rng basic distributional sanity") {
    RngStream rng(derive_seed(7ULL, Stream::oracle, 42));
    const int n = 200000;
    double sum = 0.0, sum2 = 0.0;
    for (int i = 0; i < n; ++i) {
        double z = rng.normal();
        sum += z;
        sum2 += z * z;
    }
    CHECK(sum / n == doctest::Approx(0.0).epsilon(0.02));
    CHECK(std::fabs(sum / n) < 0.01);
    CHECK(sum2 / n == doctest::Approx(1.0).epsilon(0.02));

    double usum = 0.0;
    for (int i = 0; i < n; ++i) usum += rng.uniform();
    CHECK(usum / n == doctest::Approx(0.5).epsilon(0.01));

    std::vector<int> hist(10, 0);
    for (int i = 0; i < n; ++i) ++hist[rng.below(10)];
    for (int h : hist) CHECK(std::fabs(h - n / 10.0) < 5.0 * std::sqrt(n / 10.0));
}
