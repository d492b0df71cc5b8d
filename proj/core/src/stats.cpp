#include "apekit/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include <boost/math/distributions/normal.hpp>

namespace apekit {

double norm_cdf(double x) {
    return 0.5 * std::erfc(-x / std::sqrt(2.0));
}

double norm_ppf(double p) {
    if (!(p > 0.0 && p < 1.0)) {
        throw std::domain_error("norm_ppf: p must be in (0,1)");
    }
    static const boost::math::normal_distribution<double> unit(0.0, 1.0);
    return boost::math::quantile(unit, p);
}

double norm_pdf(double x) {
    static const double inv_sqrt_2pi = 0.3989422804014326779;
    return inv_sqrt_2pi * std::exp(-0.5 * x * x);
}

double weighted_mean(const std::vector<double>& values, const std::vector<double>& weights) {
    if (values.size() != weights.size()) {
        throw std::invalid_argument("weighted_mean: size mismatch");
    }
    double sw = 0.0, swx = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) {
        sw += weights[i];
        swx += weights[i] * values[i];
    }
    if (!(sw > 0.0)) {
        throw std::invalid_argument("weighted_mean: total weight must be positive");
    }
    return swx / sw;
}

std::vector<int> weighted_quantile_groups(const std::vector<double>& values,
                                          const std::vector<double>& weights,
                                          const std::vector<std::int64_t>& tie_break,
                                          int n_groups) {
    const std::size_t n = values.size();
    if (weights.size() != n || tie_break.size() != n) {
        throw std::invalid_argument("weighted_quantile_groups: size mismatch");
    }
    if (n_groups < 1) {
        throw std::invalid_argument("weighted_quantile_groups: n_groups must be >= 1");
    }
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (values[a] != values[b]) return values[a] < values[b];
        return tie_break[a] < tie_break[b];
    });
    const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
    if (!(total > 0.0)) {
        throw std::invalid_argument("weighted_quantile_groups: total weight must be positive");
    }
    std::vector<int> group(n, 0);
    double cum = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        const std::size_t i = order[k];
        // Group by the midpoint of the observation's weight interval so a
        // single heavy observation lands in one well-defined group.
        const double mid = cum + 0.5 * weights[i];
        int g = static_cast<int>(std::floor(mid / total * n_groups));
        group[i] = std::clamp(g, 0, n_groups - 1);
        cum += weights[i];
    }
    return group;
}

}  // namespace apekit
