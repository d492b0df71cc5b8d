#include "apekit/elicitation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "apekit/stats.hpp"

namespace apekit {

GrowthBinScheme GrowthBinScheme::standard() {
    return GrowthBinScheme(
        {-0.10, 0.0, 0.03, 0.05, 0.06, 0.07, 0.08, 0.10, 0.13, 0.15, 0.20, 0.25, 0.35});
}

GrowthBinScheme::GrowthBinScheme(std::vector<double> edges) : edges_(std::move(edges)) {
    if (edges_.size() < 2) throw std::invalid_argument("GrowthBinScheme: need at least 2 edges");
    for (std::size_t i = 1; i < edges_.size(); ++i) {
        if (!(edges_[i] > edges_[i - 1])) {
            throw std::invalid_argument("GrowthBinScheme: edges must be strictly increasing");
        }
    }
}

int GrowthBinScheme::bin_of(double g) const {
    // First edge strictly above g; bins are right-open.
    auto it = std::upper_bound(edges_.begin(), edges_.end(), g);
    return static_cast<int>(it - edges_.begin());
}

int GrowthBinScheme::category_of(double g) const {
    return std::clamp(bin_of(g) - 1, 0, n_categories() - 1);
}

GrowthResponse::GrowthResponse(std::vector<int> pts, std::optional<double> magnitude)
    : points(std::move(pts)), magnitude_if_negative(magnitude) {
    int sum = 0;
    for (int p : points) {
        if (p < 0) throw std::invalid_argument("GrowthResponse: negative points");
        sum += p;
    }
    if (sum != 100) throw std::invalid_argument("GrowthResponse: points must sum to 100");
}

MinMaxResponse::MinMaxResponse(double min_earn_, double max_earn_, double prob_below_mid_)
    : min_earn(min_earn_), max_earn(max_earn_), prob_below_mid(prob_below_mid_) {
    if (!(min_earn > 0.0)) throw std::invalid_argument("MinMaxResponse: min must be > 0");
    if (!(max_earn >= min_earn)) throw std::invalid_argument("MinMaxResponse: max must be >= min");
    if (!(prob_below_mid >= 0.0 && prob_below_mid <= 1.0)) {
        throw std::invalid_argument("MinMaxResponse: probability must be in [0,1]");
    }
}

std::vector<int> points_from_counts(const std::vector<int>& counts, int total_points) {
    if (total_points < 1) throw std::invalid_argument("points_from_counts: total must be >= 1");
    long long n = 0;
    for (int c : counts) {
        if (c < 0) throw std::invalid_argument("points_from_counts: negative count");
        n += c;
    }
    if (n == 0) throw std::invalid_argument("points_from_counts: all counts zero");

    const std::size_t j = counts.size();
    std::vector<int> points(j, 0);
    std::vector<std::pair<double, std::size_t>> remainder;  // (-frac, index) for sorting
    int assigned = 0;
    for (std::size_t i = 0; i < j; ++i) {
        double share = static_cast<double>(counts[i]) * total_points / static_cast<double>(n);
        points[i] = static_cast<int>(std::floor(share));
        assigned += points[i];
        remainder.emplace_back(-(share - points[i]), i);
    }
    std::sort(remainder.begin(), remainder.end());  // largest remainder first, ties to lower index
    for (int k = 0; k < total_points - assigned; ++k) {
        ++points[remainder[static_cast<std::size_t>(k)].second];
    }
    return points;
}

GrowthResponse synthesize_growth_response(const NormalBelief& belief_growth,
                                          const GrowthBinScheme& scheme, int m_draws,
                                          RngStream& rng) {
    if (m_draws < 1) throw std::invalid_argument("synthesize_growth_response: m_draws must be >= 1");
    const double sd = std::sqrt(belief_growth.var);
    std::vector<int> counts(static_cast<std::size_t>(scheme.n_categories()), 0);
    for (int d = 0; d < m_draws; ++d) {
        double g = belief_growth.mean + sd * rng.normal();
        ++counts[static_cast<std::size_t>(scheme.category_of(g))];
    }
    return GrowthResponse(points_from_counts(counts, 100));
}

std::vector<double> regularize(const std::vector<double>& raw_fractions, int m_trials) {
    if (m_trials < 1) throw std::invalid_argument("regularize: m_trials must be >= 1");
    const double j = static_cast<double>(raw_fractions.size());
    const double half_m = 1.0 / (2.0 * m_trials);
    double sum = 0.0;
    for (double p : raw_fractions) {
        if (p < 0.0) throw std::invalid_argument("regularize: negative fraction");
        sum += p;
    }
    if (std::fabs(sum - 1.0) > 1e-9) throw std::invalid_argument("regularize: fractions must sum to 1");
    std::vector<double> out(raw_fractions.size());
    for (std::size_t i = 0; i < raw_fractions.size(); ++i) {
        out[i] = (raw_fractions[i] + half_m) / (1.0 + j * half_m);
    }
    return out;
}

std::vector<BinInterval> select_active_bins(const std::vector<double>& raw,
                                            const GrowthBinScheme& scheme) {
    if (static_cast<int>(raw.size()) != scheme.n_bins()) {
        throw std::invalid_argument("select_active_bins: raw size must match scheme bins");
    }
    int lo = -1, hi = -1;
    for (int b = 0; b < scheme.n_bins(); ++b) {
        if (raw[static_cast<std::size_t>(b)] > 0.0) {
            if (lo < 0) lo = b;
            hi = b;
        }
    }
    if (lo < 0) throw std::invalid_argument("select_active_bins: empty response");

    std::vector<BinInterval> intervals;
    if (lo > 0) intervals.push_back({0, lo - 1});
    for (int b = lo; b <= hi; ++b) {
        if (raw[static_cast<std::size_t>(b)] > 0.0) intervals.push_back({b, b});
    }
    if (hi < scheme.n_bins() - 1) intervals.push_back({hi + 1, scheme.n_bins() - 1});
    return intervals;
}

namespace {

// Unweighted least squares of y on (x, 1): returns (slope, intercept).
std::pair<double, double> fit_line(const std::vector<double>& x, const std::vector<double>& y) {
    const double n = static_cast<double>(x.size());
    double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sx += x[i];
        sy += y[i];
        sxx += x[i] * x[i];
        sxy += x[i] * y[i];
    }
    const double det = n * sxx - sx * sx;
    if (!(std::fabs(det) > 0.0)) throw std::runtime_error("probit fit: collinear restrictions");
    const double slope = (n * sxy - sx * sy) / det;
    const double intercept = (sy - slope * sx) / n;
    return {slope, intercept};
}

}  // namespace

GrowthFit estimate_growth_belief(const GrowthResponse& response, const GrowthBinScheme& scheme,
                                 int m_trials) {
    if (static_cast<int>(response.points.size()) != scheme.n_categories()) {
        throw std::invalid_argument("estimate_growth_belief: response size must match scheme");
    }
    // Per-bin fractions over all scheme bins; the outer tails are never
    // part of the answer sheet and carry zero raw mass.
    std::vector<double> raw(static_cast<std::size_t>(scheme.n_bins()), 0.0);
    for (int k = 0; k < scheme.n_categories(); ++k) {
        raw[static_cast<std::size_t>(k + 1)] =
            response.points[static_cast<std::size_t>(k)] / 100.0;
    }

    const std::vector<double> reg = regularize(raw, m_trials);
    const std::vector<BinInterval> intervals = select_active_bins(raw, scheme);

    // Cumulative regularized mass up to and including each bin.
    std::vector<double> cum(reg.size());
    std::partial_sum(reg.begin(), reg.end(), cum.begin());

    // One restriction per interval right-endpoint; the top interval ends
    // at +infinity with cumulative one and contributes nothing.
    std::vector<double> x, y;
    for (const BinInterval& iv : intervals) {
        if (iv.last_bin >= scheme.n_bins() - 1) continue;
        const double c = cum[static_cast<std::size_t>(iv.last_bin)];
        if (c >= 1.0 - 1e-12) continue;
        x.push_back(norm_ppf(c));
        y.push_back(scheme.right_edge(iv.last_bin));
    }
    if (x.size() < 2) throw std::runtime_error("estimate_growth_belief: degenerate fit");

    auto [slope, intercept] = fit_line(x, y);
    GrowthFit fit;
    fit.n_restrictions = static_cast<int>(x.size());
    fit.sigma_truncated = slope < 0.0;
    const double sigma = std::max(slope, 0.0);
    fit.belief = NormalBelief(intercept, sigma * sigma);
    return fit;
}

NormalBelief estimate_level_belief(const MinMaxResponse& response, int m_trials) {
    if (m_trials < 1) throw std::invalid_argument("estimate_level_belief: m_trials must be >= 1");
    if (response.max_earn == response.min_earn) {
        return NormalBelief(std::log(response.min_earn), 0.0);
    }
    const double mid = 0.5 * (response.min_earn + response.max_earn);
    const double tail = 1.0 / (2.0 * m_trials + 4.0);
    const double interior = 1.0 - 2.0 * tail;

    const std::vector<double> y = {std::log(response.min_earn), std::log(mid),
                                   std::log(response.max_earn)};
    const std::vector<double> c = {tail, tail + response.prob_below_mid * interior, 1.0 - tail};
    std::vector<double> x(3);
    for (int i = 0; i < 3; ++i) x[static_cast<std::size_t>(i)] = norm_ppf(c[static_cast<std::size_t>(i)]);

    auto [slope, intercept] = fit_line(x, y);
    const double sigma = std::max(slope, 0.0);
    return NormalBelief(intercept, sigma * sigma);
}

BiasCorrection bias_correct(
    const std::vector<NormalBelief>& growth_beliefs, const GrowthBinScheme& scheme, int m_draws,
    int likelihood_trials, int n_replications, std::uint64_t master_seed,
    const std::function<std::vector<double>(const std::vector<NormalBelief>&)>& coefficients) {
    if (n_replications < 1) throw std::invalid_argument("bias_correct: need >= 1 replication");
    const std::size_t n = growth_beliefs.size();

    BiasCorrection result;
    result.beta_ols = coefficients(growth_beliefs);
    result.n_replications = n_replications;
    const std::size_t k = result.beta_ols.size();

    std::vector<double> sum(k, 0.0), sum_sq(k, 0.0);
    std::vector<NormalBelief> refit(n);
    for (int s = 0; s < n_replications; ++s) {
        for (std::size_t i = 0; i < n; ++i) {
            RngStream rng(master_seed, Stream::bias_correct,
                          static_cast<std::uint64_t>(s) * n + i);
            GrowthResponse resp = synthesize_growth_response(growth_beliefs[i], scheme, m_draws, rng);
            refit[i] = estimate_growth_belief(resp, scheme, likelihood_trials).belief;
        }
        std::vector<double> beta = coefficients(refit);
        if (beta.size() != k) throw std::runtime_error("bias_correct: coefficient size changed");
        for (std::size_t j = 0; j < k; ++j) {
            sum[j] += beta[j];
            sum_sq[j] += beta[j] * beta[j];
        }
    }

    result.beta_bc.resize(k);
    result.replication_sd.resize(k);
    for (std::size_t j = 0; j < k; ++j) {
        const double mean = sum[j] / n_replications;
        result.beta_bc[j] = 2.0 * result.beta_ols[j] - mean;
        const double var = std::max(0.0, sum_sq[j] / n_replications - mean * mean);
        result.replication_sd[j] =
            n_replications > 1 ? std::sqrt(var * n_replications / (n_replications - 1.0)) : 0.0;
    }
    return result;
}

}  // namespace apekit
