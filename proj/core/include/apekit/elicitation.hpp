// Survey elicitation of income beliefs: synthesizing coarse survey
// responses from a normal belief, and estimating belief parameters back
// from the two response formats (points-over-growth-bins, and
// min/mid/max earnings levels), plus the parametric-bootstrap bias
// correction for the response measurement error.
#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "apekit/beliefs.hpp"
#include "apekit/rng.hpp"

namespace apekit {

// Partition of the income-growth line into bins.  The survey offers
// twelve growth categories whose extreme categories are one-sided; for
// estimation the open ends are capped (at -10% below and +35% above),
// which splits off two outer tail bins and yields fourteen bins total:
//
//   bin 0:  (-inf, edge[0])          -- outer tail, never answered
//   bin k:  [edge[k-1], edge[k])     -- k = 1..n_edges-1
//   bin N:  [edge[last], +inf)       -- outer tail, never answered
//
// Response categories are the interior bins 1..n_bins-2, indexed 0-based
// from the most negative ("less than 0%") to the most positive ("more
// than 25%").
class GrowthBinScheme {
  public:
    // The standard survey scheme: categories <0, 0-3, 3-5, 5-6, 6-7,
    // 7-8, 8-10, 10-13, 13-15, 15-20, 20-25, >25 (percent), capped at
    // -10% and +35%.
    static GrowthBinScheme standard();

    // Custom scheme from strictly increasing interior edges (>= 2 edges).
    explicit GrowthBinScheme(std::vector<double> edges);

    int n_bins() const { return static_cast<int>(edges_.size()) + 1; }
    int n_categories() const { return n_bins() - 2; }
    const std::vector<double>& edges() const { return edges_; }
    // Right endpoint of bin b (edges_[b]); valid for b = 0..n_bins-2.
    double right_edge(int bin) const { return edges_.at(static_cast<std::size_t>(bin)); }

    // Bin index (0..n_bins-1) containing the growth rate g.
    int bin_of(double g) const;
    // Response category (0..n_categories-1) for g; the outer tails fold
    // into the adjacent extreme category, mirroring the one-sided survey
    // categories.
    int category_of(double g) const;

  private:
    std::vector<double> edges_;
};

// Points-format response: 100 points distributed over the growth
// categories.  The optional follow-up magnitude for the "less than 0%"
// category is carried through but never used in estimation (the lower
// cap plays its role).
struct GrowthResponse {
    std::vector<int> points;
    std::optional<double> magnitude_if_negative;

    GrowthResponse() = default;
    explicit GrowthResponse(std::vector<int> pts,
                            std::optional<double> magnitude = std::nullopt);
};

// Min/mid/max-format response: minimum and maximum expected annual
// earnings and the probability of earning less than their midpoint.
struct MinMaxResponse {
    double min_earn = 1.0;
    double max_earn = 1.0;
    double prob_below_mid = 0.5;

    MinMaxResponse() = default;
    MinMaxResponse(double min_earn_, double max_earn_, double prob_below_mid_);
};

// Scales integer counts to `total_points` points preserving the sum
// exactly (largest-remainder rounding; ties go to the lower index).
std::vector<int> points_from_counts(const std::vector<int>& counts, int total_points);

// Simulates one survey answer: m_draws draws from the growth belief are
// sorted into categories and scaled to 100 points.
GrowthResponse synthesize_growth_response(const NormalBelief& belief_growth,
                                          const GrowthBinScheme& scheme, int m_draws,
                                          RngStream& rng);

// Jeffreys-prior posterior means of multinomial bin probabilities from
// observed fractions out of m_trials trials:
//   p~_j = (p^_j + 1/(2M)) / (1 + J/(2M)),   J = raw.size().
// Output sums to one and is strictly inside (0,1) per coordinate.
std::vector<double> regularize(const std::vector<double>& raw_fractions, int m_trials);

// Inclusive range of scheme bins aggregated into a single estimation
// interval.
struct BinInterval {
    int first_bin = 0;
    int last_bin = 0;
};

// Estimation intervals for a response: each bin with raw mass becomes
// its own interval, and everything to the left (right) of the occupied
// range is aggregated into a single unbounded interval.  `raw` has one
// entry per scheme bin; at least one must be positive.
std::vector<BinInterval> select_active_bins(const std::vector<double>& raw,
                                            const GrowthBinScheme& scheme);

// Fitted growth belief plus fit diagnostics.
struct GrowthFit {
    NormalBelief belief;        // growth scale: N(mu_g, sigma_g^2)
    bool sigma_truncated = false;
    int n_restrictions = 0;
};

// Recovers (mu_g, sigma_g) from a points-format response: regularize the
// per-bin fractions, build cumulative probabilities at the interval
// right-endpoints (the unbounded top interval, whose cumulative is one,
// is dropped), and fit the probit-linear system
//   ppf(c_j) * sigma_g + mu_g = v_j
// by ordinary least squares.  m_trials is the trial count of the
// likelihood model (100 in the survey pipeline regardless of how many
// scenarios generated the response).  Throws if fewer than two usable
// restrictions remain.
GrowthFit estimate_growth_belief(const GrowthResponse& response, const GrowthBinScheme& scheme,
                                 int m_trials);

// Recovers a log-level belief from a min/mid/max response.  Four bins
// (below min, min..mid, mid..max, above max) with tail probabilities
// 1/(2M+4) and the interior mass split by prob_below_mid, fitted by the
// same probit-linear least squares.  Coinciding min and max give the
// degenerate point belief (log(min), 0).
NormalBelief estimate_level_belief(const MinMaxResponse& response, int m_trials);

// Parametric-bootstrap bias correction for response measurement error.
// `coefficients` maps a vector of per-observation growth beliefs to
// regression coefficients.  For each replication, every belief is run
// through synthesize -> estimate with `m_draws` scenarios (likelihood
// fixed at `likelihood_trials`), and the regression is re-estimated.
struct BiasCorrection {
    std::vector<double> beta_ols;  // coefficients at the fitted beliefs
    std::vector<double> beta_bc;   // 2*beta_ols - mean over replications
    std::vector<double> replication_sd;
    int n_replications = 0;
};

BiasCorrection bias_correct(
    const std::vector<NormalBelief>& growth_beliefs, const GrowthBinScheme& scheme, int m_draws,
    int likelihood_trials, int n_replications, std::uint64_t master_seed,
    const std::function<std::vector<double>(const std::vector<NormalBelief>&)>& coefficients);

}  // namespace apekit
