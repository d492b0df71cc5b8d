// Small statistics helpers shared across modules: standard normal cdf and
// quantile, weighted means, and weighted quantile cut points with a
// deterministic tie-break.
#pragma once

#include <cstdint>
#include <vector>

namespace apekit {

// Standard normal cdf Phi(x).
double norm_cdf(double x);

// Standard normal quantile Phi^{-1}(p), p in (0,1).
double norm_ppf(double p);

// Standard normal density.
double norm_pdf(double x);

// Weighted mean; weights need not sum to one.  Throws if no positive weight.
double weighted_mean(const std::vector<double>& values, const std::vector<double>& weights);

// Assigns each observation to one of `n_groups` weighted quantile groups
// (0-based).  Observations are ranked by value with ties broken by the
// tie_break key (ascending), then grouped by cumulative weight so each
// group carries ~1/n_groups of the total weight.  Deterministic.
std::vector<int> weighted_quantile_groups(const std::vector<double>& values,
                                          const std::vector<double>& weights,
                                          const std::vector<std::int64_t>& tie_break,
                                          int n_groups);

}  // namespace apekit
