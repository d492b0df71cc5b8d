// Tax-reform counterfactuals on a household panel: closed-form shifted
// states under a constant-residual-progression reform, revenue-neutral
// schedule levels, plug-in average partial effects of the reform on log
// consumption (contemporaneous / dynamic / total, pooled and by income
// quintile), and cluster-bootstrap standard errors.
//
// The reform maps a schedule net = scale0 * gross^(1-tau0) into
// net = scale1 * gross^(1-tau1) while holding gross income fixed, so log
// net income moves by a log-affine map.  Observed log family income, the
// belief mean, and the belief variance all transform by that map; the
// shifted values are what the fitted consumption rule is evaluated at.
#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "apekit/beliefs.hpp"
#include "apekit/econometrics.hpp"
#include "apekit/tax.hpp"

namespace apekit {

// Log-affine map from net log income under `tax0` to net log income
// under `tax1` for the same gross income:
//   slope     = (1-tau1)/(1-tau0),
//   intercept = log scale1 - slope * log scale0.
AffineIncomeMap net_to_net_map(const TaxSchedule& tax0, const TaxSchedule& tax1);

// Per-row counterfactual values after the reform, aligned with the rows
// of the panel they were computed from.
struct CounterfactualStates {
    std::vector<double> x1;        // log family income under tax1
    std::vector<double> mu1;       // belief mean under tax1
    std::vector<double> sigma2_1;  // belief variance under tax1

    std::size_t size() const { return x1.size(); }
};

// Applies the reform row-wise in closed form.  With a = (1-tau1)/(1-tau0)
// and L0 = log scale0, L1 = log scale1:
//   x1      = x0  + (L1 - L0) + (a - 1) * (x0 - L0),
//   mu1     = mu0 + (L1 - a*L0) + (a - 1) * mu0 - (a - 1) * log(r),
//   sigma2_1 = a^2 * sigma2_0,
// where r is the respondent's share of family gross income (1 = sole
// earner; the belief concerns own income while x is family income, so
// the progressivity change acts on the own-income part only).
// `shares` is either empty (all r = 1) or one value in (0,1] per row.
// For r = 1 the belief shift equals shift_full over net_to_net_map.
CounterfactualStates shift_states(const Panel& panel, const TaxSchedule& tax0,
                                  const TaxSchedule& tax1,
                                  const std::vector<double>& shares = {});

// The schedule level (scale parameter, i.e. level_rel * mean_gross^tau)
// at progressivity `tau1` that keeps expected tax revenue equal to
// revenue under `tax0`, when log net family income under tax0 is normal
// with mean `mu_x` and standard deviation `sigma_x` (so gross income is
// lognormal).  Closed form:
//   log scale1 = log scale0 + (tau1 - tau0) * mu_w
//              + sigma_w^2/2 * ((1-tau0)^2 - (1-tau1)^2),
// with mu_w = (mu_x - log scale0)/(1-tau0), sigma_w = sigma_x/(1-tau0)
// the moments of log gross income.
double revenue_neutral_lambda(const TaxSchedule& tax0, double tau1, double mu_x,
                              double sigma_x);

// Convenience: the full revenue-neutral schedule at progressivity tau1,
// anchored at the same mean gross income as tax0.
TaxSchedule revenue_neutral_schedule(const TaxSchedule& tax0, double tau1, double mu_x,
                                     double sigma_x);

// ---------------------------------------------------------------------
// Consumption-rule fits that the plug-in evaluation consumes.

// Asset controls of the standard consumption-rule specification: log
// income, belief mean, their interaction, age, age squared, and a
// linear, quadratic, or piecewise-linear (20-knot) function of log
// assets.
enum class AssetControl { linear, quadratic, spline };

// Basis specification for the consumption rule with the given asset
// control.
BasisSpec consumption_rule_spec(AssetControl control);

enum class FitForm {
    levels,             // log consumption on basis terms plus a constant
    first_differences,  // within-household differences, no constant
};

// Fits the consumption rule by weighted least squares with
// household-clustered standard errors.  Basis columns with (weighted)
// root-mean-square below 1e-9 — covariates with no cross-sectional
// variation contribute exactly-zero centered columns — are dropped from
// the design; plug_in_ape treats such terms as zero coefficients.
FitResult fit_consumption_rule(const Panel& panel, const Basis& basis, FitForm form);

// ---------------------------------------------------------------------
// Plug-in average partial effects.

struct PlugInOptions {
    // Purely transitory reform: beliefs do not move, the dynamic effect
    // is identically zero and the total effect equals the
    // contemporaneous one.
    bool transitory = false;
    // Evaluate the belief shift at pre-reform income x0 instead of the
    // default x1.  Under the default the three effects satisfy
    // cape + dape = tape exactly (the x-step and the belief-step
    // telescope); under the pre-reform evaluation the identity holds
    // only approximately and the reported dape is the direct estimate.
    bool dape_at_pretax_x = false;
    int n_quantile_groups = 5;
};

// One reporting cell ("pooled" or "q1".."qk").
struct ApeCell {
    std::string name;
    double cape = 0.0;
    double dape = 0.0;
    double tape = 0.0;
    double cape_se = 0.0;  // filled by bootstrap_ape; 0 until then
    double dape_se = 0.0;
    double tape_se = 0.0;
    double weight = 0.0;  // total survey weight in the cell
    long long n_rows = 0;
};

// Plug-in effects of one reform under one specification.  Metadata
// (scenario and specification labels, seed) is set by the caller and
// carried into the serialized output.
struct ApeResult {
    std::string counterfactual;
    std::string spec;
    std::uint64_t seed = 0;
    ApeCell pooled;
    std::vector<ApeCell> quintiles;
    // Share of rows whose shifted covariate falls outside the range the
    // basis observed, per covariate dimension (age, x, assets, mu, var)
    // and overall (any dimension).  Always reported: shifted states can
    // leave the support of the data, and estimates there are
    // extrapolations.
    std::array<double, 5> outside_share_by_dim{};
    double outside_share = 0.0;
    // Basis terms absent from the fit (dropped for zero variation),
    // treated as zero coefficients in the evaluation.
    std::vector<std::string> dropped_terms;

    // CSV with header
    //   counterfactual,spec,cell,cape,dape,tape,cape_se,dape_se,tape_se
    // and one row per cell (pooled first, then quintiles).  Labels must
    // not contain commas, quotes, or newlines.
    std::string to_csv() const;
    // Long-format rows for the chart emitter, header
    //   counterfactual,spec,cell,mode,value,se
    // one row per quintile per mode (cape, dape, tape).
    std::string plot_rows() const;
};

// Evaluates the fitted rule at baseline and shifted covariates and
// averages the differences with survey weights:
//   cape: shift x only,
//   tape: shift x, belief mean, and belief variance,
//   dape: tape - cape (the belief step evaluated at post-reform income).
// Cells are weighted quantile groups of baseline log family income
// (ties broken by household id) plus the pooled row.  `fit` must come
// from a design whose columns are terms of `basis` (plus "const", which
// cancels in differences); any other name throws.  `states` must be
// aligned with `panel.rows`.
ApeResult plug_in_ape(const FitResult& fit, const Basis& basis, const Panel& panel,
                      const CounterfactualStates& states, const PlugInOptions& options = {});

// ---------------------------------------------------------------------
// Bootstrap inference.

// A complete estimation pipeline: given a (re)sampled panel and a seed,
// produce the point estimates.  Any estimated inputs that should be
// reflected in the standard errors (belief estimation from raw survey
// responses, basis construction, fitting, state shifts) belong inside
// the closure.
using ApePipeline = std::function<ApeResult(const Panel& panel, std::uint64_t seed)>;

// Household-cluster bootstrap: runs the pipeline on the original panel,
// then on `n_boot` resamples (households drawn with replacement and
// renumbered, so repeated draws act as distinct clusters), and fills the
// per-cell standard-error fields of the point result with the standard
// deviation of the replicate estimates.  Throws if n_boot <= 0 (no
// inference without replications) or if a replicate changes the cell
// layout.
ApeResult bootstrap_ape(const ApePipeline& pipeline, const Panel& panel, int n_boot,
                        std::uint64_t seed);

}  // namespace apekit
