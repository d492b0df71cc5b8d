// Subjective income beliefs and how they respond to news and to policy.
//
// A belief is a normal distribution over next-period log income.  Three
// update mechanisms live here:
//   * full adjustment to an affine change of the income variable,
//   * costly (KL-penalized) partial adjustment to an additive shift,
//   * Bayesian learning about a fixed mean, and a constant-gain
//     adaptive recursion.
#pragma once

#include <stdexcept>

namespace apekit {

// Normal belief over a scalar (log income).  Variance may be zero
// (degenerate point belief, produced e.g. by min==max survey answers).
struct NormalBelief {
    double mean = 0.0;
    double var = 0.0;

    NormalBelief() = default;
    NormalBelief(double mean_, double var_) : mean(mean_), var(var_) {
        if (!(var >= 0.0)) throw std::invalid_argument("NormalBelief: var must be >= 0");
    }
};

// Affine change of the income variable: new = intercept + slope * old.
// Slope must be positive (order-preserving).
struct AffineIncomeMap {
    double intercept = 0.0;
    double slope = 1.0;

    AffineIncomeMap() = default;
    AffineIncomeMap(double intercept_, double slope_) : intercept(intercept_), slope(slope_) {
        if (!(slope > 0.0)) throw std::invalid_argument("AffineIncomeMap: slope must be > 0");
    }
    // Composition: apply `inner` first, then this map.
    AffineIncomeMap after(const AffineIncomeMap& inner) const {
        return {intercept + slope * inner.intercept, slope * inner.slope};
    }
    double operator()(double x) const { return intercept + slope * x; }
};

// Adjustment-cost parameter xi >= 0, with "no adjustment" (xi = infinity)
// as a distinguished state rather than a floating-point sentinel.
class AdjustmentCost {
  public:
    static AdjustmentCost finite(double xi) {
        if (!(xi >= 0.0)) throw std::invalid_argument("AdjustmentCost: xi must be >= 0");
        return AdjustmentCost(xi, false);
    }
    static AdjustmentCost frictionless() { return AdjustmentCost(0.0, false); }
    static AdjustmentCost infinite() { return AdjustmentCost(0.0, true); }

    bool is_infinite() const { return infinite_; }
    double value() const {
        if (infinite_) throw std::logic_error("AdjustmentCost: value() on infinite cost");
        return xi_;
    }

  private:
    AdjustmentCost(double xi, bool inf) : xi_(xi), infinite_(inf) {}
    double xi_;
    bool infinite_;
};

// Belief after a frictionless (cost-free) adjustment to the affine change:
// the agent adopts the exact distribution of the mapped variable,
// N(intercept + slope*mean, slope^2 * var).
NormalBelief shift_full(const NormalBelief& belief, const AffineIncomeMap& map);

// Belief after a costly adjustment to an additive shift `delta`.
// The adjusted belief maximizes expected log-density of the shifted
// income minus xi times the directed KL cost of moving the belief:
//   mean' = mean + delta/(1+xi),
//   var'  = var + xi * (delta/(1+xi))^2.
// xi = 0 reduces to the full additive shift; xi = infinite leaves the
// belief unchanged.
NormalBelief shift_kl(const NormalBelief& belief, double delta, const AdjustmentCost& cost);

// Directed KL divergence used by the adjustment objective: the
// expectation is taken under the *current* (pre-change) belief,
//   kl_normal(candidate, current) = E_current[log f_current - log f_candidate].
// Requires candidate.var > 0 and current.var > 0.
double kl_normal(const NormalBelief& candidate, const NormalBelief& current);

// Conjugate normal learning about a fixed unknown mean observed with
// known noise variance.
struct BayesState {
    double post_mean = 0.0;
    double post_var = 1.0;   // must be > 0
    double noise_var = 1.0;  // must be > 0

    BayesState() = default;
    BayesState(double mean_, double var_, double noise_) : post_mean(mean_), post_var(var_), noise_var(noise_) {
        if (!(post_var > 0.0)) throw std::invalid_argument("BayesState: post_var must be > 0");
        if (!(noise_var > 0.0)) throw std::invalid_argument("BayesState: noise_var must be > 0");
    }
};

// One observation: precisions add, and the mean moves by the learning
// gain (new posterior variance / noise variance) times the surprise:
//   1/var' = 1/var + 1/noise,  mean' = mean + (var'/noise)*(obs - mean).
BayesState bayes_update(const BayesState& state, double obs);

// Learning gain lambda = post_var'/noise_var applied on the *next*
// observation from this state; shrinks to zero as data accumulate.
double bayes_gain(const BayesState& state);

// Predictive distribution for the next observation, N(mean, post_var + noise_var).
NormalBelief bayes_predictive(const BayesState& state);

// Constant-gain adaptive mean update with an idiosyncratic shock:
//   mean' = prev + gain*(realized - prev) + shock.
double adaptive_update(double prev_mean, double realized, double gain, double shock);

}  // namespace apekit
