#include "apekit/beliefs.hpp"

#include <cmath>

namespace apekit {

NormalBelief shift_full(const NormalBelief& belief, const AffineIncomeMap& map) {
    return NormalBelief(map.intercept + map.slope * belief.mean,
                        map.slope * map.slope * belief.var);
}

NormalBelief shift_kl(const NormalBelief& belief, double delta, const AdjustmentCost& cost) {
    if (cost.is_infinite()) return belief;
    const double xi = cost.value();
    const double move = delta / (1.0 + xi);
    return NormalBelief(belief.mean + move, belief.var + xi * move * move);
}

double kl_normal(const NormalBelief& candidate, const NormalBelief& current) {
    if (!(candidate.var > 0.0) || !(current.var > 0.0)) {
        throw std::invalid_argument("kl_normal: variances must be > 0");
    }
    const double ratio = current.var / candidate.var;
    const double md = current.mean - candidate.mean;
    return 0.5 * (ratio + md * md / candidate.var - 1.0 - std::log(ratio));
}

BayesState bayes_update(const BayesState& state, double obs) {
    const double post_prec = 1.0 / state.post_var + 1.0 / state.noise_var;
    const double new_var = 1.0 / post_prec;
    const double gain = new_var / state.noise_var;
    const double new_mean = state.post_mean + gain * (obs - state.post_mean);
    return BayesState(new_mean, new_var, state.noise_var);
}

double bayes_gain(const BayesState& state) {
    const double new_var = 1.0 / (1.0 / state.post_var + 1.0 / state.noise_var);
    return new_var / state.noise_var;
}

NormalBelief bayes_predictive(const BayesState& state) {
    return NormalBelief(state.post_mean, state.post_var + state.noise_var);
}

double adaptive_update(double prev_mean, double realized, double gain, double shock) {
    return prev_mean + gain * (realized - prev_mean) + shock;
}

}  // namespace apekit
