// Finite-horizon consumption-savings model with income risk, a
// borrowing constraint, a progressive tax-and-transfer schedule, and a
// bend-point pension formula.  Households enter work at age 25, retire
// after `retirement` periods, and die with certainty at the end of
// period `horizon` - 1.  Log net labor income is
//
//   x_t = kappa_t + eta_t + eps_t,     eta_t = eta_{t-1} + v_t,
//
// a deterministic age profile plus a permanent random-walk component
// plus a transitory shock.  Beliefs over next-period log income are the
// model state that distinguishes the two expectation regimes:
//   * rational  - mean kappa_{t+1} + eta_t, the true conditional mean;
//   * adaptive  - a constant-gain recursion on realized income with an
//     idiosyncratic belief shock.
// Both regimes carry conditional variance var_v + var_eps.
//
// The solver runs backward induction on cash-on-hand grids with
// Gauss-Hermite integration of the agent's subjective predictive
// distribution; pensions depend on average gross earnings over a late
// contribution window, carried as an extra state from the start of that
// window (with the first contribution integrated inside the
// expectation, so earlier ages need no pension state at all).
#pragma once

#include <cstdint>
#include <limits>
#include <vector>

#include "apekit/tax.hpp"

namespace apekit {

struct Panel;  // econometrics.hpp

// Expectation regime of the model economy.
enum class Regime {
    rational,
    adaptive,
};

// Constant-gain adaptive expectations: the subjective mean of next
// log income responds to the realized income surprise with gain
// `gamma_adapt` and receives an idiosyncratic N(0, var_u) shock.
struct AdaptiveRule {
    double gamma_adapt = 0.5;
    double var_u = 0.2;

    void validate() const;
};

// Pension benefit formula.  Benefits are piecewise linear in average
// gross earnings over the contribution window with two bend points
// (expressed as fractions of economy-wide average gross earnings),
// rescaled so the worker with the average late-career earnings level
// receives `target_replacement` of it pre-tax.  Contributions are
// capped, and only `taxable_share` of the pre-tax benefit passes
// through the tax schedule.
struct PensionRule {
    double bend1 = 0.18;
    double bend2 = 1.10;
    double rate1 = 0.90;
    double rate2 = 0.32;
    double rate3 = 0.15;
    double target_replacement = 0.45;
    double contribution_cap = 2.2;
    double taxable_share = 0.85;

    void validate() const;
};

// Discretization controls for the solver.
struct GridSpec {
    int asset_nodes = 200;               // cash-on-hand and savings nodes
    double asset_income_multiple = 60.0; // savings grid top, multiples of mean net income
    int belief_nodes = 60;               // belief-mean nodes (equally spaced)
    double belief_sd_span = 4.0;         // half-width in unconditional standard deviations
    int pension_nodes = 20;              // average-earnings nodes
    int quadrature_nodes = 9;            // Gauss-Hermite nodes per shock dimension

    void validate() const;
};

struct LifecycleModel {
    int horizon = 70;            // total periods T; age = 25 + t
    int retirement = 35;         // first retired period T_ret
    int contribution_start = 25; // first period of the pension contribution window T_cont
    double risk_aversion = 2.0;  // CRRA coefficient gamma
    double discount = 1.0 / 1.03;
    double interest = 0.03;
    std::vector<double> age_profile; // kappa_t, one entry per working period
    double var_eta1 = 0.15;          // variance of the initial permanent component
    double var_v = 0.01;             // permanent-shock variance
    double var_eps = 0.05;           // transitory-shock variance
    TaxSchedule tax = TaxSchedule::from_scale(3.826, 0.137);
    PensionRule pension;
    Regime regime = Regime::rational;
    AdaptiveRule adaptive;
    // Uniform proportional levy on every net income (labor and pension):
    // actual incomes are net_income_scale times the schedule's net amount.
    // A permanent income tax of rate r corresponds to scale 1 - r.
    double net_income_scale = 1.0;
    GridSpec grid;

    static constexpr int entry_age = 25;
    double age_of(int t) const { return entry_age + t; }
    int contribution_years() const { return retirement - contribution_start; }

    void validate() const;

    // Calibrated baseline economy under the given regime: gamma = 2,
    // r = 3%, beta = 1/(1+r), the schedule (3.826, 0.137), and a
    // hump-shaped age profile whose level anchors average gross
    // earnings to the schedule's implied mean-income unit.
    static LifecycleModel baseline(Regime regime);
};

// Population moments of the income process, computed in closed form
// from the lognormal structure (gross earnings are exogenous, so no
// simulation is involved).
struct EarningsAnchors {
    double mean_gross = 0.0;      // economy-wide average gross earnings, all working ages
    double mean_gross_late = 0.0; // average gross earnings over the contribution window
    double mean_net = 0.0;        // average net labor income (includes net_income_scale)
};

EarningsAnchors earnings_anchors(const LifecycleModel& model);

// After-tax pension income for a household whose average gross earnings
// over the contribution window equal `avg_gross`.  Applies the capped
// bend-point formula, the replacement-rate rescaling, partial taxation
// of the benefit, and the economy's net-income scale.
double pension_income(double avg_gross, const LifecycleModel& model);

// Grid policies from backward induction.  State layout by age t:
//   * t <  contribution_start:  (belief, cash)
//   * contribution_start <= t < retirement:  (belief, pension, cash)
//   * t >= retirement:  (pension, cash)
// Arrays are flat with cash fastest, then pension, then belief.  The
// belief coordinate is net of the age profile: eta_t under rational
// expectations, and the adaptive subjective mean of x_{t+1} minus
// kappa_{t+1} minus log(net_income_scale) under adaptive expectations.
struct PolicySolution {
    int horizon = 0;
    int retirement = 0;
    int contribution_start = 0;
    std::vector<double> cash_grid;    // cash-on-hand nodes
    std::vector<double> savings_grid; // post-decision savings nodes
    std::vector<double> belief_grid;  // net belief-mean nodes
    std::vector<double> pension_grid; // average gross-earnings nodes
    std::vector<std::vector<double>> consume; // [t] -> flat array over the age-t states
    std::vector<std::vector<double>> value;   // matching value arrays

    bool has_belief_dim(int t) const { return t < retirement; }
    bool has_pension_dim(int t) const { return t >= contribution_start; }

    // Interpolated consumption at an arbitrary state.  Belief and
    // pension coordinates are clamped to their grids; cash extrapolates
    // linearly above the top node and proportionally below the bottom
    // one, always respecting 0 <= c <= cash.
    double consumption(int t, double cash, double belief = 0.0, double pension_avg = 0.0) const;

    // Interpolated value (clamped at the cash-grid ends); primarily for
    // diagnostics and tests.
    double value_at(int t, double cash, double belief = 0.0, double pension_avg = 0.0) const;
};

// Backward induction over the model's full horizon.
PolicySolution solve(const LifecycleModel& model);

// Half-open recording window [first_period, last_period] for simulated
// rows; simulation always runs from t = 0 regardless of the window.
struct RecordWindow {
    int first_period = 0;
    int last_period = std::numeric_limits<int>::max();
};

// Simulated household-period records (column layout).  `state` is the
// net belief coordinate (eta_t rational, adaptive net mean otherwise);
// belief_mean/belief_var describe the subjective distribution of next
// period's log income and are NaN where undefined (retirement and the
// final working period).  Assets are start-of-period holdings; the
// budget identity z' = (1+r) z + w - c holds row to row by construction.
struct SimulatedPanel {
    std::vector<std::int64_t> household;
    std::vector<int> period;
    std::vector<double> log_income;  // realized log net income (labor or pension)
    std::vector<double> state;
    std::vector<double> transitory;  // realized transitory shock (0 in retirement)
    std::vector<double> belief_mean;
    std::vector<double> belief_var;
    std::vector<double> assets;
    std::vector<double> consumption;
    std::vector<double> gross;       // gross labor earnings or pre-tax pension

    std::size_t size() const { return household.size(); }
};

// Forward simulation under the true income process, drawing one RNG
// stream per household id so records are independent of n_households
// and reproducible across runs.
SimulatedPanel simulate(const PolicySolution& policy, const LifecycleModel& model,
                        std::int64_t n_households, std::uint64_t seed,
                        RecordWindow window = RecordWindow{});

// Regression-ready panel: working-age rows with defined beliefs,
// positive assets, and age within [min_age, max_age].  Columns follow
// the econometrics Panel contract (wave = model period, weight = 1).
Panel to_panel(const SimulatedPanel& sim, double min_age, double max_age);

// Structural effects of a permanent proportional net-income tax,
// log income shifted by log(1 - tax_rate_increase).
struct StructuralApe {
    std::vector<int> ages;            // evaluation ages
    std::vector<double> cape_by_age;
    std::vector<double> dape_by_age;
    std::vector<double> tape_by_age;
    std::vector<std::int64_t> count_by_age;
    double cape = 0.0;                // pooled means over all evaluation rows
    double dape = 0.0;
    double tape = 0.0;
    std::int64_t count = 0;
};

// Ground-truth counterfactual: solves the baseline and the taxed
// economy, simulates the baseline once, and evaluates both policies at
// each evaluation state (working households aged 26-49 with positive
// assets).  The contemporaneous effect reprices current income only
// (one-period surprise: baseline continuation policies, beliefs
// unshifted); the total effect uses the taxed economy's policies with
// beliefs shifted by the regime's response to the news - fully under
// rational expectations, by one constant-gain step under adaptive.
// The dynamic effect is their difference, so cape + dape = tape holds
// exactly row by row.
StructuralApe structural_tape(const LifecycleModel& model, double tax_rate_increase,
                              std::int64_t n_households, std::uint64_t seed);

}  // namespace apekit
