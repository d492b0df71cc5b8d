#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "apekit/econometrics.hpp"
#include "apekit/lifecycle.hpp"
#include "apekit/rng.hpp"
#include "apekit/tax.hpp"

using namespace apekit;

namespace {

// Coarser grids keep the unit suite fast; accuracy-sensitive checks get
// tolerances sized for this resolution.
GridSpec reduced_grid() {
    GridSpec g;
    g.asset_nodes = 120;
    g.belief_nodes = 25;
    g.pension_nodes = 10;
    g.quadrature_nodes = 7;
    return g;
}

LifecycleModel reduced_baseline(Regime regime) {
    LifecycleModel m = LifecycleModel::baseline(regime);
    m.grid = reduced_grid();
    return m;
}

const LifecycleModel& cached_rational_model() {
    static const LifecycleModel m = reduced_baseline(Regime::rational);
    return m;
}

const PolicySolution& cached_rational_policy() {
    static const PolicySolution pol = solve(cached_rational_model());
    return pol;
}

// Deterministic economy: all income risk switched off.
LifecycleModel certainty_model() {
    LifecycleModel m = reduced_baseline(Regime::rational);
    m.var_eta1 = 0.0;
    m.var_v = 0.0;
    m.var_eps = 0.0;
    return m;
}

}  // namespace

TEST_CASE("model validation rejects inconsistent settings") {
    LifecycleModel m = LifecycleModel::baseline(Regime::rational);
    CHECK_NOTHROW(m.validate());

    LifecycleModel bad = m;
    bad.retirement = bad.horizon;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);

    bad = m;
    bad.contribution_start = bad.retirement;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);

    bad = m;
    bad.age_profile.pop_back();
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);

    bad = m;
    bad.var_v = -0.1;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);

    bad = m;
    bad.net_income_scale = 0.0;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);

    bad = m;
    bad.grid.asset_nodes = 2;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);

    bad = m;
    bad.pension.rate2 = bad.pension.rate1;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("baseline age profile is hump shaped and anchored") {
    const LifecycleModel m = LifecycleModel::baseline(Regime::rational);
    REQUIRE(static_cast<int>(m.age_profile.size()) == m.retirement);

    // Hump shape: growth early, a peak near the 26th working year, and a
    // mild decline afterwards.
    const auto peak = std::max_element(m.age_profile.begin(), m.age_profile.end());
    const int peak_idx = static_cast<int>(peak - m.age_profile.begin());
    CHECK(peak_idx >= 23);
    CHECK(peak_idx <= 27);
    const double rise = m.age_profile[25] - m.age_profile[0];
    CHECK(rise == doctest::Approx(0.45).epsilon(0.03));
    const double late = m.age_profile[34] - m.age_profile[0];
    CHECK(late == doctest::Approx(0.40).epsilon(0.03));
    CHECK(m.age_profile[1] - m.age_profile[0] > 0.03);
    CHECK(m.age_profile[1] - m.age_profile[0] < 0.07);

    // The intercept pins average gross earnings to the income unit at
    // which the schedule's level coefficient is 0.9 of mean earnings.
    const double k_target = std::pow(m.tax.scale() / 0.9, 1.0 / m.tax.tau);
    const EarningsAnchors a = earnings_anchors(m);
    CHECK(a.mean_gross == doctest::Approx(k_target).epsilon(1e-10));
    CHECK(a.mean_gross_late / a.mean_gross > 1.0);
    CHECK(a.mean_gross_late / a.mean_gross < 2.0);
    CHECK(a.mean_net > 0.0);
    CHECK(a.mean_net < a.mean_gross);
}

TEST_CASE("earnings anchors match a Monte Carlo oracle") {
    const LifecycleModel m = LifecycleModel::baseline(Regime::rational);
    const EarningsAnchors a = earnings_anchors(m);

    const int n = 60000;
    const double sv = std::sqrt(m.var_v), se = std::sqrt(m.var_eps);
    double sum_g = 0.0, sum_late = 0.0, sum_net = 0.0;
    for (int i = 0; i < n; ++i) {
        RngStream rng(20240517u, Stream::oracle, static_cast<std::uint64_t>(i));
        double eta = rng.normal(0.0, std::sqrt(m.var_eta1));
        for (int t = 0; t < m.retirement; ++t) {
            if (t > 0) eta += rng.normal(0.0, sv);
            const double eps = rng.normal(0.0, se);
            const double xnet = m.age_profile[static_cast<std::size_t>(t)] + eta + eps;
            const double g = gross_from_net(m.tax, std::exp(xnet));
            sum_g += g;
            if (t >= m.contribution_start) sum_late += g;
            sum_net += m.net_income_scale * std::exp(xnet);
        }
    }
    const double mc_gross = sum_g / (static_cast<double>(n) * m.retirement);
    const double mc_late = sum_late / (static_cast<double>(n) * m.contribution_years());
    const double mc_net = sum_net / (static_cast<double>(n) * m.retirement);

    CHECK(a.mean_gross == doctest::Approx(mc_gross).epsilon(0.025));
    CHECK(a.mean_gross_late == doctest::Approx(mc_late).epsilon(0.025));
    CHECK(a.mean_net == doctest::Approx(mc_net).epsilon(0.025));
}

TEST_CASE("anchors scale with the net income level") {
    LifecycleModel m = LifecycleModel::baseline(Regime::rational);
    const EarningsAnchors base = earnings_anchors(m);
    m.net_income_scale = 0.9;
    const EarningsAnchors shifted = earnings_anchors(m);
    CHECK(shifted.mean_gross == base.mean_gross);
    CHECK(shifted.mean_gross_late == base.mean_gross_late);
    CHECK(shifted.mean_net == doctest::Approx(0.9 * base.mean_net).epsilon(1e-12));
}

TEST_CASE("pension benefit is piecewise linear with a cap") {
    // A flat schedule (tau = 0, scale = 1) makes the after-tax benefit
    // equal to the pre-tax one, exposing the raw formula.
    LifecycleModel m = LifecycleModel::baseline(Regime::rational);
    m.tax = TaxSchedule::from_scale(1.0, 0.0);
    m.pension.taxable_share = 1.0;

    const EarningsAnchors a = earnings_anchors(m);
    const double k = a.mean_gross;
    const double b1 = m.pension.bend1 * k;
    const double b2 = m.pension.bend2 * k;
    const double cap = m.pension.contribution_cap * k;
    const double raw_ref = 0.90 * b1 + 0.32 * (b2 - b1) + 0.15 * (a.mean_gross_late - b2);
    const double sfac = m.pension.target_replacement * a.mean_gross_late / raw_ref;

    CHECK(pension_income(0.0, m) == 0.0);
    // Replacement target holds exactly at average late-career earnings.
    CHECK(pension_income(a.mean_gross_late, m) ==
          doctest::Approx(0.45 * a.mean_gross_late).epsilon(1e-12));
    // First segment is linear with slope 0.90 * sfac.
    CHECK(pension_income(0.5 * b1, m) == doctest::Approx(sfac * 0.90 * 0.5 * b1).epsilon(1e-12));
    CHECK(pension_income(b1, m) == doctest::Approx(sfac * 0.90 * b1).epsilon(1e-12));
    // Second segment has slope 0.32 * sfac.
    CHECK(pension_income(b2, m) - pension_income(b1, m) ==
          doctest::Approx(sfac * 0.32 * (b2 - b1)).epsilon(1e-12));
    // Benefits are flat beyond the contribution cap.
    CHECK(pension_income(cap, m) == pension_income(2.0 * cap, m));
    CHECK(pension_income(cap, m) > pension_income(b2, m));

    CHECK_THROWS_AS(pension_income(-1.0, m), std::invalid_argument);

    // With the progressive schedule the benefit is taxed: after-tax
    // income lies below the pre-tax benefit at high benefit levels and
    // the 15% exempt share keeps it above the schedule alone.
    const LifecycleModel prog = LifecycleModel::baseline(Regime::rational);
    const EarningsAnchors ap = earnings_anchors(prog);
    const double pre = 0.45 * ap.mean_gross_late;
    const double net = pension_income(ap.mean_gross_late, prog);
    const double sched_only = net_income(prog.tax, pre);
    CHECK(net > sched_only);
    CHECK(net < net_income(prog.tax, 0.85 * pre) + 0.15 * pre + 1e-9);
}

TEST_CASE("terminal age consumes all cash") {
    const PolicySolution& pol = cached_rational_policy();
    const int t = pol.horizon - 1;
    const std::vector<double>& cons = pol.consume.back();
    const std::size_t na = pol.pension_grid.size();
    const std::size_t nh = pol.cash_grid.size();
    REQUIRE(cons.size() == na * nh);
    for (std::size_t ia = 0; ia < na; ++ia) {
        for (std::size_t ih = 0; ih < nh; ++ih) {
            CHECK(cons[ia * nh + ih] == doctest::Approx(pol.cash_grid[ih]).epsilon(1e-9));
        }
    }
    const double mid = 0.5 * (pol.cash_grid[3] + pol.cash_grid[4]);
    CHECK(pol.consumption(t, mid, 0.0, pol.pension_grid[1]) == doctest::Approx(mid).epsilon(1e-9));
}

TEST_CASE("two-period certainty model matches the closed-form policy") {
    LifecycleModel m;
    m.horizon = 2;
    m.retirement = 1;
    m.contribution_start = 0;
    m.age_profile = {0.0};
    m.var_eta1 = 0.0;
    m.var_v = 0.0;
    m.var_eps = 0.0;
    m.tax = TaxSchedule::from_scale(1.0, 0.0);
    m.pension.taxable_share = 1.0;
    m.grid.asset_nodes = 400;
    m.grid.asset_income_multiple = 2.0;
    m.grid.belief_nodes = 1;
    m.grid.pension_nodes = 6;
    m.grid.quadrature_nodes = 1;

    const PolicySolution pol = solve(m);
    const double r = m.interest;
    REQUIRE(m.discount * (1.0 + r) == doctest::Approx(1.0).epsilon(1e-12));

    const std::size_t na = pol.pension_grid.size();
    const std::size_t nh = pol.cash_grid.size();
    double worst = 0.0;
    double sum_err = 0.0;
    int count = 0;
    for (std::size_t ia = 0; ia < na; ++ia) {
        const double wss = pension_income(pol.pension_grid[ia], m);
        for (std::size_t ih = 0; ih < nh; ++ih) {
            const double h = pol.cash_grid[ih];
            // Perfect smoothing: c0 = c1 when the borrowing constraint
            // does not bind, otherwise consume all cash today.
            const double unconstrained = ((1.0 + r) * h + wss) / (2.0 + r);
            const double expect = std::min(unconstrained, h);
            // Below a few savings-grid steps the piecewise-linear
            // continuation cannot resolve the optimum; skip those nodes.
            if (expect < h && h - expect < 25.0 * pol.savings_grid[1]) continue;
            const double got = pol.consume[0][ia * nh + ih];
            const double err = std::fabs(got - expect) / expect;
            worst = std::max(worst, err);
            sum_err += err;
            ++count;

            const double c1 = (1.0 + r) * (h - expect) + wss;
            const double v = -1.0 / expect - m.discount / c1;
            CHECK(pol.value[0][ia * nh + ih] == doctest::Approx(v).epsilon(0.01));
        }
    }
    CHECK(worst < 0.025);
    CHECK(sum_err / count < 0.006);
}

TEST_CASE("policy and value arrays satisfy monotonicity invariants") {
    const PolicySolution& pol = cached_rational_policy();
    const int nh = static_cast<int>(pol.cash_grid.size());
    const double c_slack = 1e-5 * pol.cash_grid.back();
    for (int t = 0; t < pol.horizon; ++t) {
        const int nb = pol.has_belief_dim(t) ? static_cast<int>(pol.belief_grid.size()) : 1;
        const int na = pol.has_pension_dim(t) ? static_cast<int>(pol.pension_grid.size()) : 1;
        const std::vector<double>& cons = pol.consume[static_cast<std::size_t>(t)];
        const std::vector<double>& val = pol.value[static_cast<std::size_t>(t)];
        REQUIRE(cons.size() == static_cast<std::size_t>(nb) * na * nh);
        for (int ib = 0; ib < nb; ++ib) {
            for (int ia = 0; ia < na; ++ia) {
                const std::size_t base = (static_cast<std::size_t>(ib) * na + ia) * nh;
                for (int ih = 0; ih + 1 < nh; ++ih) {
                    // Consumption and value are nondecreasing in cash.
                    CHECK(cons[base + ih + 1] >= cons[base + ih] - c_slack);
                    CHECK(val[base + ih + 1] >=
                          val[base + ih] - 1e-8 * (std::fabs(val[base + ih]) + 1e-12));
                }
            }
        }
        // Value is nondecreasing in the belief about future income.
        for (int ib = 0; ib + 1 < nb; ++ib) {
            for (int ia = 0; ia < na; ++ia) {
                const std::size_t lo = (static_cast<std::size_t>(ib) * na + ia) * nh;
                const std::size_t hi = (static_cast<std::size_t>(ib + 1) * na + ia) * nh;
                for (int ih = 0; ih < nh; ++ih) {
                    CHECK(val[hi + ih] >= val[lo + ih] - 1e-8 * (std::fabs(val[lo + ih]) + 1e-12));
                }
            }
        }
    }
}

TEST_CASE("simulation satisfies the budget identity and records consistent columns") {
    const LifecycleModel& m = cached_rational_model();
    const PolicySolution& pol = cached_rational_policy();
    const SimulatedPanel sim = simulate(pol, m, 300, 77u);
    REQUIRE(sim.size() == 300u * static_cast<std::size_t>(m.horizon));

    const double r = m.interest;
    std::size_t idx = 0;
    for (int hh = 0; hh < 300; ++hh) {
        double z = 0.0;
        for (int t = 0; t < m.horizon; ++t, ++idx) {
            REQUIRE(sim.household[idx] == hh);
            REQUIRE(sim.period[idx] == t);
            CHECK(sim.assets[idx] == doctest::Approx(z).epsilon(1e-9));
            CHECK(sim.assets[idx] >= 0.0);
            const double w = std::exp(sim.log_income[idx]);
            const double h = (1.0 + r) * sim.assets[idx] + w;
            CHECK(sim.consumption[idx] >= 0.0);
            CHECK(sim.consumption[idx] <= h * (1.0 + 1e-10));
            z = h - sim.consumption[idx];

            if (t < m.retirement) {
                CHECK(std::isfinite(sim.state[idx]));
                CHECK(sim.gross[idx] ==
                      doctest::Approx(gross_from_net(m.tax, std::exp(sim.log_income[idx])))
                          .epsilon(1e-10));
                if (t + 1 < m.retirement) {
                    CHECK(sim.belief_var[idx] == m.var_v + m.var_eps);
                    // Net of the profile, the recorded belief is the
                    // permanent component under rational expectations.
                    CHECK(sim.belief_mean[idx] - sim.state[idx] ==
                          doctest::Approx(m.age_profile[static_cast<std::size_t>(t + 1)])
                              .epsilon(1e-10));
                } else {
                    CHECK(!std::isfinite(sim.belief_mean[idx]));
                }
            } else {
                CHECK(!std::isfinite(sim.belief_mean[idx]));
                CHECK(sim.gross[idx] >= 0.0);
            }
        }
        // Pension income is constant across retirement.
        const std::size_t tail = idx - 1;
        for (int back = 1; back < m.horizon - m.retirement; ++back) {
            CHECK(sim.log_income[tail - back + 1] == sim.log_income[tail - back]);
        }
    }
}

TEST_CASE("simulation is deterministic and per-household streams are stable") {
    const LifecycleModel& m = cached_rational_model();
    const PolicySolution& pol = cached_rational_policy();
    const SimulatedPanel a = simulate(pol, m, 5, 123u);
    const SimulatedPanel b = simulate(pol, m, 5, 123u);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a.consumption[i] == b.consumption[i]);
        CHECK(a.assets[i] == b.assets[i]);
    }
    // Adding households does not perturb earlier ones.
    const SimulatedPanel c = simulate(pol, m, 3, 123u);
    for (std::size_t i = 0; i < c.size(); ++i) {
        CHECK(a.consumption[i] == c.consumption[i]);
        CHECK(a.log_income[i] == c.log_income[i]);
    }
    // A different seed changes the draws.
    const SimulatedPanel d = simulate(pol, m, 5, 124u);
    bool any_diff = false;
    for (std::size_t i = 0; i < d.size(); ++i) {
        if (d.log_income[i] != a.log_income[i]) any_diff = true;
    }
    CHECK(any_diff);
}

TEST_CASE("record window restricts stored periods without changing draws") {
    const LifecycleModel& m = cached_rational_model();
    const PolicySolution& pol = cached_rational_policy();
    const SimulatedPanel full = simulate(pol, m, 4, 9u);
    const SimulatedPanel part = simulate(pol, m, 4, 9u, RecordWindow{5, 10});
    REQUIRE(part.size() == 4u * 6u);
    std::size_t j = 0;
    for (std::size_t i = 0; i < full.size(); ++i) {
        if (full.period[i] < 5 || full.period[i] > 10) continue;
        CHECK(part.household[j] == full.household[i]);
        CHECK(part.period[j] == full.period[i]);
        CHECK(part.consumption[j] == full.consumption[i]);
        CHECK(part.assets[j] == full.assets[i]);
        ++j;
    }
    CHECK(j == part.size());

    CHECK(simulate(pol, m, 0, 9u).size() == 0u);
}

TEST_CASE("certainty economy has degenerate cross-section and smooth paths") {
    const LifecycleModel m = certainty_model();
    const PolicySolution pol = solve(m);
    const SimulatedPanel sim = simulate(pol, m, 3, 5u);

    // All households are identical without shocks.
    const std::size_t T = static_cast<std::size_t>(m.horizon);
    for (std::size_t t = 0; t < T; ++t) {
        CHECK(sim.consumption[t] == sim.consumption[T + t]);
        CHECK(sim.consumption[t] == sim.consumption[2 * T + t]);
    }

    // With beta * (1 + r) = 1 and no risk, consumption is flat along the
    // path wherever the borrowing constraint is slack.
    const EarningsAnchors a = earnings_anchors(m);
    int checked = 0;
    for (std::size_t t = 0; t + 1 < T; ++t) {
        const double z_next = sim.assets[t + 1];
        const double w = std::exp(sim.log_income[t]);
        const double h = (1.0 + m.interest) * sim.assets[t] + w;
        const bool interior = z_next > 1e-4 * a.mean_net && sim.consumption[t] < h * (1.0 - 1e-9);
        if (!interior) continue;
        CHECK(sim.consumption[t + 1] / sim.consumption[t] == doctest::Approx(1.0).epsilon(0.03));
        ++checked;
    }
    CHECK(checked > 20);

    // Early in life income growth makes the constraint bind: consumption
    // tracks cash-on-hand exactly.
    const double w0 = std::exp(sim.log_income[0]);
    CHECK(sim.consumption[0] == doctest::Approx(w0).epsilon(1e-6));
}

TEST_CASE("policy scales with a uniform net income levy") {
    LifecycleModel base = reduced_baseline(Regime::rational);
    LifecycleModel taxed = base;
    const double s = 0.9;
    taxed.net_income_scale *= s;
    const PolicySolution pb = solve(base);
    const PolicySolution pt = solve(taxed);
    const EarningsAnchors a = earnings_anchors(base);

    const double k = a.mean_gross;
    const struct {
        int t;
        double h_rel, b, pen;
    } pts[] = {
        {1, 0.8, 0.0, 0.0},   {1, 2.5, 0.3, 0.0},   {10, 1.5, -0.4, 0.0},
        {20, 4.0, 0.2, 0.0},  {28, 3.0, 0.1, 0.7},  {33, 6.0, -0.2, 1.3},
        {40, 5.0, 0.0, 1.0},  {60, 2.0, 0.0, 0.6},
    };
    for (const auto& p : pts) {
        const double h = p.h_rel * a.mean_net;
        const double pen = p.pen * k;
        const double cb = pb.consumption(p.t, h, p.b, pen);
        const double ct = pt.consumption(p.t, s * h, p.b, pen);
        REQUIRE(cb > 0.0);
        CHECK(ct / (s * cb) == doctest::Approx(1.0).epsilon(1e-7));
    }
}

TEST_CASE("policy accessors handle off-grid queries and bad input") {
    const PolicySolution& pol = cached_rational_policy();
    CHECK_THROWS_AS(pol.consumption(-1, 1.0, 0.0, 0.0), std::out_of_range);
    CHECK_THROWS_AS(pol.consumption(pol.horizon, 1.0, 0.0, 0.0), std::out_of_range);

    // Below the bottom cash node consumption shrinks proportionally.
    const double lo = pol.cash_grid.front();
    const double c_lo = pol.consumption(3, lo, 0.0, 0.0);
    const double c_half = pol.consumption(3, 0.5 * lo, 0.0, 0.0);
    CHECK(c_half == doctest::Approx(0.5 * c_lo).epsilon(1e-9));

    // Far above the top node the extrapolation stays within the budget.
    const double huge = 3.0 * pol.cash_grid.back();
    const double c_huge = pol.consumption(3, huge, 0.0, 0.0);
    CHECK(c_huge > 0.0);
    CHECK(c_huge <= huge);

    // Belief queries beyond the grid clamp to the edge nodes.
    const double b_hi = pol.belief_grid.back();
    CHECK(pol.consumption(3, 2.0 * pol.cash_grid[50], 2.0 * b_hi, 0.0) ==
          pol.consumption(3, 2.0 * pol.cash_grid[50], b_hi, 0.0));
}

TEST_CASE("to_panel filters rows and maps columns") {
    const LifecycleModel& m = cached_rational_model();
    const PolicySolution& pol = cached_rational_policy();
    const SimulatedPanel sim = simulate(pol, m, 200, 31u);
    const Panel panel = to_panel(sim, 26.0, 49.0);
    REQUIRE(panel.rows.size() > 0);
    for (const PanelRow& row : panel.rows) {
        CHECK(row.age >= 26.0);
        CHECK(row.age <= 49.0);
        CHECK(std::isfinite(row.log_consumption));
        CHECK(std::isfinite(row.log_assets));
        CHECK(std::isfinite(row.belief_mean));
        CHECK(row.belief_var == m.var_v + m.var_eps);
        CHECK(row.weight == 1.0);
        CHECK(row.wave == static_cast<std::int64_t>(row.age) - LifecycleModel::entry_age);
    }
    // Zero-asset rows (e.g. the constrained young) are excluded.
    for (const PanelRow& row : panel.rows) CHECK(std::exp(row.log_assets) > 0.0);
}

TEST_CASE("structural evaluation is exactly zero at a zero rate") {
    const LifecycleModel m = cached_rational_model();
    const StructuralApe ape = structural_tape(m, 0.0, 400, 2024u);
    REQUIRE(ape.count > 0);
    CHECK(ape.cape == 0.0);
    CHECK(ape.dape == 0.0);
    CHECK(ape.tape == 0.0);
    REQUIRE(ape.ages.size() == 24u);
    CHECK(ape.ages.front() == 26);
    CHECK(ape.ages.back() == 49);
    for (std::size_t k = 0; k < ape.ages.size(); ++k) {
        CHECK(ape.cape_by_age[k] == 0.0);
        CHECK(ape.tape_by_age[k] == 0.0);
    }
}

TEST_CASE("structural effects are negative, additive, and fade with age") {
    const LifecycleModel m = cached_rational_model();
    const StructuralApe ape = structural_tape(m, 0.10, 1500, 99u);
    REQUIRE(ape.count > 0);

    CHECK(ape.cape < 0.0);
    CHECK(ape.dape < 0.0);
    CHECK(ape.tape < ape.cape);
    CHECK(ape.tape > -0.2);
    CHECK(std::fabs(ape.cape + ape.dape - ape.tape) <= 1e-15);
    for (std::size_t k = 0; k < ape.ages.size(); ++k) {
        CHECK(std::fabs(ape.cape_by_age[k] + ape.dape_by_age[k] - ape.tape_by_age[k]) <= 1e-15);
        CHECK(ape.tape_by_age[k] < 0.0);
    }

    // The cash-on-hand channel matters most for the young, who hold few
    // assets relative to income.
    const std::size_t i26 = 0, i45 = 19;
    REQUIRE(ape.ages[i26] == 26);
    REQUIRE(ape.ages[i45] == 45);
    CHECK(std::fabs(ape.cape_by_age[i26]) > std::fabs(ape.cape_by_age[i45]));
    CHECK(ape.cape_by_age[i26] < 0.0);
}

TEST_CASE("adaptive beliefs mute the total effect") {
    LifecycleModel rat = reduced_baseline(Regime::rational);
    LifecycleModel ada = reduced_baseline(Regime::adaptive);
    const StructuralApe er = structural_tape(rat, 0.10, 1200, 7u);
    const StructuralApe ea = structural_tape(ada, 0.10, 1200, 7u);
    REQUIRE(er.count > 0);
    REQUIRE(ea.count > 0);
    // Beliefs that move only part way towards the new level shrink the
    // anticipatory response.
    CHECK(ea.tape < -0.02);
    CHECK(std::fabs(ea.tape) < std::fabs(er.tape) - 0.01);
    CHECK(std::fabs(ea.dape) < std::fabs(er.dape));
}

TEST_CASE("solver rejects a policy paired with the wrong model") {
    const LifecycleModel& m = cached_rational_model();
    const PolicySolution& pol = cached_rational_policy();
    LifecycleModel other = m;
    other.retirement = 34;
    other.age_profile.pop_back();
    CHECK_THROWS_AS(simulate(pol, other, 1, 1u), std::invalid_argument);
    CHECK_THROWS_AS(simulate(pol, m, -1, 1u), std::invalid_argument);
}
