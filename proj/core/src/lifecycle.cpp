// Backward induction, forward simulation, and the structural tax
// counterfactual for the finite-horizon consumption-savings model.

#include "apekit/lifecycle.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>

#include "apekit/econometrics.hpp"
#include "apekit/optimize.hpp"
#include "apekit/quadrature.hpp"
#include "apekit/rng.hpp"

namespace apekit {
namespace {

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

// CRRA utility with fast paths for the common exponents.
struct Crra {
    double gamma;
    double operator()(double c) const {
        if (gamma == 2.0) return -1.0 / c;
        if (gamma == 1.0) return std::log(c);
        return std::pow(c, 1.0 - gamma) / (1.0 - gamma);
    }
};

struct GridPos {
    int index;      // left node
    double weight;  // weight on the right node, clamped to [0, 1]
};

// Bracketing position of x in an increasing grid, clamped at the ends.
GridPos locate(const std::vector<double>& grid, double x) {
    const int n = static_cast<int>(grid.size());
    if (n < 2) return {0, 0.0};
    int j = static_cast<int>(std::upper_bound(grid.begin(), grid.end(), x) - grid.begin()) - 1;
    j = std::clamp(j, 0, n - 2);
    const double span = grid[j + 1] - grid[j];
    const double w = span > 0.0 ? (x - grid[j]) / span : 0.0;
    return {j, std::clamp(w, 0.0, 1.0)};
}

// Exponentially spaced grid on [lo, hi], dense near lo.
std::vector<double> exp_grid(double lo, double hi, int n, double curvature) {
    std::vector<double> g(static_cast<std::size_t>(n));
    const double denom = std::expm1(curvature);
    for (int i = 0; i < n; ++i) {
        const double u = static_cast<double>(i) / (n - 1);
        g[static_cast<std::size_t>(i)] = lo + (hi - lo) * std::expm1(curvature * u) / denom;
    }
    g.front() = lo;
    g.back() = hi;
    return g;
}

// State-array dimensions at age t: belief while working, pension from
// the contribution window onward, cash always (fastest).
struct Dims {
    int nb, na, nh;
    std::size_t size() const {
        return static_cast<std::size_t>(nb) * static_cast<std::size_t>(na) * static_cast<std::size_t>(nh);
    }
};

Dims dims_for(int t, int retirement, int contribution_start, int nb, int na, int nh) {
    return {t < retirement ? nb : 1, t >= contribution_start ? na : 1, nh};
}

// Pension arithmetic shared by the solver, the simulator, and the
// public pension_income entry point.
class PensionCalc {
  public:
    PensionCalc(const LifecycleModel& model, const EarningsAnchors& anchors)
        : tax_(model.tax),
          taxable_(model.pension.taxable_share),
          net_scale_(model.net_income_scale),
          r1_(model.pension.rate1),
          r2_(model.pension.rate2),
          r3_(model.pension.rate3) {
        b1_ = model.pension.bend1 * anchors.mean_gross;
        b2_ = model.pension.bend2 * anchors.mean_gross;
        cap_ = model.pension.contribution_cap * anchors.mean_gross;
        const double ref = raw(std::min(anchors.mean_gross_late, cap_));
        sfac_ = ref > 0.0 ? model.pension.target_replacement * anchors.mean_gross_late / ref : 0.0;
    }

    double bend1() const { return b1_; }
    double bend2() const { return b2_; }
    double cap() const { return cap_; }

    // Uncalibrated piecewise-linear benefit.
    double raw(double a) const {
        const double a1 = std::min(a, b1_);
        const double a2 = std::clamp(a - b1_, 0.0, std::max(b2_ - b1_, 0.0));
        const double a3 = std::clamp(a - b2_, 0.0, std::max(cap_ - b2_, 0.0));
        return r1_ * a1 + r2_ * a2 + r3_ * a3;
    }
    double pretax(double avg) const { return sfac_ * raw(std::min(std::max(avg, 0.0), cap_)); }
    double net_from_pretax(double p) const {
        if (!(p > 0.0)) return 0.0;
        return net_scale_ * ((1.0 - taxable_) * p + net_income(tax_, taxable_ * p));
    }
    double net(double avg) const { return net_from_pretax(pretax(avg)); }

  private:
    TaxSchedule tax_;
    double taxable_, net_scale_, r1_, r2_, r3_;
    double b1_ = 0.0, b2_ = 0.0, cap_ = 0.0, sfac_ = 0.0;
};

// Largest unconditional standard deviation of the belief state over
// working ages, used to size the belief grid.
double belief_state_sd(const LifecycleModel& model) {
    if (model.regime == Regime::rational) {
        return std::sqrt(model.var_eta1 + (model.retirement - 1) * model.var_v);
    }
    const double g = model.adaptive.gamma_adapt;
    double v = model.var_eta1;   // Var of the net adaptive mean
    double c = model.var_eta1;   // Cov with the permanent component
    double best = v;
    for (int t = 1; t < model.retirement; ++t) {
        const double veta = model.var_eta1 + t * model.var_v;
        const double vn = (1.0 - g) * (1.0 - g) * v + g * g * (veta + model.var_eps) +
                          model.adaptive.var_u + 2.0 * g * (1.0 - g) * c;
        c = (1.0 - g) * c + g * veta;
        v = vn;
        best = std::max(best, v);
    }
    return std::sqrt(best);
}

// Average-earnings grid on [0, cap] with the bend points as exact nodes.
std::vector<double> build_pension_grid(const PensionCalc& calc, int n) {
    std::vector<double> g(static_cast<std::size_t>(n));
    const double cap = calc.cap();
    for (int i = 0; i < n; ++i) g[static_cast<std::size_t>(i)] = cap * i / (n - 1.0);
    const auto snap = [&](double target) {
        if (!(target > 0.0) || !(target < cap)) return;
        int best = 1;
        double dist = std::numeric_limits<double>::infinity();
        for (int i = 1; i + 1 < n; ++i) {
            const double d = std::fabs(g[static_cast<std::size_t>(i)] - target);
            if (d < dist) {
                dist = d;
                best = i;
            }
        }
        g[static_cast<std::size_t>(best)] = target;
    };
    snap(calc.bend1());
    snap(calc.bend2());
    std::sort(g.begin(), g.end());
    for (int i = 0; i + 1 < n; ++i) {
        if (!(g[static_cast<std::size_t>(i + 1)] > g[static_cast<std::size_t>(i)])) {
            throw std::invalid_argument("solve: pension grid is not strictly increasing");
        }
    }
    return g;
}

// Up to four rows of the next-period value array bracketing the belief
// and pension coordinates, with bilinear weights; the cash dimension is
// interpolated by the caller.
struct GatherRows {
    const double* row[4];
    double w[4];
    int count;
};

GatherRows make_rows(const double* wnext, const Dims& dn, const GridPos& b, const GridPos& a) {
    GatherRows r{};
    const auto row = [&](int ibn, int ian) {
        return wnext + (static_cast<std::size_t>(ibn) * dn.na + ian) * static_cast<std::size_t>(dn.nh);
    };
    const bool bdim = dn.nb > 1;
    const bool adim = dn.na > 1;
    if (bdim && adim) {
        r.count = 4;
        r.row[0] = row(b.index, a.index);
        r.row[1] = row(b.index, a.index + 1);
        r.row[2] = row(b.index + 1, a.index);
        r.row[3] = row(b.index + 1, a.index + 1);
        r.w[0] = (1.0 - b.weight) * (1.0 - a.weight);
        r.w[1] = (1.0 - b.weight) * a.weight;
        r.w[2] = b.weight * (1.0 - a.weight);
        r.w[3] = b.weight * a.weight;
    } else if (bdim) {
        r.count = 2;
        r.row[0] = row(b.index, 0);
        r.row[1] = row(b.index + 1, 0);
        r.w[0] = 1.0 - b.weight;
        r.w[1] = b.weight;
    } else if (adim) {
        r.count = 2;
        r.row[0] = row(0, a.index);
        r.row[1] = row(0, a.index + 1);
        r.w[0] = 1.0 - a.weight;
        r.w[1] = a.weight;
    } else {
        r.count = 1;
        r.row[0] = row(0, 0);
        r.w[0] = 1.0;
    }
    return r;
}

// Piecewise-linear consumption read-off at arbitrary cash: proportional
// below the bottom node, slope-extrapolated above the top one, and
// always inside [0, cash].
double cash_interp_consume(const double* row, const std::vector<double>& cash, double x) {
    const int n = static_cast<int>(cash.size());
    if (!(x > 0.0)) return 0.0;
    if (x <= cash.front()) {
        return std::clamp(row[0] * (x / cash.front()), 0.0, x);
    }
    if (x >= cash.back()) {
        const double slope = (row[n - 1] - row[n - 2]) / (cash[n - 1] - cash[n - 2]);
        return std::clamp(row[n - 1] + slope * (x - cash.back()), 0.0, x);
    }
    const GridPos p = locate(cash, x);
    const double c = (1.0 - p.weight) * row[p.index] + p.weight * row[p.index + 1];
    return std::clamp(c, 0.0, x);
}

double cash_interp_value(const double* row, const std::vector<double>& cash, double x) {
    const GridPos p = locate(cash, x);
    return (1.0 - p.weight) * row[p.index] + p.weight * row[p.index + 1];
}

}  // namespace

void AdaptiveRule::validate() const {
    if (!(gamma_adapt >= 0.0 && gamma_adapt <= 1.0)) {
        throw std::invalid_argument("AdaptiveRule: gamma_adapt must be in [0, 1]");
    }
    if (!(var_u >= 0.0)) throw std::invalid_argument("AdaptiveRule: var_u must be >= 0");
}

void PensionRule::validate() const {
    if (!(bend1 > 0.0 && bend2 > bend1)) {
        throw std::invalid_argument("PensionRule: bend points must satisfy 0 < bend1 < bend2");
    }
    if (!(rate1 > rate2 && rate2 > rate3 && rate3 > 0.0)) {
        throw std::invalid_argument("PensionRule: rates must be strictly decreasing and positive");
    }
    if (!(target_replacement >= 0.0)) {
        throw std::invalid_argument("PensionRule: target_replacement must be >= 0");
    }
    if (!(contribution_cap > bend1)) {
        throw std::invalid_argument("PensionRule: contribution_cap must exceed bend1");
    }
    if (!(taxable_share > 0.0 && taxable_share <= 1.0)) {
        throw std::invalid_argument("PensionRule: taxable_share must be in (0, 1]");
    }
}

void GridSpec::validate() const {
    if (asset_nodes < 16) throw std::invalid_argument("GridSpec: asset_nodes must be >= 16");
    if (!(asset_income_multiple > 0.0)) {
        throw std::invalid_argument("GridSpec: asset_income_multiple must be > 0");
    }
    if (belief_nodes < 1) throw std::invalid_argument("GridSpec: belief_nodes must be >= 1");
    if (!(belief_sd_span > 0.0)) throw std::invalid_argument("GridSpec: belief_sd_span must be > 0");
    if (pension_nodes < 4) throw std::invalid_argument("GridSpec: pension_nodes must be >= 4");
    if (quadrature_nodes < 1) throw std::invalid_argument("GridSpec: quadrature_nodes must be >= 1");
}

void LifecycleModel::validate() const {
    if (horizon <= 0) throw std::invalid_argument("LifecycleModel: horizon must be positive");
    if (!(retirement > 0 && retirement < horizon)) {
        throw std::invalid_argument("LifecycleModel: retirement must lie strictly inside the horizon");
    }
    if (!(contribution_start >= 0 && contribution_start < retirement)) {
        throw std::invalid_argument("LifecycleModel: contribution window must open before retirement");
    }
    if (!(risk_aversion > 0.0)) throw std::invalid_argument("LifecycleModel: risk_aversion must be > 0");
    if (!(discount > 0.0)) throw std::invalid_argument("LifecycleModel: discount must be > 0");
    if (!(interest > -1.0)) throw std::invalid_argument("LifecycleModel: interest must exceed -1");
    if (static_cast<int>(age_profile.size()) != retirement) {
        throw std::invalid_argument("LifecycleModel: age_profile needs one entry per working period");
    }
    if (!(var_eta1 >= 0.0 && var_v >= 0.0 && var_eps >= 0.0)) {
        throw std::invalid_argument("LifecycleModel: variances must be >= 0");
    }
    if (!(net_income_scale > 0.0)) {
        throw std::invalid_argument("LifecycleModel: net_income_scale must be > 0");
    }
    tax.validate();
    pension.validate();
    adaptive.validate();
    grid.validate();
}

LifecycleModel LifecycleModel::baseline(Regime regime) {
    LifecycleModel m;
    m.regime = regime;
    m.age_profile.resize(static_cast<std::size_t>(m.retirement));
    // Hump-shaped log-income profile: about 5.5% annual growth at entry,
    // +0.45 log points at the age-50 peak, easing to +0.40 by the last
    // working year.
    const double c1 = 0.055, c2 = -2.7434e-3, c3 = 7.0665e-5, c4 = -8.053e-7;
    std::vector<double> shape(static_cast<std::size_t>(m.retirement));
    for (int t = 0; t < m.retirement; ++t) {
        const double a = static_cast<double>(t);
        shape[static_cast<std::size_t>(t)] = ((c4 * a + c3) * a + c2) * a * a + c1 * a;
    }
    // Level anchor: pick the intercept so that average gross earnings
    // equal the income unit at which the schedule's scale corresponds
    // to a level coefficient of 0.9 relative to mean gross income.
    const double tau = m.tax.tau;
    const double one_m = 1.0 - tau;
    const double s = m.tax.scale();
    const double level_rel = 0.9;
    const double k_target = std::pow(s / level_rel, 1.0 / tau);
    double msum = 0.0;
    for (int t = 0; t < m.retirement; ++t) {
        const double var_x = m.var_eta1 + t * m.var_v + m.var_eps;
        msum += std::exp(shape[static_cast<std::size_t>(t)] / one_m + var_x / (2.0 * one_m * one_m));
    }
    const double mbar = msum / m.retirement;
    const double base = one_m * std::log(k_target) + std::log(s) - one_m * std::log(mbar);
    for (int t = 0; t < m.retirement; ++t) {
        m.age_profile[static_cast<std::size_t>(t)] = base + shape[static_cast<std::size_t>(t)];
    }
    return m;
}

EarningsAnchors earnings_anchors(const LifecycleModel& model) {
    model.validate();
    const double one_m = 1.0 - model.tax.tau;
    const double s = model.tax.scale();
    const double gross_scale = std::pow(s, -1.0 / one_m);
    double sum_g = 0.0, sum_late = 0.0, sum_net = 0.0;
    for (int t = 0; t < model.retirement; ++t) {
        const double kappa = model.age_profile[static_cast<std::size_t>(t)];
        const double var_x = model.var_eta1 + t * model.var_v + model.var_eps;
        const double g = gross_scale * std::exp(kappa / one_m + var_x / (2.0 * one_m * one_m));
        sum_g += g;
        if (t >= model.contribution_start) sum_late += g;
        sum_net += std::exp(kappa + 0.5 * var_x);
    }
    EarningsAnchors a;
    a.mean_gross = sum_g / model.retirement;
    a.mean_gross_late = sum_late / model.contribution_years();
    a.mean_net = model.net_income_scale * sum_net / model.retirement;
    return a;
}

double pension_income(double avg_gross, const LifecycleModel& model) {
    if (!(avg_gross >= 0.0)) {
        throw std::invalid_argument("pension_income: avg_gross must be >= 0");
    }
    const PensionCalc calc(model, earnings_anchors(model));
    return calc.net(avg_gross);
}

double PolicySolution::consumption(int t, double cash, double belief, double pension_avg) const {
    if (t < 0 || t >= horizon) throw std::out_of_range("PolicySolution: period out of range");
    const int nb = has_belief_dim(t) ? static_cast<int>(belief_grid.size()) : 1;
    const int na = has_pension_dim(t) ? static_cast<int>(pension_grid.size()) : 1;
    const int nh = static_cast<int>(cash_grid.size());
    const GridPos b = nb > 1 ? locate(belief_grid, belief) : GridPos{0, 0.0};
    const GridPos a = na > 1 ? locate(pension_grid, pension_avg) : GridPos{0, 0.0};
    const int ib2 = nb > 1 ? b.index + 1 : 0;
    const int ia2 = na > 1 ? a.index + 1 : 0;
    const int ibs[2] = {b.index, ib2};
    const int ias[2] = {a.index, ia2};
    const double wbs[2] = {1.0 - b.weight, b.weight};
    const double was[2] = {1.0 - a.weight, a.weight};
    const double* arr = consume[static_cast<std::size_t>(t)].data();
    double out = 0.0;
    for (int kb = 0; kb < 2; ++kb) {
        if (wbs[kb] == 0.0) continue;
        for (int ka = 0; ka < 2; ++ka) {
            if (was[ka] == 0.0) continue;
            const double* row = arr + (static_cast<std::size_t>(ibs[kb]) * na + ias[ka]) * static_cast<std::size_t>(nh);
            out += wbs[kb] * was[ka] * cash_interp_consume(row, cash_grid, cash);
        }
    }
    return out;
}

double PolicySolution::value_at(int t, double cash, double belief, double pension_avg) const {
    if (t < 0 || t >= horizon) throw std::out_of_range("PolicySolution: period out of range");
    const int nb = has_belief_dim(t) ? static_cast<int>(belief_grid.size()) : 1;
    const int na = has_pension_dim(t) ? static_cast<int>(pension_grid.size()) : 1;
    const int nh = static_cast<int>(cash_grid.size());
    const GridPos b = nb > 1 ? locate(belief_grid, belief) : GridPos{0, 0.0};
    const GridPos a = na > 1 ? locate(pension_grid, pension_avg) : GridPos{0, 0.0};
    const int ibs[2] = {b.index, nb > 1 ? b.index + 1 : 0};
    const int ias[2] = {a.index, na > 1 ? a.index + 1 : 0};
    const double wbs[2] = {1.0 - b.weight, b.weight};
    const double was[2] = {1.0 - a.weight, a.weight};
    const double* arr = value[static_cast<std::size_t>(t)].data();
    double out = 0.0;
    for (int kb = 0; kb < 2; ++kb) {
        if (wbs[kb] == 0.0) continue;
        for (int ka = 0; ka < 2; ++ka) {
            if (was[ka] == 0.0) continue;
            const double* row = arr + (static_cast<std::size_t>(ibs[kb]) * na + ias[ka]) * static_cast<std::size_t>(nh);
            out += wbs[kb] * was[ka] * cash_interp_value(row, cash_grid, cash);
        }
    }
    return out;
}

PolicySolution solve(const LifecycleModel& model) {
    model.validate();
    const EarningsAnchors anchors = earnings_anchors(model);
    const PensionCalc pcalc(model, anchors);
    const int T = model.horizon;
    const int tret = model.retirement;
    const int tcont = model.contribution_start;
    const double R = 1.0 + model.interest;
    const Crra u{model.risk_aversion};
    const bool adaptive = model.regime == Regime::adaptive;

    PolicySolution pol;
    pol.horizon = T;
    pol.retirement = tret;
    pol.contribution_start = tcont;

    const int nh = model.grid.asset_nodes;
    const double s_max = model.grid.asset_income_multiple * anchors.mean_net;
    pol.savings_grid = exp_grid(0.0, s_max, nh, 4.0);

    const double sd_state = belief_state_sd(model);
    const double b_span = model.grid.belief_sd_span * sd_state;
    if (b_span > 0.0 && model.grid.belief_nodes > 1) {
        pol.belief_grid.resize(static_cast<std::size_t>(model.grid.belief_nodes));
        for (int i = 0; i < model.grid.belief_nodes; ++i) {
            pol.belief_grid[static_cast<std::size_t>(i)] =
                -b_span + 2.0 * b_span * i / (model.grid.belief_nodes - 1.0);
        }
    } else {
        pol.belief_grid = {0.0};
    }
    const int nbel = static_cast<int>(pol.belief_grid.size());

    const double kappa_max = *std::max_element(model.age_profile.begin(), model.age_profile.end());
    const double shock_sd = std::sqrt(model.var_v + model.var_eps);
    const double w_hi = model.net_income_scale * std::exp(kappa_max + b_span + 4.6 * shock_sd);
    const double cash_lo = 1e-3 * anchors.mean_net;
    const double cash_hi = R * s_max + w_hi;
    pol.cash_grid = exp_grid(cash_lo, cash_hi, nh, 4.0);

    pol.pension_grid = build_pension_grid(pcalc, model.grid.pension_nodes);
    const int npen = static_cast<int>(pol.pension_grid.size());

    std::vector<double> wss(static_cast<std::size_t>(npen));
    for (int ia = 0; ia < npen; ++ia) {
        wss[static_cast<std::size_t>(ia)] = pcalc.net(pol.pension_grid[static_cast<std::size_t>(ia)]);
    }

    const GaussHermite gh = gauss_hermite(model.grid.quadrature_nodes);
    const int nq = gh.size();
    std::vector<double> xi(static_cast<std::size_t>(nq)), pw(static_cast<std::size_t>(nq));
    for (int i = 0; i < nq; ++i) {
        xi[static_cast<std::size_t>(i)] = std::sqrt(2.0) * gh.node[static_cast<std::size_t>(i)];
        pw[static_cast<std::size_t>(i)] = gh.prob_weight[static_cast<std::size_t>(i)];
    }

    const double sv = std::sqrt(model.var_v);
    const double se = std::sqrt(model.var_eps);
    const double su = std::sqrt(model.adaptive.var_u);
    const double gain = model.adaptive.gamma_adapt;
    const double div = static_cast<double>(model.contribution_years());
    const double cap = pcalc.cap();
    const double c_floor = 1e-9 * anchors.mean_net;

    pol.consume.resize(static_cast<std::size_t>(T));
    pol.value.resize(static_cast<std::size_t>(T));

    std::vector<double> cont;  // expected continuation over savings nodes

    for (int t = T - 1; t >= 0; --t) {
        const Dims d = dims_for(t, tret, tcont, nbel, npen, nh);
        std::vector<double>& cons = pol.consume[static_cast<std::size_t>(t)];
        std::vector<double>& val = pol.value[static_cast<std::size_t>(t)];
        cons.assign(d.size(), 0.0);
        val.assign(d.size(), 0.0);

        if (t == T - 1) {
            // Terminal age: consume all cash-on-hand.
            for (int ia = 0; ia < d.na; ++ia) {
                for (int ih = 0; ih < d.nh; ++ih) {
                    const double h = pol.cash_grid[static_cast<std::size_t>(ih)];
                    cons[static_cast<std::size_t>(ia * d.nh + ih)] = h;
                    val[static_cast<std::size_t>(ia * d.nh + ih)] = u(h);
                }
            }
            continue;
        }

        const Dims dn = dims_for(t + 1, tret, tcont, nbel, npen, nh);
        const double* wnext = pol.value[static_cast<std::size_t>(t + 1)].data();
        int nb_g, na_g;

        if (t + 1 >= tret) {
            // Deterministic transition into or within retirement: next
            // cash is savings plus the pension tied to the frozen
            // average-earnings state.
            nb_g = 1;
            na_g = d.na;  // equals npen: the contribution window has opened
            cont.assign(static_cast<std::size_t>(na_g) * static_cast<std::size_t>(nh), 0.0);
            for (int ia = 0; ia < na_g; ++ia) {
                const double* wrow = wnext + static_cast<std::size_t>(ia) * static_cast<std::size_t>(dn.nh);
                double* g = cont.data() + static_cast<std::size_t>(ia) * static_cast<std::size_t>(nh);
                int jh = 0;
                for (int is = 0; is < nh; ++is) {
                    const double hp = R * pol.savings_grid[static_cast<std::size_t>(is)] + wss[static_cast<std::size_t>(ia)];
                    while (jh < dn.nh - 2 && pol.cash_grid[static_cast<std::size_t>(jh + 1)] < hp) ++jh;
                    const double span = pol.cash_grid[static_cast<std::size_t>(jh + 1)] - pol.cash_grid[static_cast<std::size_t>(jh)];
                    const double th = std::clamp((hp - pol.cash_grid[static_cast<std::size_t>(jh)]) / span, 0.0, 1.0);
                    g[is] = (1.0 - th) * wrow[jh] + th * wrow[jh + 1];
                }
            }
        } else {
            // Working-age transition: integrate the subjective
            // predictive distribution of next income and the implied
            // belief (and pension-accrual) movements.
            nb_g = d.nb;
            na_g = d.na;
            cont.assign(static_cast<std::size_t>(nb_g) * static_cast<std::size_t>(na_g) * static_cast<std::size_t>(nh), 0.0);
            const double kap_next = model.age_profile[static_cast<std::size_t>(t + 1)];
            const bool accrue_first = (t + 1 == tcont);
            const bool accrue_carry = (t + 1 > tcont);
            for (int ib = 0; ib < nb_g; ++ib) {
                const double b = pol.belief_grid[static_cast<std::size_t>(ib)];
                for (int i = 0; i < nq; ++i) {
                    for (int j = 0; j < nq; ++j) {
                        double xnet, bn;
                        if (!adaptive) {
                            const double v = sv * xi[static_cast<std::size_t>(i)];
                            xnet = kap_next + b + v + se * xi[static_cast<std::size_t>(j)];
                            bn = b + v;
                        } else {
                            const double innov = shock_sd * xi[static_cast<std::size_t>(i)];
                            xnet = kap_next + b + innov;
                            bn = b + gain * innov + su * xi[static_cast<std::size_t>(j)];
                        }
                        const double weight = pw[static_cast<std::size_t>(i)] * pw[static_cast<std::size_t>(j)];
                        const double w_inc = model.net_income_scale * std::exp(xnet);
                        const GridPos bp = dn.nb > 1 ? locate(pol.belief_grid, bn) : GridPos{0, 0.0};
                        double g_inc = 0.0;
                        if (accrue_first || accrue_carry) {
                            g_inc = gross_from_net(model.tax, std::exp(xnet)) / div;
                        }
                        for (int ia = 0; ia < na_g; ++ia) {
                            GridPos ap{0, 0.0};
                            if (dn.na > 1) {
                                const double an = accrue_carry
                                                      ? std::min(pol.pension_grid[static_cast<std::size_t>(ia)] + g_inc, cap)
                                                      : std::min(g_inc, cap);
                                ap = locate(pol.pension_grid, an);
                            }
                            const GatherRows rows = make_rows(wnext, dn, bp, ap);
                            double* g = cont.data() +
                                        (static_cast<std::size_t>(ib) * na_g + ia) * static_cast<std::size_t>(nh);
                            int jh = 0;
                            for (int is = 0; is < nh; ++is) {
                                const double hp = R * pol.savings_grid[static_cast<std::size_t>(is)] + w_inc;
                                while (jh < dn.nh - 2 && pol.cash_grid[static_cast<std::size_t>(jh + 1)] < hp) ++jh;
                                const double span = pol.cash_grid[static_cast<std::size_t>(jh + 1)] -
                                                    pol.cash_grid[static_cast<std::size_t>(jh)];
                                const double th =
                                    std::clamp((hp - pol.cash_grid[static_cast<std::size_t>(jh)]) / span, 0.0, 1.0);
                                double vsum = 0.0;
                                for (int k = 0; k < rows.count; ++k) {
                                    vsum += rows.w[k] * ((1.0 - th) * rows.row[k][jh] + th * rows.row[k][jh + 1]);
                                }
                                g[is] += weight * vsum;
                            }
                        }
                    }
                }
            }
        }

        // Golden-section maximization at every current node.
        for (int ib = 0; ib < d.nb; ++ib) {
            const int ibg = std::min(ib, nb_g - 1);
            for (int ia = 0; ia < d.na; ++ia) {
                const double* gs = cont.data() + (static_cast<std::size_t>(ibg) * na_g + ia) * static_cast<std::size_t>(nh);
                for (int ih = 0; ih < d.nh; ++ih) {
                    const double h = pol.cash_grid[static_cast<std::size_t>(ih)];
                    const double c_lo = std::max(h - s_max, c_floor);
                    const auto obj = [&](double c) {
                        const double sp = std::clamp(h - c, 0.0, s_max);
                        const GridPos spos = locate(pol.savings_grid, sp);
                        const double cv = (1.0 - spos.weight) * gs[spos.index] + spos.weight * gs[spos.index + 1];
                        return u(c) + model.discount * cv;
                    };
                    const double c = golden_section_max(obj, c_lo, h);
                    const std::size_t idx = (static_cast<std::size_t>(ib) * d.na + ia) * static_cast<std::size_t>(d.nh) +
                                            static_cast<std::size_t>(ih);
                    cons[idx] = c;
                    val[idx] = obj(c);
                }
            }
        }
    }
    return pol;
}

SimulatedPanel simulate(const PolicySolution& policy, const LifecycleModel& model,
                        std::int64_t n_households, std::uint64_t seed, RecordWindow window) {
    model.validate();
    if (n_households < 0) throw std::invalid_argument("simulate: n_households must be >= 0");
    if (policy.horizon != model.horizon || policy.retirement != model.retirement ||
        policy.contribution_start != model.contribution_start) {
        throw std::invalid_argument("simulate: policy and model disagree on the horizon layout");
    }
    const EarningsAnchors anchors = earnings_anchors(model);
    const PensionCalc pcalc(model, anchors);
    const int T = model.horizon;
    const int tret = model.retirement;
    const int tcont = model.contribution_start;
    const double R = 1.0 + model.interest;
    const bool adaptive = model.regime == Regime::adaptive;
    const double sv = std::sqrt(model.var_v);
    const double se = std::sqrt(model.var_eps);
    const double su = std::sqrt(model.adaptive.var_u);
    const double gain = model.adaptive.gamma_adapt;
    const double scale = model.net_income_scale;
    const double log_scale = std::log(scale);
    const double div = static_cast<double>(model.contribution_years());
    const double cap = pcalc.cap();

    const int lo = std::max(window.first_period, 0);
    const int hi = std::min(window.last_period, T - 1);

    SimulatedPanel out;
    if (hi >= lo && n_households > 0) {
        const std::size_t rows = static_cast<std::size_t>(n_households) * static_cast<std::size_t>(hi - lo + 1);
        out.household.reserve(rows);
        out.period.reserve(rows);
        out.log_income.reserve(rows);
        out.state.reserve(rows);
        out.transitory.reserve(rows);
        out.belief_mean.reserve(rows);
        out.belief_var.reserve(rows);
        out.assets.reserve(rows);
        out.consumption.reserve(rows);
        out.gross.reserve(rows);
    }

    for (std::int64_t hh = 0; hh < n_households; ++hh) {
        RngStream rng(seed, Stream::household, static_cast<std::uint64_t>(hh));
        double eta = rng.normal(0.0, std::sqrt(model.var_eta1));
        double m = eta;
        double z = 0.0;
        double asum = 0.0;
        double wss_net = 0.0, wss_pre = 0.0;
        for (int t = 0; t < T; ++t) {
            double w, xrec, grossrec;
            double state = kNan, eps_rec = 0.0, bmean = kNan, bvar = kNan;
            if (t < tret) {
                if (t > 0) eta += rng.normal(0.0, sv);
                const double eps = rng.normal(0.0, se);
                if (adaptive && t > 0) {
                    const double unoise = rng.normal(0.0, su);
                    m += gain * (eta + eps - m) + unoise;
                }
                const double xnet = model.age_profile[static_cast<std::size_t>(t)] + eta + eps;
                state = adaptive ? m : eta;
                w = scale * std::exp(xnet);
                xrec = xnet + log_scale;
                grossrec = gross_from_net(model.tax, std::exp(xnet));
                if (t >= tcont) asum = std::min(asum + grossrec / div, cap);
                if (t + 1 < tret) {
                    bmean = model.age_profile[static_cast<std::size_t>(t + 1)] + state + log_scale;
                    bvar = model.var_v + model.var_eps;
                }
                eps_rec = eps;
            } else {
                if (t == tret) {
                    wss_pre = pcalc.pretax(asum);
                    wss_net = pcalc.net_from_pretax(wss_pre);
                }
                w = wss_net;
                xrec = w > 0.0 ? std::log(w) : kNan;
                grossrec = wss_pre;
            }
            const double h = R * z + w;
            double c = policy.consumption(t, h, t < tret ? state : 0.0, asum);
            c = std::clamp(c, 0.0, h);
            if (t >= lo && t <= hi) {
                out.household.push_back(hh);
                out.period.push_back(t);
                out.log_income.push_back(xrec);
                out.state.push_back(state);
                out.transitory.push_back(eps_rec);
                out.belief_mean.push_back(bmean);
                out.belief_var.push_back(bvar);
                out.assets.push_back(z);
                out.consumption.push_back(c);
                out.gross.push_back(grossrec);
            }
            z = h - c;
        }
    }
    return out;
}

Panel to_panel(const SimulatedPanel& sim, double min_age, double max_age) {
    Panel panel;
    for (std::size_t r = 0; r < sim.size(); ++r) {
        const double age = LifecycleModel::entry_age + sim.period[r];
        if (age < min_age || age > max_age) continue;
        if (!std::isfinite(sim.belief_mean[r])) continue;
        if (!(sim.assets[r] > 0.0) || !(sim.consumption[r] > 0.0)) continue;
        PanelRow row;
        row.household_id = sim.household[r];
        row.wave = sim.period[r];
        row.log_consumption = std::log(sim.consumption[r]);
        row.log_family_income = sim.log_income[r];
        row.belief_mean = sim.belief_mean[r];
        row.belief_var = sim.belief_var[r];
        row.log_assets = std::log(sim.assets[r]);
        row.age = age;
        row.weight = 1.0;
        panel.rows.push_back(row);
    }
    panel.prepare();
    return panel;
}

StructuralApe structural_tape(const LifecycleModel& model, double tax_rate_increase,
                              std::int64_t n_households, std::uint64_t seed) {
    model.validate();
    if (!(tax_rate_increase < 1.0)) {
        throw std::invalid_argument("structural_tape: tax rate must be < 1");
    }
    LifecycleModel taxed = model;
    taxed.net_income_scale *= (1.0 - tax_rate_increase);

    const PolicySolution base = solve(model);
    const PolicySolution tax = solve(taxed);

    // Evaluation window: working ages 26-49, before the contribution
    // window opens (recorded rows carry no pension state).
    const int t_lo = 1;
    const int t_hi = std::min({24, model.retirement - 1, model.contribution_start - 1});
    StructuralApe out;
    if (t_hi < t_lo || n_households <= 0) return out;

    const SimulatedPanel sim = simulate(base, model, n_households, seed, RecordWindow{t_lo, t_hi});

    const double R = 1.0 + model.interest;
    const double keep = 1.0 - tax_rate_increase;

    const int n_ages = t_hi - t_lo + 1;
    out.ages.resize(static_cast<std::size_t>(n_ages));
    for (int k = 0; k < n_ages; ++k) {
        out.ages[static_cast<std::size_t>(k)] = LifecycleModel::entry_age + t_lo + k;
    }
    out.cape_by_age.assign(static_cast<std::size_t>(n_ages), 0.0);
    out.dape_by_age.assign(static_cast<std::size_t>(n_ages), 0.0);
    out.tape_by_age.assign(static_cast<std::size_t>(n_ages), 0.0);
    out.count_by_age.assign(static_cast<std::size_t>(n_ages), 0);

    double cape_sum = 0.0, tape_sum = 0.0;
    for (std::size_t r = 0; r < sim.size(); ++r) {
        const double z = sim.assets[r];
        if (!(z > 0.0)) continue;
        const int t = sim.period[r];
        const double w = std::exp(sim.log_income[r]);
        const double b = sim.state[r];
        const double h = R * z + w;
        const double hs = R * z + keep * w;
        const double c_base = base.consumption(t, h, b);
        const double c_cape = base.consumption(t, hs, b);
        const double c_tape = tax.consumption(t, hs, b);
        if (!(c_base > 0.0) || !(c_cape > 0.0) || !(c_tape > 0.0)) continue;
        const double cape_i = std::log(c_cape) - std::log(c_base);
        const double tape_i = std::log(c_tape) - std::log(c_base);
        const std::size_t k = static_cast<std::size_t>(t - t_lo);
        out.cape_by_age[k] += cape_i;
        out.tape_by_age[k] += tape_i;
        out.count_by_age[k] += 1;
        cape_sum += cape_i;
        tape_sum += tape_i;
        out.count += 1;
    }
    for (std::size_t k = 0; k < out.cape_by_age.size(); ++k) {
        if (out.count_by_age[k] > 0) {
            out.cape_by_age[k] /= static_cast<double>(out.count_by_age[k]);
            out.tape_by_age[k] /= static_cast<double>(out.count_by_age[k]);
        }
        out.dape_by_age[k] = out.tape_by_age[k] - out.cape_by_age[k];
    }
    if (out.count > 0) {
        out.cape = cape_sum / static_cast<double>(out.count);
        out.tape = tape_sum / static_cast<double>(out.count);
        out.dape = out.tape - out.cape;
    }
    return out;
}

}  // namespace apekit
