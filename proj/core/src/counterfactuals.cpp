#include "apekit/counterfactuals.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "apekit/rng.hpp"
#include "apekit/stats.hpp"

namespace apekit {

namespace {

// Counter offsets keeping the resampling streams and the per-replicate
// pipeline seeds disjoint within Stream::bootstrap.
constexpr std::uint64_t kPipelineSeedOffset = 1ULL << 32;

void append_field(std::string& out, double value) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.10g", value);
    out += ',';
    out += buf;
}

void check_label(const std::string& label, const char* what) {
    if (label.find_first_of(",\"\n\r") != std::string::npos) {
        throw std::invalid_argument(std::string(what) +
                                    " label must not contain commas, quotes, or newlines: '" +
                                    label + "'");
    }
}

}  // namespace

AffineIncomeMap net_to_net_map(const TaxSchedule& tax0, const TaxSchedule& tax1) {
    tax0.validate();
    tax1.validate();
    const double slope = (1.0 - tax1.tau) / (1.0 - tax0.tau);
    const double intercept = std::log(tax1.scale()) - slope * std::log(tax0.scale());
    return AffineIncomeMap(intercept, slope);
}

CounterfactualStates shift_states(const Panel& panel, const TaxSchedule& tax0,
                                  const TaxSchedule& tax1, const std::vector<double>& shares) {
    tax0.validate();
    tax1.validate();
    const std::size_t n = panel.rows.size();
    if (!shares.empty() && shares.size() != n) {
        throw std::invalid_argument("shift_states: shares must be empty or one per row");
    }
    for (const double r : shares) {
        if (!(r > 0.0 && r <= 1.0)) {
            throw std::invalid_argument("shift_states: shares must lie in (0,1]");
        }
    }

    const double l0 = std::log(tax0.scale());
    const double l1 = std::log(tax1.scale());
    const double a = (1.0 - tax1.tau) / (1.0 - tax0.tau);

    CounterfactualStates out;
    out.x1.resize(n);
    out.mu1.resize(n);
    out.sigma2_1.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const PanelRow& row = panel.rows[i];
        const double log_r = shares.empty() ? 0.0 : std::log(shares[i]);
        out.x1[i] = row.log_family_income + (l1 - l0) +
                    (a - 1.0) * (row.log_family_income - l0);
        out.mu1[i] = row.belief_mean + (l1 - a * l0) + (a - 1.0) * row.belief_mean -
                     (a - 1.0) * log_r;
        out.sigma2_1[i] = a * a * row.belief_var;
    }
    return out;
}

double revenue_neutral_lambda(const TaxSchedule& tax0, double tau1, double mu_x,
                              double sigma_x) {
    tax0.validate();
    if (!(tau1 >= 0.0 && tau1 < 1.0)) {
        throw std::invalid_argument("revenue_neutral_lambda: tau1 must be in [0,1)");
    }
    if (!(sigma_x >= 0.0)) {
        throw std::invalid_argument("revenue_neutral_lambda: sigma_x must be >= 0");
    }
    const double l0 = std::log(tax0.scale());
    const double keep0 = 1.0 - tax0.tau;
    const double keep1 = 1.0 - tau1;
    const double mu_w = (mu_x - l0) / keep0;
    const double sigma_w = sigma_x / keep0;
    const double l1 = l0 + (tau1 - tax0.tau) * mu_w +
                      0.5 * sigma_w * sigma_w * (keep0 * keep0 - keep1 * keep1);
    return std::exp(l1);
}

TaxSchedule revenue_neutral_schedule(const TaxSchedule& tax0, double tau1, double mu_x,
                                     double sigma_x) {
    const double scale1 = revenue_neutral_lambda(tax0, tau1, mu_x, sigma_x);
    return TaxSchedule(scale1 / std::pow(tax0.mean_gross, tau1), tau1, tax0.mean_gross);
}

BasisSpec consumption_rule_spec(AssetControl control) {
    BasisSpec spec;
    spec.terms = {"x", "mu", "x*mu", "age", "age^2", "assets"};
    if (control == AssetControl::quadratic) spec.terms.push_back("assets^2");
    if (control == AssetControl::spline) spec.asset_spline_knots = 20;
    return spec;
}

FitResult fit_consumption_rule(const Panel& panel, const Basis& basis, FitForm form) {
    const auto n = static_cast<Eigen::Index>(panel.rows.size());
    if (n == 0) throw std::invalid_argument("fit_consumption_rule: empty panel");

    Eigen::MatrixXd levels = basis.evaluate_panel(panel);
    std::vector<std::string> names = basis.names();
    Eigen::VectorXd y(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        y(i) = panel.rows[static_cast<std::size_t>(i)].log_consumption;
    }

    Design design;
    if (form == FitForm::first_differences) {
        design = first_difference(panel, levels, names, y);
    } else {
        design.x = Eigen::MatrixXd(n, levels.cols() + 1);
        design.x.leftCols(levels.cols()) = levels;
        design.x.col(levels.cols()).setOnes();
        design.y = y;
        design.weight.resize(n);
        design.cluster.resize(static_cast<std::size_t>(n));
        for (Eigen::Index i = 0; i < n; ++i) {
            const PanelRow& row = panel.rows[static_cast<std::size_t>(i)];
            design.weight(i) = row.weight;
            design.cluster[static_cast<std::size_t>(i)] = row.household_id;
        }
        design.names = names;
        design.names.push_back("const");
    }

    // Covariates without cross-sectional variation produce centered
    // columns that are zero up to rounding; they are unidentified and
    // dropped (the constant column is always kept in the levels form).
    const double wsum = design.weight.sum();
    std::vector<Eigen::Index> live;
    for (Eigen::Index j = 0; j < design.x.cols(); ++j) {
        const double rms =
            std::sqrt(design.weight.dot(design.x.col(j).cwiseAbs2()) / wsum);
        if (rms > 1e-9 || design.names[static_cast<std::size_t>(j)] == "const") {
            live.push_back(j);
        }
    }
    if (live.empty()) {
        throw std::invalid_argument("fit_consumption_rule: no identified columns");
    }
    if (static_cast<Eigen::Index>(live.size()) != design.x.cols()) {
        Eigen::MatrixXd kept(design.x.rows(), static_cast<Eigen::Index>(live.size()));
        std::vector<std::string> kept_names;
        kept_names.reserve(live.size());
        for (std::size_t k = 0; k < live.size(); ++k) {
            kept.col(static_cast<Eigen::Index>(k)) = design.x.col(live[k]);
            kept_names.push_back(design.names[static_cast<std::size_t>(live[k])]);
        }
        design.x = std::move(kept);
        design.names = std::move(kept_names);
    }
    return wls(design);
}

ApeResult plug_in_ape(const FitResult& fit, const Basis& basis, const Panel& panel,
                      const CounterfactualStates& states, const PlugInOptions& options) {
    const std::size_t n = panel.rows.size();
    if (states.size() != n || states.mu1.size() != n || states.sigma2_1.size() != n) {
        throw std::invalid_argument("plug_in_ape: states not aligned with panel rows");
    }
    if (options.n_quantile_groups < 1 || options.n_quantile_groups > 100) {
        throw std::invalid_argument("plug_in_ape: n_quantile_groups must be in [1,100]");
    }
    if (n == 0) throw std::invalid_argument("plug_in_ape: empty panel");

    // Coefficients in basis coordinates; terms dropped from the fit for
    // lack of variation act as zeros.
    Eigen::VectorXd beta = Eigen::VectorXd::Zero(basis.size());
    std::vector<bool> covered(static_cast<std::size_t>(basis.size()), false);
    const std::vector<std::string>& term_names = basis.names();
    for (std::size_t k = 0; k < fit.names.size(); ++k) {
        const std::string& name = fit.names[k];
        if (name == "const") continue;  // cancels in differences
        const auto it = std::find(term_names.begin(), term_names.end(), name);
        if (it == term_names.end()) {
            throw std::invalid_argument("plug_in_ape: fit term '" + name +
                                        "' is not a basis term");
        }
        const auto j = static_cast<std::size_t>(it - term_names.begin());
        beta(static_cast<Eigen::Index>(j)) = fit.coef(static_cast<Eigen::Index>(k));
        covered[j] = true;
    }

    ApeResult result;
    for (std::size_t j = 0; j < covered.size(); ++j) {
        if (!covered[j]) result.dropped_terms.push_back(term_names[j]);
    }

    // Quantile groups over baseline log family income.
    std::vector<double> x0(n), weights(n);
    std::vector<std::int64_t> households(n);
    for (std::size_t i = 0; i < n; ++i) {
        x0[i] = panel.rows[i].log_family_income;
        weights[i] = panel.rows[i].weight;
        households[i] = panel.rows[i].household_id;
    }
    const std::vector<int> group =
        weighted_quantile_groups(x0, weights, households, options.n_quantile_groups);

    const auto n_cells = static_cast<std::size_t>(options.n_quantile_groups) + 1;
    std::vector<double> sum_w(n_cells, 0.0), sum_cape(n_cells, 0.0), sum_tape(n_cells, 0.0),
        sum_dape(n_cells, 0.0);
    std::vector<long long> rows_in(n_cells, 0);

    const auto& lo = basis.support_lo();
    const auto& hi = basis.support_hi();
    std::array<double, 5> outside_w{};
    double outside_any = 0.0, total_w = 0.0;

    const bool direct_dape = options.dape_at_pretax_x && !options.transitory;
    for (std::size_t i = 0; i < n; ++i) {
        const PanelRow& row = panel.rows[i];
        const Covariates c0 = baseline_covariates(row);
        Covariates shifted = c0;
        shifted.x = states.x1[i];
        shifted.belief_mean = states.mu1[i];
        shifted.belief_var = states.sigma2_1[i];

        const double w = row.weight;
        total_w += w;
        const std::array<double, 5> sc = {shifted.age, shifted.x, shifted.log_assets,
                                          shifted.belief_mean, shifted.belief_var};
        bool any = false;
        for (std::size_t j = 0; j < 5; ++j) {
            if (sc[j] < lo[j] || sc[j] > hi[j]) {
                outside_w[j] += w;
                any = true;
            }
        }
        if (any) outside_any += w;

        Covariates cx = c0;
        cx.x = states.x1[i];
        const double f0 = beta.dot(basis.evaluate(c0));
        const double cape_i = beta.dot(basis.evaluate(cx)) - f0;
        const double tape_i =
            options.transitory ? cape_i : beta.dot(basis.evaluate(shifted)) - f0;

        const std::size_t cell = static_cast<std::size_t>(group[i]) + 1;
        sum_w[0] += w;
        sum_w[cell] += w;
        sum_cape[0] += w * cape_i;
        sum_cape[cell] += w * cape_i;
        sum_tape[0] += w * tape_i;
        sum_tape[cell] += w * tape_i;
        ++rows_in[0];
        ++rows_in[cell];
        if (direct_dape) {
            Covariates cb = c0;
            cb.belief_mean = states.mu1[i];
            cb.belief_var = states.sigma2_1[i];
            const double dape_i = beta.dot(basis.evaluate(cb)) - f0;
            sum_dape[0] += w * dape_i;
            sum_dape[cell] += w * dape_i;
        }
    }

    auto make_cell = [&](std::size_t k, std::string name) {
        ApeCell cell;
        cell.name = std::move(name);
        cell.weight = sum_w[k];
        cell.n_rows = rows_in[k];
        if (sum_w[k] > 0.0) {
            cell.cape = sum_cape[k] / sum_w[k];
            cell.tape = sum_tape[k] / sum_w[k];
            cell.dape = direct_dape ? sum_dape[k] / sum_w[k] : cell.tape - cell.cape;
        }
        return cell;
    };
    result.pooled = make_cell(0, "pooled");
    result.quintiles.reserve(static_cast<std::size_t>(options.n_quantile_groups));
    for (int g = 0; g < options.n_quantile_groups; ++g) {
        result.quintiles.push_back(
            make_cell(static_cast<std::size_t>(g) + 1, "q" + std::to_string(g + 1)));
    }
    for (std::size_t j = 0; j < 5; ++j) result.outside_share_by_dim[j] = outside_w[j] / total_w;
    result.outside_share = outside_any / total_w;
    return result;
}

std::string ApeResult::to_csv() const {
    check_label(counterfactual, "counterfactual");
    check_label(spec, "spec");
    std::string out = "counterfactual,spec,cell,cape,dape,tape,cape_se,dape_se,tape_se\n";
    auto emit = [&](const ApeCell& cell) {
        check_label(cell.name, "cell");
        out += counterfactual;
        out += ',';
        out += spec;
        out += ',';
        out += cell.name;
        append_field(out, cell.cape);
        append_field(out, cell.dape);
        append_field(out, cell.tape);
        append_field(out, cell.cape_se);
        append_field(out, cell.dape_se);
        append_field(out, cell.tape_se);
        out += '\n';
    };
    emit(pooled);
    for (const ApeCell& cell : quintiles) emit(cell);
    return out;
}

std::string ApeResult::plot_rows() const {
    check_label(counterfactual, "counterfactual");
    check_label(spec, "spec");
    std::string out = "counterfactual,spec,cell,mode,value,se\n";
    auto emit = [&](const ApeCell& cell, const char* mode, double value, double se) {
        out += counterfactual;
        out += ',';
        out += spec;
        out += ',';
        out += cell.name;
        out += ',';
        out += mode;
        append_field(out, value);
        append_field(out, se);
        out += '\n';
    };
    for (const ApeCell& cell : quintiles) {
        check_label(cell.name, "cell");
        emit(cell, "cape", cell.cape, cell.cape_se);
        emit(cell, "dape", cell.dape, cell.dape_se);
        emit(cell, "tape", cell.tape, cell.tape_se);
    }
    return out;
}

ApeResult bootstrap_ape(const ApePipeline& pipeline, const Panel& panel, int n_boot,
                        std::uint64_t seed) {
    if (n_boot <= 0) {
        throw std::invalid_argument("bootstrap_ape: n_boot must be positive");
    }
    if (panel.rows.empty()) throw std::invalid_argument("bootstrap_ape: empty panel");

    ApeResult point = pipeline(panel, seed);

    // Household blocks (the panel is sorted by household, wave).
    std::vector<std::pair<std::size_t, std::size_t>> blocks;  // [first, last) row ranges
    for (std::size_t i = 0; i < panel.rows.size();) {
        std::size_t j = i;
        while (j < panel.rows.size() &&
               panel.rows[j].household_id == panel.rows[i].household_id) {
            ++j;
        }
        blocks.emplace_back(i, j);
        i = j;
    }
    const std::size_t n_households = blocks.size();
    {
        std::vector<std::int64_t> ids;
        ids.reserve(n_households);
        for (const auto& [first, last] : blocks) ids.push_back(panel.rows[first].household_id);
        std::vector<std::int64_t> sorted = ids;
        std::sort(sorted.begin(), sorted.end());
        if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
            throw std::invalid_argument(
                "bootstrap_ape: panel rows of one household must be contiguous (prepare() it)");
        }
    }

    const std::size_t n_cells = point.quintiles.size() + 1;
    std::vector<double> mean_cape(n_cells, 0.0), mean_dape(n_cells, 0.0),
        mean_tape(n_cells, 0.0);
    std::vector<double> m2_cape(n_cells, 0.0), m2_dape(n_cells, 0.0), m2_tape(n_cells, 0.0);

    for (int rep = 0; rep < n_boot; ++rep) {
        RngStream rng(seed, Stream::bootstrap, static_cast<std::uint64_t>(rep));
        Panel resample;
        resample.control_names = panel.control_names;
        resample.controls.resize(panel.controls.size());
        for (std::size_t h = 0; h < n_households; ++h) {
            const auto pick = static_cast<std::size_t>(rng.below(n_households));
            const auto [first, last] = blocks[pick];
            for (std::size_t r = first; r < last; ++r) {
                PanelRow row = panel.rows[r];
                row.household_id = static_cast<std::int64_t>(h);
                resample.rows.push_back(row);
                for (std::size_t c = 0; c < panel.controls.size(); ++c) {
                    resample.controls[c].push_back(panel.controls[c][r]);
                }
            }
        }
        resample.prepare();
        const std::uint64_t rep_seed = derive_seed(
            seed, Stream::bootstrap, kPipelineSeedOffset + static_cast<std::uint64_t>(rep));
        const ApeResult est = pipeline(resample, rep_seed);
        if (est.quintiles.size() != point.quintiles.size()) {
            throw std::runtime_error("bootstrap_ape: replicate changed the cell layout");
        }

        auto accumulate = [&](std::size_t k, const ApeCell& cell) {
            const double dn = 1.0 / static_cast<double>(rep + 1);
            const double d_cape = cell.cape - mean_cape[k];
            mean_cape[k] += d_cape * dn;
            m2_cape[k] += d_cape * (cell.cape - mean_cape[k]);
            const double d_dape = cell.dape - mean_dape[k];
            mean_dape[k] += d_dape * dn;
            m2_dape[k] += d_dape * (cell.dape - mean_dape[k]);
            const double d_tape = cell.tape - mean_tape[k];
            mean_tape[k] += d_tape * dn;
            m2_tape[k] += d_tape * (cell.tape - mean_tape[k]);
        };
        accumulate(0, est.pooled);
        for (std::size_t q = 0; q < est.quintiles.size(); ++q) {
            accumulate(q + 1, est.quintiles[q]);
        }
    }

    const double denom = n_boot > 1 ? static_cast<double>(n_boot - 1) : 1.0;
    auto fill = [&](std::size_t k, ApeCell& cell) {
        cell.cape_se = std::sqrt(m2_cape[k] / denom);
        cell.dape_se = std::sqrt(m2_dape[k] / denom);
        cell.tape_se = std::sqrt(m2_tape[k] / denom);
    };
    fill(0, point.pooled);
    for (std::size_t q = 0; q < point.quintiles.size(); ++q) fill(q + 1, point.quintiles[q]);
    return point;
}

}  // namespace apekit
