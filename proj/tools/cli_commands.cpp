#include "cli_commands.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "apekit/counterfactuals.hpp"
#include "apekit/csv.hpp"
#include "apekit/elicitation.hpp"
#include "apekit/lifecycle.hpp"
#include "apekit/rng.hpp"

#include "cli_charts.hpp"
#include "cli_config.hpp"

namespace apekit::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void write_text_file(const fs::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw CsvDataError(0, "cannot open file for writing: " + path.string());
    out << content;
    out.flush();
    if (!out) throw CsvDataError(0, "failed while writing: " + path.string());
}

// Drops the header line of a CSV string (for concatenating documents
// that each carry their own header).
std::string body_after_header(const std::string& csv) {
    const std::size_t nl = csv.find('\n');
    return nl == std::string::npos ? std::string() : csv.substr(nl + 1);
}

// CSV field quoting for free-text diagnostics (the numeric formats never
// need it).
std::string quoted(const std::string& text) {
    std::string out = "\"";
    for (char c : text) {
        if (c == '"') out += "\"\"";
        out += c;
    }
    out += '"';
    return out;
}

const char* asset_control_name(AssetControl control) {
    switch (control) {
        case AssetControl::linear: return "linear";
        case AssetControl::quadratic: return "quadratic";
        default: return "spline";
    }
}

// Weighted mean and standard deviation of log family income, the
// moments the revenue-neutral schedule level is computed from.
void income_moments(const Panel& panel, double& mu_x, double& sigma_x) {
    double wsum = 0.0, mean = 0.0;
    for (const PanelRow& row : panel.rows) {
        wsum += row.weight;
        mean += row.weight * row.log_family_income;
    }
    if (!(wsum > 0.0)) throw CsvDataError(0, "panel has no weighted rows");
    mean /= wsum;
    double var = 0.0;
    for (const PanelRow& row : panel.rows) {
        const double d = row.log_family_income - mean;
        var += row.weight * d * d;
    }
    mu_x = mean;
    sigma_x = std::sqrt(var / wsum);
}

// ---------------------------------------------------------------------
// solve-simulate

void write_age_profiles(const SimulatedPanel& sim, const fs::path& path) {
    struct Acc {
        long long n = 0;
        double sum_y = 0.0, sumsq_y = 0.0;
        double sum_c = 0.0, sumsq_c = 0.0;
        double sum_a = 0.0, sumsq_a = 0.0;
    };
    std::map<int, Acc> by_period;
    for (std::size_t i = 0; i < sim.size(); ++i) {
        Acc& acc = by_period[sim.period[i]];
        const double y = std::exp(sim.log_income[i]);
        const double c = sim.consumption[i];
        const double a = sim.assets[i];
        ++acc.n;
        acc.sum_y += y;
        acc.sumsq_y += y * y;
        acc.sum_c += c;
        acc.sumsq_c += c * c;
        acc.sum_a += a;
        acc.sumsq_a += a * a;
    }
    std::string out =
        "age,n,mean_income,var_income,mean_consumption,var_consumption,mean_assets,var_assets\n";
    const auto variance = [](double sum, double sumsq, long long n) {
        if (n < 2) return 0.0;
        const double mean = sum / static_cast<double>(n);
        const double raw = sumsq / static_cast<double>(n) - mean * mean;
        return std::max(0.0, raw) * static_cast<double>(n) / static_cast<double>(n - 1);
    };
    for (const auto& [period, acc] : by_period) {
        const double n = static_cast<double>(acc.n);
        out += std::to_string(LifecycleModel::entry_age + period);
        out += ',' + std::to_string(acc.n);
        out += ',' + csv_number(acc.sum_y / n);
        out += ',' + csv_number(variance(acc.sum_y, acc.sumsq_y, acc.n));
        out += ',' + csv_number(acc.sum_c / n);
        out += ',' + csv_number(variance(acc.sum_c, acc.sumsq_c, acc.n));
        out += ',' + csv_number(acc.sum_a / n);
        out += ',' + csv_number(variance(acc.sum_a, acc.sumsq_a, acc.n));
        out += '\n';
    }
    write_text_file(path, out);
}

void cmd_solve_simulate(const json& config, const fs::path& out_dir) {
    RunHeader run = open_run(config, "solve-simulate");
    LifecycleModel model = model_from_config(run.root);
    const std::int64_t n_households = run.root.integer64("n_households");
    if (n_households < 0) run.root.fail("n_households", "must be >= 0");
    RecordWindow window;
    window.first_period = run.root.integer_or("record_first_period", 0);
    window.last_period = run.root.integer_or("record_last_period", model.horizon - 1);
    if (window.first_period < 0 || window.last_period < window.first_period)
        run.root.fail("record_first_period", "recording window is empty or negative");
    const double min_age = run.root.number_or("panel_min_age", 26.0);
    const double max_age = run.root.number_or("panel_max_age", 49.0);
    run.root.finish();

    const PolicySolution policy = solve(model);
    const SimulatedPanel sim = simulate(policy, model, n_households, run.master_seed, window);
    const Panel panel = to_panel(sim, min_age, max_age);
    write_panel_csv(panel, (out_dir / "panel.csv").string());
    write_age_profiles(sim, out_dir / "age_profiles.csv");
}

// ---------------------------------------------------------------------
// table1

void cmd_table1(const json& config, const fs::path& out_dir) {
    RunHeader run = open_run(config, "table1");
    const std::vector<std::string> regime_names =
        run.root.text_array_or("regimes", {"rational", "adaptive"});
    const std::int64_t n_households = run.root.integer64("n_households");
    if (n_households < 1) run.root.fail("n_households", "must be >= 1");
    const double rate = run.root.number_or("tax_rate_increase", 0.10);
    if (!(rate < 1.0)) run.root.fail("tax_rate_increase", "must be < 1");
    const double min_age = run.root.number_or("panel_min_age", 26.0);
    const double max_age = run.root.number_or("panel_max_age", 49.0);
    const LifecycleModel base_model = model_from_config(run.root);
    run.root.finish();

    std::string table = "regime,spec,cape,dape,tape,identity_gap\n";
    std::string by_age = "regime,age,cape,dape,tape,n_rows\n";
    const auto table_row = [&](const std::string& regime, const std::string& spec, double cape,
                               double dape, double tape) {
        table += regime + ',' + spec + ',' + csv_number(cape) + ',' + csv_number(dape) + ',' +
                 csv_number(tape) + ',' + csv_number(cape + dape - tape) + '\n';
    };

    for (const std::string& regime_name : regime_names) {
        LifecycleModel model = base_model;
        model.regime = parse_regime(regime_name, run.root, "regimes");

        const StructuralApe structural =
            structural_tape(model, rate, n_households, run.master_seed);
        table_row(regime_name, "structural", structural.cape, structural.dape, structural.tape);
        for (std::size_t i = 0; i < structural.ages.size(); ++i) {
            by_age += regime_name + ',' + std::to_string(structural.ages[i]) + ',' +
                      csv_number(structural.cape_by_age[i]) + ',' +
                      csv_number(structural.dape_by_age[i]) + ',' +
                      csv_number(structural.tape_by_age[i]) + ',' +
                      std::to_string(structural.count_by_age[i]) + '\n';
        }

        // Regression comparisons on a panel simulated from the same
        // economy and seed (hence the same households the structural
        // evaluation saw).
        const PolicySolution policy = solve(model);
        const SimulatedPanel sim = simulate(policy, model, n_households, run.master_seed);
        const Panel panel = to_panel(sim, min_age, max_age);
        const TaxSchedule tax0 = TaxSchedule::from_scale(1.0, 0.0);
        const TaxSchedule tax1 = TaxSchedule::from_scale(1.0 - rate, 0.0);
        const CounterfactualStates states = shift_states(panel, tax0, tax1);
        for (AssetControl control :
             {AssetControl::linear, AssetControl::quadratic, AssetControl::spline}) {
            const Basis basis(panel, consumption_rule_spec(control));
            const FitResult fit = fit_consumption_rule(panel, basis, FitForm::levels);
            const ApeResult ape = plug_in_ape(fit, basis, panel, states);
            table_row(regime_name, asset_control_name(control), ape.pooled.cape, ape.pooled.dape,
                      ape.pooled.tape);
        }
    }
    write_text_file(out_dir / "table1.csv", table);
    write_text_file(out_dir / "table1_by_age.csv", by_age);
}

// ---------------------------------------------------------------------
// estimate-beliefs

void cmd_estimate_beliefs(const json& config, const fs::path& out_dir) {
    RunHeader run = open_run(config, "estimate-beliefs");
    const std::string input = run.root.text("input");
    const bool lenient = run.root.boolean_or("lenient", false);
    run.root.finish();

    std::ifstream probe(input, std::ios::binary);
    if (!probe) throw CsvDataError(0, "cannot open file: " + input);
    std::string header_line;
    if (!std::getline(probe, header_line)) throw CsvDataError(0, "missing header row");
    const SurveyFormat format = detect_survey_format(header_line);
    probe.close();

    const SurveyReadOptions options{lenient};
    std::vector<CsvRowError> skipped;
    std::string beliefs = "household_id,wave,mu,sigma2,n_restrictions,sigma_truncated\n";
    const auto emit = [&](std::int64_t id, int wave, const NormalBelief& belief,
                          int n_restrictions, bool truncated) {
        beliefs += std::to_string(id) + ',' + std::to_string(wave) + ',' +
                   csv_number(belief.mean) + ',' + csv_number(belief.var) + ',' +
                   std::to_string(n_restrictions) + ',' + (truncated ? "1" : "0") + '\n';
    };
    // Estimation failures on rows the reader accepted are data problems
    // too: strict runs abort, lenient runs record and skip.
    const auto guard = [&](std::int64_t id, int wave, const auto& estimate) {
        try {
            estimate();
        } catch (const std::exception& e) {
            const std::string message = "household " + std::to_string(id) + " wave " +
                                        std::to_string(wave) + ": " + e.what();
            if (!lenient) throw CsvDataError(0, message);
            skipped.push_back({0, message});
        }
    };

    if (format == SurveyFormat::growth) {
        const GrowthSurveyFile file = read_growth_survey_csv(input, options);
        skipped = file.skipped;
        const GrowthBinScheme scheme = GrowthBinScheme::standard();
        for (const GrowthSurveyRow& row : file.rows) {
            guard(row.household_id, row.wave, [&] {
                const GrowthFit fit = estimate_growth_belief(row.response, scheme, 100);
                emit(row.household_id, row.wave, fit.belief, fit.n_restrictions,
                     fit.sigma_truncated);
            });
        }
    } else {
        const MinMaxSurveyFile file = read_minmax_survey_csv(input, options);
        skipped = file.skipped;
        for (const MinMaxSurveyRow& row : file.rows) {
            guard(row.household_id, row.wave, [&] {
                const NormalBelief belief = estimate_level_belief(row.response, 100);
                const bool degenerate = row.response.min_earn == row.response.max_earn;
                emit(row.household_id, row.wave, belief, degenerate ? 0 : 3, false);
            });
        }
    }
    write_text_file(out_dir / "beliefs.csv", beliefs);
    if (lenient) {
        std::string log = "line,message\n";
        for (const CsvRowError& err : skipped)
            log += std::to_string(err.line) + ',' + quoted(err.message) + '\n';
        write_text_file(out_dir / "skipped_rows.csv", log);
    }
}

// ---------------------------------------------------------------------
// regress

void cmd_regress(const json& config, const fs::path& out_dir) {
    RunHeader run = open_run(config, "regress");
    const std::string input = run.root.text("panel");
    const AssetControl control =
        parse_asset_control(run.root.text_or("spec", "linear"), run.root, "spec");
    const FitForm form =
        parse_fit_form(run.root.text_or("form", "first_differences"), run.root, "form");
    run.root.finish();

    const Panel panel = read_panel_csv(input);
    const Basis basis(panel, consumption_rule_spec(control));
    const FitResult fit = fit_consumption_rule(panel, basis, form);

    std::string coeffs = "term,estimate,se\n";
    for (std::size_t i = 0; i < fit.names.size(); ++i) {
        coeffs += fit.names[i] + ',' + csv_number(fit.coef(static_cast<Eigen::Index>(i))) + ',' +
                  csv_number(std::sqrt(fit.vcov(static_cast<Eigen::Index>(i),
                                                static_cast<Eigen::Index>(i)))) +
                  '\n';
    }
    write_text_file(out_dir / "coefficients.csv", coeffs);
    write_text_file(out_dir / "fit.csv", "n_obs,n_clusters,r_squared\n" +
                                             std::to_string(fit.n_obs) + ',' +
                                             std::to_string(fit.n_clusters) + ',' +
                                             csv_number(fit.r_squared) + '\n');
}

// ---------------------------------------------------------------------
// counterfactual

void cmd_counterfactual(const json& config, const fs::path& out_dir) {
    RunHeader run = open_run(config, "counterfactual");
    const std::string input = run.root.text("panel");
    const std::vector<std::string> scenarios =
        run.root.text_array_or("scenarios", {"transitory", "permanent", "regressivity"});
    const std::string estimator = run.root.text_or("estimator", "plug_in");
    if (estimator != "plug_in" && estimator != "double_lasso")
        run.root.fail("estimator", "must be 'plug_in' or 'double_lasso', got '" + estimator + "'");
    const int n_bootstrap = run.root.integer_or("n_bootstrap", 200);
    if (n_bootstrap < 0) run.root.fail("n_bootstrap", "must be >= 0");
    const double rate = run.root.number_or("tax_rate_increase", 0.10);
    if (!(rate < 1.0)) run.root.fail("tax_rate_increase", "must be < 1");
    const double tau1 = run.root.number_or("tau1", 0.142);
    if (!(tau1 >= 0.0 && tau1 < 1.0)) run.root.fail("tau1", "must be in [0, 1)");
    TaxSchedule tax0 = TaxSchedule::from_scale(3.826, 0.137);
    if (auto block = run.root.object("tax0")) tax0 = tax_from_section(std::move(*block));

    AssetControl control = AssetControl::spline;
    FitForm form = FitForm::first_differences;
    int degree = 2;
    int cv_folds = 10;
    if (estimator == "plug_in") {
        control = parse_asset_control(run.root.text_or("spec", "spline"), run.root, "spec");
        form = parse_fit_form(run.root.text_or("form", "first_differences"), run.root, "form");
    } else {
        degree = run.root.integer_or("degree", 2);
        if (degree < 1 || degree > 6) run.root.fail("degree", "must be in 1..6");
        cv_folds = run.root.integer_or("cv_folds", 10);
        if (cv_folds < 2) run.root.fail("cv_folds", "must be >= 2");
    }
    run.root.finish();

    const Panel panel = read_panel_csv(input);

    const auto scenario_tax1 = [&](const std::string& name, const Panel& p) -> TaxSchedule {
        if (name == "regressivity") {
            double mu_x = 0.0, sigma_x = 0.0;
            income_moments(p, mu_x, sigma_x);
            return revenue_neutral_schedule(tax0, tau1, mu_x, sigma_x);
        }
        return tax0.scaled_by(1.0 - rate);
    };

    std::string ape_csv, plot_csv;
    for (std::size_t index = 0; index < scenarios.size(); ++index) {
        const std::string& name = scenarios[index];
        if (name != "transitory" && name != "permanent" && name != "regressivity")
            run.root.fail("scenarios",
                          "must name 'transitory', 'permanent', or 'regressivity', got '" + name +
                              "'");

        ApeResult ape;
        if (estimator == "plug_in") {
            PlugInOptions options;
            options.transitory = (name == "transitory");
            const ApePipeline pipeline = [&](const Panel& p, std::uint64_t) {
                const Basis basis(p, consumption_rule_spec(control));
                const FitResult fit = fit_consumption_rule(p, basis, form);
                const CounterfactualStates states = shift_states(p, tax0, scenario_tax1(name, p));
                return plug_in_ape(fit, basis, p, states, options);
            };
            ape = n_bootstrap > 0
                      ? bootstrap_ape(pipeline, panel, n_bootstrap,
                                      derive_seed(run.master_seed, Stream::bootstrap, index))
                      : pipeline(panel, run.master_seed);
            ape.spec = asset_control_name(control);
        } else {
            const TaxSchedule tax1 = scenario_tax1(name, panel);
            const CounterfactualStates states = shift_states(panel, tax0, tax1);
            const std::size_t n = panel.rows.size();
            std::vector<Covariates> cape_shift(n), tape_shift(n);
            for (std::size_t i = 0; i < n; ++i) {
                Covariates c = baseline_covariates(panel.rows[i]);
                c.x = states.x1[i];
                cape_shift[i] = c;
                if (name != "transitory") {
                    c.belief_mean = states.mu1[i];
                    c.belief_var = states.sigma2_1[i];
                }
                tape_shift[i] = c;
            }
            BasisSpec spec;
            spec.degree = degree;
            DoubleLassoOptions options;
            options.cv_folds = cv_folds;
            options.seed = derive_seed(run.master_seed, Stream::cv_folds, index);
            options.n_bootstrap = n_bootstrap;
            const DoubleLassoResult dl = double_lasso_ape(
                panel, spec, {{"cape", cape_shift}, {"tape", tape_shift}}, options);

            ApeCell& cell = ape.pooled;
            cell.name = "pooled";
            cell.cape = dl.ape[0];
            cell.tape = dl.ape[1];
            cell.dape = cell.tape - cell.cape;
            const bool boot = n_bootstrap > 0;
            cell.cape_se = boot ? dl.bootstrap_se[0] : dl.se[0];
            cell.tape_se = boot ? dl.bootstrap_se[1] : dl.se[1];
            // The dynamic effect is a contrast of the two targets; its
            // standard error comes from their joint analytic covariance.
            cell.dape_se = std::sqrt(std::max(
                0.0, dl.vcov_targets(0, 0) + dl.vcov_targets(1, 1) - 2.0 * dl.vcov_targets(0, 1)));
            for (const PanelRow& row : panel.rows) cell.weight += row.weight;
            cell.n_rows = static_cast<long long>(n);
            ape.dropped_terms = dl.dropped_terms;
            ape.outside_share = dl.share_outside_support;
            ape.spec = "dlasso_deg" + std::to_string(degree);
        }
        ape.counterfactual = name;
        ape.seed = run.master_seed;

        const std::string table = ape.to_csv();
        const std::string plot = ape.plot_rows();
        ape_csv += ape_csv.empty() ? table : body_after_header(table);
        plot_csv += plot_csv.empty() ? plot : body_after_header(plot);
        if (estimator == "plug_in") {
            const std::string svg = ape_bar_chart_svg(ape);
            if (!svg.empty()) write_text_file(out_dir / ("chart_" + name + ".svg"), svg);
        }
    }
    write_text_file(out_dir / "ape_results.csv", ape_csv);
    write_text_file(out_dir / "plot_data.csv", plot_csv);
}

// ---------------------------------------------------------------------
// bias-correct

void cmd_bias_correct(const json& config, const fs::path& out_dir) {
    RunHeader run = open_run(config, "bias-correct");
    const std::string input = run.root.text("panel");
    const std::vector<int> m_grid = run.root.integer_array_or("m_grid", {1, 5, 10, 50, 100});
    for (int m : m_grid)
        if (m < 1) run.root.fail("m_grid", "entries must be >= 1");
    const int n_replications = run.root.integer_or("n_replications", 1000);
    if (n_replications < 1) run.root.fail("n_replications", "must be >= 1");
    const AssetControl control =
        parse_asset_control(run.root.text_or("spec", "linear"), run.root, "spec");
    const FitForm form = parse_fit_form(run.root.text_or("form", "levels"), run.root, "form");
    run.root.finish();
    if (n_replications == 1) {
        std::fprintf(stderr,
                     "warning: n_replications = 1 gives degenerate simulation bands (sd = 0)\n");
    }

    const Panel panel = read_panel_csv(input);
    if (panel.rows.empty()) throw CsvDataError(0, "panel has no rows");

    // Growth-scale beliefs implied by the panel columns: the belief mean
    // is current log income plus expected growth.
    std::vector<NormalBelief> beliefs(panel.rows.size());
    for (std::size_t i = 0; i < panel.rows.size(); ++i) {
        const PanelRow& row = panel.rows[i];
        try {
            beliefs[i] = NormalBelief(row.belief_mean - row.log_family_income, row.belief_var);
        } catch (const std::exception& e) {
            throw CsvDataError(0, "household " + std::to_string(row.household_id) + " wave " +
                                      std::to_string(row.wave) + ": " + e.what());
        }
    }

    const auto coefficients = [&](const std::vector<NormalBelief>& bs) {
        Panel p = panel;
        for (std::size_t i = 0; i < p.rows.size(); ++i) {
            p.rows[i].belief_mean = p.rows[i].log_family_income + bs[i].mean;
            p.rows[i].belief_var = bs[i].var;
        }
        const Basis basis(p, consumption_rule_spec(control));
        const FitResult fit = fit_consumption_rule(p, basis, form);
        return std::vector<double>{fit.coefficient("mu"), fit.coefficient("x")};
    };

    const GrowthBinScheme scheme = GrowthBinScheme::standard();
    std::string out = "m,term,beta_ols,beta_bc,replication_sd,band_lo,band_hi\n";
    for (int m : m_grid) {
        // The master seed is shared across the grid, so every m reuses
        // the same underlying draws (common random numbers): differences
        // along the curve reflect the scenario count, not noise.
        const BiasCorrection bc =
            bias_correct(beliefs, scheme, m, 100, n_replications, run.master_seed, coefficients);
        const char* terms[2] = {"mu", "x"};
        for (int j = 0; j < 2; ++j) {
            const double sd = bc.replication_sd[static_cast<std::size_t>(j)];
            const double corrected = bc.beta_bc[static_cast<std::size_t>(j)];
            out += std::to_string(m) + ',' + terms[j] + ',' +
                   csv_number(bc.beta_ols[static_cast<std::size_t>(j)]) + ',' +
                   csv_number(corrected) + ',' + csv_number(sd) + ',' +
                   csv_number(corrected - 2.0 * sd) + ',' + csv_number(corrected + 2.0 * sd) +
                   '\n';
        }
    }
    write_text_file(out_dir / "bias_correct.csv", out);
}

}  // namespace

void run_command(const std::string& command, const json& config, const std::string& out_dir) {
    const fs::path out(out_dir);
    std::error_code ec;
    fs::create_directories(out, ec);
    if (ec) throw CsvDataError(0, "cannot create output directory " + out.string() + ": " +
                                      ec.message());

    if (command == "solve-simulate") return cmd_solve_simulate(config, out);
    if (command == "table1") return cmd_table1(config, out);
    if (command == "estimate-beliefs") return cmd_estimate_beliefs(config, out);
    if (command == "regress") return cmd_regress(config, out);
    if (command == "counterfactual") return cmd_counterfactual(config, out);
    if (command == "bias-correct") return cmd_bias_correct(config, out);
    throw ConfigError("unknown command: " + command);
}

}  // namespace apekit::cli
