// End-to-end composition at unit-test scale: synthetic panels whose
// beliefs are pushed through the survey round trip (synthesize ->
// estimate), then into the regression and counterfactual layers.  The
// acceptance suite runs the same shape at full scale; these cases guard
// the wiring cheaply.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "apekit/beliefs.hpp"
#include "apekit/counterfactuals.hpp"
#include "apekit/csv.hpp"
#include "apekit/econometrics.hpp"
#include "apekit/elicitation.hpp"
#include "apekit/rng.hpp"
#include "apekit/tax.hpp"

using namespace apekit;

namespace {

struct SyntheticWorld {
    Panel truth;                            // panel with data-generating beliefs
    std::vector<NormalBelief> growth_true;  // per-row growth-scale beliefs
};

// Two-wave panel: log consumption responds to income and the belief
// mean; growth beliefs sit well inside the survey categories.
SyntheticWorld make_world(int n_households, std::uint64_t seed) {
    SyntheticWorld world;
    RngStream rng(seed, Stream::synthetic_panel, 0);
    for (int h = 0; h < n_households; ++h) {
        const double household_x = 10.0 + 0.4 * rng.normal();
        for (int w = 0; w < 2; ++w) {
            PanelRow row;
            row.household_id = h + 1;
            row.wave = w + 1;
            row.log_family_income = household_x + 0.1 * rng.normal();
            // Growth beliefs with survey-scale spread: mean a few percent,
            // subjective sd about one narrow-category width.
            const double mu_g = 0.04 + 0.02 * rng.normal();
            const double sigma_g = 0.008 + 0.004 * rng.uniform();
            row.belief_mean = row.log_family_income + mu_g;
            row.belief_var = sigma_g * sigma_g;
            row.log_assets = 11.0 + 0.8 * rng.normal();
            row.age = 30 + w + 10.0 * rng.uniform();
            row.weight = 1.0;
            row.log_consumption = 2.0 + 0.30 * row.log_family_income + 0.50 * row.belief_mean +
                                  0.002 * row.age + 0.01 * rng.normal();
            world.growth_true.emplace_back(mu_g, sigma_g * sigma_g);
            world.truth.rows.push_back(row);
        }
    }
    world.truth.prepare();
    return world;
}

// Survey round trip: synthesize a growth response from each belief and
// estimate it back, returning the re-estimated growth beliefs.
std::vector<NormalBelief> survey_round_trip(const std::vector<NormalBelief>& growth,
                                            int m_draws, std::uint64_t seed) {
    const GrowthBinScheme scheme = GrowthBinScheme::standard();
    std::vector<NormalBelief> estimated;
    estimated.reserve(growth.size());
    for (std::size_t i = 0; i < growth.size(); ++i) {
        RngStream rng(seed, Stream::survey, static_cast<std::uint64_t>(i));
        const GrowthResponse response = synthesize_growth_response(growth[i], scheme, m_draws, rng);
        estimated.push_back(estimate_growth_belief(response, scheme, 100).belief);
    }
    return estimated;
}

Panel with_beliefs(const Panel& panel, const std::vector<NormalBelief>& growth) {
    Panel out = panel;
    for (std::size_t i = 0; i < out.rows.size(); ++i) {
        out.rows[i].belief_mean = out.rows[i].log_family_income + growth[i].mean;
        out.rows[i].belief_var = growth[i].var;
    }
    return out;
}

double belief_coefficient(const Panel& panel) {
    const Basis basis(panel, consumption_rule_spec(AssetControl::linear));
    return fit_consumption_rule(panel, basis, FitForm::levels).coefficient("mu");
}

}  // namespace

TEST_CASE("survey round trip recovers growth means with small bias") {
    SyntheticWorld world = make_world(300, 101ULL);
    const std::vector<NormalBelief> est = survey_round_trip(world.growth_true, 100, 707ULL);

    double bias = 0.0, mse = 0.0, sd_true = 0.0, sd_est = 0.0;
    for (std::size_t i = 0; i < est.size(); ++i) {
        const double d = est[i].mean - world.growth_true[i].mean;
        bias += d;
        mse += d * d;
        sd_true += world.growth_true[i].var;
        sd_est += est[i].var;
    }
    const double n = static_cast<double>(est.size());
    bias /= n;
    mse /= n;
    CHECK(std::fabs(bias) < 0.003);
    CHECK(std::sqrt(mse) < 0.01);
    // Coarse categories distort the spread: the refit sd lives on the
    // scale of a bin width, not of the (tighter) truth.  Reported, and
    // bounded so a blow-up would be caught.
    CHECK(std::sqrt(sd_est / n) < 0.025);
    MESSAGE("mean sigma_g true " << std::sqrt(sd_true / n) << " vs estimated "
                                 << std::sqrt(sd_est / n));
}

TEST_CASE("belief coefficient survives the survey round trip") {
    SyntheticWorld world = make_world(400, 202ULL);
    const double beta_truth = belief_coefficient(world.truth);
    CHECK(beta_truth == doctest::Approx(0.50).epsilon(0.05));

    // The coefficient is identified by growth-belief variation alone
    // (income and the belief level are nearly collinear), so the survey
    // round trip attenuates it; the shift must stay modest and sane.
    const std::vector<NormalBelief> est = survey_round_trip(world.growth_true, 100, 808ULL);
    const double beta_est = belief_coefficient(with_beliefs(world.truth, est));
    CHECK(std::fabs(beta_est - beta_truth) < 0.10);
    CHECK(beta_est > 0.30);
}

TEST_CASE("bias correction tightens or matches the round-trip coefficient") {
    SyntheticWorld world = make_world(250, 303ULL);
    const std::vector<NormalBelief> est = survey_round_trip(world.growth_true, 100, 909ULL);
    Panel measured = with_beliefs(world.truth, est);

    // The callback re-scores the regression at replacement beliefs.
    auto coefficients = [&](const std::vector<NormalBelief>& growth) {
        return std::vector<double>{belief_coefficient(with_beliefs(measured, growth))};
    };
    const GrowthBinScheme scheme = GrowthBinScheme::standard();
    const BiasCorrection bc = bias_correct(est, scheme, 100, 100, 40, 515ULL, coefficients);
    REQUIRE(bc.beta_ols.size() == 1);
    CHECK(bc.beta_ols[0] == doctest::Approx(belief_coefficient(measured)).epsilon(1e-12));
    // The corrected coefficient stays in a sane neighbourhood of the
    // data-generating value, within the replication noise band.
    const double truth = belief_coefficient(world.truth);
    CHECK(std::fabs(bc.beta_bc[0] - truth) <
          std::fabs(bc.beta_ols[0] - truth) + 3.0 * bc.replication_sd[0] + 0.02);
}

TEST_CASE("counterfactual conclusions are stable under survey measurement error") {
    SyntheticWorld world = make_world(400, 404ULL);
    const TaxSchedule tax0 = TaxSchedule::from_scale(1.0, 0.0);
    const TaxSchedule tax1 = TaxSchedule::from_scale(0.9, 0.0);

    auto tape_of = [&](const Panel& panel) {
        const Basis basis(panel, consumption_rule_spec(AssetControl::linear));
        const FitResult fit = fit_consumption_rule(panel, basis, FitForm::levels);
        const CounterfactualStates states = shift_states(panel, tax0, tax1);
        return plug_in_ape(fit, basis, panel, states).pooled;
    };
    const ApeCell truth_cell = tape_of(world.truth);
    const std::vector<NormalBelief> est = survey_round_trip(world.growth_true, 100, 111ULL);
    const ApeCell measured_cell = tape_of(with_beliefs(world.truth, est));

    CHECK(std::fabs(truth_cell.tape - (0.30 + 0.50) * std::log(0.9)) < 0.01);
    CHECK(std::fabs(measured_cell.tape - truth_cell.tape) < 0.015);
    CHECK(std::fabs(measured_cell.cape - truth_cell.cape) < 0.015);
}

TEST_CASE("the full pipeline round-trips through csv files deterministically") {
    namespace fs = std::filesystem;
    SyntheticWorld world = make_world(60, 505ULL);
    const fs::path dir = fs::temp_directory_path() / "apekit_synth_test";
    fs::create_directories(dir);

    // Survey responses to disk and back, strict mode.
    const GrowthBinScheme scheme = GrowthBinScheme::standard();
    std::vector<GrowthSurveyRow> survey;
    for (std::size_t i = 0; i < world.truth.rows.size(); ++i) {
        RngStream rng(616ULL, Stream::survey, static_cast<std::uint64_t>(i));
        survey.push_back({world.truth.rows[i].household_id, world.truth.rows[i].wave,
                          synthesize_growth_response(world.growth_true[i], scheme, 100, rng)});
    }
    const fs::path survey_path = dir / "growth.csv";
    write_growth_survey_csv(survey, survey_path.string());
    const GrowthSurveyFile survey_back = read_growth_survey_csv(survey_path.string());
    REQUIRE(survey_back.rows.size() == survey.size());

    // Estimate from the file contents and attach to the panel.
    std::vector<NormalBelief> est;
    for (const GrowthSurveyRow& row : survey_back.rows)
        est.push_back(estimate_growth_belief(row.response, scheme, 100).belief);
    Panel measured = with_beliefs(world.truth, est);

    const fs::path panel_path = dir / "panel.csv";
    write_panel_csv(measured, panel_path.string());
    const Panel panel_back = read_panel_csv(panel_path.string());
    REQUIRE(panel_back.rows.size() == measured.rows.size());
    for (std::size_t i = 0; i < measured.rows.size(); ++i) {
        CHECK(panel_back.rows[i].belief_mean == measured.rows[i].belief_mean);
        CHECK(panel_back.rows[i].belief_var == measured.rows[i].belief_var);
    }

    // Identical inputs give byte-identical counterfactual reports.
    auto report = [&](const Panel& panel) {
        const Basis basis(panel, consumption_rule_spec(AssetControl::linear));
        const FitResult fit = fit_consumption_rule(panel, basis, FitForm::levels);
        const CounterfactualStates states = shift_states(panel, TaxSchedule::from_scale(1.0, 0.0),
                                                         TaxSchedule::from_scale(0.9, 0.0));
        ApeResult result = plug_in_ape(fit, basis, panel, states);
        result.counterfactual = "permanent";
        result.spec = "linear";
        return result.to_csv();
    };
    CHECK(report(panel_back) == report(measured));
    fs::remove_all(dir);
}
