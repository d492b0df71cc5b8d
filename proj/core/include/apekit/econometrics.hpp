// Panel regression machinery for the consumption function: household
// panels, first differencing (removing additive household effects),
// weighted least squares with household-clustered inference, polynomial
// basis expansion, and the double-Lasso average-partial-effect estimator
// with the lead-column reparameterization.
#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "apekit/lasso.hpp"

namespace apekit {

// One household-wave observation.  Belief moments are plain numbers, not
// a distribution object: differencing and counterfactual arithmetic may
// take them outside the parameter space of a distribution.
struct PanelRow {
    std::int64_t household_id = 0;
    int wave = 0;
    double log_consumption = 0.0;
    double log_family_income = 0.0;
    double belief_mean = 0.0;
    double belief_var = 0.0;
    double log_assets = 0.0;
    double age = 0.0;
    double weight = 1.0;
};

// Rows plus optional named control columns (column-oriented, one vector
// per control, aligned with rows).
struct Panel {
    std::vector<PanelRow> rows;
    std::vector<std::string> control_names;
    std::vector<std::vector<double>> controls;

    // Sorts by (household, wave) and checks invariants: aligned control
    // columns, unique (household, wave), positive weights.
    void prepare();
    int control_index(const std::string& name) const;  // -1 if absent
};

// A regression problem: outcome, named columns, weights, and a cluster
// id per row.
struct Design {
    Eigen::MatrixXd x;
    Eigen::VectorXd y;
    Eigen::VectorXd weight;
    std::vector<std::int64_t> cluster;
    std::vector<std::string> names;

    Eigen::Index n() const { return x.rows(); }
    Eigen::Index k() const { return x.cols(); }
};

struct FitResult {
    std::vector<std::string> names;
    Eigen::VectorXd coef;
    Eigen::MatrixXd vcov;  // cluster-robust
    int n_obs = 0;
    int n_clusters = 0;
    double r_squared = 0.0;
    std::vector<std::string> selected_terms;  // filled by selection procedures

    int index_of(const std::string& name) const;  // throws on unknown name
    double coefficient(const std::string& name) const;
    double se(const std::string& name) const;
};

// Named level columns from a panel.  Vocabulary: "x" (log family
// income), "mu" (belief mean), "var" (belief variance), "mu_x", "var_x"
// (interactions with x), "age", "age2", "assets" (log assets), "const",
// plus any control column name.
Eigen::MatrixXd build_level_columns(const Panel& panel, const std::vector<std::string>& terms);

// First differences of an outcome and level columns between consecutive
// waves within each household.  Row metadata (cluster = household,
// weight = later wave's weight) comes along; households with a single
// wave contribute nothing.  The panel must be prepared (sorted).
Design first_difference(const Panel& panel, const Eigen::MatrixXd& level_columns,
                        const std::vector<std::string>& names, const Eigen::VectorXd& level_y);

// Weighted least squares with the cluster-robust sandwich covariance
// (cluster sums of scores, small-sample factor G/(G-1)*(N-1)/(N-K)).
// Throws on rank deficiency, naming the collinear columns.
FitResult wls(const Design& design);

// Wald test that the named coefficients are jointly zero, referred to an
// F distribution with (q, G-1) degrees of freedom.  Empty set gives 1.
double f_test(const FitResult& fit, const std::vector<std::string>& term_names);

// ---------------------------------------------------------------------
// Basis expansion and the double-Lasso average partial effect.

// The covariates a consumption rule may depend on.
struct Covariates {
    double age = 0.0;
    double x = 0.0;       // log family income
    double log_assets = 0.0;
    double belief_mean = 0.0;
    double belief_var = 0.0;
};

Covariates baseline_covariates(const PanelRow& row);

struct BasisSpec {
    int degree = 1;                            // max total degree of monomials
    std::vector<std::string> always_include;   // never penalized in selection
    int asset_spline_knots = 0;                // extra piecewise-linear terms in assets
    // When non-empty, the monomial set is exactly these terms instead of
    // the full enumeration up to `degree` (which is then ignored).  Terms
    // are '*'-joined factors over the covariate names "age", "x",
    // "assets", "mu", "var", each optionally powered ("age^2", "x*mu").
    // Names are canonicalized, so Basis::names() may differ in spelling.
    std::vector<std::string> terms;
};

// Monomials (and optional asset hinge terms) over the covariates,
// centered at weighted sample means before multiplication so that a
// covariate with no cross-sectional variation contributes exactly zero.
class Basis {
  public:
    Basis(const Panel& panel, const BasisSpec& spec);

    const std::vector<std::string>& names() const { return names_; }
    Eigen::Index size() const { return static_cast<Eigen::Index>(names_.size()); }
    Eigen::VectorXd evaluate(const Covariates& c) const;
    Eigen::MatrixXd evaluate_panel(const Panel& panel) const;
    Eigen::MatrixXd evaluate_rows(const std::vector<Covariates>& rows) const;
    // Support range per covariate observed at construction (for the
    // out-of-support diagnostic).
    const std::array<double, 5>& support_lo() const { return lo_; }
    const std::array<double, 5>& support_hi() const { return hi_; }

  private:
    std::vector<std::array<int, 5>> exponents_;  // per term, per covariate
    std::vector<double> knots_;                  // asset spline knots
    std::vector<std::string> names_;
    std::array<double, 5> center_{};
    std::array<double, 5> lo_{}, hi_{};
};

// One counterfactual scenario: covariates after the policy shift, one
// entry per panel row.
struct ApeTarget {
    std::string name;
    std::vector<Covariates> shifted;
};

struct DoubleLassoOptions {
    int cv_folds = 10;
    std::uint64_t seed = 0;
    int n_bootstrap = 0;   // cluster bootstrap of the full pipeline (0 = analytic SE only)
    // Testing hook: which basis coordinate the lead columns replace in
    // the reparameterization (-1 = automatic pivot by largest loading).
    int completion_drop = -1;
};

struct DoubleLassoResult {
    std::vector<std::string> target_names;
    std::vector<double> ape;           // one average partial effect per target
    std::vector<double> se;            // analytic cluster-robust
    std::vector<double> bootstrap_se;  // filled when n_bootstrap > 0
    Eigen::MatrixXd vcov_targets;      // joint cluster-robust vcov of the APEs
    std::vector<std::string> selected_terms;
    std::vector<std::string> dropped_terms;  // zero-variation columns removed
    double share_outside_support = 0.0;
    FitResult final_fit;
};

// Average partial effects of counterfactual covariate shifts on log
// consumption, by double Lasso on a first-differenced polynomial basis:
// the basis is reparameterized so each target's APE is the coefficient
// of one lead column, selection runs once (union over the lead-column
// and outcome regressions), and a single post-selection OLS delivers all
// targets, so derived identities between targets hold exactly.
DoubleLassoResult double_lasso_ape(const Panel& panel, const BasisSpec& spec,
                                   const std::vector<ApeTarget>& targets,
                                   const DoubleLassoOptions& options);

}  // namespace apekit
