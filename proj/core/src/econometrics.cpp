#include "apekit/econometrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <utility>

#include <boost/math/distributions/fisher_f.hpp>

#include "apekit/rng.hpp"
#include "apekit/stats.hpp"

namespace apekit {
namespace {

constexpr std::array<const char*, 5> kCovariateNames = {"age", "x", "assets", "mu", "var"};

std::array<double, 5> covariate_array(const Covariates& c) {
    return {c.age, c.x, c.log_assets, c.belief_mean, c.belief_var};
}

double ipow(double base, int exponent) {
    double out = 1.0;
    for (int i = 0; i < exponent; ++i) out *= base;
    return out;
}

std::string join_names(const std::vector<std::string>& names) {
    std::ostringstream os;
    for (std::size_t i = 0; i < names.size(); ++i) {
        if (i > 0) os << ", ";
        os << names[i];
    }
    return os.str();
}

// Parses a '*'-joined monomial over the covariate names, each factor
// optionally powered ("x", "age^2", "x*mu"), into an exponent array.
std::array<int, 5> parse_term(const std::string& term) {
    std::array<int, 5> e{};
    std::size_t pos = 0;
    while (pos <= term.size()) {
        const std::size_t next = std::min(term.find('*', pos), term.size());
        std::string factor = term.substr(pos, next - pos);
        int power = 1;
        if (const std::size_t caret = factor.find('^'); caret != std::string::npos) {
            const std::string exp_text = factor.substr(caret + 1);
            std::size_t used = 0;
            try {
                power = std::stoi(exp_text, &used);
            } catch (const std::exception&) {
                used = 0;
            }
            if (used != exp_text.size() || power < 1) {
                throw std::invalid_argument("basis term '" + term + "': bad exponent '" +
                                            exp_text + "'");
            }
            factor.resize(caret);
        }
        const auto slot = std::find(kCovariateNames.begin(), kCovariateNames.end(), factor);
        if (factor.empty() || slot == kCovariateNames.end()) {
            throw std::invalid_argument("basis term '" + term + "': unknown covariate '" +
                                        factor + "' (expected one of " +
                                        join_names({kCovariateNames.begin(), kCovariateNames.end()}) +
                                        ")");
        }
        e[static_cast<std::size_t>(slot - kCovariateNames.begin())] += power;
        pos = next + 1;
    }
    return e;
}

// Weighted quantile by cumulative weight: smallest value whose cumulative
// weight reaches q of the total.
double weighted_quantile(std::vector<std::pair<double, double>> value_weight, double q) {
    if (value_weight.empty()) throw std::invalid_argument("weighted_quantile: no observations");
    std::sort(value_weight.begin(), value_weight.end());
    double total = 0.0;
    for (const auto& [v, w] : value_weight) total += w;
    const double target = q * total;
    double cum = 0.0;
    for (const auto& [v, w] : value_weight) {
        cum += w;
        if (cum >= target) return v;
    }
    return value_weight.back().first;
}

bool panel_is_sorted(const Panel& panel) {
    for (std::size_t i = 1; i < panel.rows.size(); ++i) {
        const auto& a = panel.rows[i - 1];
        const auto& b = panel.rows[i];
        if (a.household_id > b.household_id ||
            (a.household_id == b.household_id && a.wave >= b.wave)) {
            return false;
        }
    }
    return true;
}

}  // namespace

void Panel::prepare() {
    if (control_names.size() != controls.size()) {
        throw std::invalid_argument("panel: control_names and controls are misaligned");
    }
    for (const auto& col : controls) {
        if (col.size() != rows.size()) {
            throw std::invalid_argument("panel: control column length does not match rows");
        }
    }
    std::vector<std::size_t> order(rows.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (rows[a].household_id != rows[b].household_id) {
            return rows[a].household_id < rows[b].household_id;
        }
        return rows[a].wave < rows[b].wave;
    });
    std::vector<PanelRow> sorted_rows(rows.size());
    for (std::size_t i = 0; i < order.size(); ++i) sorted_rows[i] = rows[order[i]];
    rows = std::move(sorted_rows);
    for (auto& col : controls) {
        std::vector<double> sorted_col(col.size());
        for (std::size_t i = 0; i < order.size(); ++i) sorted_col[i] = col[order[i]];
        col = std::move(sorted_col);
    }
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (!(rows[i].weight > 0.0) || !std::isfinite(rows[i].weight)) {
            throw std::invalid_argument("panel: weights must be positive and finite");
        }
        if (i > 0 && rows[i].household_id == rows[i - 1].household_id &&
            rows[i].wave == rows[i - 1].wave) {
            throw std::invalid_argument("panel: duplicate (household, wave) pair for household " +
                                        std::to_string(rows[i].household_id) + ", wave " +
                                        std::to_string(rows[i].wave));
        }
    }
}

int Panel::control_index(const std::string& name) const {
    for (std::size_t i = 0; i < control_names.size(); ++i) {
        if (control_names[i] == name) return static_cast<int>(i);
    }
    return -1;
}

int FitResult::index_of(const std::string& name) const {
    for (std::size_t i = 0; i < names.size(); ++i) {
        if (names[i] == name) return static_cast<int>(i);
    }
    throw std::invalid_argument("unknown regression term: " + name);
}

double FitResult::coefficient(const std::string& name) const { return coef(index_of(name)); }

double FitResult::se(const std::string& name) const {
    const int i = index_of(name);
    return std::sqrt(std::max(0.0, vcov(i, i)));
}

Eigen::MatrixXd build_level_columns(const Panel& panel, const std::vector<std::string>& terms) {
    const auto n = static_cast<Eigen::Index>(panel.rows.size());
    Eigen::MatrixXd out(n, static_cast<Eigen::Index>(terms.size()));
    for (std::size_t t = 0; t < terms.size(); ++t) {
        const std::string& name = terms[t];
        for (Eigen::Index i = 0; i < n; ++i) {
            const PanelRow& r = panel.rows[static_cast<std::size_t>(i)];
            double value = 0.0;
            if (name == "x") {
                value = r.log_family_income;
            } else if (name == "mu") {
                value = r.belief_mean;
            } else if (name == "var") {
                value = r.belief_var;
            } else if (name == "mu_x") {
                value = r.belief_mean * r.log_family_income;
            } else if (name == "var_x") {
                value = r.belief_var * r.log_family_income;
            } else if (name == "age") {
                value = r.age;
            } else if (name == "age2") {
                value = r.age * r.age;
            } else if (name == "assets") {
                value = r.log_assets;
            } else if (name == "const") {
                value = 1.0;
            } else {
                const int c = panel.control_index(name);
                if (c < 0) throw std::invalid_argument("unknown level column: " + name);
                value = panel.controls[static_cast<std::size_t>(c)][static_cast<std::size_t>(i)];
            }
            out(i, static_cast<Eigen::Index>(t)) = value;
        }
    }
    return out;
}

Design first_difference(const Panel& panel, const Eigen::MatrixXd& level_columns,
                        const std::vector<std::string>& names, const Eigen::VectorXd& level_y) {
    const auto n = static_cast<Eigen::Index>(panel.rows.size());
    if (level_columns.rows() != n || level_y.size() != n) {
        throw std::invalid_argument("first_difference: level data does not match panel rows");
    }
    if (static_cast<std::size_t>(level_columns.cols()) != names.size()) {
        throw std::invalid_argument("first_difference: column names do not match level columns");
    }
    if (!panel_is_sorted(panel)) {
        throw std::invalid_argument("first_difference: panel must be prepared first");
    }
    Eigen::Index pairs = 0;
    for (Eigen::Index i = 1; i < n; ++i) {
        if (panel.rows[static_cast<std::size_t>(i)].household_id ==
            panel.rows[static_cast<std::size_t>(i - 1)].household_id) {
            ++pairs;
        }
    }
    Design d;
    d.x.resize(pairs, level_columns.cols());
    d.y.resize(pairs);
    d.weight.resize(pairs);
    d.cluster.reserve(static_cast<std::size_t>(pairs));
    d.names = names;
    Eigen::Index out = 0;
    for (Eigen::Index i = 1; i < n; ++i) {
        const PanelRow& cur = panel.rows[static_cast<std::size_t>(i)];
        const PanelRow& prev = panel.rows[static_cast<std::size_t>(i - 1)];
        if (cur.household_id != prev.household_id) continue;
        d.x.row(out) = level_columns.row(i) - level_columns.row(i - 1);
        d.y(out) = level_y(i) - level_y(i - 1);
        d.weight(out) = cur.weight;
        d.cluster.push_back(cur.household_id);
        ++out;
    }
    return d;
}

FitResult wls(const Design& design) {
    const Eigen::Index n = design.n();
    const Eigen::Index k = design.k();
    if (k == 0) throw std::invalid_argument("wls: design has no columns");
    if (n < k) throw std::invalid_argument("wls: fewer observations than columns");
    if (design.weight.size() != n || static_cast<Eigen::Index>(design.cluster.size()) != n) {
        throw std::invalid_argument("wls: weights or clusters do not match rows");
    }

    const Eigen::VectorXd root_w = design.weight.cwiseSqrt();
    const Eigen::MatrixXd xw = root_w.asDiagonal() * design.x;
    const Eigen::VectorXd yw = root_w.cwiseProduct(design.y);

    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(xw);
    if (qr.rank() < k) {
        const auto perm = qr.colsPermutation().indices();
        std::vector<std::string> bad;
        for (Eigen::Index j = qr.rank(); j < k; ++j) {
            bad.push_back(design.names[static_cast<std::size_t>(perm(j))]);
        }
        std::sort(bad.begin(), bad.end());
        throw std::invalid_argument("wls: collinear columns: " + join_names(bad));
    }

    FitResult fit;
    fit.names = design.names;
    fit.coef = qr.solve(yw);
    fit.n_obs = static_cast<int>(n);

    const Eigen::VectorXd resid = design.y - design.x * fit.coef;

    // Cluster-robust sandwich: bread is the inverse weighted Gram matrix,
    // the meat sums outer products of within-cluster score sums.
    const Eigen::MatrixXd gram = xw.transpose() * xw;
    const Eigen::LDLT<Eigen::MatrixXd> gram_ldlt(gram);
    const Eigen::MatrixXd bread = gram_ldlt.solve(Eigen::MatrixXd::Identity(k, k));

    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    std::sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
        return design.cluster[static_cast<std::size_t>(a)] <
               design.cluster[static_cast<std::size_t>(b)];
    });
    Eigen::MatrixXd meat = Eigen::MatrixXd::Zero(k, k);
    Eigen::VectorXd score = Eigen::VectorXd::Zero(k);
    int n_clusters = 0;
    for (std::size_t pos = 0; pos < order.size(); ++pos) {
        const Eigen::Index i = order[pos];
        if (pos > 0 && design.cluster[static_cast<std::size_t>(i)] !=
                           design.cluster[static_cast<std::size_t>(order[pos - 1])]) {
            meat.selfadjointView<Eigen::Lower>().rankUpdate(score);
            score.setZero();
        }
        if (pos == 0 || design.cluster[static_cast<std::size_t>(i)] !=
                            design.cluster[static_cast<std::size_t>(order[pos - 1])]) {
            ++n_clusters;
        }
        score += design.weight(i) * resid(i) * design.x.row(i).transpose();
    }
    if (n > 0) meat.selfadjointView<Eigen::Lower>().rankUpdate(score);
    meat = meat.selfadjointView<Eigen::Lower>();

    fit.n_clusters = n_clusters;
    const double g = static_cast<double>(n_clusters);
    const double adjust =
        (n_clusters > 1 && n > k)
            ? (g / (g - 1.0)) * (static_cast<double>(n - 1) / static_cast<double>(n - k))
            : 1.0;
    Eigen::MatrixXd vcov = adjust * bread * meat * bread;
    fit.vcov = 0.5 * (vcov + vcov.transpose());

    const double wsum = design.weight.sum();
    const double ybar = design.weight.dot(design.y) / wsum;
    const double sst = design.weight.dot((design.y.array() - ybar).square().matrix());
    const double ssr = design.weight.dot(resid.cwiseAbs2());
    fit.r_squared = sst > 0.0 ? 1.0 - ssr / sst : 0.0;
    return fit;
}

double f_test(const FitResult& fit, const std::vector<std::string>& term_names) {
    if (term_names.empty()) return 1.0;
    if (fit.n_clusters < 2) {
        throw std::invalid_argument("f_test: cluster-robust test needs at least 2 clusters");
    }
    const auto q = static_cast<Eigen::Index>(term_names.size());
    Eigen::VectorXd b(q);
    Eigen::MatrixXd v(q, q);
    std::vector<int> idx;
    idx.reserve(term_names.size());
    for (const auto& name : term_names) idx.push_back(fit.index_of(name));
    for (Eigen::Index i = 0; i < q; ++i) {
        b(i) = fit.coef(idx[static_cast<std::size_t>(i)]);
        for (Eigen::Index j = 0; j < q; ++j) {
            v(i, j) = fit.vcov(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
        }
    }
    const Eigen::LDLT<Eigen::MatrixXd> ldlt(v);
    if (ldlt.info() != Eigen::Success) {
        throw std::runtime_error("f_test: singular restriction covariance");
    }
    double wald = b.dot(ldlt.solve(b));
    if (!std::isfinite(wald)) throw std::runtime_error("f_test: singular restriction covariance");
    wald = std::max(0.0, wald);
    const double f_stat = wald / static_cast<double>(q);
    const boost::math::fisher_f dist(static_cast<double>(q),
                                     static_cast<double>(fit.n_clusters - 1));
    return boost::math::cdf(boost::math::complement(dist, f_stat));
}

Covariates baseline_covariates(const PanelRow& row) {
    Covariates c;
    c.age = row.age;
    c.x = row.log_family_income;
    c.log_assets = row.log_assets;
    c.belief_mean = row.belief_mean;
    c.belief_var = row.belief_var;
    return c;
}

Basis::Basis(const Panel& panel, const BasisSpec& spec) {
    if (spec.terms.empty() && spec.degree < 1) {
        throw std::invalid_argument("basis degree must be at least 1");
    }
    if (panel.rows.empty()) throw std::invalid_argument("basis needs a non-empty panel");

    std::vector<double> weights;
    weights.reserve(panel.rows.size());
    std::array<std::vector<double>, 5> values;
    for (auto& v : values) v.reserve(panel.rows.size());
    for (const auto& row : panel.rows) {
        const auto c = covariate_array(baseline_covariates(row));
        weights.push_back(row.weight);
        for (std::size_t j = 0; j < 5; ++j) values[j].push_back(c[j]);
    }
    for (std::size_t j = 0; j < 5; ++j) {
        center_[j] = weighted_mean(values[j], weights);
        const auto [lo, hi] = std::minmax_element(values[j].begin(), values[j].end());
        lo_[j] = *lo;
        hi_[j] = *hi;
    }

    std::array<int, 5> e{};
    auto emit = [&]() {
        exponents_.push_back(e);
        std::ostringstream name;
        bool first = true;
        for (std::size_t j = 0; j < 5; ++j) {
            if (e[j] == 0) continue;
            if (!first) name << "*";
            name << kCovariateNames[j];
            if (e[j] > 1) name << "^" << e[j];
            first = false;
        }
        names_.push_back(name.str());
    };
    if (!spec.terms.empty()) {
        for (const std::string& term : spec.terms) {
            e = parse_term(term);
            emit();
        }
        for (std::size_t i = 0; i < names_.size(); ++i) {
            for (std::size_t j = i + 1; j < names_.size(); ++j) {
                if (names_[i] == names_[j]) {
                    throw std::invalid_argument("duplicate basis term '" + names_[i] + "'");
                }
            }
        }
    } else {
        auto recurse = [&](auto&& self, std::size_t slot, int remaining) -> void {
            if (slot == 4) {
                e[4] = remaining;
                emit();
                return;
            }
            for (int v = remaining; v >= 0; --v) {
                e[slot] = v;
                self(self, slot + 1, remaining - v);
            }
        };
        for (int total = 1; total <= spec.degree; ++total) recurse(recurse, 0, total);
    }

    if (spec.asset_spline_knots > 0) {
        std::vector<std::pair<double, double>> vw;
        vw.reserve(panel.rows.size());
        for (const auto& row : panel.rows) vw.emplace_back(row.log_assets, row.weight);
        for (int j = 1; j <= spec.asset_spline_knots; ++j) {
            const double q = static_cast<double>(j) / (spec.asset_spline_knots + 1.0);
            knots_.push_back(weighted_quantile(vw, q));
            names_.push_back("assets_h" + std::to_string(j));
        }
    }
}

Eigen::VectorXd Basis::evaluate(const Covariates& c) const {
    Eigen::VectorXd out(size());
    const auto raw = covariate_array(c);
    std::array<double, 5> centered{};
    for (std::size_t j = 0; j < 5; ++j) centered[j] = raw[j] - center_[j];
    Eigen::Index t = 0;
    for (const auto& e : exponents_) {
        double value = 1.0;
        for (std::size_t j = 0; j < 5; ++j) {
            if (e[j] != 0) value *= ipow(centered[j], e[j]);
        }
        out(t++) = value;
    }
    for (const double knot : knots_) out(t++) = std::max(0.0, c.log_assets - knot);
    return out;
}

Eigen::MatrixXd Basis::evaluate_panel(const Panel& panel) const {
    Eigen::MatrixXd out(static_cast<Eigen::Index>(panel.rows.size()), size());
    for (std::size_t i = 0; i < panel.rows.size(); ++i) {
        out.row(static_cast<Eigen::Index>(i)) = evaluate(baseline_covariates(panel.rows[i])).transpose();
    }
    return out;
}

Eigen::MatrixXd Basis::evaluate_rows(const std::vector<Covariates>& rows) const {
    Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        out.row(static_cast<Eigen::Index>(i)) = evaluate(rows[i]).transpose();
    }
    return out;
}

namespace {

// Weighted mean of Psi(shifted) - Psi(baseline) over panel rows: the
// plug-in average partial effect once dotted with the basis coefficients.
Eigen::VectorXd shift_loading(const Basis& basis, const Panel& panel,
                              const Eigen::MatrixXd& psi_baseline,
                              const std::vector<Covariates>& shifted, Eigen::Index n_columns) {
    Eigen::VectorXd v = Eigen::VectorXd::Zero(n_columns);
    double wsum = 0.0;
    for (std::size_t i = 0; i < panel.rows.size(); ++i) {
        const double w = panel.rows[i].weight;
        wsum += w;
        v.head(basis.size()) +=
            w * (basis.evaluate(shifted[i]) -
                 psi_baseline.row(static_cast<Eigen::Index>(i)).transpose());
    }
    return v / wsum;
}

double share_outside(const Basis& basis, const Panel& panel,
                     const std::vector<Covariates>& shifted) {
    const auto& lo = basis.support_lo();
    const auto& hi = basis.support_hi();
    double outside = 0.0;
    double wsum = 0.0;
    for (std::size_t i = 0; i < panel.rows.size(); ++i) {
        const double w = panel.rows[i].weight;
        wsum += w;
        const auto c = covariate_array(shifted[i]);
        for (std::size_t j = 0; j < 5; ++j) {
            if (c[j] < lo[j] || c[j] > hi[j]) {
                outside += w;
                break;
            }
        }
    }
    return outside / wsum;
}

// Chooses one pivot column per target row by Gaussian elimination with
// greedy column pivoting, so the targets' loading vectors restricted to
// the pivot columns form an invertible block.
std::vector<Eigen::Index> choose_pivots(const Eigen::MatrixXd& loadings, Eigen::Index forced_first) {
    const Eigen::Index m = loadings.rows();
    const Eigen::Index l = loadings.cols();
    Eigen::MatrixXd r = loadings;
    std::vector<bool> used(static_cast<std::size_t>(l), false);
    std::vector<Eigen::Index> pivots;
    pivots.reserve(static_cast<std::size_t>(m));
    for (Eigen::Index t = 0; t < m; ++t) {
        Eigen::Index k = -1;
        if (t == 0 && forced_first >= 0) {
            k = forced_first;
        } else {
            double best = 0.0;
            for (Eigen::Index j = 0; j < l; ++j) {
                if (used[static_cast<std::size_t>(j)]) continue;
                const double a = std::abs(r(t, j));
                if (a > best) {
                    best = a;
                    k = j;
                }
            }
        }
        const double row_scale = loadings.row(t).cwiseAbs().maxCoeff();
        if (k < 0 || std::abs(r(t, k)) <= 1e-10 * row_scale) {
            throw std::invalid_argument(
                "double_lasso_ape: target loadings are linearly dependent in the basis");
        }
        used[static_cast<std::size_t>(k)] = true;
        pivots.push_back(k);
        for (Eigen::Index s = t + 1; s < m; ++s) {
            r.row(s) -= (r(s, k) / r(t, k)) * r.row(t);
        }
    }
    return pivots;
}

}  // namespace

DoubleLassoResult double_lasso_ape(const Panel& panel, const BasisSpec& spec,
                                   const std::vector<ApeTarget>& targets,
                                   const DoubleLassoOptions& options) {
    if (!panel_is_sorted(panel)) {
        throw std::invalid_argument("double_lasso_ape: panel must be prepared first");
    }
    if (targets.empty()) throw std::invalid_argument("double_lasso_ape: no targets");
    for (const auto& t : targets) {
        if (t.shifted.size() != panel.rows.size()) {
            throw std::invalid_argument("double_lasso_ape: target '" + t.name +
                                        "' does not cover every panel row");
        }
    }

    const Basis basis(panel, spec);
    const auto n_targets = targets.size();
    const Eigen::Index n_basis = basis.size();
    const auto n_controls = static_cast<Eigen::Index>(panel.control_names.size());
    const Eigen::Index n_full = n_basis + n_controls;

    std::vector<std::string> full_names = basis.names();
    full_names.insert(full_names.end(), panel.control_names.begin(), panel.control_names.end());

    // Level design: basis over the covariates plus raw control columns.
    const auto n_rows = static_cast<Eigen::Index>(panel.rows.size());
    Eigen::MatrixXd level(n_rows, n_full);
    const Eigen::MatrixXd psi = basis.evaluate_panel(panel);
    level.leftCols(n_basis) = psi;
    for (Eigen::Index c = 0; c < n_controls; ++c) {
        for (Eigen::Index i = 0; i < n_rows; ++i) {
            level(i, n_basis + c) =
                panel.controls[static_cast<std::size_t>(c)][static_cast<std::size_t>(i)];
        }
    }
    Eigen::VectorXd y_level(n_rows);
    for (Eigen::Index i = 0; i < n_rows; ++i) {
        y_level(i) = panel.rows[static_cast<std::size_t>(i)].log_consumption;
    }

    const Design fd = first_difference(panel, level, full_names, y_level);
    if (fd.n() == 0) {
        throw std::invalid_argument("double_lasso_ape: no household appears in two waves");
    }

    DoubleLassoResult result;
    result.target_names.reserve(n_targets);
    for (const auto& t : targets) result.target_names.push_back(t.name);
    result.ape.assign(n_targets, 0.0);
    result.se.assign(n_targets, 0.0);

    // Shift loadings per target, and the support diagnostic.
    std::vector<Eigen::VectorXd> loadings;
    loadings.reserve(n_targets);
    for (const auto& t : targets) {
        loadings.push_back(shift_loading(basis, panel, psi, t.shifted, n_full));
        result.share_outside_support =
            std::max(result.share_outside_support, share_outside(basis, panel, t.shifted));
    }

    // Columns with no variation after differencing are unidentified and
    // dropped; their loading entries are zeroed (reported in dropped_terms).
    std::vector<Eigen::Index> live;
    live.reserve(static_cast<std::size_t>(n_full));
    for (Eigen::Index j = 0; j < n_full; ++j) {
        const double fd_scale = fd.x.col(j).cwiseAbs().maxCoeff();
        const double level_scale = level.col(j).cwiseAbs().maxCoeff();
        if (fd_scale > 1e-10 * std::max(1.0, level_scale)) {
            live.push_back(j);
        } else {
            result.dropped_terms.push_back(full_names[static_cast<std::size_t>(j)]);
        }
    }
    if (live.empty()) throw std::invalid_argument("double_lasso_ape: no identified columns");

    const auto n_live = static_cast<Eigen::Index>(live.size());
    Eigen::MatrixXd x = fd.x(Eigen::all, live);
    std::vector<std::string> live_names;
    live_names.reserve(live.size());
    for (const Eigen::Index j : live) live_names.push_back(full_names[static_cast<std::size_t>(j)]);

    // Targets whose loading is exactly zero (null shifts) have a zero
    // average partial effect by construction and stay out of the
    // reparameterization.
    std::vector<std::size_t> active;
    for (std::size_t t = 0; t < n_targets; ++t) {
        Eigen::VectorXd lv(n_live);
        for (Eigen::Index j = 0; j < n_live; ++j) lv(j) = loadings[t](live[static_cast<std::size_t>(j)]);
        loadings[t] = lv;
        if (lv.cwiseAbs().maxCoeff() > 0.0) active.push_back(t);
    }
    const auto m = static_cast<Eigen::Index>(active.size());
    result.vcov_targets = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n_targets),
                                                static_cast<Eigen::Index>(n_targets));
    if (m == 0) return result;

    Eigen::MatrixXd v(m, n_live);
    for (Eigen::Index t = 0; t < m; ++t) v.row(t) = loadings[active[static_cast<std::size_t>(t)]];

    Eigen::Index forced = -1;
    if (options.completion_drop >= 0) {
        const auto it = std::find(live.begin(), live.end(),
                                  static_cast<Eigen::Index>(options.completion_drop));
        if (it == live.end()) {
            throw std::invalid_argument("double_lasso_ape: completion_drop names a dropped column");
        }
        forced = static_cast<Eigen::Index>(it - live.begin());
    }
    const std::vector<Eigen::Index> pivots = choose_pivots(v, forced);

    // Reparameterize so each active target's average partial effect is the
    // coefficient of one lead column: with B stacking the loading rows over
    // unit rows for the non-pivot columns, the transformed design is X B^-1
    // and the first m transformed coefficients are exactly v_t' beta.
    std::vector<bool> is_pivot(static_cast<std::size_t>(n_live), false);
    for (const Eigen::Index p : pivots) is_pivot[static_cast<std::size_t>(p)] = true;
    Eigen::MatrixXd b = Eigen::MatrixXd::Zero(n_live, n_live);
    b.topRows(m) = v;
    std::vector<std::string> transformed_names;
    transformed_names.reserve(static_cast<std::size_t>(n_live));
    for (Eigen::Index t = 0; t < m; ++t) {
        transformed_names.push_back(targets[active[static_cast<std::size_t>(t)]].name);
    }
    Eigen::Index row = m;
    for (Eigen::Index j = 0; j < n_live; ++j) {
        if (is_pivot[static_cast<std::size_t>(j)]) continue;
        b(row, j) = 1.0;
        transformed_names.push_back(live_names[static_cast<std::size_t>(j)]);
        ++row;
    }
    const Eigen::PartialPivLU<Eigen::MatrixXd> lu(b.transpose());
    Eigen::MatrixXd xt = lu.solve(x.transpose()).transpose();

    // Double selection: Lasso of the outcome on the controls, then of each
    // lead column on the controls; the final regression keeps the union.
    const Eigen::Index n_ctrl_cols = n_live - m;
    std::unordered_set<std::string> keep(spec.always_include.begin(), spec.always_include.end());
    std::vector<bool> selected(static_cast<std::size_t>(n_ctrl_cols), false);
    if (n_ctrl_cols > 0) {
        const Eigen::MatrixXd xc = xt.rightCols(n_ctrl_cols);
        std::vector<bool> penalized(static_cast<std::size_t>(n_ctrl_cols), true);
        for (Eigen::Index j = 0; j < n_ctrl_cols; ++j) {
            if (keep.count(transformed_names[static_cast<std::size_t>(m + j)]) > 0) {
                penalized[static_cast<std::size_t>(j)] = false;
                selected[static_cast<std::size_t>(j)] = true;
            }
        }
        auto run_selection = [&](const Eigen::VectorXd& outcome, std::uint64_t counter) {
            const CvLassoResult cv =
                cv_lasso(xc, outcome, fd.weight, fd.cluster, options.cv_folds,
                         derive_seed(options.seed, Stream::cv_folds, counter), penalized);
            const LassoFit fit = lasso(xc, outcome, fd.weight, cv.penalty, penalized);
            for (Eigen::Index j = 0; j < n_ctrl_cols; ++j) {
                if (fit.coef(j) != 0.0) selected[static_cast<std::size_t>(j)] = true;
            }
        };
        run_selection(fd.y, 0);
        for (Eigen::Index t = 0; t < m; ++t) run_selection(xt.col(t), 1 + static_cast<std::uint64_t>(t));
    }

    std::vector<Eigen::Index> final_cols;
    for (Eigen::Index t = 0; t < m; ++t) final_cols.push_back(t);
    for (Eigen::Index j = 0; j < n_ctrl_cols; ++j) {
        if (selected[static_cast<std::size_t>(j)]) final_cols.push_back(m + j);
    }
    Design final_design;
    final_design.x = xt(Eigen::all, final_cols);
    final_design.y = fd.y;
    final_design.weight = fd.weight;
    final_design.cluster = fd.cluster;
    for (const Eigen::Index j : final_cols) {
        final_design.names.push_back(transformed_names[static_cast<std::size_t>(j)]);
    }
    FitResult fit = wls(final_design);
    for (std::size_t j = static_cast<std::size_t>(m); j < final_design.names.size(); ++j) {
        result.selected_terms.push_back(final_design.names[j]);
        fit.selected_terms.push_back(final_design.names[j]);
    }

    for (Eigen::Index t = 0; t < m; ++t) {
        const std::size_t tt = active[static_cast<std::size_t>(t)];
        result.ape[tt] = fit.coef(t);
        result.se[tt] = std::sqrt(std::max(0.0, fit.vcov(t, t)));
        for (Eigen::Index s = 0; s < m; ++s) {
            const std::size_t ss = active[static_cast<std::size_t>(s)];
            result.vcov_targets(static_cast<Eigen::Index>(tt), static_cast<Eigen::Index>(ss)) =
                fit.vcov(t, s);
        }
    }
    result.final_fit = std::move(fit);

    // Optional cluster bootstrap of the whole pipeline (basis, selection,
    // final fit) resampling households with replacement.
    if (options.n_bootstrap > 0) {
        std::vector<std::pair<std::size_t, std::size_t>> blocks;
        std::size_t start = 0;
        for (std::size_t i = 1; i <= panel.rows.size(); ++i) {
            if (i == panel.rows.size() ||
                panel.rows[i].household_id != panel.rows[start].household_id) {
                blocks.emplace_back(start, i);
                start = i;
            }
        }
        const auto n_blocks = blocks.size();
        std::vector<std::vector<double>> draws(n_targets);
        for (int rep = 0; rep < options.n_bootstrap; ++rep) {
            RngStream pick(derive_seed(options.seed, Stream::bootstrap,
                                       2 * static_cast<std::uint64_t>(rep)));
            Panel bp;
            bp.control_names = panel.control_names;
            bp.controls.resize(panel.controls.size());
            std::vector<std::size_t> src;
            for (std::size_t g = 0; g < n_blocks; ++g) {
                const auto& blk = blocks[pick.below(n_blocks)];
                for (std::size_t r = blk.first; r < blk.second; ++r) {
                    PanelRow row = panel.rows[r];
                    row.household_id = static_cast<std::int64_t>(g);
                    bp.rows.push_back(row);
                    for (std::size_t c = 0; c < panel.controls.size(); ++c) {
                        bp.controls[c].push_back(panel.controls[c][r]);
                    }
                    src.push_back(r);
                }
            }
            bp.prepare();
            std::vector<ApeTarget> bt(n_targets);
            for (std::size_t t = 0; t < n_targets; ++t) {
                bt[t].name = targets[t].name;
                bt[t].shifted.reserve(src.size());
                for (const std::size_t r : src) bt[t].shifted.push_back(targets[t].shifted[r]);
            }
            DoubleLassoOptions rep_options = options;
            rep_options.n_bootstrap = 0;
            rep_options.seed = derive_seed(options.seed, Stream::bootstrap,
                                           2 * static_cast<std::uint64_t>(rep) + 1);
            try {
                const DoubleLassoResult rb = double_lasso_ape(bp, spec, bt, rep_options);
                for (std::size_t t = 0; t < n_targets; ++t) draws[t].push_back(rb.ape[t]);
            } catch (const std::exception&) {
                // A degenerate resample (e.g. collinear after reweighting) is
                // skipped; the spread comes from the successful replicates.
            }
        }
        if (draws[0].size() < 2) {
            throw std::runtime_error("double_lasso_ape: cluster bootstrap failed to replicate");
        }
        result.bootstrap_se.assign(n_targets, 0.0);
        for (std::size_t t = 0; t < n_targets; ++t) {
            const double n_ok = static_cast<double>(draws[t].size());
            const double mean =
                std::accumulate(draws[t].begin(), draws[t].end(), 0.0) / n_ok;
            double ss = 0.0;
            for (const double d : draws[t]) ss += (d - mean) * (d - mean);
            result.bootstrap_se[t] = std::sqrt(ss / (n_ok - 1.0));
        }
    }
    return result;
}

}  // namespace apekit
