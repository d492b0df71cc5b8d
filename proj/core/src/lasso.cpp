#include "apekit/lasso.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <unordered_map>

#include "apekit/rng.hpp"

namespace apekit {

namespace {

// The problem after weight normalization and column scaling, reduced to
// weighted-mean cross-products:
//   G = X'WX / W,  c = X'Wy / W,  y2 = y'Wy / W,   W = total weight.
// Coordinate descent and the duality gap run entirely on these, so fits
// cost O(L^2) per sweep regardless of the number of rows.
struct GramProblem {
    Eigen::MatrixXd g;
    Eigen::VectorXd c;
    double y2 = 0.0;
    std::vector<bool> penalized;
    std::vector<int> unpen;                 // indices of unpenalized columns
    Eigen::LDLT<Eigen::MatrixXd> uu;        // factor of g[unpen, unpen]

    void finalize() {
        unpen.clear();
        for (int j = 0; j < c.size(); ++j) {
            if (!penalized[static_cast<std::size_t>(j)]) unpen.push_back(j);
        }
        if (!unpen.empty()) {
            Eigen::MatrixXd guu(unpen.size(), unpen.size());
            for (std::size_t a = 0; a < unpen.size(); ++a) {
                for (std::size_t b = 0; b < unpen.size(); ++b) {
                    guu(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) =
                        g(unpen[a], unpen[b]);
                }
            }
            uu.compute(guu);
        }
    }
};

double soft_threshold(double a, double t) {
    if (a > t) return a - t;
    if (a < -t) return a + t;
    return 0.0;
}

// Duality gap at b.  The dual point is the residual with its unpenalized
// components projected out (those must correlate exactly zero with a
// feasible dual vector), rescaled into the feasible box.
double duality_gap(const GramProblem& p, double lambda, const Eigen::VectorXd& b) {
    const Eigen::VectorXd gb = p.g * b;
    const Eigen::VectorXd theta = p.c - gb;  // column-residual correlations
    const double r2 = std::max(0.0, p.y2 - 2.0 * b.dot(p.c) + b.dot(gb));

    double l1 = 0.0;
    for (int j = 0; j < b.size(); ++j) {
        if (p.penalized[static_cast<std::size_t>(j)]) l1 += std::fabs(b[j]);
    }
    const double primal = 0.5 * r2 + lambda * l1;

    // Project the residual off the unpenalized columns: u = r - X_u z,
    // G_uu z = theta_u.  All inner products below follow in Gram form.
    Eigen::VectorXd theta_u(static_cast<Eigen::Index>(p.unpen.size()));
    for (std::size_t a = 0; a < p.unpen.size(); ++a) {
        theta_u[static_cast<Eigen::Index>(a)] = theta[p.unpen[a]];
    }
    Eigen::VectorXd z;
    double u2 = r2, yu = r2 + b.dot(theta);
    Eigen::VectorXd theta_proj = theta;
    if (!p.unpen.empty()) {
        z = p.uu.solve(theta_u);
        u2 = std::max(0.0, r2 - theta_u.dot(z));
        for (int j = 0; j < theta_proj.size(); ++j) {
            double adj = 0.0;
            for (std::size_t a = 0; a < p.unpen.size(); ++a) {
                adj += p.g(j, p.unpen[a]) * z[static_cast<Eigen::Index>(a)];
            }
            theta_proj[j] = theta[j] - adj;
        }
        double cu_z = 0.0;
        for (std::size_t a = 0; a < p.unpen.size(); ++a) {
            cu_z += p.c[p.unpen[a]] * z[static_cast<Eigen::Index>(a)];
        }
        yu -= cu_z;
    }

    double max_corr = 0.0;
    for (int j = 0; j < theta_proj.size(); ++j) {
        if (p.penalized[static_cast<std::size_t>(j)]) {
            max_corr = std::max(max_corr, std::fabs(theta_proj[j]));
        }
    }
    const double alpha = std::max(1.0, lambda > 0.0 ? max_corr / lambda : 0.0);
    const double dual = yu / alpha - 0.5 * u2 / (alpha * alpha);
    return primal - dual;
}

// Cyclic coordinate descent from a warm start, to the requested gap.
Eigen::VectorXd cd_solve(const GramProblem& p, double lambda, Eigen::VectorXd b, double tol,
                         double* gap_out, int* sweeps_out) {
    const int l = static_cast<int>(p.c.size());
    const int max_sweeps = 50000;
    double gap = std::numeric_limits<double>::infinity();
    int sweep = 0;
    Eigen::VectorXd gb = p.g * b;

    // All-unpenalized problems (including lambda = 0) have a closed form;
    // zero-scale columns are excluded from the solve and stay at zero.
    bool any_pen = false;
    for (int j = 0; j < l; ++j) {
        if (p.g(j, j) > 0.0 && p.penalized[static_cast<std::size_t>(j)]) any_pen = true;
    }
    if (!any_pen || lambda <= 0.0) {
        std::vector<int> live;
        for (int j = 0; j < l; ++j) {
            if (p.g(j, j) > 0.0) live.push_back(j);
        }
        Eigen::MatrixXd gl(live.size(), live.size());
        Eigen::VectorXd cl(static_cast<Eigen::Index>(live.size()));
        for (std::size_t a = 0; a < live.size(); ++a) {
            cl[static_cast<Eigen::Index>(a)] = p.c[live[a]];
            for (std::size_t bb = 0; bb < live.size(); ++bb) {
                gl(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(bb)) =
                    p.g(live[a], live[bb]);
            }
        }
        Eigen::VectorXd zl = Eigen::LDLT<Eigen::MatrixXd>(gl).solve(cl);
        Eigen::VectorXd sol = Eigen::VectorXd::Zero(l);
        for (std::size_t a = 0; a < live.size(); ++a) sol[live[a]] = zl[static_cast<Eigen::Index>(a)];
        if (gap_out) *gap_out = 0.0;
        if (sweeps_out) *sweeps_out = 0;
        return sol;
    }

    for (sweep = 1; sweep <= max_sweeps; ++sweep) {
        double max_delta = 0.0;
        for (int j = 0; j < l; ++j) {
            const double gjj = p.g(j, j);
            if (gjj <= 0.0) continue;  // zero-scale column, coefficient stays 0
            const double rho = p.c[j] - gb[j] + gjj * b[j];
            const double bnew = p.penalized[static_cast<std::size_t>(j)]
                                    ? soft_threshold(rho, lambda) / gjj
                                    : rho / gjj;
            const double d = bnew - b[j];
            if (d != 0.0) {
                gb += d * p.g.col(j);
                b[j] = bnew;
                max_delta = std::max(max_delta, std::fabs(d));
            }
        }
        if (max_delta <= 1e-3 * tol || sweep % 10 == 0 || sweep == max_sweeps) {
            gap = duality_gap(p, lambda, b);
            if (gap <= tol) break;
        }
    }
    if (gap_out) *gap_out = gap;
    if (sweeps_out) *sweeps_out = std::min(sweep, max_sweeps);
    return b;
}

// Shared preprocessing: normalized weights, column scales, full Gram.
struct Standardized {
    Eigen::VectorXd wn;      // weights scaled to mean one
    Eigen::VectorXd scale;   // weighted RMS per column (0 for empty columns)
    GramProblem prob;
};

Standardized standardize(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                         const Eigen::VectorXd& w, const std::vector<bool>& penalized) {
    const Eigen::Index n = x.rows(), l = x.cols();
    if (y.size() != n || w.size() != n) throw std::invalid_argument("lasso: size mismatch");
    if (static_cast<Eigen::Index>(penalized.size()) != l) {
        throw std::invalid_argument("lasso: penalized mask size mismatch");
    }
    const double wsum = w.sum();
    if (!(wsum > 0.0)) throw std::invalid_argument("lasso: weights must have positive sum");
    for (Eigen::Index i = 0; i < n; ++i) {
        if (w[i] < 0.0) throw std::invalid_argument("lasso: negative weight");
    }

    Standardized s;
    s.wn = w * (static_cast<double>(n) / wsum);
    s.scale.resize(l);
    Eigen::MatrixXd xs = x;
    for (Eigen::Index j = 0; j < l; ++j) {
        const double ms = (s.wn.array() * x.col(j).array().square()).sum() / static_cast<double>(n);
        s.scale[j] = std::sqrt(ms);
        if (s.scale[j] > 0.0) xs.col(j) /= s.scale[j];
        else xs.col(j).setZero();
    }
    const Eigen::MatrixXd wxs = s.wn.asDiagonal() * xs;
    s.prob.g = (xs.transpose() * wxs) / static_cast<double>(n);
    s.prob.c = (wxs.transpose() * y) / static_cast<double>(n);
    s.prob.y2 = (s.wn.array() * y.array().square()).sum() / static_cast<double>(n);
    s.prob.penalized = penalized;
    // A zero-scale column can never enter; freeze it by marking it
    // penalized so the closed-form unpenalized path is not blocked.
    for (Eigen::Index j = 0; j < l; ++j) {
        if (s.prob.g(j, j) <= 0.0) s.prob.penalized[static_cast<std::size_t>(j)] = true;
    }
    s.prob.finalize();
    return s;
}

}  // namespace

LassoFit lasso(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const Eigen::VectorXd& w,
               double penalty, const std::vector<bool>& penalized, double gap_tol) {
    if (penalty < 0.0) throw std::invalid_argument("lasso: penalty must be >= 0");
    Standardized s = standardize(x, y, w, penalized);
    LassoFit fit;
    Eigen::VectorXd b0 = Eigen::VectorXd::Zero(x.cols());
    Eigen::VectorXd b = cd_solve(s.prob, penalty, b0, gap_tol, &fit.gap, &fit.sweeps);
    fit.coef.resize(x.cols());
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
        fit.coef[j] = s.scale[j] > 0.0 ? b[j] / s.scale[j] : 0.0;
    }
    return fit;
}

double lasso_penalty_max(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                         const Eigen::VectorXd& w, const std::vector<bool>& penalized) {
    Standardized s = standardize(x, y, w, penalized);
    // Residual correlations after fitting the unpenalized block alone.
    Eigen::VectorXd b = Eigen::VectorXd::Zero(x.cols());
    if (!s.prob.unpen.empty()) {
        Eigen::VectorXd cu(static_cast<Eigen::Index>(s.prob.unpen.size()));
        for (std::size_t a = 0; a < s.prob.unpen.size(); ++a) {
            cu[static_cast<Eigen::Index>(a)] = s.prob.c[s.prob.unpen[a]];
        }
        Eigen::VectorXd z = s.prob.uu.solve(cu);
        for (std::size_t a = 0; a < s.prob.unpen.size(); ++a) {
            b[s.prob.unpen[a]] = z[static_cast<Eigen::Index>(a)];
        }
    }
    const Eigen::VectorXd theta = s.prob.c - s.prob.g * b;
    double lam = 0.0;
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
        if (s.prob.penalized[static_cast<std::size_t>(j)] && s.prob.g(j, j) > 0.0) {
            lam = std::max(lam, std::fabs(theta[j]));
        }
    }
    return lam;
}

CvLassoResult cv_lasso(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                       const Eigen::VectorXd& w, const std::vector<std::int64_t>& clusters,
                       int folds, std::uint64_t seed, const std::vector<bool>& penalized) {
    const Eigen::Index n = x.rows(), l = x.cols();
    if (folds < 2) throw std::invalid_argument("cv_lasso: folds must be >= 2");
    if (static_cast<Eigen::Index>(clusters.size()) != n) {
        throw std::invalid_argument("cv_lasso: cluster vector size mismatch");
    }

    // Shuffle whole clusters into folds.
    std::vector<std::int64_t> uniq;
    std::unordered_map<std::int64_t, int> fold_of;
    for (std::int64_t g : clusters) {
        if (fold_of.emplace(g, -1).second) uniq.push_back(g);
    }
    if (static_cast<int>(uniq.size()) < folds) {
        throw std::invalid_argument("cv_lasso: fewer clusters than folds");
    }
    RngStream rng(seed);
    for (std::size_t i = uniq.size(); i > 1; --i) {
        std::swap(uniq[i - 1], uniq[static_cast<std::size_t>(rng.below(i))]);
    }
    for (std::size_t i = 0; i < uniq.size(); ++i) {
        fold_of[uniq[i]] = static_cast<int>(i % static_cast<std::size_t>(folds));
    }

    Standardized s = standardize(x, y, w, penalized);

    // Per-fold cross-product blocks; each training problem is the total
    // minus one fold, so no per-fold passes over the data are needed.
    Eigen::MatrixXd xs = x;
    for (Eigen::Index j = 0; j < l; ++j) {
        if (s.scale[j] > 0.0) xs.col(j) /= s.scale[j];
        else xs.col(j).setZero();
    }
    std::vector<Eigen::MatrixXd> g_f(static_cast<std::size_t>(folds), Eigen::MatrixXd::Zero(l, l));
    std::vector<Eigen::VectorXd> c_f(static_cast<std::size_t>(folds), Eigen::VectorXd::Zero(l));
    std::vector<double> y2_f(static_cast<std::size_t>(folds), 0.0);
    std::vector<double> wsum_f(static_cast<std::size_t>(folds), 0.0);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto f = static_cast<std::size_t>(fold_of[clusters[static_cast<std::size_t>(i)]]);
        const double wi = s.wn[i];
        g_f[f].noalias() += wi * xs.row(i).transpose() * xs.row(i);
        c_f[f].noalias() += wi * xs.row(i).transpose() * y[i];
        y2_f[f] += wi * y[i] * y[i];
        wsum_f[f] += wi;
    }
    const Eigen::MatrixXd g_tot = s.prob.g * static_cast<double>(n);
    const Eigen::VectorXd c_tot = s.prob.c * static_cast<double>(n);
    const double y2_tot = s.prob.y2 * static_cast<double>(n);
    const double wsum_tot = static_cast<double>(n);

    CvLassoResult result;
    result.penalty_max = lasso_penalty_max(x, y, w, penalized);
    if (result.penalty_max <= 0.0) {
        // Nothing to penalize; any penalty gives the same fit.
        result.penalty = 0.0;
        return result;
    }
    const int n_grid = 100;
    result.grid.resize(n_grid);
    for (int i = 0; i < n_grid; ++i) {
        result.grid[static_cast<std::size_t>(i)] =
            result.penalty_max * std::pow(10.0, -4.0 * i / (n_grid - 1.0));
    }
    result.cv_error.assign(n_grid, 0.0);

    for (int f = 0; f < folds; ++f) {
        const auto fi = static_cast<std::size_t>(f);
        GramProblem train;
        const double train_w = wsum_tot - wsum_f[fi];
        train.g = (g_tot - g_f[fi]) / train_w;
        train.c = (c_tot - c_f[fi]) / train_w;
        train.y2 = (y2_tot - y2_f[fi]) / train_w;
        train.penalized = s.prob.penalized;
        train.finalize();

        Eigen::VectorXd b = Eigen::VectorXd::Zero(l);
        for (int i = 0; i < n_grid; ++i) {
            b = cd_solve(train, result.grid[static_cast<std::size_t>(i)], b, 1e-8, nullptr,
                         nullptr);
            // Out-of-fold weighted SSE in cross-product form.
            const double sse =
                y2_f[fi] - 2.0 * b.dot(c_f[fi]) + b.dot(g_f[fi] * b);
            result.cv_error[static_cast<std::size_t>(i)] += std::max(0.0, sse);
        }
    }
    for (double& e : result.cv_error) e /= wsum_tot;

    std::size_t best = 0;
    for (std::size_t i = 1; i < result.cv_error.size(); ++i) {
        if (result.cv_error[i] < result.cv_error[best]) best = i;
    }
    result.penalty = result.grid[best];
    return result;
}

}  // namespace apekit
