// L1-penalized weighted least squares by cyclic coordinate descent on
// precomputed Gram matrices (efficient for tall designs), with
// duality-gap certified termination and cluster-aware cross-validation
// for the penalty level.
#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

namespace apekit {

struct LassoFit {
    Eigen::VectorXd coef;   // on the original column scale
    double gap = 0.0;       // certified duality gap at termination
    int sweeps = 0;
};

// Minimizes  (1/2N) sum_i w_i (y_i - x_i'b)^2 + penalty * sum_{j in mask} |b_j|
// with weights normalized to mean one and columns scaled internally to
// unit weighted root-mean-square.  Columns with zero weighted RMS get a
// zero coefficient.  `penalized` has one flag per column; unpenalized
// columns are never thresholded.
LassoFit lasso(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const Eigen::VectorXd& w,
               double penalty, const std::vector<bool>& penalized, double gap_tol = 1e-8);

// Smallest penalty that zeroes every penalized coefficient (computed on
// the internal standardized scale, after fitting the unpenalized columns
// alone).
double lasso_penalty_max(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                         const Eigen::VectorXd& w, const std::vector<bool>& penalized);

struct CvLassoResult {
    double penalty = 0.0;            // argmin of the mean out-of-fold error
    double penalty_max = 0.0;        // top of the grid
    std::vector<double> grid;        // descending penalties
    std::vector<double> cv_error;    // mean weighted out-of-fold MSE per grid point
};

// K-fold cross-validation over a 100-point log-spaced penalty grid
// spanning four decades below penalty_max.  Fold assignment shuffles
// whole clusters (a cluster is never split across folds), so households
// stay together.  Deterministic in `seed`.
CvLassoResult cv_lasso(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                       const Eigen::VectorXd& w, const std::vector<std::int64_t>& clusters,
                       int folds, std::uint64_t seed, const std::vector<bool>& penalized);

}  // namespace apekit
