#include "apekit/quadrature.hpp"

#include <cmath>
#include <stdexcept>

#include <Eigen/Dense>

namespace apekit {

GaussHermite gauss_hermite(int n) {
    if (n < 1) {
        throw std::invalid_argument("gauss_hermite: order must be >= 1");
    }
    // Golub–Welsch: nodes are eigenvalues of the symmetric tridiagonal
    // Jacobi matrix of the Hermite three-term recurrence (weight exp(-x^2)),
    // weights are sqrt(pi) times squared first components of the
    // normalized eigenvectors.
    Eigen::MatrixXd J = Eigen::MatrixXd::Zero(n, n);
    for (int i = 1; i < n; ++i) {
        const double b = std::sqrt(i / 2.0);
        J(i, i - 1) = b;
        J(i - 1, i) = b;
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(J);
    if (es.info() != Eigen::Success) {
        throw std::runtime_error("gauss_hermite: eigen decomposition failed");
    }
    const double sqrt_pi = std::sqrt(M_PI);
    GaussHermite gh;
    gh.node.resize(n);
    gh.weight.resize(n);
    gh.prob_weight.resize(n);
    for (int i = 0; i < n; ++i) {
        gh.node[i] = es.eigenvalues()(i);
        const double v0 = es.eigenvectors()(0, i);
        gh.weight[i] = sqrt_pi * v0 * v0;
        gh.prob_weight[i] = v0 * v0;
    }
    return gh;
}

double expect_normal(const GaussHermite& gh, double mean, double sd,
                     const std::function<double(double)>& f) {
    const double root2 = std::sqrt(2.0);
    double acc = 0.0;
    for (int i = 0; i < gh.size(); ++i) {
        acc += gh.prob_weight[i] * f(mean + sd * root2 * gh.node[i]);
    }
    return acc;
}

}  // namespace apekit
