// Gauss–Hermite quadrature for expectations of smooth functions of a
// normal variable.  Nodes and weights come from the Golub–Welsch
// eigenvalue construction, so any order is available; the model code
// uses 9 nodes per dimension by default.
#pragma once

#include <functional>
#include <vector>

namespace apekit {

struct GaussHermite {
    // Nodes/weights for the weight function exp(-x^2):
    //   integral f(x) exp(-x^2) dx ~= sum_i weight[i] * f(node[i]).
    std::vector<double> node;
    std::vector<double> weight;

    // Probabilist's form: E[f(Z)] for Z ~ N(0,1) is
    //   sum_i prob_weight[i] * f(sqrt(2)*node[i]);
    // prob_weight[i] = weight[i]/sqrt(pi) sums to one.
    std::vector<double> prob_weight;

    int size() const { return static_cast<int>(node.size()); }
};

// Builds the n-node rule.  Throws for n < 1.
GaussHermite gauss_hermite(int n);

// E[f(mean + sd*Z)], Z standard normal, using the given rule.
double expect_normal(const GaussHermite& gh, double mean, double sd,
                     const std::function<double(double)>& f);

}  // namespace apekit
