// Derivative-free scalar maximization on a bracket.
#pragma once

#include <cmath>
#include <functional>

namespace apekit {

// Golden-section search for the maximum of a unimodal function on
// [lo, hi].  Shrinks the bracket until its width is below
// rel_tol * max(|lo|, |hi|, 1); returns the best evaluated point,
// endpoints included.
template <typename F>
double golden_section_max(F&& f, double lo, double hi, double rel_tol = 1e-6) {
    constexpr double inv_phi = 0.6180339887498949;  // 1/phi
    double a = lo, b = hi;
    double x1 = b - inv_phi * (b - a);
    double x2 = a + inv_phi * (b - a);
    double f1 = f(x1), f2 = f(x2);
    const double scale = std::fmax(std::fmax(std::fabs(lo), std::fabs(hi)), 1.0);
    while (b - a > rel_tol * scale) {
        if (f1 < f2) {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + inv_phi * (b - a);
            f2 = f(x2);
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - inv_phi * (b - a);
            f1 = f(x1);
        }
    }
    // Candidate interior maximum plus the original endpoints, so corner
    // solutions are returned exactly.
    double best_x = (f1 > f2) ? x1 : x2;
    double best_f = (f1 > f2) ? f1 : f2;
    const double flo = f(lo), fhi = f(hi);
    if (flo > best_f) {
        best_x = lo;
        best_f = flo;
    }
    if (fhi >= best_f) {
        best_x = hi;  // prefer the upper corner on ties (consume-everything)
    }
    return best_x;
}

}  // namespace apekit
