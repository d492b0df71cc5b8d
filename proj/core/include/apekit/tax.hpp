// Two-parameter tax-and-transfer schedule with constant residual
// progression: net = scale * gross^(1-tau).  The level can be carried
// either directly (scale) or as a coefficient relative to mean gross
// income (level_rel), with scale = level_rel * mean_gross^tau.
#pragma once

#include <stdexcept>

namespace apekit {

struct TaxSchedule {
    double level_rel = 1.0;   // level coefficient relative to mean gross income
    double tau = 0.0;         // progressivity, in [0, 1)
    double mean_gross = 1.0;  // anchor for level_rel

    TaxSchedule() = default;
    TaxSchedule(double level_rel_, double tau_, double mean_gross_)
        : level_rel(level_rel_), tau(tau_), mean_gross(mean_gross_) {
        validate();
    }

    // Schedule given directly by its scale parameter (anchor = 1).
    static TaxSchedule from_scale(double scale, double tau_) {
        return TaxSchedule(scale, tau_, 1.0);
    }

    void validate() const {
        if (!(level_rel > 0.0)) throw std::invalid_argument("TaxSchedule: level must be > 0");
        if (!(tau >= 0.0 && tau < 1.0)) throw std::invalid_argument("TaxSchedule: tau must be in [0,1)");
        if (!(mean_gross > 0.0)) throw std::invalid_argument("TaxSchedule: mean gross must be > 0");
    }

    double scale() const;  // level_rel * mean_gross^tau

    // Same schedule with the scale multiplied by `factor` (e.g. a uniform
    // proportional levy on net income).
    TaxSchedule scaled_by(double factor) const;
};

// After-tax income for a given gross income (> 0).
double net_income(const TaxSchedule& tax, double gross);

// Inverts the schedule: the gross income that yields the given net (> 0).
double gross_from_net(const TaxSchedule& tax, double net);

}  // namespace apekit
