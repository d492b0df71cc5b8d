#include "apekit/tax.hpp"

#include <cmath>

namespace apekit {

double TaxSchedule::scale() const {
    return level_rel * std::pow(mean_gross, tau);
}

TaxSchedule TaxSchedule::scaled_by(double factor) const {
    if (!(factor > 0.0)) throw std::invalid_argument("TaxSchedule::scaled_by: factor must be > 0");
    return TaxSchedule(level_rel * factor, tau, mean_gross);
}

double net_income(const TaxSchedule& tax, double gross) {
    if (!(gross > 0.0)) throw std::invalid_argument("net_income: gross must be > 0");
    return tax.scale() * std::pow(gross, 1.0 - tax.tau);
}

double gross_from_net(const TaxSchedule& tax, double net) {
    if (!(net > 0.0)) throw std::invalid_argument("gross_from_net: net must be > 0");
    return std::pow(net / tax.scale(), 1.0 / (1.0 - tax.tau));
}

}  // namespace apekit
