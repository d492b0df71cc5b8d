// Self-contained SVG bar charts for counterfactual results: one stacked
// bar per income-quintile cell, a black contemporaneous segment and a
// grey dynamic segment (their sum is the total effect), with optional
// whiskers at +-1.96 total-effect standard errors.  No external assets
// or fonts, so the files render identically everywhere.
#pragma once

#include <string>

#include "apekit/counterfactuals.hpp"

namespace apekit::cli {

struct ChartLayout {
    double width = 640.0;
    double height = 420.0;
    std::string title;  // defaults to "<counterfactual> (<spec>)"
};

// Returns the SVG document, or an empty string when the result carries
// no quintile cells (nothing to draw).
std::string ape_bar_chart_svg(const ApeResult& result, const ChartLayout& layout = {});

}  // namespace apekit::cli
