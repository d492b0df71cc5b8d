#include "cli_charts.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <vector>

#include "apekit/csv.hpp"

namespace apekit::cli {

namespace {

constexpr const char* kCapeColor = "#111111";
constexpr const char* kDapeColor = "#9e9e9e";

std::string px(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    return buf;
}

std::string escape_xml(const std::string& text) {
    std::string out;
    out.reserve(text.size());
    for (char c : text) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

// Tick step of the form {1,2,5}*10^k targeting about five intervals.
double nice_step(double span) {
    const double raw = span / 5.0;
    const double mag = std::pow(10.0, std::floor(std::log10(raw)));
    const double norm = raw / mag;
    if (norm < 1.5) return mag;
    if (norm < 3.5) return 2.0 * mag;
    if (norm < 7.5) return 5.0 * mag;
    return 10.0 * mag;
}

struct Rect {
    double x, y, w, h;
};

void emit_rect(std::string& svg, const Rect& r, const char* fill) {
    svg += "<rect x=\"" + px(r.x) + "\" y=\"" + px(r.y) + "\" width=\"" + px(r.w) +
           "\" height=\"" + px(r.h) + "\" fill=\"" + fill + "\"/>\n";
}

void emit_line(std::string& svg, double x1, double y1, double x2, double y2, const char* stroke,
               const char* width) {
    svg += "<line x1=\"" + px(x1) + "\" y1=\"" + px(y1) + "\" x2=\"" + px(x2) + "\" y2=\"" +
           px(y2) + "\" stroke=\"" + stroke + "\" stroke-width=\"" + width + "\"/>\n";
}

void emit_text(std::string& svg, double x, double y, const std::string& text, const char* anchor,
               int size, const std::string& extra = "") {
    svg += "<text x=\"" + px(x) + "\" y=\"" + px(y) + "\" text-anchor=\"" + anchor +
           "\" font-size=\"" + std::to_string(size) + "\"" + extra + ">" + escape_xml(text) +
           "</text>\n";
}

}  // namespace

std::string ape_bar_chart_svg(const ApeResult& result, const ChartLayout& layout) {
    const std::vector<ApeCell>& cells = result.quintiles;
    if (cells.empty()) return "";

    const double margin_left = 70.0, margin_right = 18.0, margin_top = 46.0, margin_bottom = 52.0;
    const double plot_w = layout.width - margin_left - margin_right;
    const double plot_h = layout.height - margin_top - margin_bottom;

    double lo = 0.0, hi = 0.0;
    for (const ApeCell& cell : cells) {
        for (double v : {cell.cape, cell.tape, cell.tape - 1.96 * cell.tape_se,
                         cell.tape + 1.96 * cell.tape_se}) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
    }
    double span = hi - lo;
    if (!(span > 1e-12)) {
        const double pad = std::max(1e-3, 0.1 * std::max(std::fabs(lo), std::fabs(hi)));
        lo -= pad;
        hi += pad;
        span = hi - lo;
    }
    lo -= 0.08 * span;
    hi += 0.08 * span;
    span = hi - lo;

    const auto y_of = [&](double v) { return margin_top + (hi - v) / span * plot_h; };

    std::string svg;
    svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + px(layout.width) +
           "\" height=\"" + px(layout.height) + "\" viewBox=\"0 0 " + px(layout.width) + " " +
           px(layout.height) + "\" font-family=\"sans-serif\" fill=\"#111111\">\n";
    emit_rect(svg, {0.0, 0.0, layout.width, layout.height}, "#ffffff");

    // Horizontal gridlines and tick labels.
    const double step = nice_step(span);
    const double first_tick = std::ceil(lo / step) * step;
    for (double t = first_tick; t <= hi + 1e-12 * span; t += step) {
        const double tick = std::fabs(t) < 0.5 * step ? 0.0 : t;  // avoid "-0"
        const double y = y_of(tick);
        emit_line(svg, margin_left, y, margin_left + plot_w, y, "#dddddd", "1");
        emit_text(svg, margin_left - 8.0, y + 3.5, csv_number(tick), "end", 11);
    }

    // Bars: contemporaneous segment from zero, dynamic segment stacked on
    // top of it so the joint extent is the total effect.
    const double slot = plot_w / static_cast<double>(cells.size());
    const double bar_w = 0.55 * slot;
    for (std::size_t i = 0; i < cells.size(); ++i) {
        const ApeCell& cell = cells[i];
        const double cx = margin_left + (static_cast<double>(i) + 0.5) * slot;
        const double x0 = cx - 0.5 * bar_w;
        const double y_zero = y_of(0.0);
        const double y_cape = y_of(cell.cape);
        const double y_tape = y_of(cell.tape);
        emit_rect(svg, {x0, std::min(y_zero, y_cape), bar_w, std::fabs(y_cape - y_zero)},
                  kCapeColor);
        emit_rect(svg, {x0, std::min(y_cape, y_tape), bar_w, std::fabs(y_tape - y_cape)},
                  kDapeColor);
        if (cell.tape_se > 0.0) {
            const double y_lo = y_of(cell.tape - 1.96 * cell.tape_se);
            const double y_hi = y_of(cell.tape + 1.96 * cell.tape_se);
            emit_line(svg, cx, y_hi, cx, y_lo, "#444444", "1.5");
            emit_line(svg, cx - 5.0, y_hi, cx + 5.0, y_hi, "#444444", "1.5");
            emit_line(svg, cx - 5.0, y_lo, cx + 5.0, y_lo, "#444444", "1.5");
        }
        emit_text(svg, cx, margin_top + plot_h + 18.0, cell.name, "middle", 12);
    }

    // Zero line above the bars for readability.
    emit_line(svg, margin_left, y_of(0.0), margin_left + plot_w, y_of(0.0), "#111111", "1");

    // Frame, axis title, chart title, legend.
    emit_line(svg, margin_left, margin_top, margin_left, margin_top + plot_h, "#111111", "1");
    emit_text(svg, 0.0, 0.0, "effect on log consumption", "middle", 12,
              " transform=\"translate(16 " + px(margin_top + 0.5 * plot_h) + ") rotate(-90)\"");
    const std::string title = layout.title.empty()
                                  ? result.counterfactual + " (" + result.spec + ")"
                                  : layout.title;
    emit_text(svg, margin_left + 0.5 * plot_w, 22.0, title, "middle", 14, " font-weight=\"bold\"");

    const double legend_x = margin_left + plot_w - 190.0;
    emit_rect(svg, {legend_x, 30.0, 10.0, 10.0}, kCapeColor);
    emit_text(svg, legend_x + 15.0, 39.0, "contemporaneous", "start", 11);
    emit_rect(svg, {legend_x + 125.0, 30.0, 10.0, 10.0}, kDapeColor);
    emit_text(svg, legend_x + 140.0, 39.0, "dynamic", "start", 11);

    svg += "</svg>\n";
    return svg;
}

}  // namespace apekit::cli
