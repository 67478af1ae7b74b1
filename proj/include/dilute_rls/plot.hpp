#pragma once

// Minimal deterministic SVG line plots. Output bytes depend only on the input data.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "dilute_rls/errors.hpp"

namespace dilute_rls {

struct PlotSeries {
    std::string name;
    std::vector<std::pair<double, double>> points;
};

struct PlotSpec {
    std::string title;
    std::string x_label;
    std::string y_label;
    bool log_x = true;
    bool log_y = true;
};

namespace detail {

inline std::string fixed(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

inline std::string escape_xml(const std::string& s) {
    std::string out;
    for (char c : s) {
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

}  // namespace detail

/// Writes one SVG chart. Non-finite points and non-positive values on log axes are skipped.
inline void write_svg_plot(std::ostream& out, const PlotSpec& spec, const std::vector<PlotSeries>& series) {
    constexpr double W = 640, H = 420, L = 70, R = 20, T = 40, B = 50;
    static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf"};

    auto tx = [&](double x) { return spec.log_x ? std::log10(x) : x; };
    auto ty = [&](double y) { return spec.log_y ? std::log10(y) : y; };
    auto usable = [&](const std::pair<double, double>& p) {
        return std::isfinite(p.first) && std::isfinite(p.second) && (!spec.log_x || p.first > 0) &&
               (!spec.log_y || p.second > 0);
    };

    double x0 = INFINITY, x1 = -INFINITY, y0 = INFINITY, y1 = -INFINITY;
    for (const PlotSeries& s : series)
        for (const auto& p : s.points)
            if (usable(p)) {
                x0 = std::min(x0, tx(p.first));
                x1 = std::max(x1, tx(p.first));
                y0 = std::min(y0, ty(p.second));
                y1 = std::max(y1, ty(p.second));
            }
    require(std::isfinite(x0), "write_svg_plot: no plottable points");
    if (x1 - x0 < 1e-12) { x0 -= 0.5; x1 += 0.5; }
    if (y1 - y0 < 1e-12) { y0 -= 0.5; y1 += 0.5; }
    auto px = [&](double x) { return L + (tx(x) - x0) / (x1 - x0) * (W - L - R); };
    auto py = [&](double y) { return H - B - (ty(y) - y0) / (y1 - y0) * (H - T - B); };

    using detail::fixed;
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" viewBox=\"0 0 "
        << W << ' ' << H << "\">\n";
    out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    out << "<text x=\"" << W / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">"
        << detail::escape_xml(spec.title) << "</text>\n";
    out << "<rect x=\"" << L << "\" y=\"" << T << "\" width=\"" << W - L - R << "\" height=\"" << H - T - B
        << "\" fill=\"none\" stroke=\"black\"/>\n";
    for (int tick = 0; tick <= 4; ++tick) {
        const double fx = x0 + (x1 - x0) * tick / 4.0, fy = y0 + (y1 - y0) * tick / 4.0;
        const double sx = L + (W - L - R) * tick / 4.0, sy = H - B - (H - T - B) * tick / 4.0;
        char lx[32], ly[32];
        std::snprintf(lx, sizeof lx, spec.log_x ? "1e%.1f" : "%.3g", fx);
        std::snprintf(ly, sizeof ly, spec.log_y ? "1e%.1f" : "%.3g", fy);
        out << "<text x=\"" << fixed(sx) << "\" y=\"" << H - B + 16 << "\" text-anchor=\"middle\" font-size=\"11\">"
            << lx << "</text>\n";
        out << "<text x=\"" << L - 6 << "\" y=\"" << fixed(sy + 4) << "\" text-anchor=\"end\" font-size=\"11\">" << ly
            << "</text>\n";
    }
    out << "<text x=\"" << (W + L - R) / 2 << "\" y=\"" << H - 12 << "\" text-anchor=\"middle\" font-size=\"12\">"
        << detail::escape_xml(spec.x_label) << "</text>\n";
    out << "<text x=\"16\" y=\"" << (H + T - B) / 2 << "\" text-anchor=\"middle\" font-size=\"12\" transform=\"rotate(-90 16 "
        << (H + T - B) / 2 << ")\">" << detail::escape_xml(spec.y_label) << "</text>\n";

    for (std::size_t s = 0; s < series.size(); ++s) {
        const char* color = colors[s % (sizeof colors / sizeof *colors)];
        std::vector<std::pair<double, double>> pts;
        for (const auto& p : series[s].points)
            if (usable(p)) pts.push_back(p);
        if (pts.empty()) continue;
        if (pts.size() == 1) {
            out << "<circle cx=\"" << fixed(px(pts[0].first)) << "\" cy=\"" << fixed(py(pts[0].second))
                << "\" r=\"3\" fill=\"" << color << "\"/>\n";
        } else {
            out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
            for (std::size_t i = 0; i < pts.size(); ++i)
                out << (i ? " " : "") << fixed(px(pts[i].first)) << ',' << fixed(py(pts[i].second));
            out << "\"/>\n";
        }
        out << "<text x=\"" << L + 10 << "\" y=\"" << T + 16 + 14 * double(s) << "\" font-size=\"11\" fill=\"" << color
            << "\">" << detail::escape_xml(series[s].name) << "</text>\n";
    }
    out << "</svg>\n";
}

}  // namespace dilute_rls
