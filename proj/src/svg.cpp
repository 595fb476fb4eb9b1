// Copyright (C) 2026 The tailcache Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cstdio>
#include <sstream>
#include <vector>

#include "tailcache/sim.hpp"

namespace tailcache {

namespace {

constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#17becf"};
constexpr double kPanelWidth = 300.0;
constexpr double kPanelHeight = 220.0;
constexpr double kMargin = 50.0;

std::string f1(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.1f", v);
    return buf;
}

}  // namespace

std::string render_capacity_chart(const ComparisonTable& table, double xi_ms) {
    const Metric panels[] = {Metric::kP90, Metric::kP95, Metric::kP99};
    const double width = 3 * (kPanelWidth + kMargin) + kMargin;
    const double height = kPanelHeight + 2 * kMargin + 20.0 * static_cast<double>(table.policies.size());

    std::vector<Blocks> caps = table.capacities;
    std::sort(caps.begin(), caps.end());
    Blocks cmin = caps.front();
    Blocks cmax = caps.back();
    if (cmax == cmin) ++cmax;

    std::ostringstream svg;
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
        << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
    svg << "<text x=\"" << kMargin << "\" y=\"18\" font-size=\"13\">xi_s = " << f1(xi_ms) << " ms</text>\n";
    for (int p = 0; p < 3; ++p) {
        double ymax = 0.0;
        for (const auto& policy : table.policies) {
            for (Blocks c : table.capacities) ymax = std::max(ymax, metric_value(table.at(policy, c, xi_ms), panels[p]));
        }
        if (ymax <= 0.0) ymax = 1.0;
        const double x0 = kMargin + p * (kPanelWidth + kMargin);
        const double y0 = kMargin + kPanelHeight;
        auto px = [&](Blocks c) { return x0 + kPanelWidth * static_cast<double>(c - cmin) / static_cast<double>(cmax - cmin); };
        auto py = [&](double v) { return y0 - kPanelHeight * v / ymax; };

        svg << "<rect x=\"" << x0 << "\" y=\"" << kMargin << "\" width=\"" << kPanelWidth << "\" height=\""
            << kPanelHeight << "\" fill=\"none\" stroke=\"#444\"/>\n";
        svg << "<text x=\"" << x0 + kPanelWidth / 2 << "\" y=\"" << kMargin - 6 << "\" text-anchor=\"middle\">"
            << to_string(panels[p]) << "</text>\n";
        svg << "<text x=\"" << x0 + kPanelWidth / 2 << "\" y=\"" << y0 + 30
            << "\" text-anchor=\"middle\">cache capacity (blocks)</text>\n";
        svg << "<text x=\"" << x0 - 36 << "\" y=\"" << y0 - kPanelHeight / 2 << "\" transform=\"rotate(-90 "
            << x0 - 36 << ' ' << y0 - kPanelHeight / 2
            << ")\" text-anchor=\"middle\">modeled TTFT (linear \xCE\xB1 model), ms</text>\n";
        svg << "<text x=\"" << x0 - 4 << "\" y=\"" << kMargin + 4 << "\" text-anchor=\"end\">" << f1(ymax)
            << "</text>\n";
        svg << "<text x=\"" << x0 - 4 << "\" y=\"" << y0 << "\" text-anchor=\"end\">0</text>\n";
        for (Blocks c : table.capacities) {
            svg << "<text x=\"" << px(c) << "\" y=\"" << y0 + 14 << "\" text-anchor=\"middle\">" << c << "</text>\n";
        }
        for (std::size_t i = 0; i < table.policies.size(); ++i) {
            const char* color = kPalette[i % std::size(kPalette)];
            svg << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
            for (Blocks c : caps) {
                svg << f1(px(c)) << ',' << f1(py(metric_value(table.at(table.policies[i], c, xi_ms), panels[p])))
                    << ' ';
            }
            svg << "\"/>\n";
        }
    }
    for (std::size_t i = 0; i < table.policies.size(); ++i) {
        const double y = kMargin + kPanelHeight + 50 + 20.0 * static_cast<double>(i);
        svg << "<rect x=\"" << kMargin << "\" y=\"" << y - 9 << "\" width=\"12\" height=\"10\" fill=\""
            << kPalette[i % std::size(kPalette)] << "\"/>\n";
        svg << "<text x=\"" << kMargin + 18 << "\" y=\"" << y << "\">" << table.policies[i] << "</text>\n";
    }
    svg << "</svg>\n";
    return svg.str();
}

}  // namespace tailcache
