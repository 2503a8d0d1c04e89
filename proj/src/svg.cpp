#include "plan/svg.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

#include "plan/error.hpp"

namespace plan {

namespace {

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                          "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

std::string escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            default: out += c;
        }
    }
    return out;
}

}  // namespace

std::string render_line_chart(const std::string& title, const std::string& y_label,
                              const std::vector<ChartSeries>& series) {
    if (series.empty()) throw Error("render_line_chart: no series");
    size_t n = 0;
    for (const auto& s : series) n = std::max(n, s.values.size());
    if (n == 0) throw Error("render_line_chart: empty series");

    constexpr double width = 640, height = 420;
    constexpr double left = 64, right = 600, top = 48, bottom = 372;

    auto x_at = [&](size_t i) {
        if (n == 1) return (left + right) / 2.0;
        return left + (right - left) * static_cast<double>(i) / static_cast<double>(n - 1);
    };
    auto y_at = [&](double v) { return bottom - (bottom - top) * v; };

    std::ostringstream svg;
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
        << height << "\" viewBox=\"0 0 " << width << " " << height << "\">\n";
    svg << "<rect width=\"" << width << "\" height=\"" << height << "\" fill=\"white\"/>\n";
    svg << "<text x=\"" << (width / 2) << "\" y=\"24\" text-anchor=\"middle\" "
           "font-family=\"sans-serif\" font-size=\"16\">"
        << escape(title) << "</text>\n";

    // Axes and horizontal grid at 0, 0.25, ..., 1.
    for (int g = 0; g <= 4; ++g) {
        const double v = 0.25 * g;
        const double y = y_at(v);
        svg << "<line x1=\"" << fmt(left) << "\" y1=\"" << fmt(y) << "\" x2=\"" << fmt(right)
            << "\" y2=\"" << fmt(y) << "\" stroke=\"#dddddd\" stroke-width=\"1\"/>\n";
        svg << "<text x=\"" << fmt(left - 8) << "\" y=\"" << fmt(y + 4)
            << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" << fmt(v)
            << "</text>\n";
    }
    svg << "<line x1=\"" << fmt(left) << "\" y1=\"" << fmt(top) << "\" x2=\"" << fmt(left)
        << "\" y2=\"" << fmt(bottom) << "\" stroke=\"black\" stroke-width=\"1\"/>\n";
    svg << "<line x1=\"" << fmt(left) << "\" y1=\"" << fmt(bottom) << "\" x2=\"" << fmt(right)
        << "\" y2=\"" << fmt(bottom) << "\" stroke=\"black\" stroke-width=\"1\"/>\n";

    for (size_t i = 0; i < n; ++i) {
        const double x = x_at(i);
        svg << "<text x=\"" << fmt(x) << "\" y=\"" << fmt(bottom + 18)
            << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">"
            << (i + 1) << "</text>\n";
    }
    svg << "<text x=\"" << (width / 2) << "\" y=\"" << fmt(height - 8)
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">task</text>\n";
    svg << "<text x=\"16\" y=\"" << fmt((top + bottom) / 2)
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\" "
           "transform=\"rotate(-90 16 "
        << fmt((top + bottom) / 2) << ")\">" << escape(y_label) << "</text>\n";

    for (size_t s = 0; s < series.size(); ++s) {
        const char* color = kPalette[s % (sizeof kPalette / sizeof kPalette[0])];
        svg << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
        for (size_t i = 0; i < series[s].values.size(); ++i) {
            if (i) svg << ' ';
            svg << fmt(x_at(i)) << ',' << fmt(y_at(series[s].values[i]));
        }
        svg << "\"/>\n";
        for (size_t i = 0; i < series[s].values.size(); ++i) {
            svg << "<circle cx=\"" << fmt(x_at(i)) << "\" cy=\"" << fmt(y_at(series[s].values[i]))
                << "\" r=\"3\" fill=\"" << color << "\"/>\n";
        }
        const double ly = top + 16 * static_cast<double>(s);
        svg << "<rect x=\"" << fmt(right - 150) << "\" y=\"" << fmt(ly - 9)
            << "\" width=\"10\" height=\"10\" fill=\"" << color << "\"/>\n";
        svg << "<text x=\"" << fmt(right - 136) << "\" y=\"" << fmt(ly)
            << "\" font-family=\"sans-serif\" font-size=\"11\">" << escape(series[s].label)
            << "</text>\n";
    }
    svg << "</svg>\n";
    return svg.str();
}

}  // namespace plan
