#pragma once

#include <string>
#include <vector>

namespace plan {

struct ChartSeries {
    std::string label;
    std::vector<double> values;  // y per checkpoint, x = 1..n
};

// Self-contained SVG line chart (y fixed to [0, 1], x = task index).
// Output is byte-deterministic for identical inputs.
std::string render_line_chart(const std::string& title, const std::string& y_label,
                              const std::vector<ChartSeries>& series);

}  // namespace plan
