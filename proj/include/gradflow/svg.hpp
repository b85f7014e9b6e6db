#pragma once

#include <span>
#include <string>
#include <vector>

namespace gradflow {

struct PlotSeries {
    std::string label;
    std::vector<double> x;
    std::vector<double> y;
};

struct PlotSpec {
    std::string title;
    std::string x_label;
    std::string y_label;
    bool log_x = false;
    bool log_y = false;
    bool scatter = false;  ///< markers only, no connecting lines
};

/// Renders a standalone SVG document. Output depends only on the inputs.
/// Non-finite points, and non-positive ones on a log axis, are skipped and
/// break the line.
std::string render_svg(const PlotSpec& spec, std::span<const PlotSeries> series);

}  // namespace gradflow
