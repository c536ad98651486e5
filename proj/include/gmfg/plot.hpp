#pragma once

#include <string>
#include <vector>

namespace gmfg {

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
    int width = 640;
    int height = 420;
};

/// Polyline chart with markers, axes, ticks and a legend. Points that cannot
/// be drawn (non-finite, or nonpositive on a log axis) are skipped.
std::string render_svg(const PlotSpec& spec, const std::vector<PlotSeries>& series);

void write_svg(const std::string& path, const PlotSpec& spec, const std::vector<PlotSeries>& series);

} // namespace gmfg
