#pragma once

#include <string>
#include <vector>

namespace lmc::plot {

struct Line {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
};

struct PolarLine {
  std::string label;
  std::vector<double> angle_deg;
  std::vector<double> radius;
};

struct Point {
  std::string label;
  double x = 0.0;
  double y = 0.0;
};

std::string line_chart(const std::string& title, const std::string& xlabel, const std::string& ylabel,
                       const std::vector<Line>& lines);

/// Polar paths: the <g class="polar"> element carries data-cx, data-cy and
/// data-scale (pixels per radial unit) so radii can be read back from path data.
std::string polar_chart(const std::string& title, const std::vector<PolarLine>& lines);

std::string scatter_chart(const std::string& title, const std::string& xlabel, const std::string& ylabel,
                          const std::vector<Point>& points);

std::string escape(const std::string& text);

}  // namespace lmc::plot
