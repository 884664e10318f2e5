#include "lmc/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <sstream>

#include "lmc/csv.hpp"

namespace lmc::plot {

namespace {

constexpr double kWidth = 640, kHeight = 480, kLeft = 70, kRight = 150, kTop = 40, kBottom = 50;
const char* const kColors[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                               "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

const char* color(std::size_t i) { return kColors[i % std::size(kColors)]; }

std::string num(double v) { return csv::format(v); }

std::string tick(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

struct Range {
  double lo = INFINITY, hi = -INFINITY;
  void add(double v) {
    if (!std::isfinite(v)) return;
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  void settle() {
    if (!std::isfinite(lo)) lo = 0, hi = 1;
    if (hi - lo < 1e-12) {
      lo -= 0.5;
      hi += 0.5;
    }
  }
};

std::string header(const std::string& title) {
  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
    << "\" viewBox=\"0 0 " << kWidth << ' ' << kHeight << "\" font-family=\"sans-serif\" font-size=\"12\">\n"
    << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    << "<text x=\"" << kWidth / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" << escape(title)
    << "</text>\n";
  return o.str();
}

std::string legend(const std::vector<std::string>& labels) {
  std::ostringstream o;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const double y = kTop + 10 + 18 * static_cast<double>(i);
    o << "<rect x=\"" << kWidth - kRight + 15 << "\" y=\"" << y - 8 << "\" width=\"10\" height=\"10\" fill=\""
      << color(i) << "\"/>\n<text x=\"" << kWidth - kRight + 30 << "\" y=\"" << y + 1 << "\">"
      << escape(labels[i]) << "</text>\n";
  }
  return o.str();
}

// Frame, ticks and axis labels for a cartesian chart.
std::string axes(const Range& xr, const Range& yr, const std::string& xlabel, const std::string& ylabel) {
  const double x0 = kLeft, x1 = kWidth - kRight, y0 = kHeight - kBottom, y1 = kTop;
  std::ostringstream o;
  o << "<rect x=\"" << x0 << "\" y=\"" << y1 << "\" width=\"" << x1 - x0 << "\" height=\"" << y0 - y1
    << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double f = i / 4.0;
    const double px = x0 + f * (x1 - x0), py = y0 - f * (y0 - y1);
    o << "<text x=\"" << px << "\" y=\"" << y0 + 16 << "\" text-anchor=\"middle\">"
      << tick(xr.lo + f * (xr.hi - xr.lo)) << "</text>\n";
    o << "<text x=\"" << x0 - 6 << "\" y=\"" << py + 4 << "\" text-anchor=\"end\">"
      << tick(yr.lo + f * (yr.hi - yr.lo)) << "</text>\n";
  }
  o << "<text x=\"" << (x0 + x1) / 2 << "\" y=\"" << kHeight - 12 << "\" text-anchor=\"middle\">"
    << escape(xlabel) << "</text>\n";
  o << "<text x=\"16\" y=\"" << (y0 + y1) / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 "
    << (y0 + y1) / 2 << ")\">" << escape(ylabel) << "</text>\n";
  return o.str();
}

double sx(const Range& r, double v) { return kLeft + (v - r.lo) / (r.hi - r.lo) * (kWidth - kRight - kLeft); }
double sy(const Range& r, double v) {
  return kHeight - kBottom - (v - r.lo) / (r.hi - r.lo) * (kHeight - kBottom - kTop);
}

}  // namespace

std::string escape(const std::string& text) {
  std::string out;
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

std::string line_chart(const std::string& title, const std::string& xlabel, const std::string& ylabel,
                       const std::vector<Line>& lines) {
  Range xr, yr;
  for (const auto& l : lines) {
    for (double v : l.x) xr.add(v);
    for (double v : l.y) yr.add(v);
  }
  xr.settle();
  yr.settle();
  std::string out = header(title) + axes(xr, yr, xlabel, ylabel);
  std::vector<std::string> labels;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const auto& l = lines[i];
    labels.push_back(l.label);
    std::ostringstream d;
    bool pen = false;
    for (std::size_t k = 0; k < l.x.size() && k < l.y.size(); ++k) {
      if (!std::isfinite(l.x[k]) || !std::isfinite(l.y[k])) {
        pen = false;
        continue;
      }
      d << (pen ? " L " : (d.tellp() > 0 ? " M " : "M ")) << num(sx(xr, l.x[k])) << ' ' << num(sy(yr, l.y[k]));
      pen = true;
    }
    out += "<path class=\"series\" data-label=\"" + escape(l.label) + "\" d=\"" + d.str() +
           "\" fill=\"none\" stroke=\"" + color(i) + "\" stroke-width=\"2\"/>\n";
  }
  return out + legend(labels) + "</svg>\n";
}

std::string polar_chart(const std::string& title, const std::vector<PolarLine>& lines) {
  double rmax = 0.0;
  for (const auto& l : lines)
    for (double r : l.radius)
      if (std::isfinite(r)) rmax = std::max(rmax, r);
  const double cx = kLeft + 20, cy = kHeight - kBottom - 20;
  const double pixels = std::min(kWidth - kRight - cx - 10, cy - kTop - 10);
  const double scale = rmax > 0.0 ? pixels / rmax : 1.0;
  std::ostringstream o;
  o << header(title);
  o << "<g class=\"polar\" data-cx=\"" << num(cx) << "\" data-cy=\"" << num(cy) << "\" data-scale=\""
    << num(scale) << "\">\n";
  for (int i = 1; i <= 4; ++i) {
    const double r = pixels * i / 4.0;
    o << "<path d=\"M " << num(cx + r) << ' ' << num(cy) << " A " << num(r) << ' ' << num(r) << " 0 0 0 "
      << num(cx) << ' ' << num(cy - r) << "\" fill=\"none\" stroke=\"#ccc\"/>\n";
    o << "<text x=\"" << num(cx + r) << "\" y=\"" << num(cy + 14) << "\" text-anchor=\"middle\">"
      << tick(rmax * i / 4.0) << "</text>\n";
  }
  for (int deg = 0; deg <= 90; deg += 30) {
    const double t = deg * std::numbers::pi / 180.0;
    o << "<line x1=\"" << num(cx) << "\" y1=\"" << num(cy) << "\" x2=\"" << num(cx + pixels * std::cos(t))
      << "\" y2=\"" << num(cy - pixels * std::sin(t)) << "\" stroke=\"#ccc\"/>\n";
  }
  std::vector<std::string> labels;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const auto& l = lines[i];
    labels.push_back(l.label);
    std::ostringstream d;
    for (std::size_t k = 0; k < l.angle_deg.size() && k < l.radius.size(); ++k) {
      const double t = l.angle_deg[k] * std::numbers::pi / 180.0;
      const double r = l.radius[k] * scale;
      d << (k == 0 ? "M " : " L ") << num(cx + r * std::cos(t)) << ' ' << num(cy - r * std::sin(t));
    }
    o << "<path class=\"trace\" data-label=\"" << escape(l.label) << "\" d=\"" << d.str()
      << "\" fill=\"none\" stroke=\"" << color(i) << "\" stroke-width=\"2\"/>\n";
  }
  o << "</g>\n" << legend(labels)
    << "<text x=\"" << kWidth / 2 << "\" y=\"" << kHeight - 12
    << "\" text-anchor=\"middle\">angle from A (deg), radius: Manhattan distance from A</text>\n</svg>\n";
  return o.str();
}

std::string scatter_chart(const std::string& title, const std::string& xlabel, const std::string& ylabel,
                          const std::vector<Point>& points) {
  Range xr, yr;
  std::vector<std::string> labels;
  for (const auto& p : points) {
    xr.add(p.x);
    yr.add(p.y);
    if (std::find(labels.begin(), labels.end(), p.label) == labels.end()) labels.push_back(p.label);
  }
  xr.settle();
  yr.settle();
  std::string out = header(title) + axes(xr, yr, xlabel, ylabel);
  for (const auto& p : points) {
    if (!std::isfinite(p.x) || !std::isfinite(p.y)) continue;
    const auto idx = static_cast<std::size_t>(std::find(labels.begin(), labels.end(), p.label) - labels.begin());
    out += "<circle cx=\"" + num(sx(xr, p.x)) + "\" cy=\"" + num(sy(yr, p.y)) + "\" r=\"4\" fill=\"" +
           color(idx) + "\"/>\n";
  }
  return out + legend(labels) + "</svg>\n";
}

}  // namespace lmc::plot
