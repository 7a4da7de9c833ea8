#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>
#include <vector>

namespace mtseg {

/// Minimal deterministic SVG line charts for the sweep reports. Text output
/// only; no timestamps or environment-dependent bytes.
struct PlotSeries {
  std::string label;
  std::vector<std::pair<double, double>> points;  // (x, y), plotted in order
};

inline void write_line_chart(const std::string& path, const std::string& title,
                             const std::string& xlabel, const std::string& ylabel,
                             const std::vector<PlotSeries>& series) {
  static const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                  "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};
  const int W = 640, H = 420, ml = 70, mr = 160, mt = 44, mb = 52;
  const int pw = W - ml - mr, ph = H - mt - mb;

  double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
  for (const auto& s : series)
    for (const auto& [x, y] : s.points) {
      xmin = std::min(xmin, x); xmax = std::max(xmax, x);
      ymin = std::min(ymin, y); ymax = std::max(ymax, y);
    }
  if (xmin > xmax) { xmin = 0; xmax = 1; ymin = 0; ymax = 1; }
  if (xmax == xmin) { xmax = xmin + 1; }
  if (ymax == ymin) { ymax = ymin + (std::abs(ymin) > 1e-12 ? std::abs(ymin) * 0.1 : 1); }
  const double ypad = 0.06 * (ymax - ymin);
  ymin -= ypad; ymax += ypad;

  auto px = [&](double x) { return ml + (x - xmin) / (xmax - xmin) * pw; };
  auto py = [&](double y) { return mt + ph - (y - ymin) / (ymax - ymin) * ph; };
  char buf[512];

  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path);
  std::snprintf(buf, sizeof(buf),
                "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%d\" height=\"%d\" "
                "font-family=\"sans-serif\" font-size=\"12\">\n", W, H);
  out << buf << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  std::snprintf(buf, sizeof(buf),
                "<text x=\"%d\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">%s</text>\n",
                ml + pw / 2, title.c_str());
  out << buf;

  // axes with 5 ticks per side
  std::snprintf(buf, sizeof(buf),
                "<rect x=\"%d\" y=\"%d\" width=\"%d\" height=\"%d\" fill=\"none\" "
                "stroke=\"black\"/>\n", ml, mt, pw, ph);
  out << buf;
  for (int i = 0; i <= 5; ++i) {
    const double xv = xmin + (xmax - xmin) * i / 5.0;
    const double yv = ymin + (ymax - ymin) * i / 5.0;
    std::snprintf(buf, sizeof(buf),
                  "<line x1=\"%.1f\" y1=\"%d\" x2=\"%.1f\" y2=\"%d\" stroke=\"black\"/>\n"
                  "<text x=\"%.1f\" y=\"%d\" text-anchor=\"middle\">%.4g</text>\n",
                  px(xv), mt + ph, px(xv), mt + ph + 5, px(xv), mt + ph + 20, xv);
    out << buf;
    std::snprintf(buf, sizeof(buf),
                  "<line x1=\"%d\" y1=\"%.1f\" x2=\"%d\" y2=\"%.1f\" stroke=\"black\"/>\n"
                  "<text x=\"%d\" y=\"%.1f\" text-anchor=\"end\">%.4g</text>\n",
                  ml - 5, py(yv), ml, py(yv), ml - 8, py(yv) + 4, yv);
    out << buf;
  }
  std::snprintf(buf, sizeof(buf),
                "<text x=\"%d\" y=\"%d\" text-anchor=\"middle\">%s</text>\n",
                ml + pw / 2, H - 12, xlabel.c_str());
  out << buf;
  std::snprintf(buf, sizeof(buf),
                "<text x=\"16\" y=\"%d\" text-anchor=\"middle\" "
                "transform=\"rotate(-90 16 %d)\">%s</text>\n",
                mt + ph / 2, mt + ph / 2, ylabel.c_str());
  out << buf;

  for (size_t si = 0; si < series.size(); ++si) {
    const char* color = kColors[si % 8];
    std::string pts;
    for (const auto& [x, y] : series[si].points) {
      std::snprintf(buf, sizeof(buf), "%.2f,%.2f ", px(x), py(y));
      pts += buf;
    }
    std::snprintf(buf, sizeof(buf),
                  "<polyline points=\"%s\" fill=\"none\" stroke=\"%s\" stroke-width=\"2\"/>\n",
                  pts.c_str(), color);
    out << buf;
    for (const auto& [x, y] : series[si].points) {
      std::snprintf(buf, sizeof(buf),
                    "<circle cx=\"%.2f\" cy=\"%.2f\" r=\"3\" fill=\"%s\"/>\n",
                    px(x), py(y), color);
      out << buf;
    }
    const int ly = mt + 16 + static_cast<int>(si) * 18;
    std::snprintf(buf, sizeof(buf),
                  "<line x1=\"%d\" y1=\"%d\" x2=\"%d\" y2=\"%d\" stroke=\"%s\" "
                  "stroke-width=\"2\"/>\n<text x=\"%d\" y=\"%d\">%s</text>\n",
                  ml + pw + 10, ly, ml + pw + 34, ly, color, ml + pw + 40, ly + 4,
                  series[si].label.c_str());
    out << buf;
  }
  out << "</svg>\n";
}

}  // namespace mtseg
