#include "cicada/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "cicada/errors.hpp"

namespace cicada {

namespace {

constexpr int kWidth = 960;
constexpr int kHeight = 480;
constexpr int kMarginLeft = 70;
constexpr int kMarginRight = 170;
constexpr int kMarginTop = 50;
constexpr int kMarginBottom = 55;

const char* kPalette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                          "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};
constexpr int kPaletteSize = 10;

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", v);
  return buf;
}

std::string escape_xml(const std::string& s) {
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

// Picks a round tick spacing (1, 2 or 5 times a power of ten) that yields
// at most `max_ticks` ticks over [lo, hi].
double tick_step(double lo, double hi, int max_ticks) {
  double span = hi - lo;
  if (span <= 0.0) return 1.0;
  double raw = span / max_ticks;
  double mag = std::pow(10.0, std::floor(std::log10(raw)));
  for (double m : {1.0, 2.0, 5.0, 10.0}) {
    if (mag * m >= raw) return mag * m;
  }
  return mag * 10.0;
}

void open_svg(std::ostringstream& out, const std::string& title, int width, int height) {
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
      << height << "\" viewBox=\"0 0 " << width << ' ' << height << "\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<text x=\"" << width / 2 << "\" y=\"28\" font-family=\"sans-serif\" font-size=\"17\""
      << " text-anchor=\"middle\">" << escape_xml(title) << "</text>\n";
}

void save(const std::string& path, const std::string& body) {
  std::ofstream f(path);
  require(f.good(), Err::IoError, "cannot open " + path + " for writing");
  f << body;
  require(f.good(), Err::IoError, "write failed for " + path);
}

}  // namespace

void write_line_chart(const std::string& path, const std::string& title,
                      const std::vector<double>& x,
                      const std::vector<ChartSeries>& series,
                      const std::string& x_label, const std::string& y_label) {
  require(!x.empty(), Err::BadConfig, "line chart needs at least one point");
  require(!series.empty(), Err::BadConfig, "line chart needs at least one series");
  for (const auto& s : series) {
    require(s.y.size() == x.size(), Err::DimensionMismatch,
            "series '" + s.name + "' length does not match the x axis");
  }

  double xmin = *std::min_element(x.begin(), x.end());
  double xmax = *std::max_element(x.begin(), x.end());
  // Non-finite samples mark gaps (a series that starts late); they are
  // excluded from the range and split the polyline.
  bool any = false;
  double ymin = 0.0, ymax = 0.0;
  for (const auto& s : series) {
    for (double v : s.y) {
      if (!std::isfinite(v)) continue;
      if (!any) {
        ymin = ymax = v;
        any = true;
      } else {
        ymin = std::min(ymin, v);
        ymax = std::max(ymax, v);
      }
    }
  }
  require(any, Err::BadConfig, "line chart needs at least one finite sample");
  if (xmax == xmin) xmax = xmin + 1.0;
  if (ymax == ymin) {
    ymax += 0.5;
    ymin -= 0.5;
  }
  double ypad = 0.05 * (ymax - ymin);
  ymin -= ypad;
  ymax += ypad;

  const double px0 = kMarginLeft;
  const double px1 = kWidth - kMarginRight;
  const double py0 = kHeight - kMarginBottom;
  const double py1 = kMarginTop;
  auto sx = [&](double v) { return px0 + (v - xmin) / (xmax - xmin) * (px1 - px0); };
  auto sy = [&](double v) { return py0 + (v - ymin) / (ymax - ymin) * (py1 - py0); };

  std::ostringstream out;
  open_svg(out, title, kWidth, kHeight);

  out << "<g font-family=\"sans-serif\" font-size=\"12\" fill=\"#333\">\n";
  double xstep = tick_step(xmin, xmax, 8);
  for (double t = std::ceil(xmin / xstep) * xstep; t <= xmax + 1e-9 * xstep; t += xstep) {
    out << "<line x1=\"" << fmt(sx(t)) << "\" y1=\"" << fmt(py0) << "\" x2=\"" << fmt(sx(t))
        << "\" y2=\"" << fmt(py1) << "\" stroke=\"#eee\"/>\n";
    out << "<text x=\"" << fmt(sx(t)) << "\" y=\"" << fmt(py0 + 18)
        << "\" text-anchor=\"middle\">" << fmt(t) << "</text>\n";
  }
  double ystep = tick_step(ymin, ymax, 6);
  for (double t = std::ceil(ymin / ystep) * ystep; t <= ymax + 1e-9 * ystep; t += ystep) {
    out << "<line x1=\"" << fmt(px0) << "\" y1=\"" << fmt(sy(t)) << "\" x2=\"" << fmt(px1)
        << "\" y2=\"" << fmt(sy(t)) << "\" stroke=\"#eee\"/>\n";
    out << "<text x=\"" << fmt(px0 - 8) << "\" y=\"" << fmt(sy(t) + 4)
        << "\" text-anchor=\"end\">" << fmt(t) << "</text>\n";
  }
  out << "<text x=\"" << (px0 + px1) / 2 << "\" y=\"" << kHeight - 12
      << "\" text-anchor=\"middle\">" << escape_xml(x_label) << "</text>\n";
  out << "<text x=\"18\" y=\"" << (py0 + py1) / 2 << "\" text-anchor=\"middle\""
      << " transform=\"rotate(-90 18 " << (py0 + py1) / 2 << ")\">" << escape_xml(y_label)
      << "</text>\n";
  out << "</g>\n";

  out << "<line x1=\"" << fmt(px0) << "\" y1=\"" << fmt(py0) << "\" x2=\"" << fmt(px1)
      << "\" y2=\"" << fmt(py0) << "\" stroke=\"#333\"/>\n";
  out << "<line x1=\"" << fmt(px0) << "\" y1=\"" << fmt(py0) << "\" x2=\"" << fmt(px0)
      << "\" y2=\"" << fmt(py1) << "\" stroke=\"#333\"/>\n";

  for (std::size_t i = 0; i < series.size(); ++i) {
    const char* color = kPalette[i % kPaletteSize];
    std::size_t k = 0;
    while (k < x.size()) {
      while (k < x.size() && !std::isfinite(series[i].y[k])) ++k;
      std::size_t run = k;
      while (run < x.size() && std::isfinite(series[i].y[run])) ++run;
      if (run == k) break;
      if (run - k == 1) {
        out << "<circle cx=\"" << fmt(sx(x[k])) << "\" cy=\"" << fmt(sy(series[i].y[k]))
            << "\" r=\"2\" fill=\"" << color << "\"/>\n";
      } else {
        out << "<polyline fill=\"none\" stroke=\"" << color
            << "\" stroke-width=\"1.5\" points=\"";
        for (std::size_t p = k; p < run; ++p) {
          if (p > k) out << ' ';
          out << fmt(sx(x[p])) << ',' << fmt(sy(series[i].y[p]));
        }
        out << "\"/>\n";
      }
      k = run;
    }
  }

  double ly = kMarginTop + 6;
  for (std::size_t i = 0; i < series.size(); ++i) {
    const char* color = kPalette[i % kPaletteSize];
    out << "<line x1=\"" << px1 + 14 << "\" y1=\"" << fmt(ly) << "\" x2=\"" << px1 + 38
        << "\" y2=\"" << fmt(ly) << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    out << "<text x=\"" << px1 + 44 << "\" y=\"" << fmt(ly + 4)
        << "\" font-family=\"sans-serif\" font-size=\"12\">" << escape_xml(series[i].name)
        << "</text>\n";
    ly += 18;
  }

  out << "</svg>\n";
  save(path, out.str());
}

void write_strip_chart(const std::string& path, const std::string& title,
                       const std::vector<std::string>& row_names,
                       const std::vector<std::vector<int>>& cells,
                       const std::string& x_label) {
  require(!cells.empty(), Err::BadConfig, "strip chart needs at least one row");
  require(row_names.size() == cells.size(), Err::DimensionMismatch,
          "strip chart row names do not match the row count");
  std::size_t n = cells[0].size();
  require(n > 0, Err::BadConfig, "strip chart rows must be non-empty");
  int max_cat = 0;
  for (const auto& row : cells) {
    require(row.size() == n, Err::DimensionMismatch, "strip chart rows must share one length");
    for (int c : row) {
      require(c >= 0, Err::BadConfig, "strip chart categories must be non-negative");
      max_cat = std::max(max_cat, c);
    }
  }

  const int row_h = 26;
  const int gap = 8;
  const int legend_h = 30;
  int height = kMarginTop + static_cast<int>(cells.size()) * (row_h + gap) + legend_h + 40;
  const double px0 = 150;
  const double px1 = kWidth - 30;
  double cell_w = (px1 - px0) / static_cast<double>(n);

  std::ostringstream out;
  open_svg(out, title, kWidth, height);
  for (std::size_t r = 0; r < cells.size(); ++r) {
    double y = kMarginTop + static_cast<double>(r) * (row_h + gap);
    out << "<text x=\"" << px0 - 10 << "\" y=\"" << fmt(y + row_h / 2.0 + 4)
        << "\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"end\">"
        << escape_xml(row_names[r]) << "</text>\n";
    for (std::size_t i = 0; i < n; ++i) {
      const char* color = kPalette[cells[r][i] % kPaletteSize];
      out << "<rect x=\"" << fmt(px0 + static_cast<double>(i) * cell_w) << "\" y=\"" << fmt(y)
          << "\" width=\"" << fmt(cell_w) << "\" height=\"" << row_h << "\" fill=\"" << color
          << "\" stroke=\"white\" stroke-width=\"0.5\"/>\n";
    }
  }

  double ly = kMarginTop + static_cast<double>(cells.size()) * (row_h + gap) + 14;
  double lx = px0;
  for (int c = 0; c <= max_cat; ++c) {
    out << "<rect x=\"" << fmt(lx) << "\" y=\"" << fmt(ly) << "\" width=\"14\" height=\"14\""
        << " fill=\"" << kPalette[c % kPaletteSize] << "\"/>\n";
    out << "<text x=\"" << fmt(lx + 19) << "\" y=\"" << fmt(ly + 12)
        << "\" font-family=\"sans-serif\" font-size=\"12\">" << c << "</text>\n";
    lx += 60;
  }
  out << "<text x=\"" << (px0 + px1) / 2 << "\" y=\"" << height - 12
      << "\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\">"
      << escape_xml(x_label) << "</text>\n";
  out << "</svg>\n";
  save(path, out.str());
}

}  // namespace cicada
