#pragma once

// SVG figures from trajectory CSV files. Output is a pure function of the
// input table: fixed canvas, fixed number formatting, no timestamps.

#include <algorithm>
#include <cstdio>
#include <string>
#include <vector>

#include "colflux/column_model.hpp"
#include "colflux/csv.hpp"
#include "colflux/errors.hpp"

namespace colflux {

enum class PlotKind { temperature, controls };

inline PlotKind plot_kind_from_string(const std::string& s) {
  if (s == "temperature") return PlotKind::temperature;
  if (s == "controls") return PlotKind::controls;
  throw ConfigError("unknown plot kind '" + s + "' (expected temperature or controls)");
}

namespace detail {

inline std::string fmt2(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

class SvgCanvas {
 public:
  SvgCanvas(double t0, double t1, double y0, double y1) : t0_(t0), t1_(t1), y0_(y0), y1_(y1) {
    if (!(t1_ > t0_)) t1_ = t0_ + 1.0;
    if (!(y1_ > y0_)) y1_ = y0_ + 1.0;
  }

  [[nodiscard]] double px(double t) const { return kLeft + (t - t0_) / (t1_ - t0_) * kPlotW; }
  [[nodiscard]] double py(double y) const {
    y = std::clamp(y, y0_, y1_);
    return kTop + (y1_ - y) / (y1_ - y0_) * kPlotH;
  }

  void polyline(const std::vector<double>& t, const std::vector<double>& y, const std::string& style) {
    body_ += "<polyline fill=\"none\" " + style + " points=\"";
    for (std::size_t i = 0; i < t.size(); ++i) {
      if (i) body_ += ' ';
      body_ += fmt2(px(t[i])) + "," + fmt2(py(y[i]));
    }
    body_ += "\"/>\n";
  }

  void band(const std::vector<double>& t, const std::vector<double>& lo, const std::vector<double>& hi,
            const std::string& style) {
    body_ += "<polygon " + style + " points=\"";
    for (std::size_t i = 0; i < t.size(); ++i) body_ += fmt2(px(t[i])) + "," + fmt2(py(hi[i])) + " ";
    for (std::size_t i = t.size(); i-- > 0;) {
      body_ += fmt2(px(t[i])) + "," + fmt2(py(lo[i]));
      if (i) body_ += ' ';
    }
    body_ += "\"/>\n";
  }

  void hline(double y, const std::string& style) {
    body_ += "<line x1=\"" + fmt2(kLeft) + "\" y1=\"" + fmt2(py(y)) + "\" x2=\"" + fmt2(kLeft + kPlotW) +
             "\" y2=\"" + fmt2(py(y)) + "\" " + style + "/>\n";
  }

  void legend(int row, const std::string& label, const std::string& color) {
    const double y = kTop + 14.0 + 16.0 * row;
    const double x = kLeft + kPlotW + 12.0;
    body_ += "<line x1=\"" + fmt2(x) + "\" y1=\"" + fmt2(y) + "\" x2=\"" + fmt2(x + 18) + "\" y2=\"" + fmt2(y) +
             "\" stroke=\"" + color + "\" stroke-width=\"2\"/>\n";
    body_ += "<text x=\"" + fmt2(x + 24) + "\" y=\"" + fmt2(y + 4) + "\">" + label + "</text>\n";
  }

  [[nodiscard]] std::string finish(const std::string& title, const std::string& ylabel, int yticks) const {
    std::string s = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + fmt2(kWidth) + "\" height=\"" +
                    fmt2(kHeight) + "\" font-family=\"sans-serif\" font-size=\"11\">\n";
    s += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    s += "<text x=\"" + fmt2(kLeft) + "\" y=\"20\" font-size=\"14\">" + title + "</text>\n";
    s += "<rect x=\"" + fmt2(kLeft) + "\" y=\"" + fmt2(kTop) + "\" width=\"" + fmt2(kPlotW) + "\" height=\"" +
         fmt2(kPlotH) + "\" fill=\"none\" stroke=\"black\"/>\n";
    for (int i = 0; i <= yticks; ++i) {
      const double v = y0_ + (y1_ - y0_) * i / yticks;
      s += "<text x=\"" + fmt2(kLeft - 6) + "\" y=\"" + fmt2(py(v) + 4) + "\" text-anchor=\"end\">" + fmt2(v) +
           "</text>\n";
    }
    for (int i = 0; i <= 5; ++i) {
      const double t = t0_ + (t1_ - t0_) * i / 5;
      s += "<text x=\"" + fmt2(px(t)) + "\" y=\"" + fmt2(kTop + kPlotH + 16) + "\" text-anchor=\"middle\">" +
           fmt2(t) + "</text>\n";
    }
    s += "<text x=\"" + fmt2(kLeft + kPlotW / 2) + "\" y=\"" + fmt2(kHeight - 8) +
         "\" text-anchor=\"middle\">time [min]</text>\n";
    s += "<text x=\"16\" y=\"" + fmt2(kTop + kPlotH / 2) + "\" transform=\"rotate(-90 16 " +
         fmt2(kTop + kPlotH / 2) + ")\" text-anchor=\"middle\">" + ylabel + "</text>\n";
    return s + body_ + "</svg>\n";
  }

 private:
  static constexpr double kWidth = 900, kHeight = 480, kLeft = 70, kTop = 36, kPlotW = 680, kPlotH = 390;
  double t0_, t1_, y0_, y1_;
  std::string body_;
};

inline std::vector<double> column_values(const CsvTable& t, const std::string& name) {
  const std::size_t c = t.column(name);
  std::vector<double> v(t.rows());
  for (std::size_t r = 0; r < t.rows(); ++r) v[r] = t.number(r, c);
  return v;
}

}  // namespace detail

inline constexpr double kTemperaturePlotMin = 341.0;
inline constexpr double kTemperaturePlotMax = 358.0;

/// All stage temperatures against time. The y-axis is clipped to
/// [341, 358] K with the pure-component boiling points dashed.
inline std::string temperature_plot_svg(const CsvTable& table, const ColumnParams& p = {}) {
  if (table.rows() == 0) throw FormatError("trajectory file has no rows");
  std::size_t n = 0;
  while (table.has_column("T_" + std::to_string(n + 1))) ++n;
  if (n < 2) throw FormatError("trajectory file has no stage temperature columns");
  const auto t = detail::column_values(table, "t");
  detail::SvgCanvas c(t.front(), t.back(), kTemperaturePlotMin, kTemperaturePlotMax);
  for (std::size_t k = 2; k < n; ++k) {
    c.polyline(t, detail::column_values(table, "T_" + std::to_string(k)),
               "stroke=\"#9e9e9e\" stroke-width=\"0.8\"");
  }
  c.polyline(t, detail::column_values(table, "T_1"), "stroke=\"#c62828\" stroke-width=\"1.8\"");
  c.polyline(t, detail::column_values(table, "T_" + std::to_string(n)), "stroke=\"#1565c0\" stroke-width=\"1.8\"");
  const std::string dashed = "stroke=\"black\" stroke-width=\"1\" stroke-dasharray=\"6,4\"";
  c.hline(p.T_bL, dashed);
  c.hline(p.T_bH, dashed);
  c.legend(0, "reboiler (stage 1)", "#c62828");
  c.legend(1, "condenser (stage " + std::to_string(n) + ")", "#1565c0");
  c.legend(2, "other stages", "#9e9e9e");
  return c.finish("Stage temperatures", "temperature [K]", 17);
}

/// Reflux and boilup against time; a shaded band is drawn per control only
/// when the file carries the noise-envelope columns.
inline std::string controls_plot_svg(const CsvTable& table) {
  if (table.rows() == 0) throw FormatError("trajectory file has no rows");
  const auto t = detail::column_values(table, "t");
  const auto lt = detail::column_values(table, "L_T");
  const auto vb = detail::column_values(table, "V_B");
  const bool envelope = table.has_column("L_T_min") && table.has_column("V_B_min");
  double lo = std::min(*std::min_element(lt.begin(), lt.end()), *std::min_element(vb.begin(), vb.end()));
  double hi = std::max(*std::max_element(lt.begin(), lt.end()), *std::max_element(vb.begin(), vb.end()));
  std::vector<double> lt_lo, lt_hi, vb_lo, vb_hi;
  if (envelope) {
    lt_lo = detail::column_values(table, "L_T_min");
    lt_hi = detail::column_values(table, "L_T_max");
    vb_lo = detail::column_values(table, "V_B_min");
    vb_hi = detail::column_values(table, "V_B_max");
    lo = std::min({lo, *std::min_element(lt_lo.begin(), lt_lo.end()), *std::min_element(vb_lo.begin(), vb_lo.end())});
    hi = std::max({hi, *std::max_element(lt_hi.begin(), lt_hi.end()), *std::max_element(vb_hi.begin(), vb_hi.end())});
  }
  const double pad = 0.05 * std::max(hi - lo, 1e-3);
  detail::SvgCanvas c(t.front(), t.back(), lo - pad, hi + pad);
  if (envelope) {
    c.band(t, lt_lo, lt_hi, "fill=\"#ef9a9a\" fill-opacity=\"0.5\" stroke=\"none\" class=\"envelope\"");
    c.band(t, vb_lo, vb_hi, "fill=\"#90caf9\" fill-opacity=\"0.5\" stroke=\"none\" class=\"envelope\"");
  }
  c.polyline(t, lt, "stroke=\"#c62828\" stroke-width=\"1.5\"");
  c.polyline(t, vb, "stroke=\"#1565c0\" stroke-width=\"1.5\"");
  c.legend(0, "L_T", "#c62828");
  c.legend(1, "V_B", "#1565c0");
  if (envelope) c.legend(2, "noise envelope", "#bdbdbd");
  return c.finish("Control outputs", "flow [kmol/min]", 8);
}

inline std::string plot_svg(const CsvTable& table, PlotKind kind, const ColumnParams& p = {}) {
  return kind == PlotKind::temperature ? temperature_plot_svg(table, p) : controls_plot_svg(table);
}

}  // namespace colflux
