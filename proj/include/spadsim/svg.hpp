#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <string>
#include <vector>

/** @file spadsim/svg.hpp
    @brief Minimal deterministic SVG line plots for inspecting curves and waveforms.
*/

namespace spadsim
{
  struct PlotSeries
  {
    std::string name;
    std::vector<double> x;
    std::vector<double> y;
    std::string color = "#1f77b4";
  };

  struct LinePlot
  {
    std::string title;
    std::string x_label;
    std::string y_label;
    std::vector<PlotSeries> series;
    bool log_x = false;
    bool markers = false;
  };

  namespace detail
  {
    inline std::string num(double v)
    {
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.4g", v);
      return buf;
    }

    inline std::string px(double v)
    {
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.2f", v);
      return buf;
    }
  }

  inline void write_svg(std::ostream& os, const LinePlot& plot)
  {
    constexpr double W = 720, H = 440, L = 80, R = 150, T = 40, B = 60;
    auto tx = [&](double x) { return plot.log_x ? std::log10(x) : x; };
    double x0 = INFINITY, x1 = -INFINITY, y0 = INFINITY, y1 = -INFINITY;
    for (const auto& s : plot.series)
      for (std::size_t i = 0; i < s.x.size(); ++i)
      {
        if (plot.log_x && !(s.x[i] > 0)) continue;
        x0 = std::min(x0, tx(s.x[i]));
        x1 = std::max(x1, tx(s.x[i]));
        y0 = std::min(y0, s.y[i]);
        y1 = std::max(y1, s.y[i]);
      }
    if (!(x1 > x0)) { x0 = std::isfinite(x0) ? x0 - 1 : 0; x1 = x0 + 2; }
    if (!(y1 > y0)) { y0 = std::isfinite(y0) ? y0 - 1 : 0; y1 = y0 + 2; }
    const double pad = 0.05 * (y1 - y0);
    y0 -= pad;
    y1 += pad;
    auto sx = [&](double x) { return L + (tx(x) - x0) / (x1 - x0) * (W - L - R); };
    auto sy = [&](double y) { return H - B - (y - y0) / (y1 - y0) * (H - T - B); };

    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" font-family=\"sans-serif\" font-size=\"12\">\n"
       << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
       << "<text x=\"" << W / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" << plot.title << "</text>\n"
       << "<rect x=\"" << L << "\" y=\"" << T << "\" width=\"" << W - L - R << "\" height=\"" << H - T - B
       << "\" fill=\"none\" stroke=\"black\"/>\n";
    for (int i = 0; i <= 4; ++i)
    {
      const double xv = x0 + (x1 - x0) * i / 4.0;
      const double xp = L + (W - L - R) * i / 4.0;
      os << "<text x=\"" << detail::px(xp) << "\" y=\"" << H - B + 18 << "\" text-anchor=\"middle\">"
         << detail::num(plot.log_x ? std::pow(10.0, xv) : xv) << "</text>\n";
      const double yv = y0 + (y1 - y0) * i / 4.0;
      os << "<text x=\"" << L - 6 << "\" y=\"" << detail::px(sy(yv) + 4) << "\" text-anchor=\"end\">" << detail::num(yv) << "</text>\n";
    }
    os << "<text x=\"" << (L + W - R) / 2 << "\" y=\"" << H - 15 << "\" text-anchor=\"middle\">" << plot.x_label << "</text>\n"
       << "<text x=\"18\" y=\"" << (T + H - B) / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 18 " << (T + H - B) / 2 << ")\">"
       << plot.y_label << "</text>\n";
    int row = 0;
    for (const auto& s : plot.series)
    {
      os << "<polyline fill=\"none\" stroke=\"" << s.color << "\" stroke-width=\"1.5\" points=\"";
      for (std::size_t i = 0; i < s.x.size(); ++i)
        if (!plot.log_x || s.x[i] > 0) os << detail::px(sx(s.x[i])) << ',' << detail::px(sy(s.y[i])) << ' ';
      os << "\"/>\n";
      if (plot.markers)
        for (std::size_t i = 0; i < s.x.size(); ++i)
          if (!plot.log_x || s.x[i] > 0)
            os << "<circle cx=\"" << detail::px(sx(s.x[i])) << "\" cy=\"" << detail::px(sy(s.y[i])) << "\" r=\"2.5\" fill=\"" << s.color << "\"/>\n";
      const double ly = T + 12 + 18 * row++;
      os << "<line x1=\"" << W - R + 10 << "\" y1=\"" << ly << "\" x2=\"" << W - R + 30 << "\" y2=\"" << ly << "\" stroke=\"" << s.color
         << "\" stroke-width=\"2\"/>\n"
         << "<text x=\"" << W - R + 35 << "\" y=\"" << ly + 4 << "\">" << s.name << "</text>\n";
    }
    os << "</svg>\n";
  }
}
