#pragma once

// Minimal SVG plots: a top-down view (centerline, obstacles, trajectories)
// next to a speed-vs-time panel.

#include <algorithm>
#include <cstdio>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include "riskfield/course.hpp"
#include "riskfield/io.hpp"
#include "riskfield/policy.hpp"

namespace riskfield {

struct PlotSeries {
  Trajectory trajectory;
  std::string label;
  std::string color = "#1f77b4";
  double opacity = 1.0;
};

namespace detail {

struct Box {
  double x0 = std::numeric_limits<double>::infinity();
  double y0 = std::numeric_limits<double>::infinity();
  double x1 = -std::numeric_limits<double>::infinity();
  double y1 = -std::numeric_limits<double>::infinity();

  void add(double x, double y) {
    x0 = std::min(x0, x);
    y0 = std::min(y0, y);
    x1 = std::max(x1, x);
    y1 = std::max(y1, y);
  }
  void pad(double frac, double min_pad) {
    const double px = std::max((x1 - x0) * frac, min_pad);
    const double py = std::max((y1 - y0) * frac, min_pad);
    x0 -= px, x1 += px, y0 -= py, y1 += py;
  }
};

inline std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

inline std::string xml_escape(const std::string& s) {
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

}  // namespace detail

/// Two panels: positions (zoomed to the plotted trajectories) and speed over time.
inline std::string render_svg(const Course& course, const std::vector<PlotSeries>& series) {
  constexpr double W = 480.0, H = 480.0, gap = 40.0, margin = 30.0;
  detail::Box xy;
  detail::Box tv;
  for (const auto& s : series)
    for (std::size_t i = 0; i < s.trajectory.size(); ++i) {
      xy.add(s.trajectory.states[i].x, s.trajectory.states[i].y);
      tv.add(s.trajectory.t[i], s.trajectory.states[i].v);
    }
  if (series.empty())
    for (const auto& p : course.centerline()) xy.add(p.x, p.y);
  xy.pad(0.1, 2.0);
  tv.pad(0.05, 0.5);
  // equal aspect on the map panel
  const double span = std::max(xy.x1 - xy.x0, xy.y1 - xy.y0);
  const double cx = 0.5 * (xy.x0 + xy.x1), cy = 0.5 * (xy.y0 + xy.y1);
  xy = {cx - span / 2, cy - span / 2, cx + span / 2, cy + span / 2};

  auto map_x = [&](double x) { return margin + (x - xy.x0) / (xy.x1 - xy.x0) * (W - 2 * margin); };
  auto map_y = [&](double y) { return H - margin - (y - xy.y0) / (xy.y1 - xy.y0) * (H - 2 * margin); };
  auto plot_x = [&](double t) { return W + gap + margin + (t - tv.x0) / (tv.x1 - tv.x0) * (W - 2 * margin); };
  auto plot_y = [&](double v) { return H - margin - (v - tv.y0) / (tv.y1 - tv.y0) * (H - 2 * margin); };

  std::string out = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + detail::fmt(2 * W + gap) + "\" height=\"" +
                    detail::fmt(H) + "\">\n";
  out += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out += "<clipPath id=\"map\"><rect x=\"" + detail::fmt(margin) + "\" y=\"" + detail::fmt(margin) + "\" width=\"" +
         detail::fmt(W - 2 * margin) + "\" height=\"" + detail::fmt(H - 2 * margin) + "\"/></clipPath>\n";
  out += "<g clip-path=\"url(#map)\">\n";

  std::string center = "<polyline fill=\"none\" stroke=\"#888\" stroke-dasharray=\"6,4\" points=\"";
  const auto& cl = course.centerline();
  for (std::size_t i = 0; i <= cl.size(); ++i) {
    if (i == cl.size() && !course.closed()) break;
    const auto& p = cl[i % cl.size()];
    center += detail::fmt(map_x(p.x)) + "," + detail::fmt(map_y(p.y)) + " ";
  }
  out += center + "\"/>\n";
  const double r_px = std::max(2.0, course.obstacle_diameter() / 2 / (xy.x1 - xy.x0) * (W - 2 * margin));
  for (const auto& o : course.obstacles())
    out += "<circle cx=\"" + detail::fmt(map_x(o.x)) + "\" cy=\"" + detail::fmt(map_y(o.y)) + "\" r=\"" +
           detail::fmt(r_px) + "\" fill=\"#d62728\"/>\n";
  for (const auto& s : series) {
    out += "<polyline fill=\"none\" stroke=\"" + s.color + "\" stroke-opacity=\"" + detail::fmt(s.opacity) +
           "\" points=\"";
    for (const auto& st : s.trajectory.states) out += detail::fmt(map_x(st.x)) + "," + detail::fmt(map_y(st.y)) + " ";
    out += "\"/>\n";
  }
  out += "</g>\n";
  out += "<rect x=\"" + detail::fmt(margin) + "\" y=\"" + detail::fmt(margin) + "\" width=\"" +
         detail::fmt(W - 2 * margin) + "\" height=\"" + detail::fmt(H - 2 * margin) +
         "\" fill=\"none\" stroke=\"black\"/>\n";
  out += "<text x=\"" + detail::fmt(margin) + "\" y=\"20\" font-size=\"12\">x-y (m), span " +
         detail::fmt(span) + " m</text>\n";

  out += "<rect x=\"" + detail::fmt(W + gap + margin) + "\" y=\"" + detail::fmt(margin) + "\" width=\"" +
         detail::fmt(W - 2 * margin) + "\" height=\"" + detail::fmt(H - 2 * margin) +
         "\" fill=\"none\" stroke=\"black\"/>\n";
  out += "<text x=\"" + detail::fmt(W + gap + margin) + "\" y=\"20\" font-size=\"12\">speed (m/s) vs time (s), " +
         detail::fmt(tv.y0) + " to " + detail::fmt(tv.y1) + " m/s</text>\n";
  for (const auto& s : series) {
    out += "<polyline fill=\"none\" stroke=\"" + s.color + "\" stroke-opacity=\"" + detail::fmt(s.opacity) +
           "\" points=\"";
    for (std::size_t i = 0; i < s.trajectory.size(); ++i)
      out += detail::fmt(plot_x(s.trajectory.t[i])) + "," + detail::fmt(plot_y(s.trajectory.states[i].v)) + " ";
    out += "\"/>\n";
  }
  double ly = H - margin - 10;
  for (const auto& s : series) {
    if (s.label.empty()) continue;
    out += "<text x=\"" + detail::fmt(margin + 6) + "\" y=\"" + detail::fmt(ly) + "\" font-size=\"11\" fill=\"" +
           s.color + "\">" + detail::xml_escape(s.label) + "</text>\n";
    ly -= 14;
  }
  out += "</svg>\n";
  return out;
}

}  // namespace riskfield
