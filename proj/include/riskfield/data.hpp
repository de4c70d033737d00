#pragma once

// Driving-log ingestion: controls from state differences, per-obstacle
// segmentation, datasets for fitting, and synthetic logs drawn from a known model.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <memory>
#include <numbers>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "riskfield/course.hpp"
#include "riskfield/error.hpp"
#include "riskfield/io.hpp"
#include "riskfield/mle.hpp"
#include "riskfield/policy.hpp"

namespace riskfield {

/// Angle wrapped to (-pi, pi].
inline double wrap_angle(double a) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  a = std::fmod(a, two_pi);
  if (a > std::numbers::pi) a -= two_pi;
  else if (a <= -std::numbers::pi) a += two_pi;
  return a;
}

/// Forward differences: u1 = dv/dt, u2 = wrap(dpsi)/dt. The last row reuses
/// the previous control.
inline std::vector<Control> derive_controls(const DriverLog& log) {
  detail::require(log.size() >= 2, "derive_controls: need at least 2 rows");
  std::vector<Control> u(log.size());
  for (std::size_t i = 0; i + 1 < log.size(); ++i) {
    const auto& a = log.rows[i];
    const auto& b = log.rows[i + 1];
    const double dt = b.t - a.t;
    detail::require(dt > 0.0, "derive_controls: timestamps must be strictly increasing");
    u[i] = {(b.state.v - a.state.v) / dt, wrap_angle(b.state.psi - a.state.psi) / dt};
  }
  u.back() = u[log.size() - 2];
  return u;
}

/// Contiguous run of log rows [row_begin, row_end) attributed to one obstacle.
struct Segment {
  std::size_t obstacle = 0;
  std::size_t row_begin = 0;
  std::size_t row_end = 0;
  double window_begin = 0.0;  // arc coordinate, may be negative / beyond length before wrapping
  double window_end = 0.0;

  std::size_t size() const noexcept { return row_end - row_begin; }
};

struct SegmentWindow {
  double before = 100.0;  // m before the obstacle
  double after = 50.0;    // m after
};

/// True when arc coordinate `s` lies in [s_obs - before, s_obs + after],
/// measured around the loop on a closed course.
inline bool in_obstacle_window(double s, double s_obs, const SegmentWindow& w, const Course& course) {
  if (!course.closed()) return s >= s_obs - w.before && s <= s_obs + w.after;
  const double len = course.length();
  if (w.before + w.after >= len) return true;
  double d = std::fmod(s - s_obs, len);
  if (d < 0.0) d += len;
  return d <= w.after || d >= len - w.before;
}

/// One segment per maximal run of consecutive rows inside an obstacle's
/// window, ordered by first row. Windows may overlap, so a row can belong to
/// several segments. Obstacles whose window holds no rows produce a warning.
inline std::vector<Segment> segment_by_obstacle(const DriverLog& log, const Course& course, const SegmentWindow& window = {},
                                                std::vector<std::string>* warnings = nullptr) {
  detail::require(!course.obstacles().empty(), "segment_by_obstacle: course has no obstacles");
  detail::require(window.before >= 0.0 && window.after >= 0.0, "segment_by_obstacle: negative window");
  std::vector<double> arc(log.size());
  for (std::size_t i = 0; i < log.size(); ++i) arc[i] = course.locate({log.rows[i].state.x, log.rows[i].state.y}).s;

  std::vector<Segment> out;
  for (std::size_t o = 0; o < course.obstacles().size(); ++o) {
    const double s_obs = course.obstacle_arc(o);
    bool any = false;
    std::size_t i = 0;
    while (i < log.size()) {
      if (!in_obstacle_window(arc[i], s_obs, window, course)) {
        ++i;
        continue;
      }
      std::size_t j = i;
      while (j < log.size() && in_obstacle_window(arc[j], s_obs, window, course)) ++j;
      out.push_back({o, i, j, s_obs - window.before, s_obs + window.after});
      any = true;
      i = j;
    }
    if (!any && warnings) warnings->push_back("obstacle " + std::to_string(o) + ": no log rows in window, segment omitted");
  }
  std::stable_sort(out.begin(), out.end(), [](const Segment& a, const Segment& b) {
    return a.row_begin != b.row_begin ? a.row_begin < b.row_begin : a.obstacle < b.obstacle;
  });
  return out;
}

inline nlohmann::json segments_to_json(const std::vector<Segment>& segments) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& s : segments)
    arr.push_back({{"obstacle", s.obstacle},
                   {"row_begin", s.row_begin},
                   {"row_end", s.row_end},
                   {"window_begin", s.window_begin},
                   {"window_end", s.window_end}});
  return {{"segments", arr}};
}

/// Fitting observations from rows [begin, end) of `log`, every `stride`-th
/// row. Controls are differenced over the whole log first, then snapped to
/// the nearest grid cell.
inline Dataset make_dataset(const DriverLog& log, std::shared_ptr<const Course> course, const ControlGrid& grid,
                            std::size_t stride = 6, std::size_t begin = 0, std::size_t end = static_cast<std::size_t>(-1)) {
  detail::require(stride >= 1, "make_dataset: stride must be >= 1");
  end = std::min(end, log.size());
  detail::require(begin < end, "make_dataset: empty row range");
  const auto controls = derive_controls(log);
  Dataset data{{}, std::move(course), grid};
  for (std::size_t i = begin; i < end; i += stride)
    data.observations.push_back({log.rows[i].t, log.rows[i].state, grid.nearest_cell(controls[i])});
  return data;
}

/// Synthetic log: a trajectory sampled from the operator model, with the
/// sampled controls attached as raw control channels.
inline DriverLog synthesize(const RiskParams& theta, const Course& course, const VehicleState& s0,
                            const SamplerConfig& cfg, const ControlGrid& grid = ControlGrid::standard()) {
  auto log = trajectory_to_log(sample_trajectory(s0, theta, grid, cfg, course));
  log.driver_id = "synthetic";
  log.trial_id = std::to_string(cfg.seed);
  return log;
}

/// Initial state on the centerline at arc coordinate `s`, heading along the course.
inline VehicleState state_on_course(const Course& course, double s, double speed) {
  const auto [p, heading] = course.pose_at(s);
  return {p.x, p.y, speed, heading};
}

}  // namespace riskfield
