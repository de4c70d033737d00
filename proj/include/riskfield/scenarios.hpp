#pragma once

// Synthetic closed courses for simulation studies and tests.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <vector>

#include "riskfield/course.hpp"
#include "riskfield/error.hpp"
#include "riskfield/rng.hpp"

namespace riskfield {

struct ObstaclePlacement {
  double s = 0.0;        // arc coordinate along the loop, m
  double lateral = 0.0;  // m, positive to the left of travel
};

/// Stadium-shaped loop driven counter-clockwise: two straights joined by
/// semicircles, starting at the beginning of the bottom straight.
struct StadiumSpec {
  double straight = 600.0;  // m
  double radius = 150.0;    // m
  double spacing = 2.0;     // m between centerline vertices
  std::vector<ObstaclePlacement> obstacles;
  Course::Settings settings{0.3, 3.0, 20.0, true};
};

namespace detail {

// Point and unit tangent at arc length s on the stadium loop.
inline std::pair<Point2, Point2> stadium_pose(const StadiumSpec& spec, double s) {
  const double L = spec.straight;
  const double R = spec.radius;
  const double arc = std::numbers::pi * R;
  const double total = 2.0 * (L + arc);
  s = std::fmod(s, total);
  if (s < 0.0) s += total;
  if (s < L) return {{s, 0.0}, {1.0, 0.0}};
  s -= L;
  if (s < arc) {
    const double a = s / R - std::numbers::pi / 2;
    return {{L + R * std::cos(a), R + R * std::sin(a)}, {-std::sin(a), std::cos(a)}};
  }
  s -= arc;
  if (s < L) return {{L - s, 2.0 * R}, {-1.0, 0.0}};
  s -= L;
  const double a = s / R + std::numbers::pi / 2;
  return {{R * std::cos(a), R + R * std::sin(a)}, {-std::sin(a), std::cos(a)}};
}

}  // namespace detail

inline double stadium_length(const StadiumSpec& spec) {
  return 2.0 * (spec.straight + std::numbers::pi * spec.radius);
}

inline Course make_stadium_course(const StadiumSpec& spec) {
  detail::require(spec.straight > 0.0 && spec.radius > 0.0 && spec.spacing > 0.0, "stadium: invalid dimensions");
  const double total = stadium_length(spec);
  const auto n = static_cast<std::size_t>(std::ceil(total / spec.spacing));
  std::vector<Point2> centerline;
  centerline.reserve(n);
  for (std::size_t i = 0; i < n; ++i)
    centerline.push_back(detail::stadium_pose(spec, total * static_cast<double>(i) / static_cast<double>(n)).first);
  std::vector<Point2> obstacles;
  for (const auto& o : spec.obstacles) {
    const auto [p, t] = detail::stadium_pose(spec, o.s);
    obstacles.push_back({p.x - t.y * o.lateral, p.y + t.x * o.lateral});
  }
  auto settings = spec.settings;
  settings.closed = true;
  return Course(std::move(centerline), std::move(obstacles), settings);
}

/// Four-obstacle loop: each obstacle sits on the centerline a short way into
/// a straight, just after a bend.
inline StadiumSpec four_obstacle_loop() {
  StadiumSpec spec;
  const double L = spec.straight;
  const double arc = std::numbers::pi * spec.radius;
  spec.obstacles = {{120.0, 0.0}, {420.0, 0.0}, {L + arc + 120.0, 0.0}, {L + arc + 420.0, 0.0}};
  return spec;
}

/// Dense obstacle field on the default stadium: one obstacle every `spacing`
/// metres from s = 50 m to 10 m short of the loop end, each offset laterally
/// by a uniform draw in [-amplitude, amplitude]. Useful when many close
/// obstacle encounters are needed from a short log.
inline StadiumSpec obstacle_field(double spacing = 0.5, double amplitude = 1.5, std::uint64_t seed = 0) {
  detail::require(spacing > 0.0 && amplitude >= 0.0, "obstacle_field: invalid spacing or amplitude");
  StadiumSpec spec;
  const double total = stadium_length(spec);
  RandomStream rng(seed, 0);
  for (double s = 50.0; s < total - 10.0; s += spacing)
    spec.obstacles.push_back({s, amplitude * (2.0 * rng.uniform() - 1.0)});
  return spec;
}

}  // namespace riskfield
