#pragma once

// Prediction-accuracy metrics for sampled ensembles and the one-parameter
// sweeps used to characterize driving styles.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "riskfield/course.hpp"
#include "riskfield/error.hpp"
#include "riskfield/policy.hpp"
#include "riskfield/risk_model.hpp"

namespace riskfield {

/// Median of a sample; the mean of the two middle values for even sizes.
inline double median(std::vector<double> v) {
  detail::require(!v.empty(), "median: empty sample");
  const auto mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  const double hi = v[mid];
  if (v.size() % 2 == 1) return hi;
  const double lo = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lo + hi);
}

/// Linear-interpolated quantile (q in [0, 1]) of a sample.
inline double quantile(std::vector<double> v, double q) {
  detail::require(!v.empty(), "quantile: empty sample");
  detail::require(q >= 0.0 && q <= 1.0, "quantile: q must lie in [0, 1]");
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

inline void require_aligned(const Ensemble& e) {
  detail::require(!e.members.empty(), "ensemble is empty");
  const auto& ref = e.members.front();
  for (const auto& m : e.members) {
    detail::require(m.size() == ref.size() && m.t.size() == ref.t.size(), "ensemble members differ in length");
    for (std::size_t i = 0; i < m.t.size(); ++i)
      detail::require(m.t[i] == ref.t[i], "ensemble members have different timestamps");
  }
}

/// Per-timestamp coordinate-wise median over ensemble members (x, y, v, psi
/// and the held controls).
inline Trajectory median_trajectory(const Ensemble& e) {
  require_aligned(e);
  const auto& first = e.members.front();
  Trajectory out;
  out.t = first.t;
  out.states.resize(first.size());
  out.controls.resize(first.controls.size());
  std::vector<double> buf(e.members.size());
  auto column = [&](auto get) {
    for (std::size_t m = 0; m < e.members.size(); ++m) buf[m] = get(e.members[m]);
    return median(buf);
  };
  for (std::size_t i = 0; i < first.size(); ++i) {
    out.states[i].x = column([&](const Trajectory& t) { return t.states[i].x; });
    out.states[i].y = column([&](const Trajectory& t) { return t.states[i].y; });
    out.states[i].v = column([&](const Trajectory& t) { return t.states[i].v; });
    out.states[i].psi = column([&](const Trajectory& t) { return t.states[i].psi; });
  }
  for (std::size_t i = 0; i < out.controls.size(); ++i) {
    out.controls[i].u1 = column([&](const Trajectory& t) { return t.controls[i].u1; });
    out.controls[i].u2 = column([&](const Trajectory& t) { return t.controls[i].u2; });
  }
  return out;
}

/// Minimum distance from `p` to the polyline through `pts`.
inline double point_polyline_distance(const Point2& p, std::span<const Point2> pts) {
  detail::require(!pts.empty(), "point_polyline_distance: empty polyline");
  double best = distance(p, pts.front());
  for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
    if (pts[i] == pts[i + 1]) continue;
    best = std::min(best, detail::segment_hit(p, pts[i], pts[i + 1], 0.0).distance);
  }
  return best;
}

/// Position at time `t`, interpolating linearly between samples.
inline Point2 position_at(const Trajectory& traj, double t) {
  detail::require(traj.size() > 0, "position_at: empty trajectory");
  constexpr double kSlack = 1e-9;
  detail::require(t >= traj.t.front() - kSlack && t <= traj.t.back() + kSlack,
                  "horizon lies outside the trajectory's time range");
  auto it = std::lower_bound(traj.t.begin(), traj.t.end(), t - kSlack);
  auto i = static_cast<std::size_t>(it - traj.t.begin());
  if (i >= traj.size()) i = traj.size() - 1;
  if (std::abs(traj.t[i] - t) <= kSlack || i == 0) return {traj.states[i].x, traj.states[i].y};
  const auto& a = traj.states[i - 1];
  const auto& b = traj.states[i];
  const double f = (t - traj.t[i - 1]) / (traj.t[i] - traj.t[i - 1]);
  return {a.x + f * (b.x - a.x), a.y + f * (b.y - a.y)};
}

/// Value sampled exactly at `t` (within 1e-9 s); throws when no sample is there.
inline std::size_t sample_index_at(const Trajectory& traj, double t) {
  for (std::size_t i = 0; i < traj.t.size(); ++i)
    if (std::abs(traj.t[i] - t) <= 1e-9) return i;
  throw InvalidArgument("no sample at t = " + std::to_string(t) + " (timestamps not aligned)");
}

struct DeviationReport {
  std::vector<double> horizons;    // s, relative to the trajectory start
  std::vector<double> deviations;  // m
};

/// Distance from the median trajectory's position at each horizon to the
/// reference trajectory taken as a polyline.
inline DeviationReport deviation(const Trajectory& median_traj, const Trajectory& reference,
                                 std::span<const double> horizons) {
  detail::require(reference.size() > 0, "deviation: empty reference");
  std::vector<Point2> line(reference.size());
  for (std::size_t i = 0; i < reference.size(); ++i) line[i] = {reference.states[i].x, reference.states[i].y};
  DeviationReport r;
  for (double h : horizons) {
    const Point2 p = position_at(median_traj, median_traj.t.front() + h);
    r.horizons.push_back(h);
    r.deviations.push_back(point_polyline_distance(p, line));
  }
  return r;
}

/// min / median / max of each horizon's deviation across evaluated cases.
struct DeviationSummary {
  std::vector<double> horizons;
  std::vector<double> min;
  std::vector<double> median;
  std::vector<double> max;
};

inline DeviationSummary summarize(std::span<const DeviationReport> cases) {
  detail::require(!cases.empty(), "summarize: no cases");
  DeviationSummary s;
  s.horizons = cases.front().horizons;
  for (std::size_t h = 0; h < s.horizons.size(); ++h) {
    std::vector<double> col;
    for (const auto& c : cases) {
      detail::require(c.horizons.size() == s.horizons.size(), "summarize: horizon sets differ");
      col.push_back(c.deviations[h]);
    }
    s.min.push_back(*std::min_element(col.begin(), col.end()));
    s.median.push_back(median(col));
    s.max.push_back(*std::max_element(col.begin(), col.end()));
  }
  return s;
}

/// Mean over cases of |median predicted speed - reference speed| at `horizon`
/// seconds after each case's start.
inline double velocity_error(std::span<const Ensemble> predicted, std::span<const Trajectory> references, double horizon) {
  detail::require(!predicted.empty() && predicted.size() == references.size(),
                  "velocity_error: need one reference per ensemble");
  double total = 0.0;
  for (std::size_t c = 0; c < predicted.size(); ++c) {
    const auto med = median_trajectory(predicted[c]);
    const auto& ref = references[c];
    const double v_pred = med.states[sample_index_at(med, med.t.front() + horizon)].v;
    const double v_ref = ref.states[sample_index_at(ref, ref.t.front() + horizon)].v;
    total += std::abs(v_pred - v_ref);
  }
  return total / static_cast<double>(predicted.size());
}

inline double velocity_error(const Ensemble& predicted, const Trajectory& reference, double horizon) {
  return velocity_error(std::span<const Ensemble>(&predicted, 1), std::span<const Trajectory>(&reference, 1), horizon);
}

/// Smallest distance between any trajectory position and any obstacle center.
inline double clearance(const Trajectory& traj, const Course& course) {
  detail::require(!course.obstacles().empty(), "clearance: course has no obstacles");
  double best = std::numeric_limits<double>::infinity();
  for (const auto& s : traj.states)
    for (const auto& o : course.obstacles()) best = std::min(best, distance({s.x, s.y}, o));
  return best;
}

/// Root-mean-square distance to the centerline over the trajectory's states.
inline double rms_centerline_deviation(const Trajectory& traj, const Course& course) {
  detail::require(traj.size() > 0, "rms_centerline_deviation: empty trajectory");
  double acc = 0.0;
  for (const auto& s : traj.states) {
    const double d = pt_line_distance({s.x, s.y}, course);
    acc += d * d;
  }
  return std::sqrt(acc / static_cast<double>(traj.size()));
}

// ---------------------------------------------------------------------------
// Parameter sweeps

/// 5th / 50th / 95th percentile of each weight across a population of fits.
struct QuantileTable {
  RiskParams low;
  RiskParams median;
  RiskParams high;

  /// Per-obstacle fits of human drivers at the best preview time.
  static QuantileTable human_reference() {
    return {{0.248, 0.000, 0.000, 0.000, 14.233},
            {0.544, 16.349, 0.000, 1.416, 40.782},
            {0.939, 110.864, 0.025, 11.827, 99.543}};
  }
};

inline QuantileTable quantile_table(std::span<const RiskParams> fits) {
  detail::require(!fits.empty(), "quantile_table: no fits");
  QuantileTable t;
  for (std::size_t j = 0; j < 5; ++j) {
    std::vector<double> col;
    for (const auto& f : fits) col.push_back(f[j]);
    t.low[j] = quantile(col, 0.05);
    t.median[j] = quantile(col, 0.50);
    t.high[j] = quantile(col, 0.95);
  }
  return t;
}

struct EnsembleStats {
  double median_clearance = 0.0;       // m, median over members of the per-member minimum
  double median_rms_centerline = 0.0;  // m
  double accel_variance = 0.0;         // (m/s^2)^2, over every held control
  double mean_abs_turn_rate = 0.0;     // rad/s
  std::vector<double> turn_rate_profile;  // mean u2 across members, per control step
};

inline EnsembleStats ensemble_stats(const Ensemble& e, const Course& course) {
  require_aligned(e);
  EnsembleStats s;
  std::vector<double> clear, rms, accel;
  double abs_turn = 0.0;
  std::size_t n_turn = 0;
  for (const auto& m : e.members) {
    if (!course.obstacles().empty()) clear.push_back(clearance(m, course));
    rms.push_back(rms_centerline_deviation(m, course));
    for (const auto& u : m.controls) {
      accel.push_back(u.u1);
      abs_turn += std::abs(u.u2);
      ++n_turn;
    }
  }
  s.median_clearance = clear.empty() ? std::numeric_limits<double>::infinity() : median(clear);
  s.median_rms_centerline = median(rms);
  if (!accel.empty()) {
    double mean = 0.0;
    for (double a : accel) mean += a;
    mean /= static_cast<double>(accel.size());
    for (double a : accel) s.accel_variance += (a - mean) * (a - mean);
    s.accel_variance /= static_cast<double>(accel.size());
    s.mean_abs_turn_rate = abs_turn / static_cast<double>(n_turn);
  }
  const auto steps = e.members.front().controls.size();
  s.turn_rate_profile.assign(steps, 0.0);
  for (const auto& m : e.members)
    for (std::size_t i = 0; i < steps; ++i) s.turn_rate_profile[i] += m.controls[i].u2;
  for (auto& v : s.turn_rate_profile) v /= static_cast<double>(e.members.size());
  return s;
}

struct SweepLevel {
  std::string name;  // "low", "median", "high"
  RiskParams params;
  Ensemble ensemble;
  EnsembleStats stats;
};

struct SweepResult {
  std::string param;
  std::array<SweepLevel, 3> levels;
};

/// Sets `param` to its low / median / high quantile with every other weight at
/// its median and samples n trajectories per level. All levels share the same
/// seeds, so level differences are not masked by sampling noise.
inline SweepResult sweep(const QuantileTable& table, const std::string& param, std::size_t n, const Course& course,
                         const VehicleState& s0, const SamplerConfig& cfg,
                         const ControlGrid& grid = ControlGrid::standard()) {
  const auto j = param_index(param);
  detail::require(n >= 1, "sweep: n must be >= 1");
  SweepResult r;
  r.param = param;
  const std::array<std::pair<const char*, const RiskParams*>, 3> levels{
      {{"low", &table.low}, {"median", &table.median}, {"high", &table.high}}};
  for (std::size_t l = 0; l < 3; ++l) {
    auto& level = r.levels[l];
    level.name = levels[l].first;
    level.params = table.median;
    level.params[j] = (*levels[l].second)[j];
    level.ensemble = generate_ensemble(s0, level.params, grid, cfg, course, n);
    level.stats = ensemble_stats(level.ensemble, course);
  }
  return r;
}

}  // namespace riskfield
