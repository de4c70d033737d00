#pragma once

// Softmax operator model over a discrete control grid and the trajectory
// sampler built on it. p(u_j | x) is proportional to
// exp(-risk(x'(u_j, preview)) - cost(u_j)), with x' the state reached by
// holding u_j for the preview time.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "riskfield/course.hpp"
#include "riskfield/dynamics.hpp"
#include "riskfield/error.hpp"
#include "riskfield/parallel.hpp"
#include "riskfield/risk_model.hpp"
#include "riskfield/rng.hpp"

namespace riskfield {

/// Arithmetic sequence min, min + step, ..., min + (count - 1) * step.
/// Values are always recomputed from the index so nothing accumulates.
struct GridAxis {
  double min = 0.0;
  double step = 1.0;
  std::size_t count = 1;

  double value(std::size_t i) const noexcept { return min + static_cast<double>(i) * step; }
  double max() const noexcept { return value(count - 1); }

  std::size_t nearest(double x) const noexcept {
    if (count == 1) return 0;
    const double r = std::round((x - min) / step);
    if (!(r > 0.0)) return 0;
    return std::min(static_cast<std::size_t>(r), count - 1);
  }
};

/// Cartesian product of an acceleration axis and a turn-rate axis. Cells
/// are numbered u1-major: cell = i1 * u2.count + i2.
class ControlGrid {
 public:
  ControlGrid(GridAxis u1, GridAxis u2) : u1_(u1), u2_(u2) {
    for (const auto& a : {u1_, u2_}) {
      detail::require(a.count >= 1, "ControlGrid: axis must be nonempty");
      detail::require(std::isfinite(a.min) && std::isfinite(a.step), "ControlGrid: non-finite axis");
      detail::require(a.count == 1 || a.step > 0.0, "ControlGrid: axis must be strictly increasing");
    }
  }

  /// u1 in {-1.0, -0.9, ..., 1.0} m/s^2, u2 in {-0.5, -0.45, ..., 0.5} rad/s: 441 cells.
  static ControlGrid standard() { return {{-1.0, 0.1, 21}, {-0.5, 0.05, 21}}; }

  std::size_t size() const noexcept { return u1_.count * u2_.count; }
  const GridAxis& u1_axis() const noexcept { return u1_; }
  const GridAxis& u2_axis() const noexcept { return u2_; }

  std::size_t cell(std::size_t i1, std::size_t i2) const noexcept { return i1 * u2_.count + i2; }

  Control control(std::size_t cell) const noexcept {
    return {u1_.value(cell / u2_.count), u2_.value(cell % u2_.count)};
  }

  /// Snap a continuous control to the closest cell in normalized grid units
  /// (per-axis rounding for a regular grid, clamped to the range).
  std::size_t nearest_cell(const Control& u) const noexcept {
    return cell(u1_.nearest(u.u1), u2_.nearest(u.u2));
  }

 private:
  GridAxis u1_;
  GridAxis u2_;
};

/// Probabilities aligned to grid cells, held as log-probabilities so that
/// cells with energies thousands of units above the minimum keep a strictly
/// positive (if unrepresentable as a plain double) mass.
struct ActionDistribution {
  std::vector<double> log_prob;

  std::size_t size() const noexcept { return log_prob.size(); }
  double probability(std::size_t k) const { return std::exp(log_prob.at(k)); }

  std::vector<double> probabilities() const {
    std::vector<double> p(log_prob.size());
    std::transform(log_prob.begin(), log_prob.end(), p.begin(), [](double l) { return std::exp(l); });
    return p;
  }
};

/// log sum_k exp(-energy_k), shifted by the minimum energy.
inline double log_partition(std::span<const double> energies) {
  detail::require(!energies.empty(), "log_partition: empty energy list");
  const double lo = *std::min_element(energies.begin(), energies.end());
  double sum = 0.0;
  for (double e : energies) sum += std::exp(lo - e);
  return -lo + std::log(sum);
}

/// Normalized softmax of -energy.
inline ActionDistribution softmax(std::span<const double> energies) {
  // Work with gaps to the minimum energy so that large absolute energies do
  // not cost precision in the normalizer.
  detail::require(!energies.empty(), "softmax: empty energy list");
  const double lo = *std::min_element(energies.begin(), energies.end());
  double sum = 0.0;
  for (double e : energies) sum += std::exp(lo - e);
  const double log_sum = std::log(sum);
  ActionDistribution d;
  d.log_prob.resize(energies.size());
  for (std::size_t k = 0; k < energies.size(); ++k) d.log_prob[k] = (lo - energies[k]) - log_sum;
  return d;
}

/// risk(previewed state) + cost for every grid cell.
template <AdditiveFeatureMap M = DefaultFeatures>
std::vector<double> cell_energies(const VehicleState& s, const Weights<kWeightCount<M>>& w,
                                  const ControlGrid& grid, double preview, const Course& course,
                                  const IntegratorConfig& integrator = {}, const M& features = {}) {
  require_valid_weights(w);
  detail::require(std::isfinite(preview) && preview > 0.0, "preview time must be > 0");
  std::vector<double> e(grid.size());
  for (std::size_t k = 0; k < grid.size(); ++k) {
    const Control u = grid.control(k);
    const VehicleState ahead = next_state(s, u, preview, integrator);
    e[k] = energy<M>(w, features.state_features(ahead, course), features.control_features(u));
  }
  return e;
}

template <AdditiveFeatureMap M = DefaultFeatures>
ActionDistribution action_distribution(const VehicleState& s, const Weights<kWeightCount<M>>& w,
                                       const ControlGrid& grid, double preview, const Course& course,
                                       const IntegratorConfig& integrator = {}, const M& features = {}) {
  const auto e = cell_energies<M>(s, w, grid, preview, course, integrator, features);
  return softmax(e);
}

inline ActionDistribution action_distribution(const VehicleState& s, const RiskParams& theta,
                                              const ControlGrid& grid, double preview,
                                              const Course& course, const IntegratorConfig& integrator = {}) {
  return action_distribution<DefaultFeatures>(s, theta.to_array(), grid, preview, course, integrator);
}

/// Inverse-CDF draw of a cell index, scanning cells in grid order.
inline std::size_t sample_cell(const ActionDistribution& d, RandomStream& rng) {
  detail::require(d.size() > 0, "sample_cell: empty distribution");
  const auto p = d.probabilities();
  double total = 0.0;
  for (double x : p) total += x;
  const double target = rng.uniform() * total;
  double cum = 0.0;
  std::size_t last_positive = 0;
  for (std::size_t k = 0; k < p.size(); ++k) {
    if (p[k] > 0.0) last_positive = k;
    cum += p[k];
    if (target < cum) return k;
  }
  return last_positive;
}

inline Control sample_control(const ActionDistribution& d, const ControlGrid& grid, RandomStream& rng) {
  return grid.control(sample_cell(d, rng));
}

struct SamplerConfig {
  double preview = 1.2;     // s
  double step = 0.1;        // s, control hold time between samples
  std::size_t n_steps = 0;  // number of control decisions
  std::uint64_t seed = 0;
  IntegratorConfig integrator{};

  void validate() const {
    detail::require(std::isfinite(preview) && preview > 0.0, "SamplerConfig: preview must be > 0");
    detail::require(std::isfinite(step) && step > 0.0, "SamplerConfig: step must be > 0");
  }
};

/// States at t = 0, step, ..., n * step and the control held over each interval
/// (controls.size() == states.size() - 1).
struct Trajectory {
  std::vector<double> t;
  std::vector<VehicleState> states;
  std::vector<Control> controls;

  std::size_t size() const noexcept { return states.size(); }
};

/// One trajectory drawn from the operator model. Randomness comes from
/// RandomStream(cfg.seed, stream).
template <AdditiveFeatureMap M = DefaultFeatures>
Trajectory sample_trajectory(const VehicleState& s0, const Weights<kWeightCount<M>>& w, const ControlGrid& grid,
                             const SamplerConfig& cfg, const Course& course, std::uint64_t stream = 0,
                             const M& features = {}) {
  cfg.validate();
  detail::require(s0.finite(), "sample_trajectory: non-finite initial state");
  RandomStream rng(cfg.seed, stream);
  Trajectory traj;
  traj.t.reserve(cfg.n_steps + 1);
  traj.states.reserve(cfg.n_steps + 1);
  traj.controls.reserve(cfg.n_steps);
  traj.t.push_back(0.0);
  traj.states.push_back(s0);
  VehicleState x = s0;
  for (std::size_t i = 1; i <= cfg.n_steps; ++i) {
    const auto dist = action_distribution<M>(x, w, grid, cfg.preview, course, cfg.integrator, features);
    const Control u = sample_control(dist, grid, rng);
    x = next_state(x, u, cfg.step, cfg.integrator);
    traj.t.push_back(static_cast<double>(i) * cfg.step);
    traj.states.push_back(x);
    traj.controls.push_back(u);
  }
  return traj;
}

inline Trajectory sample_trajectory(const VehicleState& s0, const RiskParams& theta, const ControlGrid& grid,
                                    const SamplerConfig& cfg, const Course& course, std::uint64_t stream = 0) {
  return sample_trajectory<DefaultFeatures>(s0, theta.to_array(), grid, cfg, course, stream);
}

/// n trajectories from a shared initial state; member i uses stream i.
struct Ensemble {
  std::vector<Trajectory> members;
  std::uint64_t seed = 0;
  double step = 0.0;
};

template <AdditiveFeatureMap M = DefaultFeatures>
Ensemble generate_ensemble(const VehicleState& s0, const Weights<kWeightCount<M>>& w, const ControlGrid& grid,
                           const SamplerConfig& cfg, const Course& course, std::size_t n, const M& features = {}) {
  Ensemble e;
  e.seed = cfg.seed;
  e.step = cfg.step;
  e.members.resize(n);
  parallel_for(n, [&](std::size_t i) {
    e.members[i] = sample_trajectory<M>(s0, w, grid, cfg, course, i, features);
  });
  return e;
}

inline Ensemble generate_ensemble(const VehicleState& s0, const RiskParams& theta, const ControlGrid& grid,
                                  const SamplerConfig& cfg, const Course& course, std::size_t n) {
  return generate_ensemble<DefaultFeatures>(s0, theta.to_array(), grid, cfg, course, n);
}

}  // namespace riskfield
