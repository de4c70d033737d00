#pragma once

#include <array>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <numeric>
#include <string>
#include <string_view>

#include "riskfield/course.hpp"
#include "riskfield/dynamics.hpp"
#include "riskfield/error.hpp"

namespace riskfield {

template <std::size_t K>
using Weights = std::array<double, K>;

/// Additive risk/cost model: risk(x) = sum_j p_j f_j(x), cost(u) = sum_i q_i g_i(u)
/// with nonnegative features. Anything satisfying this concept can be used by
/// the policy and the likelihood fit; weights are ordered (p..., q...).
template <class M>
concept AdditiveFeatureMap = requires(const M& m, const VehicleState& s, const Control& u, const Course& c) {
  { M::kStateFeatures } -> std::convertible_to<std::size_t>;
  { M::kControlFeatures } -> std::convertible_to<std::size_t>;
  { M::kName } -> std::convertible_to<std::string_view>;
  { m.state_features(s, c) } -> std::same_as<std::array<double, M::kStateFeatures>>;
  { m.control_features(u) } -> std::same_as<std::array<double, M::kControlFeatures>>;
};

template <AdditiveFeatureMap M>
inline constexpr std::size_t kWeightCount = M::kStateFeatures + M::kControlFeatures;

/// Lane keeping, obstacle proximity and speed tracking on the state side;
/// squared acceleration and squared turn rate on the control side.
struct LaneObstacleSpeedFeatures {
  static constexpr std::size_t kStateFeatures = 3;
  static constexpr std::size_t kControlFeatures = 2;
  static constexpr std::string_view kName = "eq3-eq4";

  /// (centerline distance^2, exp(-obstacle distance^2 / d_o^2), (v - v_tgt)^2).
  /// The obstacle term is 0 when no obstacle lies ahead or the course has none.
  std::array<double, 3> state_features(const VehicleState& s, const Course& course) const {
    const Point2 pos{s.x, s.y};
    const auto where = course.locate(pos);
    double obstacle = 0.0;
    if (const auto next = course.next_obstacle_at(where.s)) {
      const double d = distance(pos, course.obstacles()[*next]);
      const double d0 = course.obstacle_diameter();
      obstacle = std::exp(-(d * d) / (d0 * d0));
    }
    const double dv = s.v - course.v_tgt();
    return {where.distance * where.distance, obstacle, dv * dv};
  }

  std::array<double, 2> control_features(const Control& u) const {
    return {u.u1 * u.u1, u.u2 * u.u2};
  }
};

using DefaultFeatures = LaneObstacleSpeedFeatures;

/// Weights of the default model. A: centerline deviation, B: obstacle,
/// C: speed deviation, D: acceleration cost, E: turn-rate cost.
struct RiskParams {
  double A = 0.0;
  double B = 0.0;
  double C = 0.0;
  double D = 0.0;
  double E = 0.0;

  static constexpr std::array<std::string_view, 5> kNames{"A", "B", "C", "D", "E"};

  Weights<5> to_array() const noexcept { return {A, B, C, D, E}; }

  static RiskParams from_array(const Weights<5>& w) { return {w[0], w[1], w[2], w[3], w[4]}; }

  double& operator[](std::size_t i) {
    switch (i) {
      case 0: return A;
      case 1: return B;
      case 2: return C;
      case 3: return D;
      case 4: return E;
      default: throw InvalidArgument("RiskParams: index out of range");
    }
  }
  double operator[](std::size_t i) const { return const_cast<RiskParams&>(*this)[i]; }

  bool valid() const noexcept {
    for (double w : to_array())
      if (!std::isfinite(w) || w < 0.0) return false;
    return true;
  }

  friend bool operator==(const RiskParams&, const RiskParams&) = default;
};

/// Index of a parameter name ("A".."E"); throws on anything else.
inline std::size_t param_index(std::string_view name) {
  for (std::size_t i = 0; i < RiskParams::kNames.size(); ++i)
    if (RiskParams::kNames[i] == name) return i;
  throw InvalidArgument("unknown risk parameter '" + std::string(name) + "' (expected one of A..E)");
}

template <std::size_t K>
inline void require_valid_weights(const Weights<K>& w) {
  for (double x : w) detail::require(std::isfinite(x) && x >= 0.0, "risk weights must be finite and >= 0");
}

inline std::array<double, 3> state_features(const VehicleState& s, const Course& course) {
  return DefaultFeatures{}.state_features(s, course);
}

inline double risk(const VehicleState& s, const RiskParams& theta, const Course& course) {
  detail::require(theta.valid(), "risk: parameters must be finite and >= 0");
  const auto f = state_features(s, course);
  return theta.A * f[0] + theta.B * f[1] + theta.C * f[2];
}

inline double cost(const Control& u, const RiskParams& theta) {
  detail::require(theta.valid(), "cost: parameters must be finite and >= 0");
  return theta.D * u.u1 * u.u1 + theta.E * u.u2 * u.u2;
}

/// risk + cost for a state/control feature pair under generic weights.
template <AdditiveFeatureMap M>
inline double energy(const Weights<kWeightCount<M>>& w, const std::array<double, M::kStateFeatures>& f,
                     const std::array<double, M::kControlFeatures>& g) {
  double e = 0.0;
  for (std::size_t j = 0; j < f.size(); ++j) e += w[j] * f[j];
  for (std::size_t i = 0; i < g.size(); ++i) e += w[f.size() + i] * g[i];
  return e;
}

}  // namespace riskfield
