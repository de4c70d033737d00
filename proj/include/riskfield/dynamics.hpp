#pragma once

// Unicycle kinematics: x' = v cos(psi), y' = v sin(psi), v' = u1, psi' = u2,
// integrated with fixed-step classical Runge-Kutta under a constant control.

#include <algorithm>
#include <cmath>
#include <span>

#include "riskfield/error.hpp"

namespace riskfield {

struct VehicleState {
  double x = 0.0;    // m, east
  double y = 0.0;    // m, north
  double v = 0.0;    // m/s
  double psi = 0.0;  // rad, unwrapped

  bool finite() const noexcept {
    return std::isfinite(x) && std::isfinite(y) && std::isfinite(v) && std::isfinite(psi);
  }
  friend bool operator==(const VehicleState&, const VehicleState&) = default;
};

struct Control {
  double u1 = 0.0;  // acceleration, m/s^2
  double u2 = 0.0;  // turning rate, rad/s

  bool finite() const noexcept { return std::isfinite(u1) && std::isfinite(u2); }
  friend bool operator==(const Control&, const Control&) = default;
};

struct VehicleStateRate {
  double dx = 0.0;
  double dy = 0.0;
  double dv = 0.0;
  double dpsi = 0.0;
};

struct IntegratorConfig {
  double step = 0.01;  // s
};

inline VehicleStateRate derivative(const VehicleState& s, const Control& u) {
  detail::require(s.finite() && u.finite(), "derivative: non-finite state or control");
  return {s.v * std::cos(s.psi), s.v * std::sin(s.psi), u.u1, u.u2};
}

namespace detail {

// Fixed-step RK4 over [0, duration]. For this system the two midpoint stages
// coincide (the rate depends only on v and psi, which evolve independently of
// the stage slopes for x and y), so each step needs one midpoint and one
// endpoint heading. Heading cosines/sines are advanced by exact rotation
// through the half-step angle instead of fresh trig calls.
inline VehicleState rk4_constant_control(VehicleState s, const Control& u, double duration,
                                         double step) {
  const double q = duration / step;
  const double nearest = std::round(q);
  long long full = 0;
  double last = 0.0;
  if (std::abs(q - nearest) <= 1e-9 * std::max(1.0, q)) {
    full = static_cast<long long>(nearest);
  } else {
    full = static_cast<long long>(std::floor(q));
    last = duration - static_cast<double>(full) * step;
  }

  auto advance = [&](double h, double& c, double& sn, double ca, double sa) {
    const double cm = c * ca - sn * sa;
    const double sm = sn * ca + c * sa;
    const double ce = cm * ca - sm * sa;
    const double se = sm * ca + cm * sa;
    const double vm = s.v + 0.5 * h * u.u1;
    const double ve = s.v + h * u.u1;
    s.x += h / 6.0 * (s.v * c + 4.0 * vm * cm + ve * ce);
    s.y += h / 6.0 * (s.v * sn + 4.0 * vm * sm + ve * se);
    s.v = ve;
    s.psi += h * u.u2;
    c = ce;
    sn = se;
  };

  if (full > 0) {
    double c = std::cos(s.psi);
    double sn = std::sin(s.psi);
    const double half = 0.5 * step * u.u2;
    const double ca = std::cos(half);
    const double sa = std::sin(half);
    for (long long i = 0; i < full; ++i) advance(step, c, sn, ca, sa);
  }
  if (last > 0.0) {
    double c = std::cos(s.psi);
    double sn = std::sin(s.psi);
    const double half = 0.5 * last * u.u2;
    advance(last, c, sn, std::cos(half), std::sin(half));
  }
  return s;
}

}  // namespace detail

/// State after holding `u` for `duration` seconds. Speed never goes negative:
/// once braking reaches v = 0 the vehicle stays put for the rest of the
/// interval, though its heading keeps following u2.
inline VehicleState next_state(const VehicleState& s, const Control& u, double duration,
                               const IntegratorConfig& cfg = {}) {
  detail::require(s.finite() && u.finite(), "next_state: non-finite state or control");
  detail::require(std::isfinite(duration) && duration >= 0.0, "next_state: duration must be >= 0");
  detail::require(std::isfinite(cfg.step) && cfg.step > 0.0, "next_state: step must be > 0");
  if (duration == 0.0) return s;

  double moving = duration;
  if (u.u1 < 0.0 && s.v + u.u1 * duration < 0.0) moving = std::max(0.0, s.v / -u.u1);

  VehicleState out = moving > 0.0 ? detail::rk4_constant_control(s, u, moving, cfg.step) : s;
  if (moving < duration) {
    out.v = 0.0;
    out.psi += u.u2 * (duration - moving);
  }
  return out;
}

/// States at each of the ascending `horizons`, integrated in one pass by
/// chaining from the previous horizon.
inline void next_states(const VehicleState& s, const Control& u, std::span<const double> horizons,
                        std::span<VehicleState> out, const IntegratorConfig& cfg = {}) {
  detail::require(horizons.size() == out.size(), "next_states: output size mismatch");
  VehicleState at = s;
  double t = 0.0;
  for (std::size_t i = 0; i < horizons.size(); ++i) {
    detail::require(horizons[i] >= t, "next_states: horizons must be ascending");
    at = next_state(at, u, horizons[i] - t, cfg);
    t = horizons[i];
    out[i] = at;
  }
}

}  // namespace riskfield
