#pragma once

// Maximum-likelihood fitting of additive risk/cost weights. For fixed
// preview time the per-observation log-probability
//   log p(u_obs | x) = -w . phi(u_obs) - log sum_k exp(-w . phi(u_k))
// is linear minus log-sum-exp in w, hence concave, and so is the total.
// Previewed features phi(u_k) are independent of w, so they are computed
// once per observation and cached; the optimizer only touches the cache.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <memory>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "riskfield/course.hpp"
#include "riskfield/dynamics.hpp"
#include "riskfield/error.hpp"
#include "riskfield/parallel.hpp"
#include "riskfield/policy.hpp"
#include "riskfield/risk_model.hpp"

namespace riskfield {

struct Observation {
  double t = 0.0;
  VehicleState state;
  std::size_t cell = 0;  // observed control, as a grid cell index
};

/// Observed (state, control cell) pairs on one course and grid.
struct Dataset {
  std::vector<Observation> observations;
  std::shared_ptr<const Course> course;
  ControlGrid grid = ControlGrid::standard();

  std::size_t size() const noexcept { return observations.size(); }

  void validate() const {
    detail::require(course != nullptr, "Dataset: missing course");
    detail::require(!observations.empty(), "Dataset: no observations");
    for (std::size_t i = 0; i < observations.size(); ++i) {
      const auto& o = observations[i];
      detail::require(o.cell < grid.size(), "Dataset: cell index out of range");
      detail::require(o.state.finite() && std::isfinite(o.t), "Dataset: non-finite observation");
      if (i > 0) detail::require(o.t >= observations[i - 1].t, "Dataset: timestamps must be nondecreasing");
    }
  }
};

/// Features of every grid cell's previewed state, per observation.
template <std::size_t K>
class FeatureCache {
 public:
  FeatureCache(std::size_t n_obs, std::size_t n_cells, double preview)
      : n_obs_(n_obs), n_cells_(n_cells), preview_(preview), features_(n_obs * n_cells * K), observed_(n_obs) {}

  std::size_t observations() const noexcept { return n_obs_; }
  std::size_t cells() const noexcept { return n_cells_; }
  double preview() const noexcept { return preview_; }

  std::span<double, K> at(std::size_t obs, std::size_t cell) {
    return std::span<double, K>(features_.data() + (obs * n_cells_ + cell) * K, K);
  }
  std::span<const double, K> at(std::size_t obs, std::size_t cell) const {
    return std::span<const double, K>(features_.data() + (obs * n_cells_ + cell) * K, K);
  }
  std::size_t& observed(std::size_t obs) { return observed_[obs]; }
  std::size_t observed(std::size_t obs) const { return observed_[obs]; }

 private:
  std::size_t n_obs_;
  std::size_t n_cells_;
  double preview_;
  std::vector<double> features_;
  std::vector<std::size_t> observed_;
};

/// Caches for several preview times in one integration pass per (observation, cell).
template <AdditiveFeatureMap M = DefaultFeatures>
std::vector<FeatureCache<kWeightCount<M>>> build_feature_caches(const Dataset& data, std::span<const double> previews,
                                                                const IntegratorConfig& integrator = {},
                                                                const M& features = {}) {
  constexpr std::size_t K = kWeightCount<M>;
  data.validate();
  detail::require(!previews.empty(), "build_feature_caches: no preview times");
  std::vector<std::size_t> order(previews.size());
  for (std::size_t i = 0; i < order.size(); ++i) {
    detail::require(std::isfinite(previews[i]) && previews[i] > 0.0, "preview times must be > 0");
    order[i] = i;
  }
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return previews[a] < previews[b]; });
  std::vector<double> horizons(order.size());
  for (std::size_t i = 0; i < order.size(); ++i) horizons[i] = previews[order[i]];

  std::vector<FeatureCache<K>> caches;
  caches.reserve(previews.size());
  for (double p : previews) caches.emplace_back(data.size(), data.grid.size(), p);

  const Course& course = *data.course;
  parallel_for(data.size(), [&](std::size_t i) {
    const auto& obs = data.observations[i];
    std::vector<VehicleState> ahead(horizons.size());
    for (auto& c : caches) c.observed(i) = obs.cell;
    for (std::size_t k = 0; k < data.grid.size(); ++k) {
      const Control u = data.grid.control(k);
      if (horizons.size() == 1) {
        ahead[0] = next_state(obs.state, u, horizons[0], integrator);
      } else {
        next_states(obs.state, u, horizons, ahead, integrator);
      }
      const auto g = features.control_features(u);
      for (std::size_t h = 0; h < horizons.size(); ++h) {
        const auto f = features.state_features(ahead[h], course);
        auto dst = caches[order[h]].at(i, k);
        std::copy(f.begin(), f.end(), dst.begin());
        std::copy(g.begin(), g.end(), dst.begin() + static_cast<std::ptrdiff_t>(f.size()));
      }
    }
  });
  return caches;
}

template <AdditiveFeatureMap M = DefaultFeatures>
FeatureCache<kWeightCount<M>> build_feature_cache(const Dataset& data, double preview,
                                                  const IntegratorConfig& integrator = {}, const M& features = {}) {
  const double previews[] = {preview};
  return std::move(build_feature_caches<M>(data, previews, integrator, features).front());
}

template <std::size_t K>
struct LikelihoodEvaluation {
  double value = 0.0;
  Weights<K> gradient{};
  Eigen::Matrix<double, static_cast<int>(K), static_cast<int>(K)> hessian =
      Eigen::Matrix<double, static_cast<int>(K), static_cast<int>(K)>::Zero();
};

/// Log-likelihood with optional gradient (observed-minus-expected features,
/// negated) and Hessian (minus the summed feature covariance).
template <std::size_t K>
LikelihoodEvaluation<K> evaluate_likelihood(const Weights<K>& w, const FeatureCache<K>& cache,
                                            bool with_gradient = true, bool with_hessian = false) {
  require_valid_weights(w);
  detail::require(cache.observations() > 0, "log-likelihood: empty dataset");
  LikelihoodEvaluation<K> out;
  const std::size_t n = cache.cells();
  std::vector<double> energy(n);
  std::vector<double> prob(n);
  double sum = 0.0;
  double carry = 0.0;  // Neumaier compensation
  for (std::size_t i = 0; i < cache.observations(); ++i) {
    double lo = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < n; ++k) {
      const auto phi = cache.at(i, k);
      double e = 0.0;
      for (std::size_t j = 0; j < K; ++j) e += w[j] * phi[j];
      energy[k] = e;
      lo = std::min(lo, e);
    }
    double z = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      prob[k] = std::exp(lo - energy[k]);
      z += prob[k];
    }
    const double term = -energy[cache.observed(i)] + lo - std::log(z);
    const double t = sum + term;
    carry += std::abs(sum) >= std::abs(term) ? (sum - t) + term : (term - t) + sum;
    sum = t;

    if (!with_gradient && !with_hessian) continue;
    std::array<double, K> mean{};
    for (std::size_t k = 0; k < n; ++k) {
      prob[k] /= z;
      const auto phi = cache.at(i, k);
      for (std::size_t j = 0; j < K; ++j) mean[j] += prob[k] * phi[j];
    }
    const auto seen = cache.at(i, cache.observed(i));
    for (std::size_t j = 0; j < K; ++j) out.gradient[j] += mean[j] - seen[j];
    if (with_hessian) {
      for (std::size_t k = 0; k < n; ++k) {
        const auto phi = cache.at(i, k);
        std::array<double, K> c;
        for (std::size_t j = 0; j < K; ++j) c[j] = phi[j] - mean[j];
        for (std::size_t a = 0; a < K; ++a)
          for (std::size_t b = 0; b <= a; ++b) out.hessian(a, b) -= prob[k] * c[a] * c[b];
      }
    }
  }
  if (with_hessian)
    for (std::size_t a = 0; a < K; ++a)
      for (std::size_t b = 0; b < a; ++b) out.hessian(b, a) = out.hessian(a, b);
  out.value = sum + carry;
  return out;
}

template <std::size_t K>
double log_likelihood(const Weights<K>& w, const FeatureCache<K>& cache) {
  return evaluate_likelihood(w, cache, false, false).value;
}

template <std::size_t K>
Weights<K> log_likelihood_gradient(const Weights<K>& w, const FeatureCache<K>& cache) {
  return evaluate_likelihood(w, cache, true, false).gradient;
}

inline double log_likelihood(const RiskParams& theta, const Dataset& data, double preview) {
  return log_likelihood(theta.to_array(), build_feature_cache(data, preview));
}

inline Weights<5> log_likelihood_gradient(const RiskParams& theta, const Dataset& data, double preview) {
  return log_likelihood_gradient(theta.to_array(), build_feature_cache(data, preview));
}

struct FitConfig {
  std::vector<double> previews{0.6, 0.8, 1.0, 1.2};
  double tolerance = 1e-6;  // sup-norm of the projected gradient
  std::size_t max_iterations = 500;
  std::vector<double> initial;  // empty: all ones
  IntegratorConfig integrator{};
};

struct TraceRow {
  std::size_t iteration = 0;
  double loglik = 0.0;
  double step = 0.0;
};

template <std::size_t K>
struct FitResult {
  Weights<K> weights{};
  double preview = 0.0;
  double loglik = 0.0;
  std::size_t n_obs = 0;
  bool converged = false;
  std::size_t iterations = 0;
  double gradient_norm = 0.0;  // sup-norm of the projected gradient at the result
  std::vector<TraceRow> trace;
};

struct FittedModel : FitResult<5> {
  FittedModel() = default;
  FittedModel(const FitResult<5>& r) : FitResult<5>(r) {}  // NOLINT(google-explicit-constructor)
  RiskParams params() const { return RiskParams::from_array(weights); }
};

/// Sup-norm of the gradient projected onto the feasible directions of w >= 0.
template <std::size_t K>
double projected_gradient_norm(const Weights<K>& w, const Weights<K>& g) {
  double m = 0.0;
  for (std::size_t j = 0; j < K; ++j) m = std::max(m, std::abs(w[j] <= 0.0 ? std::max(g[j], 0.0) : g[j]));
  return m;
}

/// Maximizes the log-likelihood over w >= 0 by projected Newton ascent
/// (Newton direction on the free variables, gradient on those held at the
/// bound) with Armijo backtracking along the projection arc. Falls back to a
/// projected-gradient step whenever the Newton step fails to ascend.
template <std::size_t K>
FitResult<K> fit(const FeatureCache<K>& cache, const FitConfig& cfg = {}) {
  detail::require(cfg.tolerance > 0.0, "FitConfig: tolerance must be > 0");
  detail::require(cache.observations() > 0, "fit: empty dataset");

  Weights<K> w;
  w.fill(1.0);
  if (!cfg.initial.empty()) {
    detail::require(cfg.initial.size() == K, "FitConfig: initial weights have the wrong size");
    for (std::size_t j = 0; j < K; ++j) w[j] = std::max(0.0, cfg.initial[j]);
  }

  FitResult<K> result;
  result.preview = cache.preview();
  result.n_obs = cache.observations();
  auto ev = evaluate_likelihood(w, cache, true, true);
  result.trace.push_back({0, ev.value, 0.0});

  auto project = [](Weights<K> x) {
    for (auto& v : x) v = std::max(v, 0.0);
    return x;
  };
  constexpr double kArmijo = 1e-4;

  // Backtracks along P(w + a d); returns true and updates w/ev on sufficient increase.
  auto line_search = [&](const Weights<K>& d, double& step_out) {
    double a = 1.0;
    for (int tries = 0; tries < 60; ++tries, a *= 0.5) {
      Weights<K> trial;
      for (std::size_t j = 0; j < K; ++j) trial[j] = w[j] + a * d[j];
      trial = project(trial);
      double predicted = 0.0;
      for (std::size_t j = 0; j < K; ++j) predicted += ev.gradient[j] * (trial[j] - w[j]);
      if (!(predicted > 0.0)) continue;
      const double value = log_likelihood(trial, cache);
      if (value >= ev.value + kArmijo * predicted) {
        w = trial;
        ev = evaluate_likelihood(w, cache, true, true);
        step_out = a;
        return true;
      }
    }
    return false;
  };

  std::size_t it = 0;
  for (; it < cfg.max_iterations; ++it) {
    const double pg = projected_gradient_norm(w, ev.gradient);
    result.gradient_norm = pg;
    if (pg < cfg.tolerance) {
      result.converged = true;
      break;
    }

    double gap = 0.0;
    for (std::size_t j = 0; j < K; ++j) gap += std::pow(w[j] - std::max(0.0, w[j] + ev.gradient[j]), 2);
    const double eps = std::min(1e-6, std::sqrt(gap));
    std::array<bool, K> active{};
    std::vector<int> free_idx;
    for (std::size_t j = 0; j < K; ++j) {
      active[j] = w[j] <= eps && ev.gradient[j] < 0.0;
      if (!active[j]) free_idx.push_back(static_cast<int>(j));
    }

    Weights<K> newton{};
    bool have_newton = false;
    if (!free_idx.empty()) {
      const auto nf = static_cast<Eigen::Index>(free_idx.size());
      Eigen::MatrixXd neg_h(nf, nf);
      Eigen::VectorXd g(nf);
      double scale = 0.0;
      for (Eigen::Index a = 0; a < nf; ++a) {
        g(a) = ev.gradient[static_cast<std::size_t>(free_idx[static_cast<std::size_t>(a)])];
        for (Eigen::Index b = 0; b < nf; ++b)
          neg_h(a, b) = -ev.hessian(free_idx[static_cast<std::size_t>(a)], free_idx[static_cast<std::size_t>(b)]);
        scale = std::max(scale, neg_h(a, a));
      }
      neg_h.diagonal().array() += 1e-10 * (1.0 + scale);
      Eigen::LDLT<Eigen::MatrixXd> ldlt(neg_h);
      if (ldlt.info() == Eigen::Success && ldlt.isPositive()) {
        const Eigen::VectorXd d = ldlt.solve(g);
        if (d.allFinite() && d.dot(g) > 0.0) {
          for (Eigen::Index a = 0; a < nf; ++a) newton[static_cast<std::size_t>(free_idx[static_cast<std::size_t>(a)])] = d(a);
          have_newton = true;
        }
      }
    }
    for (std::size_t j = 0; j < K; ++j)
      if (active[j]) newton[j] = ev.gradient[j];

    double step = 0.0;
    bool moved = have_newton && line_search(newton, step);
    if (!moved) moved = line_search(ev.gradient, step);
    if (!moved) break;  // no ascent left at working precision
    result.trace.push_back({it + 1, ev.value, step});
  }

  result.weights = w;
  result.loglik = ev.value;
  result.iterations = it;
  result.gradient_norm = projected_gradient_norm(w, ev.gradient);
  result.converged = result.gradient_norm < cfg.tolerance;
  return result;
}

inline FittedModel fit(const Dataset& data, double preview, const FitConfig& cfg = {}) {
  return fit(build_feature_cache(data, preview, cfg.integrator), cfg);
}

/// Index of the best fit: highest log-likelihood, ties (within 1e-12 relative)
/// going to the larger preview time.
template <std::size_t K>
std::size_t best_fit_index(std::span<const FitResult<K>> fits) {
  detail::require(!fits.empty(), "best_fit_index: no fits");
  std::size_t best = 0;
  for (std::size_t i = 1; i < fits.size(); ++i) {
    const double a = fits[i].loglik;
    const double b = fits[best].loglik;
    const double tie = 1e-12 * std::max({1.0, std::abs(a), std::abs(b)});
    if (a > b + tie || (std::abs(a - b) <= tie && fits[i].preview > fits[best].preview)) best = i;
  }
  return best;
}

/// Fits once per preview time in cfg.previews and keeps the most likely.
template <AdditiveFeatureMap M = DefaultFeatures>
FitResult<kWeightCount<M>> select_preview_generic(const Dataset& data, const FitConfig& cfg,
                                                  std::vector<FitResult<kWeightCount<M>>>* all = nullptr,
                                                  const M& features = {}) {
  detail::require(!cfg.previews.empty(), "select_preview: empty preview grid");
  const auto caches = build_feature_caches<M>(data, cfg.previews, cfg.integrator, features);
  std::vector<FitResult<kWeightCount<M>>> fits(caches.size());
  parallel_for(caches.size(), [&](std::size_t i) { fits[i] = fit(caches[i], cfg); });
  const auto best = best_fit_index<kWeightCount<M>>(fits);
  auto chosen = fits[best];
  if (all) *all = std::move(fits);
  return chosen;
}

inline FittedModel select_preview(const Dataset& data, const FitConfig& cfg = {},
                                  std::vector<FitResult<5>>* all = nullptr) {
  return select_preview_generic<DefaultFeatures>(data, cfg, all);
}

}  // namespace riskfield
