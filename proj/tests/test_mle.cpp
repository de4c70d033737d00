#include <algorithm>
#include <cmath>
#include <memory>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "riskfield/data.hpp"
#include "riskfield/mle.hpp"
#include "riskfield/scenarios.hpp"
#include "support/oracles.hpp"

using namespace riskfield;

namespace {

std::shared_ptr<const Course> road() {
  static const auto c = std::make_shared<const Course>(Course({{0, 0}, {3000, 0}}, {{150, 0.3}, {330, -0.4}}));
  return c;
}

Dataset random_dataset(std::mt19937_64& rng, std::size_t n) {
  std::uniform_real_distribution<double> x(100, 400), lat(-2, 2), v(14, 24), psi(-0.2, 0.2);
  std::uniform_int_distribution<std::size_t> cell(0, 440);
  Dataset d{{}, road(), ControlGrid::standard()};
  for (std::size_t i = 0; i < n; ++i)
    d.observations.push_back({0.1 * static_cast<double>(i), {x(rng), lat(rng), v(rng), psi(rng)}, cell(rng)});
  return d;
}

Dataset synthetic(const RiskParams& theta, std::size_t steps, std::uint64_t seed) {
  SamplerConfig cfg;
  cfg.n_steps = steps;
  cfg.seed = seed;
  const auto log = synthesize(theta, *road(), {0, 0, 20, 0}, cfg);
  return make_dataset(log, road(), ControlGrid::standard(), 1, 0, log.size() - 1);
}

}  // namespace

TEST(LogLikelihood, ZeroWeightsGiveUniform) {
  std::mt19937_64 rng(1);
  const auto d = random_dataset(rng, 25);
  EXPECT_NEAR(log_likelihood(RiskParams{}, d, 1.2), 25 * std::log(1.0 / 441.0), 1e-10);
}

TEST(LogLikelihood, ToyGrid) {
  FeatureCache<1> cache(1, 3, 1.0);
  cache.at(0, 0)[0] = 0.0;
  cache.at(0, 1)[0] = std::log(2.0);
  cache.at(0, 2)[0] = std::log(2.0);
  cache.observed(0) = 0;
  EXPECT_NEAR(log_likelihood(Weights<1>{1.0}, cache), std::log(0.5), 1e-15);
}

TEST(LogLikelihood, MatchesDirectEvaluation) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> w(0, 50);
  for (int rep = 0; rep < 3; ++rep) {
    const auto d = random_dataset(rng, 12);
    const RiskParams theta{w(rng), w(rng), w(rng), w(rng), w(rng)};
    const double got = log_likelihood(theta, d, 1.2);
    const double want = oracle::log_likelihood(theta, d, 1.2);
    EXPECT_NEAR(got, want, 1e-10 * std::max(1.0, std::abs(want)));
  }
}

TEST(LogLikelihood, MatchesActionDistribution) {
  std::mt19937_64 rng(3);
  const auto d = random_dataset(rng, 10);
  const RiskParams theta{0.544, 16.349, 0.01, 1.416, 40.782};
  double want = 0.0;
  for (const auto& o : d.observations)
    want += action_distribution(o.state, theta, d.grid, 1.0, *d.course).log_prob[o.cell];
  EXPECT_NEAR(log_likelihood(theta, d, 1.0), want, 1e-10 * std::abs(want));
}

TEST(LogLikelihood, PermutationInvariant) {
  std::mt19937_64 rng(4);
  auto d = random_dataset(rng, 30);
  const RiskParams theta{1, 5, 0.2, 2, 30};
  const double a = log_likelihood(theta, d, 1.2);
  std::reverse(d.observations.begin(), d.observations.end());
  for (std::size_t i = 0; i < d.size(); ++i) d.observations[i].t = static_cast<double>(i);
  EXPECT_NEAR(log_likelihood(theta, d, 1.2), a, 1e-10 * std::abs(a));
}

TEST(Gradient, MatchesFiniteDifferences) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> w(0.5, 20);
  for (int rep = 0; rep < 5; ++rep) {
    const auto d = random_dataset(rng, 40);
    const auto cache = build_feature_cache(d, 1.2);
    const Weights<5> theta{w(rng), w(rng), w(rng), w(rng), w(rng)};
    const auto g = log_likelihood_gradient(theta, cache);
    const auto fd = oracle::central_difference([&](const Weights<5>& x) { return log_likelihood(x, cache); }, theta, 1e-5);
    for (std::size_t j = 0; j < 5; ++j) EXPECT_NEAR(g[j], fd[j], 1e-6 * std::max(1.0, std::abs(fd[j]))) << j;
  }
}

TEST(Gradient, ZeroAtUniformAverage) {
  // Observed features equal to the uniform average: every cell observed once.
  Dataset d{{}, road(), ControlGrid::standard()};
  for (std::size_t k = 0; k < 441; ++k) d.observations.push_back({0.0, {200, 0.5, 18, 0}, k});
  const auto g = log_likelihood_gradient(RiskParams{}, d, 1.2);
  for (double x : g) EXPECT_NEAR(x, 0.0, 1e-9);
}

TEST(Hessian, NegativeSemidefiniteAndMatchesGradientDifferences) {
  std::mt19937_64 rng(6);
  const auto d = random_dataset(rng, 30);
  const auto cache = build_feature_cache(d, 1.2);
  const Weights<5> w{0.7, 8, 0.3, 1.5, 25};
  const auto ev = evaluate_likelihood(w, cache, true, true);
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix<double, 5, 5>> eig(ev.hessian);
  EXPECT_LE(eig.eigenvalues().maxCoeff(), 1e-9);
  for (std::size_t j = 0; j < 5; ++j) {
    auto hi = w, lo = w;
    hi[j] += 1e-5;
    lo[j] -= 1e-5;
    const auto gh = log_likelihood_gradient(hi, cache);
    const auto gl = log_likelihood_gradient(lo, cache);
    for (std::size_t i = 0; i < 5; ++i) {
      const double fd = (gh[i] - gl[i]) / 2e-5;
      EXPECT_NEAR(ev.hessian(static_cast<int>(i), static_cast<int>(j)), fd, 1e-5 * std::max(1.0, std::abs(fd)));
    }
  }
}

TEST(LogLikelihood, MidpointConcave) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> w(0, 100);
  const auto d = random_dataset(rng, 30);
  const auto cache = build_feature_cache(d, 1.0);
  for (int i = 0; i < 50; ++i) {
    Weights<5> a, b, m;
    for (std::size_t j = 0; j < 5; ++j) {
      a[j] = w(rng);
      b[j] = w(rng);
      m[j] = 0.5 * (a[j] + b[j]);
    }
    const double la = log_likelihood(a, cache), lb = log_likelihood(b, cache), lm = log_likelihood(m, cache);
    EXPECT_GE(lm, 0.5 * (la + lb) - 1e-9 * std::max(1.0, std::abs(lm)));
  }
}

TEST(Fit, TraceIsMonotoneAndConverges) {
  const auto d = synthetic({0.544, 16.349, 0.01, 1.416, 40.782}, 400, 1);
  const auto m = fit(d, 1.2);
  EXPECT_TRUE(m.converged);
  EXPECT_LT(m.gradient_norm, 1e-6);
  for (std::size_t i = 1; i < m.trace.size(); ++i) EXPECT_GE(m.trace[i].loglik, m.trace[i - 1].loglik);
  EXPECT_EQ(m.n_obs, d.size());
  for (double x : m.weights) EXPECT_GE(x, 0.0);
}

TEST(Fit, OptimumBeatsNearbyFeasiblePoints) {
  const auto d = synthetic({0.544, 16.349, 0.01, 1.416, 40.782}, 300, 2);
  const auto cache = build_feature_cache(d, 1.2);
  const auto m = fit(cache);
  std::mt19937_64 rng(8);
  std::normal_distribution<double> n(0, 0.05);
  for (int i = 0; i < 30; ++i) {
    auto w = m.weights;
    for (auto& x : w) x = std::max(0.0, x * (1 + n(rng)));
    EXPECT_LE(log_likelihood(w, cache), m.loglik + 1e-9);
  }
}

TEST(Fit, UniformDataGivesSmallWeights) {
  const auto d = synthetic({0, 0, 0, 0, 0}, 1500, 3);
  const auto m = fit(d, 1.2);
  EXPECT_TRUE(m.converged);
  const double uniform = static_cast<double>(d.size()) * std::log(1.0 / 441.0);
  // twice the gain is roughly chi-square with five degrees of freedom
  EXPECT_GE(m.loglik, uniform);
  EXPECT_LT(m.loglik - uniform, 10.0);
}

TEST(Fit, NonConvergenceIsFlagged) {
  const auto d = synthetic({0.544, 16.349, 0.01, 1.416, 40.782}, 200, 4);
  FitConfig cfg;
  cfg.max_iterations = 1;
  const auto m = fit(d, 1.2, cfg);
  EXPECT_FALSE(m.converged);
  EXPECT_GT(m.loglik, m.trace.front().loglik);
}

TEST(SelectPreview, SingleElementGrid) {
  const auto d = synthetic({0.544, 16.349, 0.01, 1.416, 40.782}, 150, 5);
  FitConfig cfg;
  cfg.previews = {0.8};
  std::vector<FitResult<5>> all;
  const auto m = select_preview(d, cfg, &all);
  EXPECT_EQ(m.preview, 0.8);
  ASSERT_EQ(all.size(), 1u);
  EXPECT_EQ(all[0].loglik, m.loglik);
}

TEST(SelectPreview, MatchesSeparateFits) {
  const auto d = synthetic({0.544, 16.349, 0.01, 1.416, 40.782}, 150, 6);
  std::vector<FitResult<5>> all;
  select_preview(d, {}, &all);
  ASSERT_EQ(all.size(), 4u);
  for (const auto& f : all) {
    const auto single = fit(d, f.preview);
    EXPECT_NEAR(single.loglik, f.loglik, 1e-9 * std::abs(f.loglik));
  }
}

TEST(SelectPreview, TiesGoToLargestPreview) {
  // Straight road, no obstacles, vehicle on the centerline at the target speed,
  // every cell observed once: zero weights are optimal for every preview.
  auto c = std::make_shared<const Course>(Course({{-10, 0}, {5000, 0}}, {}));
  Dataset d{{}, c, ControlGrid::standard()};
  for (int i = 0; i < 441; ++i) d.observations.push_back({0.0, {0, 0, 20, 0}, static_cast<std::size_t>(i)});
  FitConfig cfg;
  cfg.previews = {1.2, 0.6, 1.0, 0.8};
  cfg.initial = {0, 0, 0, 0, 0};
  std::vector<FitResult<5>> all;
  const auto m = select_preview(d, cfg, &all);
  EXPECT_EQ(m.preview, 1.2);
  cfg.previews = {0.6, 0.8};
  EXPECT_EQ(select_preview(d, cfg).preview, 0.8);
}

TEST(BestFitIndex, Ties) {
  std::vector<FitResult<5>> fits(3);
  fits[0].preview = 0.6;
  fits[1].preview = 1.0;
  fits[2].preview = 0.8;
  for (auto& f : fits) f.loglik = -100.0;
  EXPECT_EQ(best_fit_index<5>(fits), 1u);
  fits[2].loglik = -99.0;
  EXPECT_EQ(best_fit_index<5>(fits), 2u);
}

TEST(Dataset, Validation) {
  Dataset d{{}, road(), ControlGrid::standard()};
  EXPECT_THROW(build_feature_cache(d, 1.2), std::invalid_argument);
  d.observations.push_back({0, {0, 0, 20, 0}, 441});
  EXPECT_THROW(build_feature_cache(d, 1.2), std::invalid_argument);
  d.observations[0].cell = 3;
  EXPECT_THROW(build_feature_cache(d, 0.0), std::invalid_argument);
}
