#include <cmath>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "riskfield/data.hpp"
#include "riskfield/eval.hpp"
#include "riskfield/scenarios.hpp"
#include "support/oracles.hpp"

using namespace riskfield;

namespace {

Trajectory line(double y, double v, std::size_t n, double dt = 0.1) {
  Trajectory t;
  for (std::size_t i = 0; i < n; ++i) {
    t.t.push_back(dt * static_cast<double>(i));
    t.states.push_back({v * dt * static_cast<double>(i), y, v, 0});
    if (i + 1 < n) t.controls.push_back({0, 0});
  }
  return t;
}

}  // namespace

TEST(Median, OddAndEven) {
  EXPECT_EQ(median({0, 5, 1}), 1.0);
  EXPECT_EQ(median({4, 1, 3, 2}), 2.5);
  EXPECT_THROW(median({}), std::invalid_argument);
  EXPECT_DOUBLE_EQ(quantile({1, 2, 3, 4, 5}, 0.25), 2.0);
  EXPECT_DOUBLE_EQ(quantile({0, 10}, 0.95), 9.5);
}

TEST(MedianTrajectory, SingleMember) {
  Ensemble e;
  e.members = {line(1.0, 10, 5)};
  EXPECT_EQ(median_trajectory(e).states, e.members[0].states);
}

TEST(MedianTrajectory, CoordinateWise) {
  Ensemble e;
  e.members = {line(0, 10, 4), line(1, 10, 4), line(5, 10, 4)};
  for (const auto& s : median_trajectory(e).states) EXPECT_EQ(s.y, 1.0);
}

TEST(MedianTrajectory, MirroredPair) {
  Ensemble e;
  e.members = {line(2.5, 10, 4), line(-2.5, 10, 4)};
  for (const auto& s : median_trajectory(e).states) EXPECT_EQ(s.y, 0.0);
}

TEST(MedianTrajectory, RejectsMisaligned) {
  Ensemble e;
  e.members = {line(0, 10, 4), line(0, 10, 5)};
  EXPECT_THROW(median_trajectory(e), std::invalid_argument);
  e.members = {line(0, 10, 4), line(0, 10, 4, 0.2)};
  EXPECT_THROW(median_trajectory(e), std::invalid_argument);
  EXPECT_THROW(median_trajectory(Ensemble{}), std::invalid_argument);
}

TEST(Deviation, Examples) {
  const auto ref = line(0, 10, 31);
  const std::vector<double> h{1, 2, 3};
  for (double d : deviation(ref, ref, h).deviations) EXPECT_EQ(d, 0.0);
  for (double d : deviation(line(2, 10, 31), ref, h).deviations) EXPECT_DOUBLE_EQ(d, 2.0);
  EXPECT_THROW(deviation(ref, ref, std::vector<double>{4.0}), std::invalid_argument);
}

TEST(Deviation, MatchesBruteForce) {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> n(0, 1);
  for (int rep = 0; rep < 100; ++rep) {
    Trajectory med, ref;
    for (int i = 0; i <= 50; ++i) {
      med.t.push_back(0.1 * i);
      ref.t.push_back(0.1 * i);
      med.states.push_back({2.0 * i + n(rng), n(rng), 20, 0});
      ref.states.push_back({2.0 * i + n(rng), n(rng), 20, 0});
    }
    const std::vector<double> h{1.0, 2.0, 5.0};
    const auto r = deviation(med, ref, h);
    const std::size_t idx[] = {10, 20, 50};
    for (std::size_t k = 0; k < 3; ++k) EXPECT_NEAR(r.deviations[k], oracle::deviation_at_sample(med, idx[k], ref), 1e-12);
  }
}

TEST(Deviation, RigidMotionInvariant) {
  Trajectory med = line(0.7, 12, 40), ref = line(0, 11, 40);
  for (auto& s : ref.states) s.y = 0.1 * s.x * s.x / 100;
  const std::vector<double> h{1, 2, 3.5};
  const auto a = deviation(med, ref, h);
  const double c = std::cos(1.1), s = std::sin(1.1);
  auto move = [&](Trajectory t) {
    for (auto& p : t.states) {
      const double x = p.x, y = p.y;
      p.x = c * x - s * y + 40;
      p.y = s * x + c * y - 7;
    }
    return t;
  };
  const auto b = deviation(move(med), move(ref), h);
  for (std::size_t k = 0; k < h.size(); ++k) EXPECT_NEAR(a.deviations[k], b.deviations[k], 1e-12);
}

TEST(Summarize, MinMedianMax) {
  std::vector<DeviationReport> cases{{{1}, {0.5}}, {{1}, {2.0}}, {{1}, {1.0}}};
  const auto s = summarize(cases);
  EXPECT_EQ(s.min[0], 0.5);
  EXPECT_EQ(s.median[0], 1.0);
  EXPECT_EQ(s.max[0], 2.0);
}

TEST(VelocityError, Examples) {
  Ensemble e;
  e.members = {line(0, 10, 30)};
  EXPECT_EQ(velocity_error(e, line(0, 10, 30), 1.0), 0.0);
  EXPECT_NEAR(velocity_error(e, line(0, 10.5, 30), 1.0), 0.5, 1e-12);
  EXPECT_THROW(velocity_error(e, line(0, 10, 30, 0.07), 1.0), std::invalid_argument);
}

TEST(Clearance, Examples) {
  const Course c({{0, 0}, {100, 0}}, {{50, 0}});
  EXPECT_EQ(clearance(line(0, 10, 101), c), 0.0);
  EXPECT_DOUBLE_EQ(clearance(line(1.5, 10, 101), c), 1.5);
  EXPECT_THROW(clearance(line(0, 10, 3), Course({{0, 0}, {1, 0}}, {})), std::invalid_argument);
}

TEST(Clearance, MatchesBruteForce) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(-50, 50);
  for (int rep = 0; rep < 100; ++rep) {
    std::vector<Point2> obstacles;
    for (int k = 0; k < 5; ++k) obstacles.push_back({u(rng), u(rng)});
    const Course c({{-60, 0}, {60, 0}}, obstacles);
    Trajectory t;
    for (int i = 0; i < 40; ++i) {
      t.t.push_back(i);
      t.states.push_back({u(rng), u(rng), 1, 0});
    }
    EXPECT_NEAR(clearance(t, c), oracle::clearance(t, c), 1e-12);
  }
}

TEST(QuantileTable, HumanReferenceRows) {
  const auto t = QuantileTable::human_reference();
  EXPECT_EQ(t.low, (RiskParams{0.248, 0.0, 0.0, 0.0, 14.233}));
  EXPECT_EQ(t.median, (RiskParams{0.544, 16.349, 0.0, 1.416, 40.782}));
  EXPECT_EQ(t.high, (RiskParams{0.939, 110.864, 0.025, 11.827, 99.543}));
}

TEST(Sweep, ReproducibleAndSharesMedians) {
  const auto c = make_stadium_course(four_obstacle_loop());
  SamplerConfig cfg;
  cfg.n_steps = 80;
  cfg.seed = 3;
  const auto s0 = state_on_course(c, 0.0, 20.0);
  const auto a = sweep(QuantileTable::human_reference(), "B", 5, c, s0, cfg);
  const auto b = sweep(QuantileTable::human_reference(), "B", 5, c, s0, cfg);
  for (std::size_t l = 0; l < 3; ++l) {
    EXPECT_EQ(a.levels[l].stats.median_clearance, b.levels[l].stats.median_clearance);
    EXPECT_EQ(a.levels[l].ensemble.members[2].states, b.levels[l].ensemble.members[2].states);
    EXPECT_EQ(a.levels[l].params.A, 0.544);
  }
  EXPECT_EQ(a.levels[0].params.B, 0.0);
  EXPECT_EQ(a.levels[2].params.B, 110.864);
  EXPECT_THROW(sweep(QuantileTable::human_reference(), "Z", 5, c, s0, cfg), std::invalid_argument);
}

TEST(VelocityError, ClosedLoopOneSecond) {
  // The model predicting its own sampled trajectories one second ahead.
  const auto c = make_stadium_course(four_obstacle_loop());
  const RiskParams theta{0.544, 16.349, 0.01, 1.416, 40.782};
  SamplerConfig cfg;
  cfg.n_steps = 10;
  std::vector<Ensemble> predicted;
  std::vector<Trajectory> truth;
  for (std::uint64_t k = 0; k < 20; ++k) {
    cfg.seed = 1000 + k;
    const auto s0 = state_on_course(c, 50.0 * static_cast<double>(k), 20.0);
    truth.push_back(sample_trajectory(s0, theta, ControlGrid::standard(), cfg, c));
    cfg.seed = k;
    predicted.push_back(generate_ensemble(s0, theta, ControlGrid::standard(), cfg, c, 100));
  }
  // The truth is one more draw from the same policy, so the error cannot
  // beat the spread of ensemble members around their own median.
  double floor = 0.0;
  for (const auto& e : predicted) {
    const double v_med = median_trajectory(e).states[10].v;
    double spread = 0.0;
    for (const auto& m : e.members) spread += std::abs(m.states[10].v - v_med);
    floor += spread / static_cast<double>(e.members.size());
  }
  floor /= static_cast<double>(predicted.size());
  const double err = velocity_error(predicted, truth, 1.0);
  EXPECT_LT(err, 1.5 * floor);
  EXPECT_LT(err, 0.2);
}
