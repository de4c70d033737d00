#include <cmath>
#include <memory>
#include <numbers>
#include <string>

#include <gtest/gtest.h>

#include "riskfield/data.hpp"
#include "riskfield/eval.hpp"
#include "riskfield/scenarios.hpp"

using namespace riskfield;

namespace {

const Course& loop() {
  static const Course c = make_stadium_course(four_obstacle_loop());
  return c;
}

DriverLog lap_log(std::size_t steps, std::uint64_t seed) {
  SamplerConfig cfg;
  cfg.n_steps = steps;
  cfg.seed = seed;
  return synthesize({0.544, 16.349, 0.01, 1.416, 40.782}, loop(), state_on_course(loop(), 0.0, 20.0), cfg);
}

}  // namespace

TEST(LogCsv, MinimalFile) {
  const auto log = parse_log("t,x,y,v,psi\n0,0,0,1,0\n0.1,0.1,0,1,0\n");
  EXPECT_EQ(log.size(), 2u);
  EXPECT_FALSE(log.has_controls());
}

TEST(LogCsv, DuplicateTimestampNamesRow) {
  try {
    parse_log("t,x,y,v,psi\n0,0,0,1,0\n0.1,0,0,1,0\n0.1,0,0,1,0\n", "drive.csv");
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 4u);
    EXPECT_NE(std::string(e.what()).find("drive.csv:4"), std::string::npos);
  }
}

TEST(LogCsv, RejectsMalformedRows) {
  EXPECT_THROW(parse_log("t,x,y,v,psi\n0,0,0,1\n"), ParseError);
  EXPECT_THROW(parse_log("t,x,y,v,psi\n0,0,zero,1,0\n"), ParseError);
  EXPECT_THROW(parse_log("t,x,y,v,psi\n0,0,nan,1,0\n"), ParseError);
  EXPECT_THROW(parse_log("t,x,y,v,psi\n"), ParseError);
  EXPECT_THROW(parse_log("a,b\n0,0\n"), ParseError);
}

TEST(LogCsv, CanonicalRoundTrip) {
  const auto log = lap_log(50, 3);
  const auto text = log_to_csv(log);
  const auto back = parse_log(text);
  EXPECT_EQ(log_to_csv(back), text);
  ASSERT_EQ(back.size(), log.size());
  for (std::size_t i = 0; i < log.size(); ++i) {
    EXPECT_EQ(back.rows[i].state, log.rows[i].state);
    EXPECT_EQ(back.rows[i].t, log.rows[i].t);
  }
}

TEST(DeriveControls, ConstantMotion) {
  DriverLog log;
  for (int i = 0; i < 5; ++i) log.rows.push_back({0.1 * i, {2.0 * i, 0, 20, 0.3}, std::nullopt});
  for (const auto& u : derive_controls(log)) EXPECT_EQ(u, (Control{0, 0}));
}

TEST(DeriveControls, SixtyHertzAcceleration) {
  DriverLog log;
  for (int i = 0; i < 10; ++i) log.rows.push_back({i / 60.0, {0, 0, 10 + 0.1 * i, 0}, std::nullopt});
  for (const auto& u : derive_controls(log)) EXPECT_NEAR(u.u1, 6.0, 1e-9);
}

TEST(DeriveControls, HeadingWrap) {
  DriverLog log;
  log.rows.push_back({0.0, {0, 0, 10, std::numbers::pi - 0.01}, std::nullopt});
  log.rows.push_back({0.1, {0, 0, 10, -std::numbers::pi + 0.01}, std::nullopt});
  const auto u = derive_controls(log);
  EXPECT_NEAR(u[0].u2, 0.2, 1e-9);
  EXPECT_EQ(wrap_angle(std::numbers::pi), std::numbers::pi);
  EXPECT_NEAR(wrap_angle(-std::numbers::pi), std::numbers::pi, 1e-15);
}

TEST(DeriveControls, RecoversSynthesizedControls) {
  const auto log = lap_log(300, 5);
  const auto u = derive_controls(log);
  for (std::size_t i = 0; i + 1 < log.size(); ++i) {
    EXPECT_LT(std::abs(u[i].u1 - log.rows[i].control->u1), 0.02);
    EXPECT_LT(std::abs(u[i].u2 - log.rows[i].control->u2), 0.02);
  }
}

TEST(Segment, FourObstaclesFullLap) {
  const auto log = lap_log(1000, 1);
  std::vector<std::string> warnings;
  const auto segs = segment_by_obstacle(log, loop(), {}, &warnings);
  ASSERT_EQ(segs.size(), 4u);
  EXPECT_TRUE(warnings.empty());
  for (std::size_t k = 0; k < 4; ++k) EXPECT_EQ(segs[k].obstacle, k);
  // coverage: a row is in a segment exactly when it is inside some window
  std::vector<bool> covered(log.size(), false);
  for (const auto& s : segs)
    for (std::size_t i = s.row_begin; i < s.row_end; ++i) covered[i] = true;
  for (std::size_t i = 0; i < log.size(); ++i) {
    const double s = loop().locate({log.rows[i].state.x, log.rows[i].state.y}).s;
    bool inside = false;
    for (std::size_t o = 0; o < 4; ++o) inside |= in_obstacle_window(s, loop().obstacle_arc(o), {}, loop());
    EXPECT_EQ(covered[i], inside) << i;
  }
}

TEST(Segment, WindowSpansLapStart) {
  auto spec = four_obstacle_loop();
  spec.obstacles = {{20.0, 0.0}};
  const auto c = make_stadium_course(spec);
  SamplerConfig cfg;
  cfg.n_steps = 200;
  cfg.seed = 2;
  // start 60 m before the lap start so the window crosses the wrap point
  const auto log = synthesize({0.544, 16.349, 0.01, 1.416, 40.782}, c, state_on_course(c, c.length() - 60.0, 20.0), cfg);
  const auto segs = segment_by_obstacle(log, c);
  ASSERT_EQ(segs.size(), 1u);
  EXPECT_EQ(segs[0].row_begin, 0u);
  const double s_first = c.locate({log.rows[0].state.x, log.rows[0].state.y}).s;
  const double s_last = c.locate({log.rows[segs[0].row_end - 1].state.x, log.rows[segs[0].row_end - 1].state.y}).s;
  EXPECT_GT(s_first, c.length() - 80.0);
  EXPECT_LT(s_last, 80.0);
}

TEST(Segment, OverlappingWindowsShareRows) {
  auto spec = four_obstacle_loop();
  spec.obstacles = {{200.0, 0.0}, {230.0, 0.0}};
  const auto c = make_stadium_course(spec);
  SamplerConfig cfg;
  cfg.n_steps = 250;
  cfg.seed = 3;
  const auto log = synthesize({0.544, 16.349, 0.01, 1.416, 40.782}, c, state_on_course(c, 0.0, 20.0), cfg);
  const auto segs = segment_by_obstacle(log, c);
  ASSERT_EQ(segs.size(), 2u);
  EXPECT_LT(segs[1].row_begin, segs[0].row_end);
}

TEST(Segment, EmptyWindowWarns) {
  const auto log = lap_log(100, 4);  // about 200 m: only the first obstacle
  std::vector<std::string> warnings;
  const auto segs = segment_by_obstacle(log, loop(), {}, &warnings);
  EXPECT_EQ(segs.size(), 1u);
  EXPECT_EQ(warnings.size(), 3u);
}

TEST(Synthesize, SameSeedSameLog) {
  EXPECT_EQ(log_to_csv(lap_log(80, 9)), log_to_csv(lap_log(80, 9)));
  EXPECT_NE(log_to_csv(lap_log(80, 9)), log_to_csv(lap_log(80, 10)));
}

TEST(Synthesize, LaneWeightTightensLateralSpread) {
  SamplerConfig cfg;
  cfg.n_steps = 150;
  cfg.seed = 21;
  const auto s0 = state_on_course(loop(), 0.0, 20.0);
  const auto loose = generate_ensemble(s0, {0.05, 0, 0.01, 1.416, 40.782}, ControlGrid::standard(), cfg, loop(), 20);
  const auto tight = generate_ensemble(s0, {2.0, 0, 0.01, 1.416, 40.782}, ControlGrid::standard(), cfg, loop(), 20);
  EXPECT_LT(ensemble_stats(tight, loop()).median_rms_centerline, ensemble_stats(loose, loop()).median_rms_centerline);
}

TEST(MakeDataset, StrideAndSnapping) {
  const auto log = lap_log(60, 6);
  auto course = std::make_shared<const Course>(loop());
  const auto d = make_dataset(log, course, ControlGrid::standard(), 6);
  EXPECT_EQ(d.size(), 11u);
  for (std::size_t i = 0; i < d.size(); ++i) {
    const auto& row = log.rows[6 * i];
    EXPECT_EQ(d.observations[i].state, row.state);
    EXPECT_EQ(d.observations[i].cell, d.grid.nearest_cell(*row.control));
  }
  EXPECT_THROW(make_dataset(log, course, ControlGrid::standard(), 0), std::invalid_argument);
}
