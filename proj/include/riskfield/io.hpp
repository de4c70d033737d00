#pragma once

#include <charconv>
#include <cmath>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include <nlohmann/json.hpp>

#include "riskfield/dynamics.hpp"
#include "riskfield/error.hpp"
#include "riskfield/mle.hpp"
#include "riskfield/policy.hpp"
#include "riskfield/risk_model.hpp"

namespace riskfield {

/// Shortest decimal text that parses back to exactly `x`.
inline std::string format_double(double x) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, res.ptr);
}

inline std::optional<double> parse_double(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  if (s.empty()) return std::nullopt;
  if (s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

inline std::vector<std::string_view> split_csv_line(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const auto comma = line.find(',', start);
    out.push_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError(path, 0, "cannot open file");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

inline void write_file(const std::string& path, std::string_view contents) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path);
  out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
  if (!out) throw std::runtime_error("failed writing " + path);
}

// ---------------------------------------------------------------------------
// Driving logs / trajectories: CSV with header t,x,y,v,psi[,u1,u2]

struct LogRow {
  double t = 0.0;
  VehicleState state;
  std::optional<Control> control;  // raw control channels, carried through untouched
};

struct DriverLog {
  std::vector<LogRow> rows;
  std::string driver_id;
  std::string trial_id;

  std::size_t size() const noexcept { return rows.size(); }
  bool has_controls() const noexcept { return !rows.empty() && rows.front().control.has_value(); }
};

inline constexpr std::string_view kLogHeader = "t,x,y,v,psi";
inline constexpr std::string_view kLogHeaderWithControls = "t,x,y,v,psi,u1,u2";

inline DriverLog parse_log(std::string_view text, const std::string& source = "<log>") {
  DriverLog log;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  bool with_controls = false;
  bool header_seen = false;
  while (pos < text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    if (!header_seen) {
      if (line == kLogHeaderWithControls) with_controls = true;
      else if (line != kLogHeader)
        throw ParseError(source, line_no, "expected header '" + std::string(kLogHeader) + "[,u1,u2]'");
      header_seen = true;
      continue;
    }
    const auto fields = split_csv_line(line);
    const std::size_t expected = with_controls ? 7 : 5;
    const std::string row = "row " + std::to_string(log.rows.size() + 1);
    if (fields.size() != expected)
      throw ParseError(source, line_no, row + ": expected " + std::to_string(expected) + " fields, got " +
                                            std::to_string(fields.size()));
    double v[7];
    for (std::size_t i = 0; i < expected; ++i) {
      const auto parsed = parse_double(fields[i]);
      if (!parsed) throw ParseError(source, line_no, row + ": malformed number '" + std::string(fields[i]) + "'");
      if (!std::isfinite(*parsed)) throw ParseError(source, line_no, row + ": non-finite value");
      v[i] = *parsed;
    }
    LogRow r{v[0], {v[1], v[2], v[3], v[4]}, std::nullopt};
    if (with_controls) r.control = Control{v[5], v[6]};
    if (!log.rows.empty() && !(r.t > log.rows.back().t))
      throw ParseError(source, line_no, row + ": timestamps must be strictly increasing");
    log.rows.push_back(r);
  }
  if (!header_seen) throw ParseError(source, 0, "empty file");
  if (log.rows.empty()) throw ParseError(source, 0, "log has no rows");
  return log;
}

inline DriverLog load_log(const std::string& path) { return parse_log(read_file(path), path); }

/// Canonical CSV text: shortest round-trip numbers, LF line endings.
inline std::string log_to_csv(const DriverLog& log) {
  const bool with_controls = log.has_controls();
  std::string out(with_controls ? kLogHeaderWithControls : kLogHeader);
  out += '\n';
  for (const auto& r : log.rows) {
    out += format_double(r.t) + ',' + format_double(r.state.x) + ',' + format_double(r.state.y) + ',' +
           format_double(r.state.v) + ',' + format_double(r.state.psi);
    if (with_controls) {
      const Control u = r.control.value_or(Control{});
      out += ',' + format_double(u.u1) + ',' + format_double(u.u2);
    }
    out += '\n';
  }
  return out;
}

inline void save_log(const DriverLog& log, const std::string& path) { write_file(path, log_to_csv(log)); }

/// Log rows for a sampled trajectory. Each row carries the control applied
/// from that state; the final row repeats the last control.
inline DriverLog trajectory_to_log(const Trajectory& traj) {
  DriverLog log;
  log.rows.reserve(traj.size());
  for (std::size_t i = 0; i < traj.size(); ++i) {
    Control u{};
    if (!traj.controls.empty()) u = traj.controls[std::min(i, traj.controls.size() - 1)];
    log.rows.push_back({traj.t[i], traj.states[i], u});
  }
  return log;
}

inline Trajectory log_to_trajectory(const DriverLog& log) {
  Trajectory traj;
  for (std::size_t i = 0; i < log.size(); ++i) {
    traj.t.push_back(log.rows[i].t);
    traj.states.push_back(log.rows[i].state);
    if (i + 1 < log.size()) traj.controls.push_back(log.rows[i].control.value_or(Control{}));
  }
  return traj;
}

inline std::string trajectory_to_csv(const Trajectory& traj) { return log_to_csv(trajectory_to_log(traj)); }

// ---------------------------------------------------------------------------
// Fitted model JSON

inline nlohmann::json model_to_json(const FittedModel& m, std::string_view feature_set = DefaultFeatures::kName) {
  nlohmann::json params = nlohmann::json::object();
  const auto p = m.params();
  for (std::size_t i = 0; i < 5; ++i) params[std::string(RiskParams::kNames[i])] = p[i];
  return {{"params", params},
          {"preview", m.preview},
          {"feature_set", std::string(feature_set)},
          {"loglik", m.loglik},
          {"n_obs", m.n_obs},
          {"convergence",
           {{"converged", m.converged}, {"iterations", m.iterations}, {"gradient_norm", m.gradient_norm}}}};
}

inline FittedModel model_from_json(const nlohmann::json& j, const std::string& source = "<model>") {
  if (!j.is_object() || !j.contains("params") || !j.at("params").is_object())
    throw ParseError(source, 0, "model: missing \"params\" object");
  if (j.contains("feature_set") && j.at("feature_set") != std::string(DefaultFeatures::kName))
    throw ParseError(source, 0, "model: unsupported feature_set " + j.at("feature_set").dump());
  FittedModel m;
  RiskParams p;
  for (std::size_t i = 0; i < 5; ++i) {
    const std::string key(RiskParams::kNames[i]);
    const auto& params = j.at("params");
    if (!params.contains(key) || !params.at(key).is_number())
      throw ParseError(source, 0, "model: params." + key + " must be a number");
    p[i] = params.at(key).get<double>();
  }
  if (!p.valid()) throw ParseError(source, 0, "model: params must be finite and >= 0");
  m.weights = p.to_array();
  m.preview = 1.2;
  if (j.contains("preview")) {
    if (!j.at("preview").is_number() || !(j.at("preview").get<double>() > 0.0))
      throw ParseError(source, 0, "model: preview must be a positive number");
    m.preview = j.at("preview").get<double>();
  }
  if (j.contains("loglik") && j.at("loglik").is_number()) m.loglik = j.at("loglik").get<double>();
  if (j.contains("n_obs") && j.at("n_obs").is_number_unsigned()) m.n_obs = j.at("n_obs").get<std::size_t>();
  if (j.contains("convergence") && j.at("convergence").is_object()) {
    const auto& c = j.at("convergence");
    m.converged = c.value("converged", false);
    m.iterations = c.value("iterations", std::size_t{0});
    m.gradient_norm = c.value("gradient_norm", 0.0);
  }
  return m;
}

inline FittedModel load_model(const std::string& path) {
  const auto text = read_file(path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(path, 0, e.what());
  }
  return model_from_json(j, path);
}

inline std::string trace_to_csv(const std::vector<TraceRow>& trace) {
  std::string out = "iteration,loglik,step\n";
  for (const auto& r : trace)
    out += std::to_string(r.iteration) + ',' + format_double(r.loglik) + ',' + format_double(r.step) + '\n';
  return out;
}

}  // namespace riskfield
