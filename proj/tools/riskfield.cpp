// riskfield: command-line driver for fitting, sampling and evaluating
// risk-field operator models.
//
// Exit codes: 0 success, 1 runtime failure, 2 usage or input validation error.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include "riskfield/riskfield.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace riskfield;

namespace {

// Bad flags or unreadable / invalid inputs.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Options {
  std::string course;
  std::string log;
  std::vector<std::string> logs;
  std::string model;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<double> preview;
  std::string preview_grid = "0.6,0.8,1.0,1.2";
  std::size_t n = 0;
  std::size_t steps = 200;
  double dt = 0.1;
  std::string horizons = "1,2,5,10,20";
  std::string param;
  std::size_t stride = 0;  // 0 = derive from the log's sample interval
  bool no_segment = false;
  bool verbose = false;
};

void say(const Options& o, const std::string& msg) {
  if (o.verbose) std::cerr << msg << '\n';
}

std::string sha256_file(const std::string& path) {
  const auto bytes = read_file(path);
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr);
  std::string hex;
  char buf[3];
  for (unsigned int i = 0; i < len; ++i) {
    std::snprintf(buf, sizeof(buf), "%02x", digest[i]);
    hex += buf;
  }
  return hex;
}

std::vector<double> parse_list(const std::string& text, const char* flag) {
  std::vector<double> out;
  for (auto field : split_csv_line(text)) {
    const auto v = parse_double(field);
    if (!v || !std::isfinite(*v)) throw UsageError(std::string(flag) + ": not a number list: " + text);
    out.push_back(*v);
  }
  if (out.empty()) throw UsageError(std::string(flag) + ": empty list");
  return out;
}

void require_file(const std::string& path, const char* flag) {
  if (path.empty()) throw UsageError(std::string(flag) + " is required");
  if (!fs::is_regular_file(path)) throw UsageError(std::string(flag) + ": cannot read " + path);
}

std::uint64_t require_seed(const Options& o) {
  if (!o.seed) throw UsageError("--seed is required for this command");
  return *o.seed;
}

void require_out(const Options& o) {
  if (o.out.empty()) throw UsageError("--out is required");
}

void make_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create directory " + dir + ": " + ec.message());
}

std::string two_digit(std::size_t i) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%02zu", i);
  return buf;
}

std::string three_digit(std::size_t i) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%03zu", i);
  return buf;
}

std::string horizon_label(double h) { return format_double(h) + "s"; }

// Records what produced an output directory. Kept apart from the outputs so
// they stay byte-identical across reruns.
class Manifest {
 public:
  Manifest(std::string command, const Options& o) : command_(std::move(command)), start_(std::chrono::steady_clock::now()) {
    config_ = {{"preview_grid", o.preview_grid}, {"steps", o.steps},       {"dt", o.dt},
               {"horizons", o.horizons},         {"no_segment", o.no_segment}, {"n", o.n}};
    if (o.preview) config_["preview"] = *o.preview;
    if (!o.param.empty()) config_["param"] = o.param;
    if (o.stride) config_["stride"] = o.stride;
    if (o.seed) seed_ = *o.seed;
  }

  void input(const std::string& role, const std::string& path) {
    inputs_.push_back({{"role", role}, {"path", path}, {"sha256", sha256_file(path)}});
  }
  void set(const std::string& key, json value) { config_[key] = std::move(value); }

  void write(const std::string& path) const {
    const auto elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    char stamp[32];
    const std::time_t now = std::time(nullptr);
    std::strftime(stamp, sizeof(stamp), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
    json j = {{"command", command_}, {"config", config_},        {"inputs", inputs_},
              {"version", kVersion}, {"started_utc", stamp}, {"wall_clock_s", elapsed}};
    j["seed"] = seed_ ? json(*seed_) : json(nullptr);
    write_file(path, j.dump(2) + "\n");
  }

 private:
  std::string command_;
  std::chrono::steady_clock::time_point start_;
  json config_;
  json inputs_ = json::array();
  std::optional<std::uint64_t> seed_;
};

std::shared_ptr<const Course> read_course(const Options& o, Manifest& m) {
  require_file(o.course, "--course");
  m.input("course", o.course);
  return std::make_shared<const Course>(load_course(o.course));
}

DriverLog read_log(const std::string& path, Manifest& m) {
  require_file(path, "--log");
  m.input("log", path);
  return load_log(path);
}

RiskParams read_params(const Options& o, Manifest& m, double* preview) {
  if (o.model.empty()) {
    if (preview) *preview = o.preview.value_or(1.2);
    return QuantileTable::human_reference().median;
  }
  require_file(o.model, "--model");
  m.input("model", o.model);
  const auto model = load_model(o.model);
  if (preview) *preview = o.preview.value_or(model.preview);
  return model.params();
}

std::size_t auto_stride(const DriverLog& log, double target) {
  std::vector<double> dts;
  for (std::size_t i = 1; i < log.size(); ++i) dts.push_back(log.rows[i].t - log.rows[i - 1].t);
  if (dts.empty()) return 1;
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(target / median(dts))));
}

SamplerConfig sampler(const Options& o, double preview, std::uint64_t seed) {
  if (!(o.dt > 0.0) || !std::isfinite(o.dt)) throw UsageError("--dt must be > 0");
  SamplerConfig cfg;
  cfg.preview = preview;
  cfg.step = o.dt;
  cfg.n_steps = o.steps;
  cfg.seed = seed;
  return cfg;
}

VehicleState initial_state(const Options& o, const Course& course, Manifest& m) {
  if (o.log.empty()) return state_on_course(course, 0.0, course.v_tgt());
  return read_log(o.log, m).rows.front().state;
}

std::string params_row(const RiskParams& p) {
  std::string s;
  for (std::size_t i = 0; i < 5; ++i) s += (i ? "," : "") + format_double(p[i]);
  return s;
}

// ---------------------------------------------------------------------------

int cmd_fit(const Options& o) {
  Manifest manifest("fit", o);
  require_out(o);
  const auto course = read_course(o, manifest);
  if (o.log.empty()) throw UsageError("--log is required");
  const auto log = read_log(o.log, manifest);
  const std::size_t stride = o.stride ? o.stride : auto_stride(log, 0.1);
  manifest.set("stride_used", stride);

  FitConfig cfg;
  cfg.previews = o.preview ? std::vector<double>{*o.preview} : parse_list(o.preview_grid, "--preview-grid");
  for (double p : cfg.previews)
    if (!(p > 0.0)) throw UsageError("preview times must be > 0");

  std::vector<Segment> segments;
  if (o.no_segment) {
    segments.push_back({0, 0, log.size(), 0.0, course->length()});
  } else {
    std::vector<std::string> warnings;
    segments = segment_by_obstacle(log, *course, {}, &warnings);
    for (const auto& w : warnings) std::cerr << "warning: " << w << '\n';
    if (segments.empty()) throw UsageError("no log rows fall inside any obstacle window");
  }

  make_dir(o.out);
  std::vector<RiskParams> fits;
  bool all_converged = true;
  for (std::size_t k = 0; k < segments.size(); ++k) {
    const auto& seg = segments[k];
    if (seg.size() < 2) {
      std::cerr << "warning: segment " << k << " has fewer than 2 rows, skipped\n";
      continue;
    }
    const auto data = make_dataset(log, course, ControlGrid::standard(), stride, seg.row_begin, seg.row_end);
    std::vector<FitResult<5>> all;
    const auto model = select_preview(data, cfg, &all);
    const std::string name = o.no_segment ? "model" : "segment_" + two_digit(k);
    json j = model_to_json(model);
    if (!o.no_segment) j["segment"] = {{"obstacle", seg.obstacle}, {"row_begin", seg.row_begin}, {"row_end", seg.row_end}};
    write_file((fs::path(o.out) / (name + ".json")).string(), j.dump(2) + "\n");
    if (o.verbose) {
      for (const auto& f : all) {
        const std::string trace_name = name + "_convergence_" + format_double(f.preview) + ".csv";
        write_file((fs::path(o.out) / trace_name).string(), trace_to_csv(f.trace));
      }
    }
    say(o, name + ": preview " + format_double(model.preview) + ", loglik " + format_double(model.loglik) + ", " +
               std::to_string(data.size()) + " observations");
    if (!model.converged) {
      all_converged = false;
      std::cerr << "error: " << name << " did not converge after " << model.iterations
                << " iterations (projected gradient " << model.gradient_norm << ")\n";
    }
    fits.push_back(model.params());
  }
  if (fits.empty()) throw UsageError("no segment had enough rows to fit");

  const auto table = quantile_table(fits);
  std::string q = "quantile,A,B,C,D,E\n";
  q += "5," + params_row(table.low) + "\n";
  q += "50," + params_row(table.median) + "\n";
  q += "95," + params_row(table.high) + "\n";
  write_file((fs::path(o.out) / "quantiles.csv").string(), q);
  if (!o.no_segment) write_file((fs::path(o.out) / "segments.json").string(), segments_to_json(segments).dump(2) + "\n");
  manifest.write((fs::path(o.out) / "manifest.json").string());
  return all_converged ? 0 : 1;
}

int cmd_sample(const Options& o) {
  Manifest manifest("sample", o);
  const auto seed = require_seed(o);
  require_out(o);
  const auto course = read_course(o, manifest);
  double preview = 1.2;
  const auto theta = read_params(o, manifest, &preview);
  const auto s0 = initial_state(o, *course, manifest);
  const std::size_t n = o.n ? o.n : 100;
  const auto e = generate_ensemble(s0, theta, ControlGrid::standard(), sampler(o, preview, seed), *course, n);
  make_dir(o.out);
  for (std::size_t i = 0; i < e.members.size(); ++i)
    write_file((fs::path(o.out) / ("traj_" + three_digit(i) + ".csv")).string(), trajectory_to_csv(e.members[i]));
  write_file((fs::path(o.out) / "median.csv").string(), trajectory_to_csv(median_trajectory(e)));
  manifest.write((fs::path(o.out) / "manifest.json").string());
  return 0;
}

int cmd_synth(const Options& o) {
  Manifest manifest("synth", o);
  const auto seed = require_seed(o);
  require_out(o);
  const auto course = read_course(o, manifest);
  double preview = 1.2;
  const auto theta = read_params(o, manifest, &preview);
  const auto s0 = initial_state(o, *course, manifest);
  const auto log = synthesize(theta, *course, s0, sampler(o, preview, seed));
  const fs::path out(o.out);
  if (out.has_parent_path()) make_dir(out.parent_path().string());
  save_log(log, o.out);
  manifest.write(o.out + ".manifest.json");
  return 0;
}

int cmd_eval(const Options& o) {
  Manifest manifest("eval", o);
  const auto seed = require_seed(o);
  require_out(o);
  const auto course = read_course(o, manifest);
  double preview = 1.2;
  const auto theta = read_params(o, manifest, &preview);
  if (o.log.empty()) throw UsageError("--log (reference trajectory) is required");
  const auto log = read_log(o.log, manifest);
  const auto horizons = parse_list(o.horizons, "--horizons");
  for (double h : horizons)
    if (!(h > 0.0)) throw UsageError("--horizons must be positive");
  const double max_h = *std::max_element(horizons.begin(), horizons.end());

  // One case per segment start (or the whole log): the ensemble starts from
  // the logged state and is compared with the log from there on.
  std::vector<std::size_t> starts;
  if (o.no_segment) {
    starts.push_back(0);
  } else {
    std::vector<std::string> warnings;
    for (const auto& seg : segment_by_obstacle(log, *course, {}, &warnings)) starts.push_back(seg.row_begin);
    for (const auto& w : warnings) std::cerr << "warning: " << w << '\n';
  }
  if (starts.empty()) throw UsageError("no evaluation cases: log never enters an obstacle window");

  Options so = o;
  so.steps = static_cast<std::size_t>(std::ceil(max_h / o.dt - 1e-9));
  const auto cfg = sampler(so, preview, seed);
  const std::size_t n = o.n ? o.n : 100;

  std::vector<DeviationReport> reports;
  std::string dev = "case,row";
  std::string vel = "case,row";
  for (double h : horizons) {
    dev += "," + horizon_label(h);
    vel += "," + horizon_label(h);
  }
  dev += "\n";
  vel += "\n";
  std::vector<std::vector<double>> vel_cols(horizons.size());
  for (std::size_t c = 0; c < starts.size(); ++c) {
    const std::size_t r0 = starts[c];
    // The reference runs to the end of the log, so a prediction that is
    // slightly ahead of the driver is still measured against the path.
    Trajectory ref;
    for (std::size_t i = r0; i < log.size(); ++i) {
      ref.t.push_back(log.rows[i].t - log.rows[r0].t);
      ref.states.push_back(log.rows[i].state);
    }
    if (ref.t.back() < max_h - 1e-9) {
      std::cerr << "warning: case " << c << " (row " << r0 << ") has less than " << max_h
                << " s of reference log, skipped\n";
      continue;
    }
    auto case_cfg = cfg;
    case_cfg.seed = cfg.seed + c;  // distinct, reproducible seed per case
    const auto e = generate_ensemble(log.rows[r0].state, theta, ControlGrid::standard(), case_cfg, *course, n);
    const auto med = median_trajectory(e);
    reports.push_back(deviation(med, ref, horizons));
    dev += std::to_string(c) + "," + std::to_string(r0);
    for (double d : reports.back().deviations) dev += "," + format_double(d);
    dev += "\n";
    vel += std::to_string(c) + "," + std::to_string(r0);
    for (std::size_t h = 0; h < horizons.size(); ++h) {
      double err = std::numeric_limits<double>::quiet_NaN();
      try {
        err = velocity_error(e, ref, horizons[h]);
        vel_cols[h].push_back(err);
      } catch (const InvalidArgument&) {
        // reference not sampled at this horizon
      }
      vel += "," + format_double(err);
    }
    vel += "\n";
  }
  if (reports.empty()) throw UsageError("no case has enough reference log for the requested horizons");
  const auto summary = summarize(reports);
  auto summary_row = [&](const char* name, const std::vector<double>& v) {
    dev += std::string(name) + ",";
    for (double d : v) dev += "," + format_double(d);
    dev += "\n";
  };
  summary_row("min", summary.min);
  summary_row("median", summary.median);
  summary_row("max", summary.max);
  vel += "mean,";
  for (const auto& col : vel_cols) {
    double m = std::numeric_limits<double>::quiet_NaN();
    if (!col.empty()) {
      m = 0.0;
      for (double v : col) m += v;
      m /= static_cast<double>(col.size());
    }
    vel += "," + format_double(m);
  }
  vel += "\n";
  make_dir(o.out);
  write_file((fs::path(o.out) / "deviation.csv").string(), dev);
  write_file((fs::path(o.out) / "velocity_error.csv").string(), vel);
  manifest.write((fs::path(o.out) / "manifest.json").string());
  return 0;
}

int cmd_sweep(const Options& o) {
  Manifest manifest("sweep", o);
  const auto seed = require_seed(o);
  require_out(o);
  if (o.param.empty()) throw UsageError("--param is required (one of A, B, C, D, E)");
  try {
    (void)param_index(o.param);
  } catch (const InvalidArgument& e) {
    throw UsageError(e.what());
  }
  const auto course = read_course(o, manifest);
  const auto s0 = initial_state(o, *course, manifest);
  const std::size_t n = o.n ? o.n : 20;
  const auto result = sweep(QuantileTable::human_reference(), o.param, n, *course, s0,
                            sampler(o, o.preview.value_or(1.2), seed));
  make_dir(o.out);
  std::string summary =
      "level,A,B,C,D,E,median_clearance,median_rms_centerline,accel_variance,mean_abs_turn_rate\n";
  std::string profile = "t";
  for (const auto& level : result.levels) profile += "," + level.name;
  profile += "\n";
  for (const auto& level : result.levels) {
    const auto dir = fs::path(o.out) / level.name;
    make_dir(dir.string());
    for (std::size_t i = 0; i < level.ensemble.members.size(); ++i)
      write_file((dir / ("traj_" + three_digit(i) + ".csv")).string(), trajectory_to_csv(level.ensemble.members[i]));
    const auto& s = level.stats;
    summary += level.name + "," + params_row(level.params) + "," + format_double(s.median_clearance) + "," +
               format_double(s.median_rms_centerline) + "," + format_double(s.accel_variance) + "," +
               format_double(s.mean_abs_turn_rate) + "\n";
  }
  const auto& t = result.levels[0].ensemble.members.front().t;
  for (std::size_t i = 0; i < result.levels[0].stats.turn_rate_profile.size(); ++i) {
    profile += format_double(t[i]);
    for (const auto& level : result.levels) profile += "," + format_double(level.stats.turn_rate_profile[i]);
    profile += "\n";
  }
  write_file((fs::path(o.out) / "summary.csv").string(), summary);
  write_file((fs::path(o.out) / "turn_rate_profile.csv").string(), profile);
  manifest.write((fs::path(o.out) / "manifest.json").string());
  return 0;
}

int cmd_plot(const Options& o) {
  Manifest manifest("plot", o);
  require_out(o);
  const auto course = read_course(o, manifest);
  std::vector<std::string> paths = o.logs;
  if (!o.log.empty()) paths.insert(paths.begin(), o.log);
  static const char* palette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#9467bd", "#8c564b", "#e377c2", "#17becf"};
  std::vector<PlotSeries> series;
  for (std::size_t i = 0; i < paths.size(); ++i) {
    const auto log = read_log(paths[i], manifest);
    series.push_back({log_to_trajectory(log), fs::path(paths[i]).filename().string(), palette[i % 7],
                      paths.size() > 7 ? 0.4 : 1.0});
  }
  const fs::path out(o.out);
  if (out.has_parent_path()) make_dir(out.parent_path().string());
  write_file(o.out, render_svg(*course, series));
  manifest.write(o.out + ".manifest.json");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Risk-field operator models: fit, sample, evaluate and sweep"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);
  Options o;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--course", o.course, "Course JSON file");
    sub->add_option("--out", o.out, "Output directory (file for synth and plot)");
    sub->add_flag("--verbose", o.verbose, "Progress on stderr; fit also writes convergence CSVs");
  };
  auto stochastic = [&](CLI::App* sub) {
    sub->add_option("--model", o.model, "Fitted model JSON (default: median human weights)");
    sub->add_option("--seed", o.seed, "Random seed (required)");
    sub->add_option("--preview", o.preview, "Preview time in s (default: the model's)");
    sub->add_option("--dt", o.dt, "Control hold time per step in s")->capture_default_str();
  };

  auto* fit = app.add_subcommand("fit", "Fit risk weights to a driving log");
  common(fit);
  fit->add_option("--log", o.log, "Driving log CSV");
  fit->add_option("--preview", o.preview, "Fit at this preview time only");
  fit->add_option("--preview-grid", o.preview_grid, "Comma-separated preview times to search")->capture_default_str();
  fit->add_option("--stride", o.stride, "Use every k-th log row (default: about one row per 0.1 s)");
  fit->add_flag("--no-segment", o.no_segment, "Fit the whole log instead of per-obstacle segments");

  auto* sample = app.add_subcommand("sample", "Sample an ensemble of trajectories");
  common(sample);
  stochastic(sample);
  sample->add_option("--log", o.log, "Start from this log's first state (default: course start at target speed)");
  sample->add_option("--n", o.n, "Number of trajectories (default 100)");
  sample->add_option("--steps", o.steps, "Control steps per trajectory")->capture_default_str();

  auto* synth = app.add_subcommand("synth", "Write one synthetic driving log");
  common(synth);
  stochastic(synth);
  synth->add_option("--log", o.log, "Start from this log's first state (default: course start at target speed)");
  synth->add_option("--steps", o.steps, "Control steps")->capture_default_str();

  auto* eval = app.add_subcommand("eval", "Score ensemble predictions against a driving log");
  common(eval);
  stochastic(eval);
  eval->add_option("--log", o.log, "Reference driving log CSV");
  eval->add_option("--n", o.n, "Trajectories per case (default 100)");
  eval->add_option("--horizons", o.horizons, "Comma-separated horizons in s")->capture_default_str();
  eval->add_flag("--no-segment", o.no_segment, "Single case from the first log row");

  auto* sw = app.add_subcommand("sweep", "Ensembles at the 5th/50th/95th percentile of one weight");
  common(sw);
  sw->add_option("--seed", o.seed, "Random seed (required)");
  sw->add_option("--param", o.param, "Weight to sweep: A, B, C, D or E");
  sw->add_option("--n", o.n, "Trajectories per level (default 20)");
  sw->add_option("--steps", o.steps, "Control steps per trajectory")->capture_default_str();
  sw->add_option("--dt", o.dt, "Control hold time per step in s")->capture_default_str();
  sw->add_option("--preview", o.preview, "Preview time in s (default 1.2)");
  sw->add_option("--log", o.log, "Start from this log's first state (default: course start at target speed)");

  auto* plot = app.add_subcommand("plot", "Render trajectories over the course as SVG");
  common(plot);
  plot->add_option("--log", o.logs, "Trajectory or log CSV (repeatable)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*fit) return cmd_fit(o);
    if (*sample) return cmd_sample(o);
    if (*synth) return cmd_synth(o);
    if (*eval) return cmd_eval(o);
    if (*sw) return cmd_sweep(o);
    if (*plot) return cmd_plot(o);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const InvalidArgument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}
