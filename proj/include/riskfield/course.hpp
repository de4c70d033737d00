#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "riskfield/error.hpp"

namespace riskfield {

struct Point2 {
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(const Point2&, const Point2&) = default;
};

inline double distance(const Point2& a, const Point2& b) {
  const double dx = a.x - b.x;
  const double dy = a.y - b.y;
  return std::sqrt(dx * dx + dy * dy);
}

/// Position along the centerline. `lateral` is positive to the left of the
/// direction of travel.
struct ArcCoordinate {
  double s = 0.0;
  double lateral = 0.0;
};

/// Nearest centerline point for a query position.
struct Projection {
  double distance = 0.0;
  double s = 0.0;
  double lateral = 0.0;
  std::size_t segment = 0;
};

namespace detail {

struct SegmentHit {
  double distance;
  double s;
  double lateral;
};

inline SegmentHit segment_hit(const Point2& p, const Point2& a, const Point2& b, double s_start) {
  const double dx = b.x - a.x;
  const double dy = b.y - a.y;
  const double len2 = dx * dx + dy * dy;
  double t = ((p.x - a.x) * dx + (p.y - a.y) * dy) / len2;
  t = std::clamp(t, 0.0, 1.0);
  const double fx = a.x + t * dx;
  const double fy = a.y + t * dy;
  const double ex = p.x - fx;
  const double ey = p.y - fy;
  const double d = std::sqrt(ex * ex + ey * ey);
  const double cross = dx * (p.y - a.y) - dy * (p.x - a.x);
  const double side = cross > 0.0 ? 1.0 : (cross < 0.0 ? -1.0 : 0.0);
  return {d, s_start + t * std::sqrt(len2), side * d};
}

}  // namespace detail

struct CourseSettings {
  double obstacle_diameter = 0.3;  // m
  double lane_width = 3.0;         // m
  double v_tgt = 20.0;             // m/s
  bool closed = false;
};

/// Immutable driving course: centerline polyline, point obstacles and the
/// scalar settings the risk features need. Arc lengths, obstacle arc
/// coordinates and a uniform-grid segment index are built once on construction.
class Course {
 public:
  using Settings = CourseSettings;

  Course(std::vector<Point2> centerline, std::vector<Point2> obstacles, Settings settings = {})
      : centerline_(std::move(centerline)), obstacles_(std::move(obstacles)), settings_(settings) {
    // A loop may list its start point again at the end; the closing segment is implicit.
    if (settings_.closed && centerline_.size() > 2 && centerline_.front() == centerline_.back())
      centerline_.pop_back();
    validate();
    build_arc_table();
    build_index();
    build_obstacle_order();
  }

  const std::vector<Point2>& centerline() const noexcept { return centerline_; }
  const std::vector<Point2>& obstacles() const noexcept { return obstacles_; }
  double obstacle_diameter() const noexcept { return settings_.obstacle_diameter; }
  double lane_width() const noexcept { return settings_.lane_width; }
  double v_tgt() const noexcept { return settings_.v_tgt; }
  bool closed() const noexcept { return settings_.closed; }
  const Settings& settings() const noexcept { return settings_; }

  /// Total centerline length, including the closing segment of a loop.
  double length() const noexcept { return arc_.back(); }
  std::size_t segment_count() const noexcept { return arc_.size() - 1; }

  /// Arc coordinate of obstacle `i` (input order).
  double obstacle_arc(std::size_t i) const { return obstacle_arc_.at(i); }

  /// Obstacle indices sorted by arc coordinate (ties keep input order).
  const std::vector<std::size_t>& obstacles_by_arc() const noexcept { return obstacle_order_; }

  Point2 segment_start(std::size_t i) const { return centerline_[i]; }
  Point2 segment_end(std::size_t i) const { return centerline_[(i + 1) % centerline_.size()]; }
  double segment_arc(std::size_t i) const { return arc_[i]; }

  /// Nearest centerline point. Equidistant candidates resolve to the smaller arc coordinate.
  Projection locate(const Point2& p) const {
    Projection best{std::numeric_limits<double>::infinity(), 0.0, 0.0, 0};
    auto consider = [&](std::size_t seg) {
      const auto hit = detail::segment_hit(p, segment_start(seg), segment_end(seg), arc_[seg]);
      if (hit.distance < best.distance || (hit.distance == best.distance && hit.s < best.s)) {
        best = {hit.distance, hit.s, hit.lateral, seg};
      }
    };

    const double fx = (p.x - origin_.x) / cell_;
    const double fy = (p.y - origin_.y) / cell_;
    const bool inside = fx >= 0.0 && fy >= 0.0 && fx < static_cast<double>(nx_) &&
                        fy < static_cast<double>(ny_);
    if (!inside) {
      for (std::size_t seg = 0; seg < segment_count(); ++seg) consider(seg);
    } else {
      const auto cx = static_cast<std::ptrdiff_t>(fx);
      const auto cy = static_cast<std::ptrdiff_t>(fy);
      const auto nx = static_cast<std::ptrdiff_t>(nx_);
      const auto ny = static_cast<std::ptrdiff_t>(ny_);
      const std::ptrdiff_t max_ring = std::max({cx, cy, nx - 1 - cx, ny - 1 - cy});
      for (std::ptrdiff_t r = 0; r <= max_ring; ++r) {
        // Anything in ring r+1 or beyond is at least r cells away.
        for (std::ptrdiff_t gy = cy - r; gy <= cy + r; ++gy) {
          if (gy < 0 || gy >= ny) continue;
          const bool edge_row = gy == cy - r || gy == cy + r;
          const std::ptrdiff_t stride = edge_row ? 1 : std::max<std::ptrdiff_t>(2 * r, 1);
          for (std::ptrdiff_t gx = cx - r; gx <= cx + r; gx += stride) {
            if (gx < 0 || gx >= nx) continue;
            const auto cell = static_cast<std::size_t>(gy * nx + gx);
            for (auto k = cell_begin_[cell]; k < cell_begin_[cell + 1]; ++k) consider(cell_items_[k]);
          }
        }
        if (best.distance < static_cast<double>(r) * cell_) break;
      }
    }
    if (settings_.closed && best.s >= length()) best.s -= length();
    return best;
  }

  /// Index (input order) of the first obstacle at or ahead of arc coordinate
  /// `s`, wrapping on a closed course; nullopt when nothing is ahead.
  std::optional<std::size_t> next_obstacle_at(double s) const {
    if (obstacle_order_.empty()) return std::nullopt;
    auto it = std::lower_bound(sorted_arc_.begin(), sorted_arc_.end(), s);
    if (it == sorted_arc_.end()) {
      if (!settings_.closed) return std::nullopt;
      it = sorted_arc_.begin();
    }
    return obstacle_order_[static_cast<std::size_t>(it - sorted_arc_.begin())];
  }

  /// Centerline point and travel heading at arc coordinate `s` (clamped, or wrapped if closed).
  std::pair<Point2, double> pose_at(double s) const {
    if (settings_.closed) {
      s = std::fmod(s, length());
      if (s < 0.0) s += length();
    } else {
      s = std::clamp(s, 0.0, length());
    }
    auto it = std::upper_bound(arc_.begin(), arc_.end(), s);
    std::size_t seg = it == arc_.begin() ? 0 : static_cast<std::size_t>(it - arc_.begin()) - 1;
    seg = std::min(seg, segment_count() - 1);
    const Point2 a = segment_start(seg);
    const Point2 b = segment_end(seg);
    const double len = arc_[seg + 1] - arc_[seg];
    const double t = std::clamp((s - arc_[seg]) / len, 0.0, 1.0);
    return {{a.x + t * (b.x - a.x), a.y + t * (b.y - a.y)}, std::atan2(b.y - a.y, b.x - a.x)};
  }

 private:
  void validate() const {
    detail::require(centerline_.size() >= 2, "course: centerline needs at least 2 points");
    for (const auto& p : centerline_)
      detail::require(std::isfinite(p.x) && std::isfinite(p.y), "course: non-finite centerline point");
    for (std::size_t i = 0; i + 1 < centerline_.size(); ++i)
      detail::require(!(centerline_[i] == centerline_[i + 1]),
                      "course: duplicate consecutive centerline points");
    if (settings_.closed)
      detail::require(!(centerline_.front() == centerline_.back()),
                      "course: degenerate closing segment");
    for (const auto& p : obstacles_)
      detail::require(std::isfinite(p.x) && std::isfinite(p.y), "course: non-finite obstacle");
    detail::require(std::isfinite(settings_.obstacle_diameter) && settings_.obstacle_diameter > 0.0,
                    "course: obstacle_diameter must be > 0");
    detail::require(std::isfinite(settings_.lane_width) && settings_.lane_width > 0.0,
                    "course: lane_width must be > 0");
    detail::require(std::isfinite(settings_.v_tgt) && settings_.v_tgt >= 0.0,
                    "course: v_tgt must be >= 0");
  }

  void build_arc_table() {
    const std::size_t segments = settings_.closed ? centerline_.size() : centerline_.size() - 1;
    arc_.assign(segments + 1, 0.0);
    for (std::size_t i = 0; i < segments; ++i)
      arc_[i + 1] = arc_[i] + distance(centerline_[i], centerline_[(i + 1) % centerline_.size()]);
  }

  void build_index() {
    Point2 lo{std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity()};
    Point2 hi{-lo.x, -lo.y};
    for (const auto& p : centerline_) {
      lo = {std::min(lo.x, p.x), std::min(lo.y, p.y)};
      hi = {std::max(hi.x, p.x), std::max(hi.y, p.y)};
    }
    const double mean_len = length() / static_cast<double>(segment_count());
    const double span = std::max(hi.x - lo.x, hi.y - lo.y);
    // Pad by a lane-scale margin so previewed states just off the road stay inside the grid.
    const double pad = std::max(mean_len, 0.05 * span) + 10.0 * settings_.lane_width;
    lo = {lo.x - pad, lo.y - pad};
    hi = {hi.x + pad, hi.y + pad};
    cell_ = std::max(mean_len, 1e-6);
    constexpr double kMaxCells = 1 << 20;
    while (std::ceil((hi.x - lo.x) / cell_) * std::ceil((hi.y - lo.y) / cell_) > kMaxCells) cell_ *= 2.0;
    origin_ = lo;
    nx_ = static_cast<std::size_t>(std::ceil((hi.x - lo.x) / cell_));
    ny_ = static_cast<std::size_t>(std::ceil((hi.y - lo.y) / cell_));

    std::vector<std::vector<std::uint32_t>> buckets(nx_ * ny_);
    for (std::size_t seg = 0; seg < segment_count(); ++seg) {
      const Point2 a = segment_start(seg);
      const Point2 b = segment_end(seg);
      const auto x0 = static_cast<std::size_t>((std::min(a.x, b.x) - origin_.x) / cell_);
      const auto x1 = static_cast<std::size_t>((std::max(a.x, b.x) - origin_.x) / cell_);
      const auto y0 = static_cast<std::size_t>((std::min(a.y, b.y) - origin_.y) / cell_);
      const auto y1 = static_cast<std::size_t>((std::max(a.y, b.y) - origin_.y) / cell_);
      for (auto gy = y0; gy <= std::min(y1, ny_ - 1); ++gy)
        for (auto gx = x0; gx <= std::min(x1, nx_ - 1); ++gx)
          buckets[gy * nx_ + gx].push_back(static_cast<std::uint32_t>(seg));
    }
    cell_begin_.assign(buckets.size() + 1, 0);
    for (std::size_t c = 0; c < buckets.size(); ++c)
      cell_begin_[c + 1] = cell_begin_[c] + static_cast<std::uint32_t>(buckets[c].size());
    cell_items_.reserve(cell_begin_.back());
    for (const auto& b : buckets) cell_items_.insert(cell_items_.end(), b.begin(), b.end());
  }

  void build_obstacle_order() {
    obstacle_arc_.reserve(obstacles_.size());
    for (const auto& o : obstacles_) obstacle_arc_.push_back(locate(o).s);
    obstacle_order_.resize(obstacles_.size());
    for (std::size_t i = 0; i < obstacle_order_.size(); ++i) obstacle_order_[i] = i;
    std::stable_sort(obstacle_order_.begin(), obstacle_order_.end(),
                     [&](std::size_t a, std::size_t b) { return obstacle_arc_[a] < obstacle_arc_[b]; });
    for (auto i : obstacle_order_) sorted_arc_.push_back(obstacle_arc_[i]);
  }

  std::vector<Point2> centerline_;
  std::vector<Point2> obstacles_;
  Settings settings_;

  std::vector<double> arc_;
  std::vector<double> obstacle_arc_;
  std::vector<std::size_t> obstacle_order_;
  std::vector<double> sorted_arc_;

  Point2 origin_;
  double cell_ = 1.0;
  std::size_t nx_ = 0;
  std::size_t ny_ = 0;
  std::vector<std::uint32_t> cell_begin_;
  std::vector<std::uint32_t> cell_items_;
};

inline double pt_line_distance(const Point2& pos, const Course& course) {
  return course.locate(pos).distance;
}

inline ArcCoordinate project(const Point2& pos, const Course& course) {
  const auto p = course.locate(pos);
  return {p.s, p.lateral};
}

/// Distance from `pos` to the center of the next obstacle along the course;
/// +inf once the last obstacle of an open course is behind.
inline double obstacle_distance(const Point2& pos, const Course& course) {
  if (course.obstacles().empty()) throw InvalidArgument("obstacle_distance: course has no obstacles");
  const auto next = course.next_obstacle_at(course.locate(pos).s);
  if (!next) return std::numeric_limits<double>::infinity();
  return distance(pos, course.obstacles()[*next]);
}

// ---------------------------------------------------------------------------
// JSON course files

namespace detail {

inline std::size_t line_of_offset(std::string_view text, std::size_t offset) {
  offset = std::min(offset, text.size());
  return 1 + static_cast<std::size_t>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(offset), '\n'));
}

// Line of element `index` of the top-level array stored under `key`, or 0.
inline std::size_t line_of_array_element(std::string_view text, std::string_view key, std::size_t index) {
  const std::string quoted = "\"" + std::string(key) + "\"";
  auto pos = text.find(quoted);
  if (pos == std::string_view::npos) return 0;
  pos = text.find('[', pos + quoted.size());
  if (pos == std::string_view::npos) return 0;
  int depth = 0;
  std::size_t element = 0;
  bool expecting = true;
  bool in_string = false;
  for (std::size_t i = pos; i < text.size(); ++i) {
    const char c = text[i];
    if (in_string) {
      if (c == '\\') ++i;
      else if (c == '"') in_string = false;
      continue;
    }
    if (depth == 1 && expecting && c != ' ' && c != '\n' && c != '\r' && c != '\t' && c != ']') {
      if (element == index) return line_of_offset(text, i);
      ++element;
      expecting = false;
    }
    if (c == '"') in_string = true;
    else if (c == '[' || c == '{') ++depth;
    else if (c == ']' || c == '}') {
      if (--depth == 0) return 0;
    } else if (c == ',' && depth == 1) expecting = true;
  }
  return 0;
}

}  // namespace detail

/// Parses the course JSON schema. `source` names the input in error messages.
inline Course parse_course(std::string_view text, const std::string& source = "<course>") {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text.begin(), text.end());
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(source, detail::line_of_offset(text, e.byte > 0 ? e.byte - 1 : 0), e.what());
  }
  if (!doc.is_object()) throw ParseError(source, 1, "expected a JSON object");

  auto read_points = [&](const char* key, bool required) {
    std::vector<Point2> pts;
    if (!doc.contains(key)) {
      if (required) throw ParseError(source, 0, std::string("missing \"") + key + "\"");
      return pts;
    }
    const auto& arr = doc.at(key);
    if (!arr.is_array()) throw ParseError(source, detail::line_of_offset(text, text.find(key)), std::string(key) + " must be an array");
    for (std::size_t i = 0; i < arr.size(); ++i) {
      const auto& e = arr[i];
      const auto line = detail::line_of_array_element(text, key, i);
      if (!e.is_array() || e.size() != 2 || !e[0].is_number() || !e[1].is_number())
        throw ParseError(source, line, std::string(key) + " entries must be [x, y] number pairs");
      Point2 p{e[0].get<double>(), e[1].get<double>()};
      if (!std::isfinite(p.x) || !std::isfinite(p.y))
        throw ParseError(source, line, std::string(key) + " entry is not finite");
      pts.push_back(p);
    }
    return pts;
  };

  auto centerline = read_points("centerline", true);
  auto obstacles = read_points("obstacles", false);
  if (centerline.size() < 2) throw ParseError(source, 0, "centerline needs at least 2 points");
  for (std::size_t i = 0; i + 1 < centerline.size(); ++i)
    if (centerline[i] == centerline[i + 1])
      throw ParseError(source, detail::line_of_array_element(text, "centerline", i + 1),
                       "duplicate consecutive centerline point");

  Course::Settings settings;
  auto number = [&](const char* key, double& out) {
    if (!doc.contains(key)) return;
    if (!doc.at(key).is_number()) throw ParseError(source, 0, std::string(key) + " must be a number");
    out = doc.at(key).get<double>();
  };
  number("obstacle_diameter", settings.obstacle_diameter);
  number("lane_width", settings.lane_width);
  number("v_tgt", settings.v_tgt);
  if (doc.contains("closed")) {
    if (!doc.at("closed").is_boolean()) throw ParseError(source, 0, "closed must be a boolean");
    settings.closed = doc.at("closed").get<bool>();
  }
  try {
    return Course(std::move(centerline), std::move(obstacles), settings);
  } catch (const InvalidArgument& e) {
    throw ParseError(source, 0, e.what());
  }
}

inline Course load_course(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError(path, 0, "cannot open course file");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_course(buf.str(), path);
}

inline nlohmann::json course_to_json(const Course& course) {
  nlohmann::json j;
  auto pts = [](const std::vector<Point2>& v) {
    nlohmann::json a = nlohmann::json::array();
    for (const auto& p : v) a.push_back({p.x, p.y});
    return a;
  };
  j["centerline"] = pts(course.centerline());
  j["obstacles"] = pts(course.obstacles());
  j["obstacle_diameter"] = course.obstacle_diameter();
  j["lane_width"] = course.lane_width();
  j["v_tgt"] = course.v_tgt();
  j["closed"] = course.closed();
  return j;
}

}  // namespace riskfield
