#pragma once

// Event/POI ingestion, bucket-indexed region assignment and per-region
// POI feature aggregation.

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "stm/csv.hpp"
#include "stm/error.hpp"
#include "stm/geo.hpp"
#include "stm/partition.hpp"

namespace stm {

struct Event {
  std::size_t id = 0;
  std::int64_t timestamp = 0;  // UTC seconds since epoch
  GeoPoint pos;
  std::optional<std::string> category;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
  return s;
}

inline bool parse_uint(std::string_view s, std::size_t n, int& out) {
  if (s.size() < n) return false;
  int v = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (s[i] < '0' || s[i] > '9') return false;
    v = v * 10 + (s[i] - '0');
  }
  out = v;
  return true;
}

inline std::optional<double> parse_double(std::string_view s) {
  s = trim(s);
  if (s.empty()) return std::nullopt;
  if (s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

}  // namespace detail

// ISO-8601 date or date-time: YYYY-MM-DD[(T| )HH:MM[:SS[.fff]]][Z|+HH[:MM]|-HH[:MM]].
// A missing offset means UTC. Fractional seconds are truncated toward the
// earlier second.
inline std::optional<std::int64_t> parse_iso8601(std::string_view s) {
  using namespace std::chrono;
  s = detail::trim(s);
  int y = 0, mo = 0, d = 0, h = 0, mi = 0, sec = 0;
  if (s.size() < 10 || !detail::parse_uint(s, 4, y) || s[4] != '-' || !detail::parse_uint(s.substr(5), 2, mo) ||
      s[7] != '-' || !detail::parse_uint(s.substr(8), 2, d))
    return std::nullopt;
  const year_month_day ymd{year{y}, month{static_cast<unsigned>(mo)}, day{static_cast<unsigned>(d)}};
  if (!ymd.ok()) return std::nullopt;
  std::size_t i = 10;
  std::int64_t offset = 0;
  if (i < s.size()) {
    if (s[i] != 'T' && s[i] != 't' && s[i] != ' ') return std::nullopt;
    ++i;
    if (!detail::parse_uint(s.substr(i), 2, h) || i + 2 >= s.size() || s[i + 2] != ':' ||
        !detail::parse_uint(s.substr(i + 3), 2, mi))
      return std::nullopt;
    i += 5;
    if (i < s.size() && s[i] == ':') {
      if (!detail::parse_uint(s.substr(i + 1), 2, sec)) return std::nullopt;
      i += 3;
      if (i < s.size() && (s[i] == '.' || s[i] == ',')) {
        ++i;
        const std::size_t start = i;
        while (i < s.size() && s[i] >= '0' && s[i] <= '9') ++i;
        if (i == start) return std::nullopt;
      }
    }
    if (h > 23 || mi > 59 || sec > 60) return std::nullopt;
    if (i < s.size()) {
      if (s[i] == 'Z' || s[i] == 'z') {
        ++i;
      } else if (s[i] == '+' || s[i] == '-') {
        const int sign = s[i] == '+' ? 1 : -1;
        int oh = 0, om = 0;
        if (!detail::parse_uint(s.substr(i + 1), 2, oh)) return std::nullopt;
        i += 3;
        if (i < s.size() && s[i] == ':') ++i;
        if (i < s.size()) {
          if (!detail::parse_uint(s.substr(i), 2, om)) return std::nullopt;
          i += 2;
        }
        if (oh > 23 || om > 59) return std::nullopt;
        offset = sign * (oh * 3600 + om * 60);
      } else {
        return std::nullopt;
      }
    }
    if (i != s.size()) return std::nullopt;
  }
  const std::int64_t days = sys_days{ymd}.time_since_epoch().count();
  return days * 86400 + h * 3600 + mi * 60 + sec - offset;
}

struct EventSchema {
  std::string timestamp = "timestamp";
  std::string latitude = "latitude";
  std::string longitude = "longitude";
  std::string category = "category";
  // POI files: rows without a category are dropped, and a missing
  // category column is an error.
  bool require_category = false;
  // POI files: the timestamp column may be absent; timestamps default to 0.
  bool timestamp_optional = false;
};

struct ParsedEvents {
  std::vector<Event> events;
  std::size_t rows = 0;
  std::size_t dropped_timestamp = 0;
  std::size_t dropped_coordinates = 0;
  std::size_t dropped_malformed = 0;
  std::size_t dropped_category = 0;

  std::size_t dropped() const {
    return dropped_timestamp + dropped_coordinates + dropped_malformed + dropped_category;
  }
};

inline ParsedEvents parse_events_csv(std::string_view bytes, const EventSchema& schema = {}) {
  csv::Reader reader(bytes);
  csv::Row header;
  if (!reader.next(header)) throw Error("events csv: file is empty");
  auto column = [&](const std::string& name) -> std::optional<std::size_t> {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (detail::trim(header[i]) == name) return i;
    return std::nullopt;
  };
  auto required = [&](const std::string& name) {
    auto c = column(name);
    if (!c) throw Error("events csv: missing column '" + name + "'");
    return *c;
  };
  std::optional<std::size_t> ts_col =
      schema.timestamp_optional ? column(schema.timestamp) : std::optional<std::size_t>(required(schema.timestamp));
  const std::size_t lat_col = required(schema.latitude);
  const std::size_t lon_col = required(schema.longitude);
  std::optional<std::size_t> cat_col =
      schema.require_category ? std::optional<std::size_t>(required(schema.category)) : column(schema.category);

  ParsedEvents out;
  csv::Row row;
  while (reader.next(row)) {
    ++out.rows;
    if (row.size() != header.size()) {
      ++out.dropped_malformed;
      continue;
    }
    std::int64_t ts = 0;
    if (ts_col) {
      auto t = parse_iso8601(row[*ts_col]);
      if (!t) {
        ++out.dropped_timestamp;
        continue;
      }
      ts = *t;
    }
    auto lat = detail::parse_double(row[lat_col]);
    auto lon = detail::parse_double(row[lon_col]);
    if (!lat || !lon || !GeoPoint{*lon, *lat}.valid()) {
      ++out.dropped_coordinates;
      continue;
    }
    std::optional<std::string> cat;
    if (cat_col) {
      auto c = detail::trim(row[*cat_col]);
      if (!c.empty()) cat = std::string(c);
    }
    if (schema.require_category && !cat) {
      ++out.dropped_category;
      continue;
    }
    out.events.push_back({out.events.size(), ts, {*lon, *lat}, std::move(cat)});
  }
  return out;
}

// Uniform bucket grid over the partition bbox. Each region is listed, in
// ascending id order, in every bucket its (slightly widened) bbox touches.
class BucketIndex {
 public:
  BucketIndex(const Partition& part, double bucket_size) : bucket_size_(bucket_size), origin_{part.bbox.min_x, part.bbox.min_y} {
    if (!(bucket_size > 0.0)) throw Error("bucket index: bucket size must be positive");
    if (part.regions.empty()) throw Error("bucket index: partition has no regions");
    extent_ = part.bbox;
    nx_ = static_cast<std::size_t>(std::floor(extent_.width() / bucket_size_)) + 1;
    ny_ = static_cast<std::size_t>(std::floor(extent_.height() / bucket_size_)) + 1;
    buckets_.resize(nx_ * ny_);
    for (const auto& r : part.regions) {
      const auto& b = r.geometry.bbox();
      const auto [x0, y0] = clamp_cell(b.min_x - kBoundaryEps, b.min_y - kBoundaryEps);
      const auto [x1, y1] = clamp_cell(b.max_x + kBoundaryEps, b.max_y + kBoundaryEps);
      for (std::size_t by = y0; by <= y1; ++by)
        for (std::size_t bx = x0; bx <= x1; ++bx) buckets_[by * nx_ + bx].push_back(r.id);
    }
  }

  // Median region bbox width, the default bucket size.
  static double default_bucket_size(const Partition& part) {
    std::vector<double> w;
    w.reserve(part.regions.size());
    for (const auto& r : part.regions) w.push_back(r.geometry.bbox().width());
    if (w.empty()) throw Error("bucket index: partition has no regions");
    std::nth_element(w.begin(), w.begin() + static_cast<std::ptrdiff_t>(w.size() / 2), w.end());
    return std::max(w[w.size() / 2], 1e-6);
  }

  explicit BucketIndex(const Partition& part) : BucketIndex(part, default_bucket_size(part)) {}

  double bucket_size() const { return bucket_size_; }
  std::size_t buckets_x() const { return nx_; }
  std::size_t buckets_y() const { return ny_; }
  const std::vector<std::size_t>& bucket(std::size_t bx, std::size_t by) const { return buckets_.at(by * nx_ + bx); }

  // Candidate regions for p; empty when p lies outside the indexed extent.
  std::span<const std::size_t> candidates(PlanarPoint p) const {
    if (!extent_.contains(p, kBoundaryEps)) return {};
    const auto [bx, by] = clamp_cell(p.x, p.y);
    return buckets_[by * nx_ + bx];
  }

 private:
  std::pair<std::size_t, std::size_t> clamp_cell(double x, double y) const {
    auto one = [this](double v, double o, std::size_t n) {
      const double q = std::floor((v - o) / bucket_size_);
      if (!(q > 0.0)) return std::size_t{0};
      return std::min(static_cast<std::size_t>(q), n - 1);
    };
    return {one(x, origin_.x, nx_), one(y, origin_.y, ny_)};
  }

  double bucket_size_;
  PlanarPoint origin_;
  BoundingBox extent_;
  std::size_t nx_ = 0, ny_ = 0;
  std::vector<std::vector<std::size_t>> buckets_;
};

inline constexpr std::size_t kNoRegion = static_cast<std::size_t>(-1);

struct AssignedEvent {
  std::size_t event_id = 0;
  std::size_t region_id = kNoRegion;
  std::int64_t timestamp = 0;

  bool inside() const { return region_id != kNoRegion; }
  friend bool operator==(const AssignedEvent&, const AssignedEvent&) = default;
};

// Lowest-id region containing p, or kNoRegion.
inline std::size_t locate(PlanarPoint p, const Partition& part, const BucketIndex& index) {
  for (std::size_t id : index.candidates(p))
    if (point_in_polygon(p, part.regions[id].geometry)) return id;
  return kNoRegion;
}

// Output is in input order for any worker count.
inline std::vector<AssignedEvent> assign_events(std::span<const Event> events, const Partition& part,
                                                const BucketIndex& index, unsigned workers = 1) {
  std::vector<AssignedEvent> out(events.size());
  auto run = [&](std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i) {
      const Event& e = events[i];
      out[i] = {e.id, locate(project(e.pos, part.proj), part, index), e.timestamp};
    }
  };
  workers = std::max(1u, workers);
  if (workers == 1 || events.size() < 2 * workers) {
    run(0, events.size());
    return out;
  }
  std::vector<std::thread> pool;
  const std::size_t chunk = (events.size() + workers - 1) / workers;
  for (unsigned w = 0; w < workers; ++w) {
    const std::size_t lo = std::min(events.size(), w * chunk);
    const std::size_t hi = std::min(events.size(), lo + chunk);
    pool.emplace_back(run, lo, hi);
  }
  for (auto& t : pool) t.join();
  return out;
}

struct UrbanFeatures {
  std::vector<std::string> categories;
  // rows x categories.size(), row-major.
  std::vector<double> matrix;
  std::size_t rows = 0;
  bool normalized = false;

  std::size_t cols() const { return categories.size(); }
  double at(std::size_t r, std::size_t c) const { return matrix[r * cols() + c]; }
  bool empty() const { return categories.empty(); }
};

inline UrbanFeatures aggregate_poi_features(std::span<const Event> pois, const Partition& part,
                                            const BucketIndex& index, bool normalize) {
  std::map<std::string, std::size_t> vocab;
  for (const auto& p : pois)
    if (p.category) vocab.emplace(*p.category, 0);
  if (vocab.empty()) throw Error("poi features: no POI has a category");
  UrbanFeatures f;
  for (auto& [name, col] : vocab) {
    col = f.categories.size();
    f.categories.push_back(name);
  }
  f.rows = part.size();
  f.matrix.assign(f.rows * f.cols(), 0.0);
  for (const auto& p : pois) {
    if (!p.category) continue;
    const std::size_t r = locate(project(p.pos, part.proj), part, index);
    if (r == kNoRegion) continue;
    f.matrix[r * f.cols() + vocab[*p.category]] += 1.0;
  }
  if (normalize) {
    f.normalized = true;
    for (std::size_t r = 0; r < f.rows; ++r) {
      double s = 0.0;
      for (std::size_t c = 0; c < f.cols(); ++c) s += f.matrix[r * f.cols() + c];
      if (s > 0.0)
        for (std::size_t c = 0; c < f.cols(); ++c) f.matrix[r * f.cols() + c] /= s;
    }
  }
  return f;
}

}  // namespace stm
