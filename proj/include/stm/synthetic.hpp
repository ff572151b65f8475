#pragma once

// Deterministic synthetic city: Gaussian event hotspots with weekly
// modulation, a lattice street network, POIs and rectangular districts.
// Used for the bundled toy fixture and for end-to-end tests.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "stm/geo.hpp"

namespace stm::synthetic {

struct CityParams {
  GeoPoint origin{-73.98, 40.75};
  double width = 10000.0;   // m, centered on origin
  double height = 10000.0;  // m
  std::size_t events = 20000;
  std::size_t days = 180;
  std::int64_t start = 1577836800;  // 2020-01-01T00:00:00Z
  std::size_t hotspots = 10;
  double sigma = 400.0;        // m
  double background = 0.1;     // fraction of uniformly scattered events
  double street_spacing = 500.0;
  std::size_t pois = 300;
  std::uint64_t seed = 7;
};

struct Hotspot {
  PlanarPoint center;
  double weight;
  double phase;
};

inline std::string iso8601(std::int64_t t) {
  using namespace std::chrono;
  const auto days = static_cast<std::int64_t>(std::floor(static_cast<double>(t) / 86400.0));
  const std::int64_t rem = t - days * 86400;
  const year_month_day ymd{sys_days{std::chrono::days{days}}};
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02d:%02d:%02dZ", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()), static_cast<int>(rem / 3600),
                static_cast<int>(rem / 60 % 60), static_cast<int>(rem % 60));
  return buf;
}

class City {
 public:
  explicit City(const CityParams& p) : p_(p), proj_(p.origin.lon, p.origin.lat), rng_(p.seed) {
    std::uniform_real_distribution<double> ux(-0.4 * p.width, 0.4 * p.width), uy(-0.4 * p.height, 0.4 * p.height);
    std::uniform_real_distribution<double> uw(0.5, 1.5), uph(0.0, 2.0 * std::numbers::pi);
    for (std::size_t i = 0; i < p.hotspots; ++i) hotspots_.push_back({{ux(rng_), uy(rng_)}, uw(rng_), uph(rng_)});
  }

  const Projection& projection() const { return proj_; }
  const std::vector<Hotspot>& hotspots() const { return hotspots_; }
  BoundingBox extent() const { return {-0.5 * p_.width, -0.5 * p_.height, 0.5 * p_.width, 0.5 * p_.height}; }

  // CSV with columns id,timestamp,latitude,longitude,category.
  std::string events_csv() {
    std::vector<double> cdf;
    const std::size_t h = hotspots_.size();
    for (std::size_t d = 0; d < p_.days; ++d)
      for (std::size_t i = 0; i < h; ++i) {
        const double w = hotspots_[i].weight *
                         (1.0 + 0.8 * std::sin(2.0 * std::numbers::pi * static_cast<double>(d) / 7.0 + hotspots_[i].phase));
        cdf.push_back((cdf.empty() ? 0.0 : cdf.back()) + w);
      }
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    std::normal_distribution<double> g(0.0, p_.sigma);
    const BoundingBox ext = extent();
    std::uniform_real_distribution<double> ux(ext.min_x, ext.max_x), uy(ext.min_y, ext.max_y);
    std::uniform_int_distribution<std::int64_t> usec(0, 86399);
    std::uniform_int_distribution<std::size_t> uday(0, p_.days - 1);
    std::string out = "id,timestamp,latitude,longitude,category\n";
    for (std::size_t e = 0; e < p_.events; ++e) {
      PlanarPoint pos;
      std::size_t day;
      if (h == 0 || u01(rng_) < p_.background) {
        pos = {ux(rng_), uy(rng_)};
        day = uday(rng_);
      } else {
        const double r = u01(rng_) * cdf.back();
        const std::size_t k = static_cast<std::size_t>(std::upper_bound(cdf.begin(), cdf.end(), r) - cdf.begin());
        const std::size_t kk = std::min(k, cdf.size() - 1);
        day = kk / h;
        const Hotspot& hs = hotspots_[kk % h];
        do {
          pos = {hs.center.x + g(rng_), hs.center.y + g(rng_)};
        } while (!ext.contains(pos));
      }
      const std::int64_t t = p_.start + static_cast<std::int64_t>(day) * 86400 + usec(rng_);
      const GeoPoint gp = unproject(pos, proj_);
      char line[160];
      std::snprintf(line, sizeof line, "%zu,%s,%.7f,%.7f,%s\n", e, iso8601(t).c_str(), gp.lat, gp.lon,
                    (e % 3 == 0) ? "noise" : (e % 3 == 1 ? "traffic" : "other"));
      out += line;
    }
    return out;
  }

  // Axis-aligned streets every street_spacing meters, one LineString per
  // street with a vertex at every crossing.
  std::string roads_geojson() const {
    using oj = nlohmann::ordered_json;
    const BoundingBox ext = extent();
    std::vector<double> xs, ys;
    for (double x = ext.min_x; x <= ext.max_x + 1e-9; x += p_.street_spacing) xs.push_back(x);
    for (double y = ext.min_y; y <= ext.max_y + 1e-9; y += p_.street_spacing) ys.push_back(y);
    oj feats = oj::array();
    auto add_line = [&](const std::vector<PlanarPoint>& pts) {
      oj coords = oj::array();
      for (const auto& p : pts) {
        const GeoPoint g = unproject(p, proj_);
        coords.push_back({g.lon, g.lat});
      }
      feats.push_back({{"type", "Feature"}, {"properties", oj::object()}, {"geometry", {{"type", "LineString"}, {"coordinates", coords}}}});
    };
    for (double y : ys) {
      std::vector<PlanarPoint> pts;
      for (double x : xs) pts.push_back({x, y});
      add_line(pts);
    }
    for (double x : xs) {
      std::vector<PlanarPoint> pts;
      for (double y : ys) pts.push_back({x, y});
      add_line(pts);
    }
    return oj{{"type", "FeatureCollection"}, {"features", feats}}.dump() + "\n";
  }

  // POIs of four categories clustered loosely around the hotspots.
  std::string pois_csv() {
    static const char* kinds[] = {"cafe", "park", "school", "shop"};
    std::normal_distribution<double> g(0.0, 2.0 * p_.sigma);
    std::uniform_int_distribution<std::size_t> uk(0, 3), uh(0, hotspots_.empty() ? 0 : hotspots_.size() - 1);
    const BoundingBox ext = extent();
    std::string out = "name,latitude,longitude,category\n";
    for (std::size_t i = 0; i < p_.pois; ++i) {
      PlanarPoint pos{0.0, 0.0};
      const PlanarPoint c = hotspots_.empty() ? PlanarPoint{0.0, 0.0} : hotspots_[uh(rng_)].center;
      do {
        pos = {c.x + g(rng_), c.y + g(rng_)};
      } while (!ext.contains(pos));
      const GeoPoint gp = unproject(pos, proj_);
      char line[128];
      std::snprintf(line, sizeof line, "poi%zu,%.7f,%.7f,%s\n", i, gp.lat, gp.lon, kinds[uk(rng_)]);
      out += line;
    }
    return out;
  }

  // cols x rows rectangular districts; the last district is written as a
  // two-part MultiPolygon (its cell split in half with a 1 m gap).
  std::string districts_geojson(std::size_t cols = 3, std::size_t rows = 2) const {
    using oj = nlohmann::ordered_json;
    const BoundingBox ext = extent();
    const double w = ext.width() / static_cast<double>(cols), h = ext.height() / static_cast<double>(rows);
    auto ring = [&](double x0, double y0, double x1, double y1) {
      oj r = oj::array();
      for (PlanarPoint p : {PlanarPoint{x0, y0}, {x1, y0}, {x1, y1}, {x0, y1}, {x0, y0}}) {
        const GeoPoint g = unproject(p, proj_);
        r.push_back({g.lon, g.lat});
      }
      return r;
    };
    oj feats = oj::array();
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < cols; ++c) {
        const double x0 = ext.min_x + static_cast<double>(c) * w, y0 = ext.min_y + static_cast<double>(r) * h;
        const double x1 = c + 1 == cols ? ext.max_x : x0 + w, y1 = r + 1 == rows ? ext.max_y : y0 + h;
        const std::string id = "D" + std::to_string(r * cols + c);
        oj geom;
        if (r + 1 == rows && c + 1 == cols) {
          const double xm = 0.5 * (x0 + x1);
          geom = {{"type", "MultiPolygon"},
                  {"coordinates", {oj::array({ring(x0, y0, xm - 0.5, y1)}), oj::array({ring(xm + 0.5, y0, x1, y1)})}}};
        } else {
          geom = {{"type", "Polygon"}, {"coordinates", oj::array({ring(x0, y0, x1, y1)})}};
        }
        feats.push_back({{"type", "Feature"}, {"properties", {{"id", id}}}, {"geometry", geom}});
      }
    return oj{{"type", "FeatureCollection"}, {"features", feats}}.dump() + "\n";
  }

 private:
  CityParams p_;
  Projection proj_;
  std::mt19937_64 rng_;
  std::vector<Hotspot> hotspots_;
};

}  // namespace stm::synthetic
