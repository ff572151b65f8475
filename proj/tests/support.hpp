#pragma once

// Shared generators and brute-force oracles for the test suites.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "stm/geo.hpp"
#include "stm/partition.hpp"

namespace stm::testing {

using Rng = std::mt19937_64;

inline double uniform(Rng& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }

// Star-shaped simple polygon around c: one jittered angle per 1/n of the
// circle, so every angular gap is below pi for n >= 4.
inline Ring random_star(Rng& rng, PlanarPoint c, double r_min, double r_max, std::size_t n) {
  Ring ring;
  for (std::size_t k = 0; k < n; ++k) {
    const double a = 2.0 * std::numbers::pi * (static_cast<double>(k) + uniform(rng, 0.0, 0.9)) / static_cast<double>(n);
    const double r = r_min == r_max ? r_min : uniform(rng, r_min, r_max);
    ring.push_back({c.x + r * std::cos(a), c.y + r * std::sin(a)});
  }
  return ring;
}

// Convex polygon from points on a circle.
inline Ring random_convex(Rng& rng, PlanarPoint c, double r, std::size_t n) { return random_star(rng, c, r, r, n); }

// Winding number of ring around p (non-zero means inside).
inline int winding_number(PlanarPoint p, const Ring& ring) {
  int wn = 0;
  const std::size_t n = ring.size();
  for (std::size_t i = 0; i < n; ++i) {
    const PlanarPoint a = ring[i], b = ring[(i + 1) % n];
    const double side = cross(b - a, p - a);
    if (a.y <= p.y) {
      if (b.y > p.y && side > 0) ++wn;
    } else if (b.y <= p.y && side < 0) {
      --wn;
    }
  }
  return wn;
}

inline bool oracle_inside(PlanarPoint p, const Polygon& poly) {
  if (winding_number(p, poly.exterior()) == 0) return false;
  for (const auto& h : poly.holes())
    if (winding_number(p, h) != 0) return false;
  return true;
}

inline double boundary_distance(PlanarPoint p, const Polygon& poly) {
  double d = std::numeric_limits<double>::infinity();
  poly.for_each_ring([&](const Ring& r) {
    for (std::size_t i = 0; i < r.size(); ++i) d = std::min(d, detail::point_segment_distance(p, r[i], r[(i + 1) % r.size()]));
  });
  return d;
}

// Lowest-id region containing p, by exhaustive scan.
inline std::size_t brute_locate(PlanarPoint p, const Partition& part) {
  for (std::size_t i = 0; i < part.regions.size(); ++i)
    if (point_in_polygon(p, part.regions[i].geometry)) return i;
  return static_cast<std::size_t>(-1);
}

inline std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("stm_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace stm::testing
