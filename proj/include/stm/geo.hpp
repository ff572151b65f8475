#pragma once

// Planar projection and polygon kernels shared by every other module.
//
// Coordinates enter as WGS84 degrees and are projected once, equirectangular
// about a fixed origin, into meters. All geometry below works in that plane
// with plain doubles; city-scale extents keep the distortion well under 1%.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <span>
#include <vector>

#include "stm/error.hpp"

namespace stm {

inline constexpr double kEarthRadius = 6371008.8;

// Distance (m) under which a point counts as lying on a polygon boundary.
inline constexpr double kBoundaryEps = 1e-9;

struct GeoPoint {
  double lon = 0.0;
  double lat = 0.0;

  bool valid() const {
    return std::isfinite(lon) && std::isfinite(lat) && lon >= -180.0 && lon <= 180.0 &&
           lat >= -90.0 && lat <= 90.0;
  }
  friend bool operator==(const GeoPoint&, const GeoPoint&) = default;
};

struct PlanarPoint {
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(const PlanarPoint&, const PlanarPoint&) = default;
  friend PlanarPoint operator+(PlanarPoint a, PlanarPoint b) { return {a.x + b.x, a.y + b.y}; }
  friend PlanarPoint operator-(PlanarPoint a, PlanarPoint b) { return {a.x - b.x, a.y - b.y}; }
  friend PlanarPoint operator*(double s, PlanarPoint a) { return {s * a.x, s * a.y}; }
};

inline double dot(PlanarPoint a, PlanarPoint b) { return a.x * b.x + a.y * b.y; }
inline double cross(PlanarPoint a, PlanarPoint b) { return a.x * b.y - a.y * b.x; }
inline double distance(PlanarPoint a, PlanarPoint b) { return std::hypot(a.x - b.x, a.y - b.y); }

struct BoundingBox {
  double min_x = 0.0;
  double min_y = 0.0;
  double max_x = 0.0;
  double max_y = 0.0;

  BoundingBox() = default;
  BoundingBox(double x0, double y0, double x1, double y1)
      : min_x(x0), min_y(y0), max_x(x1), max_y(y1) {
    if (!(min_x <= max_x) || !(min_y <= max_y)) throw Error("bounding box has min > max");
  }

  template <typename Range>
  static BoundingBox of(const Range& points) {
    auto it = std::begin(points);
    if (it == std::end(points)) throw Error("bounding box of an empty point set");
    BoundingBox b(it->x, it->y, it->x, it->y);
    for (; it != std::end(points); ++it) b.expand(*it);
    return b;
  }

  double width() const { return max_x - min_x; }
  double height() const { return max_y - min_y; }
  double area() const { return width() * height(); }
  bool degenerate() const { return !(width() > 0.0) || !(height() > 0.0); }
  PlanarPoint center() const { return {0.5 * (min_x + max_x), 0.5 * (min_y + max_y)}; }

  void expand(PlanarPoint p) {
    min_x = std::min(min_x, p.x);
    min_y = std::min(min_y, p.y);
    max_x = std::max(max_x, p.x);
    max_y = std::max(max_y, p.y);
  }
  void expand(const BoundingBox& o) {
    expand(PlanarPoint{o.min_x, o.min_y});
    expand(PlanarPoint{o.max_x, o.max_y});
  }
  bool contains(PlanarPoint p, double tol = 0.0) const {
    return p.x >= min_x - tol && p.x <= max_x + tol && p.y >= min_y - tol && p.y <= max_y + tol;
  }
  bool intersects(const BoundingBox& o, double tol = 0.0) const {
    return o.min_x <= max_x + tol && min_x <= o.max_x + tol && o.min_y <= max_y + tol &&
           min_y <= o.max_y + tol;
  }
  friend bool operator==(const BoundingBox&, const BoundingBox&) = default;
};

// Equirectangular projection about (origin_lon, origin_lat).
class Projection {
 public:
  Projection() = default;
  Projection(double origin_lon, double origin_lat, double earth_radius = kEarthRadius)
      : origin_lon_(origin_lon), origin_lat_(origin_lat), earth_radius_(earth_radius) {
    if (!GeoPoint{origin_lon, origin_lat}.valid()) throw Error("projection origin out of range");
    if (!(earth_radius > 0.0)) throw Error("earth radius must be positive");
    if (std::abs(origin_lat) >= 90.0) throw Error("projection origin at a pole");
  }

  double origin_lon() const { return origin_lon_; }
  double origin_lat() const { return origin_lat_; }
  double earth_radius() const { return earth_radius_; }

  friend bool operator==(const Projection&, const Projection&) = default;

 private:
  double origin_lon_ = 0.0;
  double origin_lat_ = 0.0;
  double earth_radius_ = kEarthRadius;
};

inline constexpr double kDegToRad = std::numbers::pi / 180.0;

inline PlanarPoint project(GeoPoint p, const Projection& proj) {
  const double r = proj.earth_radius();
  return {r * (p.lon - proj.origin_lon()) * kDegToRad * std::cos(proj.origin_lat() * kDegToRad),
          r * (p.lat - proj.origin_lat()) * kDegToRad};
}

inline GeoPoint unproject(PlanarPoint p, const Projection& proj) {
  const double r = proj.earth_radius();
  return {proj.origin_lon() + p.x / (r * kDegToRad * std::cos(proj.origin_lat() * kDegToRad)),
          proj.origin_lat() + p.y / (r * kDegToRad)};
}

using Ring = std::vector<PlanarPoint>;

// Shoelace signed area; positive for counterclockwise rings.
inline double signed_area(std::span<const PlanarPoint> ring) {
  const std::size_t n = ring.size();
  if (n < 3) return 0.0;
  double s = 0.0;
  for (std::size_t i = 0, j = n - 1; i < n; j = i++) s += cross(ring[j], ring[i]);
  return 0.5 * s;
}

namespace detail {

inline bool segments_intersect(PlanarPoint p1, PlanarPoint p2, PlanarPoint q1, PlanarPoint q2) {
  auto orient = [](PlanarPoint a, PlanarPoint b, PlanarPoint c) {
    const double v = cross(b - a, c - a);
    return (v > 0.0) - (v < 0.0);
  };
  auto on_seg = [](PlanarPoint a, PlanarPoint b, PlanarPoint c) {
    return std::min(a.x, b.x) <= c.x && c.x <= std::max(a.x, b.x) && std::min(a.y, b.y) <= c.y &&
           c.y <= std::max(a.y, b.y);
  };
  const int o1 = orient(p1, p2, q1), o2 = orient(p1, p2, q2);
  const int o3 = orient(q1, q2, p1), o4 = orient(q1, q2, p2);
  if (o1 != o2 && o3 != o4) return true;
  if (o1 == 0 && on_seg(p1, p2, q1)) return true;
  if (o2 == 0 && on_seg(p1, p2, q2)) return true;
  if (o3 == 0 && on_seg(q1, q2, p1)) return true;
  if (o4 == 0 && on_seg(q1, q2, p2)) return true;
  return false;
}

inline double point_segment_distance(PlanarPoint p, PlanarPoint a, PlanarPoint b) {
  const PlanarPoint d = b - a;
  const double len2 = dot(d, d);
  double t = len2 > 0.0 ? dot(p - a, d) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  return distance(p, a + t * d);
}

// Drops consecutive duplicates and a repeated closing vertex.
inline Ring clean_ring(Ring ring) {
  Ring out;
  out.reserve(ring.size());
  for (const auto& p : ring)
    if (out.empty() || !(out.back() == p)) out.push_back(p);
  while (out.size() > 1 && out.front() == out.back()) out.pop_back();
  return out;
}

}  // namespace detail

// True when no two non-adjacent edges of the ring touch or cross.
inline bool ring_is_simple(std::span<const PlanarPoint> ring) {
  const std::size_t n = ring.size();
  if (n < 3) return false;
  struct Edge {
    double lo, hi;
    std::size_t i;
  };
  std::vector<Edge> edges(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& a = ring[i];
    const auto& b = ring[(i + 1) % n];
    edges[i] = {std::min(a.x, b.x), std::max(a.x, b.x), i};
  }
  std::sort(edges.begin(), edges.end(), [](const Edge& l, const Edge& r) {
    return l.lo < r.lo || (l.lo == r.lo && l.i < r.i);
  });
  for (std::size_t k = 0; k < n; ++k) {
    for (std::size_t m = k + 1; m < n && edges[m].lo <= edges[k].hi; ++m) {
      const std::size_t i = std::min(edges[k].i, edges[m].i);
      const std::size_t j = std::max(edges[k].i, edges[m].i);
      const bool adjacent = (j == i + 1) || (i == 0 && j == n - 1);
      const PlanarPoint p1 = ring[i], p2 = ring[(i + 1) % n];
      const PlanarPoint q1 = ring[j], q2 = ring[(j + 1) % n];
      if (adjacent) {
        // Adjacent edges may only share their common vertex; a fold-back
        // along the same line is a degenerate spike.
        const PlanarPoint shared = (j == i + 1) ? p2 : p1;
        const PlanarPoint u = ((j == i + 1) ? p1 : p2) - shared;
        const PlanarPoint v = ((j == i + 1) ? q2 : q1) - shared;
        if (cross(u, v) == 0.0 && dot(u, v) > 0.0) return false;
        continue;
      }
      if (detail::segments_intersect(p1, p2, q1, q2)) return false;
    }
  }
  return true;
}

// Polygon with a counterclockwise exterior and clockwise holes. Rings are
// stored open (the closing vertex is implicit).
class Polygon {
 public:
  struct trusted_t {};
  // Skips validation; for rings already produced by this module's kernels.
  static constexpr trusted_t trusted{};

  Polygon() = default;

  explicit Polygon(Ring exterior, std::vector<Ring> holes = {}) {
    exterior_ = canonical(std::move(exterior), true);
    if (!ring_is_simple(exterior_)) throw Error("polygon exterior ring self-intersects");
    holes_.reserve(holes.size());
    for (auto& h : holes) holes_.push_back(canonical(std::move(h), false));
    bbox_ = BoundingBox::of(exterior_);
  }

  Polygon(trusted_t, Ring exterior, std::vector<Ring> holes = {})
      : exterior_(std::move(exterior)), holes_(std::move(holes)), bbox_(BoundingBox::of(exterior_)) {}

  static Polygon rectangle(const BoundingBox& b) {
    return Polygon(trusted, Ring{{b.min_x, b.min_y}, {b.max_x, b.min_y}, {b.max_x, b.max_y}, {b.min_x, b.max_y}});
  }

  const Ring& exterior() const { return exterior_; }
  const std::vector<Ring>& holes() const { return holes_; }
  const BoundingBox& bbox() const { return bbox_; }

  template <typename F>
  void for_each_ring(F&& f) const {
    f(exterior_);
    for (const auto& h : holes_) f(h);
  }

  friend bool operator==(const Polygon& a, const Polygon& b) {
    return a.exterior_ == b.exterior_ && a.holes_ == b.holes_;
  }

 private:
  static Ring canonical(Ring ring, bool ccw) {
    ring = detail::clean_ring(std::move(ring));
    if (ring.size() < 3) throw Error("polygon ring has fewer than 3 distinct vertices");
    for (const auto& p : ring)
      if (!std::isfinite(p.x) || !std::isfinite(p.y)) throw Error("polygon vertex is not finite");
    const double a = signed_area(ring);
    if (a == 0.0) throw Error("polygon ring has zero area");
    if ((a > 0.0) != ccw) std::reverse(ring.begin(), ring.end());
    return ring;
  }

  Ring exterior_;
  std::vector<Ring> holes_;
  BoundingBox bbox_;
};

inline double polygon_area(const Polygon& poly) {
  double a = std::abs(signed_area(poly.exterior()));
  for (const auto& h : poly.holes()) a -= std::abs(signed_area(h));
  return std::max(a, 0.0);
}

// Even-odd ray casting over all rings. Points within kBoundaryEps of any
// ring (exterior or hole) count as inside.
inline bool point_in_polygon(PlanarPoint p, const Polygon& poly) {
  if (!poly.bbox().contains(p, kBoundaryEps)) return false;
  bool inside = false;
  bool on_boundary = false;
  poly.for_each_ring([&](const Ring& ring) {
    if (on_boundary) return;
    const std::size_t n = ring.size();
    for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
      const PlanarPoint a = ring[j], b = ring[i];
      if (p.x >= std::min(a.x, b.x) - kBoundaryEps && p.x <= std::max(a.x, b.x) + kBoundaryEps &&
          p.y >= std::min(a.y, b.y) - kBoundaryEps && p.y <= std::max(a.y, b.y) + kBoundaryEps &&
          detail::point_segment_distance(p, a, b) <= kBoundaryEps) {
        on_boundary = true;
        return;
      }
      if ((a.y > p.y) != (b.y > p.y) && p.x < (b.x - a.x) * (p.y - a.y) / (b.y - a.y) + a.x)
        inside = !inside;
    }
  });
  return on_boundary || inside;
}

namespace detail {

inline bool polygon_less(const Polygon& a, const Polygon& b) {
  auto key = [](const PlanarPoint& p) { return std::pair{p.x, p.y}; };
  const auto& ea = a.exterior();
  const auto& eb = b.exterior();
  if (ea.size() != eb.size()) return ea.size() < eb.size();
  for (std::size_t i = 0; i < ea.size(); ++i)
    if (key(ea[i]) != key(eb[i])) return key(ea[i]) < key(eb[i]);
  return a.holes().size() < b.holes().size();
}

struct Segment {
  PlanarPoint a, b;
};

inline std::vector<Segment> segments_near(const Polygon& poly, const BoundingBox& box, double tol) {
  std::vector<Segment> out;
  poly.for_each_ring([&](const Ring& ring) {
    const std::size_t n = ring.size();
    for (std::size_t i = 0; i < n; ++i) {
      const PlanarPoint a = ring[i], b = ring[(i + 1) % n];
      const BoundingBox sb(std::min(a.x, b.x), std::min(a.y, b.y), std::max(a.x, b.x), std::max(a.y, b.y));
      if (sb.intersects(box, tol)) out.push_back({a, b});
    }
  });
  return out;
}

inline double shared_length_ordered(const Polygon& a, const Polygon& b, double tol) {
  const auto sa = segments_near(a, b.bbox(), tol);
  const auto sb = segments_near(b, a.bbox(), tol);
  double total = 0.0;
  for (const auto& e : sa) {
    const PlanarPoint d = e.b - e.a;
    const double len = std::hypot(d.x, d.y);
    if (len == 0.0) continue;
    const PlanarPoint u = (1.0 / len) * d;
    const PlanarPoint nrm{-u.y, u.x};
    for (const auto& f : sb) {
      if (std::max(f.a.x, f.b.x) < std::min(e.a.x, e.b.x) - tol ||
          std::min(f.a.x, f.b.x) > std::max(e.a.x, e.b.x) + tol ||
          std::max(f.a.y, f.b.y) < std::min(e.a.y, e.b.y) - tol ||
          std::min(f.a.y, f.b.y) > std::max(e.a.y, e.b.y) + tol)
        continue;
      if (std::abs(dot(f.a - e.a, nrm)) > tol || std::abs(dot(f.b - e.a, nrm)) > tol) continue;
      const double t0 = dot(f.a - e.a, u);
      const double t1 = dot(f.b - e.a, u);
      const double overlap = std::min(len, std::max(t0, t1)) - std::max(0.0, std::min(t0, t1));
      if (overlap > 0.0) total += overlap;
    }
  }
  return total;
}

}  // namespace detail

// Total length over which the boundaries of a and b coincide: segment pairs
// collinear within tol, measured by their overlap along the line. Argument
// order is canonicalized so the result is exactly symmetric.
inline double shared_boundary_length(const Polygon& a, const Polygon& b, double tol = 0.01) {
  if (!(tol > 0.0)) throw Error("shared_boundary_length: tolerance must be positive");
  if (!a.bbox().intersects(b.bbox(), tol)) return 0.0;
  return detail::polygon_less(b, a) ? detail::shared_length_ordered(b, a, tol)
                                    : detail::shared_length_ordered(a, b, tol);
}

namespace detail {

// Sutherland-Hodgman against {p : dot(p - m, d) <= 0}.
inline Ring clip_ring(const Ring& ring, PlanarPoint m, PlanarPoint d) {
  Ring out;
  const std::size_t n = ring.size();
  out.reserve(n + 2);
  for (std::size_t i = 0; i < n; ++i) {
    const PlanarPoint cur = ring[i];
    const PlanarPoint nxt = ring[(i + 1) % n];
    const double fc = dot(cur - m, d);
    const double fn = dot(nxt - m, d);
    if (fc <= 0.0) out.push_back(cur);
    if ((fc <= 0.0) != (fn <= 0.0)) {
      const double t = fc / (fc - fn);
      out.push_back(cur + t * (nxt - cur));
    }
  }
  return clean_ring(std::move(out));
}

}  // namespace detail

// Keeps the part of poly closer to a than to b. Exact for convex input;
// returns nullopt when nothing of positive area remains.
inline std::optional<Polygon> halfplane_clip(const Polygon& poly, PlanarPoint a, PlanarPoint b) {
  if (a == b) throw Error("halfplane_clip: a and b coincide");
  const PlanarPoint m = 0.5 * (a + b);
  const PlanarPoint d = b - a;
  Ring ext = detail::clip_ring(poly.exterior(), m, d);
  if (ext.size() < 3 || !(signed_area(ext) > 0.0)) return std::nullopt;
  std::vector<Ring> holes;
  for (const auto& h : poly.holes()) {
    Ring c = detail::clip_ring(h, m, d);
    if (c.size() >= 3 && signed_area(c) != 0.0) holes.push_back(std::move(c));
  }
  return Polygon(Polygon::trusted, std::move(ext), std::move(holes));
}

inline PlanarPoint centroid(const Polygon& poly) {
  const auto& r = poly.exterior();
  const std::size_t n = r.size();
  double a = 0.0, cx = 0.0, cy = 0.0;
  for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
    const double c = cross(r[j], r[i]);
    a += c;
    cx += (r[j].x + r[i].x) * c;
    cy += (r[j].y + r[i].y) * c;
  }
  if (a == 0.0) return r.front();
  return {cx / (3.0 * a), cy / (3.0 * a)};
}

}  // namespace stm
