#pragma once

// Road network ingestion and degree-based seed selection for Voronoi
// partitioning.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "stm/error.hpp"
#include "stm/geo.hpp"
#include "stm/geojson.hpp"

namespace stm {

struct RoadNode {
  std::size_t id = 0;
  PlanarPoint pos;
  std::size_t degree = 0;
};

struct RoadSegment {
  std::size_t u = 0;
  std::size_t v = 0;
  double length = 0.0;
};

struct RoadNetwork {
  std::vector<RoadNode> nodes;
  std::vector<RoadSegment> segments;
  // Meaningless when nodes is empty.
  BoundingBox bbox;
  // Features whose geometry was not a (Multi)LineString.
  std::size_t skipped_features = 0;

  bool empty() const { return nodes.empty(); }
  double total_length() const {
    double s = 0.0;
    for (const auto& seg : segments) s += seg.length;
    return s;
  }
};

namespace detail {

// Merges vertices that fall within tol of an existing node. Buckets are
// tol-sized so only the 3x3 neighbourhood needs checking.
class VertexSnapper {
 public:
  explicit VertexSnapper(double tol) : tol_(tol) {}

  std::size_t insert(PlanarPoint p) {
    if (tol_ > 0.0) {
      const auto [bx, by] = cell(p);
      std::size_t best = npos;
      double best_d = std::numeric_limits<double>::infinity();
      for (std::int64_t dx = -1; dx <= 1; ++dx)
        for (std::int64_t dy = -1; dy <= 1; ++dy) {
          auto it = cells_.find(key(bx + dx, by + dy));
          if (it == cells_.end()) continue;
          for (std::size_t id : it->second) {
            const double d = distance(points_[id], p);
            if (d <= tol_ && (d < best_d || (d == best_d && id < best))) {
              best = id;
              best_d = d;
            }
          }
        }
      if (best != npos) return best;
      points_.push_back(p);
      cells_[key(bx, by)].push_back(points_.size() - 1);
      return points_.size() - 1;
    }
    auto [it, inserted] = exact_.try_emplace(std::pair{p.x, p.y}, points_.size());
    if (inserted) points_.push_back(p);
    return it->second;
  }

  const std::vector<PlanarPoint>& points() const { return points_; }

 private:
  static constexpr std::size_t npos = static_cast<std::size_t>(-1);

  std::pair<std::int64_t, std::int64_t> cell(PlanarPoint p) const {
    return {static_cast<std::int64_t>(std::floor(p.x / tol_)),
            static_cast<std::int64_t>(std::floor(p.y / tol_))};
  }
  static std::uint64_t key(std::int64_t x, std::int64_t y) {
    return (static_cast<std::uint64_t>(x) << 32) ^ (static_cast<std::uint64_t>(y) & 0xffffffffULL);
  }

  double tol_;
  std::vector<PlanarPoint> points_;
  std::unordered_map<std::uint64_t, std::vector<std::size_t>> cells_;
  std::map<std::pair<double, double>, std::size_t> exact_;
};

}  // namespace detail

// Builds a RoadNetwork from a GeoJSON FeatureCollection of LineString /
// MultiLineString features. Vertices within snap_tol merge into one node;
// consecutive vertices become segments. Other geometry types are skipped
// and counted.
inline RoadNetwork parse_road_geojson(std::string_view bytes, const Projection& proj, double snap_tol = 0.5) {
  constexpr std::string_view what = "road network";
  if (!(snap_tol >= 0.0)) throw Error("road network: snap tolerance must be non-negative");
  const auto doc = geojson::parse_document(bytes, what);
  const auto& feats = geojson::features(doc, what);

  detail::VertexSnapper snapper(snap_tol);
  std::vector<std::pair<std::size_t, std::size_t>> raw;
  RoadNetwork net;

  for (std::size_t fi = 0; fi < feats.size(); ++fi) {
    const auto& f = feats[fi];
    if (!f.is_object()) throw ParseError(std::string(what) + ": feature is not an object", 0, fi);
    auto git = f.find("geometry");
    if (git == f.end() || git->is_null()) {
      ++net.skipped_features;
      continue;
    }
    const std::string type = git->value("type", "");
    std::vector<const geojson::json*> lines;
    auto cit = git->find("coordinates");
    if (type == "LineString") {
      if (cit == git->end() || !cit->is_array())
        throw ParseError(std::string(what) + ": LineString without coordinates", 0, fi);
      lines.push_back(&*cit);
    } else if (type == "MultiLineString") {
      if (cit == git->end() || !cit->is_array())
        throw ParseError(std::string(what) + ": MultiLineString without coordinates", 0, fi);
      for (const auto& l : *cit) {
        if (!l.is_array()) throw ParseError(std::string(what) + ": invalid MultiLineString part", 0, fi);
        lines.push_back(&l);
      }
    } else {
      ++net.skipped_features;
      continue;
    }
    for (const auto* line : lines) {
      std::size_t prev = static_cast<std::size_t>(-1);
      for (const auto& c : *line) {
        const std::size_t id = snapper.insert(project(geojson::position(c, fi, what), proj));
        if (prev != static_cast<std::size_t>(-1) && prev != id) raw.emplace_back(prev, id);
        prev = id;
      }
    }
  }

  // Deduplicate undirected segments, keep first occurrence order.
  std::vector<std::pair<std::size_t, std::size_t>> uniq;
  {
    std::unordered_map<std::uint64_t, bool> seen;
    for (auto [u, v] : raw) {
      const auto lo = std::min(u, v), hi = std::max(u, v);
      const std::uint64_t k = (static_cast<std::uint64_t>(lo) << 32) | hi;
      if (seen.emplace(k, true).second) uniq.emplace_back(u, v);
    }
  }

  // Renumber densely, dropping vertices left without segments.
  const auto& pts = snapper.points();
  std::vector<std::size_t> degree(pts.size(), 0);
  for (auto [u, v] : uniq) {
    ++degree[u];
    ++degree[v];
  }
  std::vector<std::size_t> remap(pts.size(), static_cast<std::size_t>(-1));
  for (std::size_t i = 0; i < pts.size(); ++i) {
    if (degree[i] == 0) continue;
    remap[i] = net.nodes.size();
    net.nodes.push_back({net.nodes.size(), pts[i], degree[i]});
  }
  net.segments.reserve(uniq.size());
  for (auto [u, v] : uniq) {
    const std::size_t a = remap[u], b = remap[v];
    net.segments.push_back({a, b, distance(net.nodes[a].pos, net.nodes[b].pos)});
  }
  if (!net.nodes.empty()) {
    std::vector<PlanarPoint> p;
    p.reserve(net.nodes.size());
    for (const auto& n : net.nodes) p.push_back(n.pos);
    net.bbox = BoundingBox::of(p);
  }
  return net;
}

enum class SeedSource { road_node, fallback_grid };

inline const char* to_string(SeedSource s) {
  return s == SeedSource::road_node ? "road-node" : "fallback-grid";
}

struct SeedParams {
  std::size_t min_degree = 4;
  double d_small = 5000.0;
  double d_big = 20000.0;
};

// Seeds for degree-based Voronoi. Construction verifies pairwise spacing
// >= d_small and that every coverage-lattice cell center lies within d_big
// of a seed.
class SeedSet {
 public:
  SeedSet(std::vector<PlanarPoint> seeds, std::vector<SeedSource> source, const BoundingBox& area,
          double d_small, double d_big)
      : seeds_(std::move(seeds)), source_(std::move(source)) {
    if (seeds_.size() != source_.size()) throw Error("seed set: source tags do not match seeds");
    for (std::size_t i = 0; i < seeds_.size(); ++i)
      for (std::size_t j = i + 1; j < seeds_.size(); ++j)
        if (distance(seeds_[i], seeds_[j]) < d_small)
          throw Error("seed set: seeds " + std::to_string(i) + " and " + std::to_string(j) +
                      " closer than d_small");
    for (const auto& c : lattice_centers(area, d_big))
      if (nearest_distance(c) > d_big) throw Error("seed set: coverage lattice cell left uncovered");
  }

  const std::vector<PlanarPoint>& seeds() const { return seeds_; }
  const std::vector<SeedSource>& source() const { return source_; }
  std::size_t size() const { return seeds_.size(); }

  double nearest_distance(PlanarPoint p) const {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& s : seeds_) best = std::min(best, distance(s, p));
    return best;
  }

  // Row-major centers of the d_big lattice over area; the last row and
  // column are clipped to area, and their centers follow the clipped cell.
  static std::vector<PlanarPoint> lattice_centers(const BoundingBox& area, double pitch) {
    auto count = [pitch](double extent) {
      const double q = extent / pitch;
      const double r = std::round(q);
      const double n = (std::abs(q - r) <= 1e-9 * std::max(1.0, r)) ? r : std::ceil(q);
      return std::max<std::size_t>(1, static_cast<std::size_t>(n));
    };
    const std::size_t cols = count(area.width()), rows = count(area.height());
    std::vector<PlanarPoint> out;
    out.reserve(rows * cols);
    for (std::size_t r = 0; r < rows; ++r) {
      const double y0 = area.min_y + static_cast<double>(r) * pitch;
      const double y1 = r + 1 == rows ? area.max_y : std::min(area.max_y, y0 + pitch);
      for (std::size_t c = 0; c < cols; ++c) {
        const double x0 = area.min_x + static_cast<double>(c) * pitch;
        const double x1 = c + 1 == cols ? area.max_x : std::min(area.max_x, x0 + pitch);
        out.push_back({0.5 * (x0 + x1), 0.5 * (y0 + y1)});
      }
    }
    return out;
  }

 private:
  std::vector<PlanarPoint> seeds_;
  std::vector<SeedSource> source_;
};

// Greedy degree-ordered seed selection with a coverage pass. Candidates
// are nodes with degree >= min_degree inside area (defaults to net.bbox),
// visited by (degree desc, id asc); a candidate is kept when it is at least
// d_small from every kept seed. Lattice cells of pitch d_big whose centers
// are farther than d_big from all seeds then contribute their center.
inline SeedSet select_seeds(const RoadNetwork& net, const SeedParams& params,
                            std::optional<BoundingBox> area = std::nullopt) {
  if (!(params.d_small > 0.0) || !(params.d_small < params.d_big))
    throw Error("select_seeds: require 0 < d_small < d_big");
  if (params.min_degree < 1) throw Error("select_seeds: min_degree must be >= 1");
  if (!area) {
    if (net.empty()) throw Error("select_seeds: no seeds derivable (empty network and no area)");
    area = net.bbox;
  }
  if (area->degenerate()) {
    if (net.empty()) throw Error("select_seeds: no seeds derivable (empty network, degenerate bbox)");
    throw Error("select_seeds: degenerate bounding box");
  }

  std::vector<const RoadNode*> cand;
  for (const auto& n : net.nodes)
    if (n.degree >= params.min_degree && area->contains(n.pos)) cand.push_back(&n);
  std::stable_sort(cand.begin(), cand.end(), [](const RoadNode* a, const RoadNode* b) {
    return a->degree > b->degree || (a->degree == b->degree && a->id < b->id);
  });

  std::vector<PlanarPoint> seeds;
  std::vector<SeedSource> source;
  auto far_from_all = [&](PlanarPoint p, double d) {
    for (const auto& s : seeds)
      if (distance(s, p) < d) return false;
    return true;
  };
  for (const RoadNode* n : cand) {
    if (far_from_all(n->pos, params.d_small)) {
      seeds.push_back(n->pos);
      source.push_back(SeedSource::road_node);
    }
  }
  for (const auto& c : SeedSet::lattice_centers(*area, params.d_big)) {
    bool covered = false;
    for (const auto& s : seeds)
      if (distance(s, c) <= params.d_big) {
        covered = true;
        break;
      }
    if (!covered) {
      seeds.push_back(c);
      source.push_back(SeedSource::fallback_grid);
    }
  }
  return SeedSet(std::move(seeds), std::move(source), *area, params.d_small, params.d_big);
}

}  // namespace stm
