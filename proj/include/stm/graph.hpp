#pragma once

// Region adjacency graphs: boundary- or road-weighted edges plus static
// node features, and their JSON file form.

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "stm/error.hpp"
#include "stm/event_mapping.hpp"
#include "stm/geo.hpp"
#include "stm/geojson.hpp"
#include "stm/partition.hpp"
#include "stm/road_network.hpp"

namespace stm {

struct GraphEdge {
  std::size_t u = 0;
  std::size_t v = 0;
  double weight = 0.0;

  friend bool operator==(const GraphEdge&, const GraphEdge&) = default;
};

struct AdjacencyOptions {
  double tol = 0.01;
  // Grid only: add diagonal neighbours with weight diagonal_factor * cell_size.
  bool queen = false;
  double diagonal_factor = 0.1;
};

// Shared lengths at or below this are treated as point contacts.
inline constexpr double kMinSharedLength = 1e-9;

namespace detail {

inline std::vector<GraphEdge> grid_adjacency(const Partition& part, const AdjacencyOptions& opts) {
  const auto& g = *part.grid;
  std::vector<GraphEdge> edges;
  auto cell = [&](std::size_t r, std::size_t c) -> const BoundingBox& { return part.regions[r * g.cols + c].geometry.bbox(); };
  for (std::size_t r = 0; r < g.rows; ++r)
    for (std::size_t c = 0; c < g.cols; ++c) {
      const std::size_t id = r * g.cols + c;
      if (c + 1 < g.cols) edges.push_back({id, id + 1, cell(r, c).height()});
      if (r + 1 < g.rows) edges.push_back({id, id + g.cols, cell(r, c).width()});
      if (opts.queen && r + 1 < g.rows) {
        const double w = opts.diagonal_factor * g.cell_size;
        if (c + 1 < g.cols) edges.push_back({id, id + g.cols + 1, w});
        if (c > 0) edges.push_back({id, id + g.cols - 1, w});
      }
    }
  return edges;
}

}  // namespace detail

// Grid partitions use (row, col) arithmetic; other kinds connect regions
// whose boundaries share positive length, weighted by that length.
inline std::vector<GraphEdge> build_adjacency(const Partition& part, const AdjacencyOptions& opts = {}) {
  if (part.kind == RegionKind::grid && part.grid) return detail::grid_adjacency(part, opts);
  const std::size_t n = part.size();
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](auto a, auto b) {
    const double xa = part.regions[a].geometry.bbox().min_x, xb = part.regions[b].geometry.bbox().min_x;
    return xa < xb || (xa == xb && a < b);
  });
  std::vector<GraphEdge> edges;
  for (std::size_t k = 0; k < n; ++k) {
    const auto& a = part.regions[order[k]].geometry;
    for (std::size_t m = k + 1; m < n; ++m) {
      const auto& b = part.regions[order[m]].geometry;
      if (b.bbox().min_x > a.bbox().max_x + opts.tol) break;
      if (!a.bbox().intersects(b.bbox(), opts.tol)) continue;
      const double w = shared_boundary_length(a, b, opts.tol);
      if (w > kMinSharedLength)
        edges.push_back({std::min(order[k], order[m]), std::max(order[k], order[m]), w});
    }
  }
  std::sort(edges.begin(), edges.end(), [](const GraphEdge& l, const GraphEdge& r) {
    return std::pair{l.u, l.v} < std::pair{r.u, r.v};
  });
  return edges;
}

// Sums, per region pair, the lengths of road segments whose endpoints fall
// in two different regions. Only defined for Voronoi partitions.
inline std::vector<GraphEdge> build_road_weights(const Partition& part, const RoadNetwork& net) {
  if (part.kind != RegionKind::voronoi) throw Error("build_road_weights: requires a voronoi partition");
  const BucketIndex index(part);
  std::vector<std::size_t> node_region(net.nodes.size());
  for (const auto& n : net.nodes) node_region[n.id] = locate(n.pos, part, index);
  std::map<std::pair<std::size_t, std::size_t>, double> acc;
  for (const auto& s : net.segments) {
    const std::size_t a = node_region[s.u], b = node_region[s.v];
    if (a == kNoRegion || b == kNoRegion || a == b) continue;
    acc[{std::min(a, b), std::max(a, b)}] += s.length;
  }
  std::vector<GraphEdge> edges;
  for (const auto& [k, w] : acc)
    if (w > 0.0) edges.push_back({k.first, k.second, w});
  return edges;
}

struct RegionGraph {
  Partition partition;
  std::vector<GraphEdge> edges;
  UrbanFeatures static_features;

  std::size_t size() const { return partition.size(); }
};

// Validates and canonicalizes: u < v, no duplicates, sorted by (u, v).
inline RegionGraph assemble_graph(Partition part, std::vector<GraphEdge> edges, UrbanFeatures features = {}) {
  const std::size_t n = part.size();
  for (auto& e : edges) {
    if (e.u >= n || e.v >= n)
      throw Error("assemble_graph: edge (" + std::to_string(e.u) + "," + std::to_string(e.v) + ") references a missing region");
    if (e.u == e.v) throw Error("assemble_graph: self-loop on region " + std::to_string(e.u));
    if (!(e.weight > 0.0) || !std::isfinite(e.weight)) throw Error("assemble_graph: edge weight must be positive");
    if (e.u > e.v) std::swap(e.u, e.v);
  }
  std::sort(edges.begin(), edges.end(), [](const GraphEdge& l, const GraphEdge& r) {
    return std::pair{l.u, l.v} < std::pair{r.u, r.v};
  });
  for (std::size_t i = 1; i < edges.size(); ++i)
    if (edges[i].u == edges[i - 1].u && edges[i].v == edges[i - 1].v)
      throw Error("assemble_graph: duplicate edge (" + std::to_string(edges[i].u) + "," + std::to_string(edges[i].v) + ")");
  if (!features.empty() && features.rows != n)
    throw Error("assemble_graph: feature matrix has " + std::to_string(features.rows) + " rows for " +
                std::to_string(n) + " regions");
  return {std::move(part), std::move(edges), std::move(features)};
}

// Graph file: regions, edges, feature_categories, features in that order,
// followed by the partition metadata needed to reload it losslessly.
inline geojson::ordered_json to_json(const RegionGraph& g) {
  using oj = geojson::ordered_json;
  const oj pj = to_json(g.partition);
  oj out;
  out["regions"] = pj["regions"];
  oj edges = oj::array();
  for (const auto& e : g.edges) edges.push_back({e.u, e.v, e.weight});
  out["edges"] = std::move(edges);
  out["feature_categories"] = g.static_features.categories;
  oj feats = oj::array();
  for (std::size_t r = 0; r < g.static_features.rows && !g.static_features.empty(); ++r) {
    oj row = oj::array();
    for (std::size_t c = 0; c < g.static_features.cols(); ++c) row.push_back(g.static_features.at(r, c));
    feats.push_back(std::move(row));
  }
  out["features"] = std::move(feats);
  out["features_normalized"] = g.static_features.normalized;
  oj meta = pj;
  meta.erase("regions");
  out["partition"] = std::move(meta);
  return out;
}

inline RegionGraph graph_from_json(const geojson::json& j) {
  try {
    geojson::json pj = j.at("partition");
    pj["regions"] = j.at("regions");
    Partition part = partition_from_json(pj);
    std::vector<GraphEdge> edges;
    for (const auto& e : j.at("edges"))
      edges.push_back({e.at(0).get<std::size_t>(), e.at(1).get<std::size_t>(), e.at(2).get<double>()});
    UrbanFeatures f;
    f.categories = j.at("feature_categories").get<std::vector<std::string>>();
    if (!f.categories.empty()) {
      const auto& rows = j.at("features");
      f.rows = rows.size();
      for (const auto& row : rows) {
        if (row.size() != f.cols()) throw Error("graph file: feature row width mismatch");
        for (const auto& v : row) f.matrix.push_back(v.get<double>());
      }
      f.normalized = j.value("features_normalized", false);
    }
    return assemble_graph(std::move(part), std::move(edges), std::move(f));
  } catch (const geojson::json::exception& e) {
    throw Error(std::string("graph file: ") + e.what());
  }
}

}  // namespace stm
