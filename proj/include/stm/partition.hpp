#pragma once

// Region sets for the three spatial mapping strategies: regular grid,
// administrative boundaries read from GeoJSON, and degree-seeded Voronoi.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "stm/error.hpp"
#include "stm/geo.hpp"
#include "stm/geojson.hpp"
#include "stm/road_network.hpp"

namespace stm {

enum class RegionKind { grid, admin, voronoi };

inline std::string_view to_string(RegionKind k) {
  switch (k) {
    case RegionKind::grid: return "grid";
    case RegionKind::admin: return "admin";
    case RegionKind::voronoi: return "voronoi";
  }
  return "?";
}

inline RegionKind region_kind_from_string(std::string_view s) {
  if (s == "grid") return RegionKind::grid;
  if (s == "admin") return RegionKind::admin;
  if (s == "voronoi") return RegionKind::voronoi;
  throw Error("unknown region kind '" + std::string(s) + "'");
}

struct Region {
  std::size_t id = 0;
  Polygon geometry;
  RegionKind kind = RegionKind::grid;
  std::string label;
};

// Row/column layout of a grid partition; region id = row * cols + col.
struct GridLayout {
  std::size_t rows = 0;
  std::size_t cols = 0;
  double cell_size = 0.0;

  friend bool operator==(const GridLayout&, const GridLayout&) = default;
};

struct Partition {
  std::vector<Region> regions;
  Projection proj;
  BoundingBox bbox;
  RegionKind kind = RegionKind::grid;
  std::optional<GridLayout> grid;
  // Voronoi only: seed coordinates and where each came from.
  std::vector<PlanarPoint> seeds;
  std::vector<SeedSource> seed_source;

  std::size_t size() const { return regions.size(); }
};

namespace detail {

// ceil(extent / step), except that ratios within 1e-9 of an integer snap
// to it so exact multiples never produce a sliver cell.
inline std::size_t cell_count(double extent, double step) {
  const double q = extent / step;
  const double r = std::round(q);
  const double n = (std::abs(q - r) <= 1e-9 * std::max(1.0, r)) ? r : std::ceil(q);
  return std::max<std::size_t>(1, static_cast<std::size_t>(n));
}

}  // namespace detail

inline Partition grid_partition(const BoundingBox& bbox, double cell_size, const Projection& proj = {}) {
  if (!(cell_size > 0.0)) throw Error("grid_partition: cell size must be positive");
  if (bbox.degenerate()) throw Error("grid_partition: degenerate bounding box");
  Partition part;
  part.proj = proj;
  part.bbox = bbox;
  part.kind = RegionKind::grid;
  const std::size_t cols = detail::cell_count(bbox.width(), cell_size);
  const std::size_t rows = detail::cell_count(bbox.height(), cell_size);
  part.grid = GridLayout{rows, cols, cell_size};
  part.regions.reserve(rows * cols);
  for (std::size_t r = 0; r < rows; ++r) {
    const double y0 = bbox.min_y + static_cast<double>(r) * cell_size;
    const double y1 = r + 1 == rows ? bbox.max_y : bbox.min_y + static_cast<double>(r + 1) * cell_size;
    for (std::size_t c = 0; c < cols; ++c) {
      const double x0 = bbox.min_x + static_cast<double>(c) * cell_size;
      const double x1 = c + 1 == cols ? bbox.max_x : bbox.min_x + static_cast<double>(c + 1) * cell_size;
      part.regions.push_back({r * cols + c, Polygon::rectangle(BoundingBox(x0, y0, x1, y1)), RegionKind::grid,
                              std::to_string(r) + "," + std::to_string(c)});
    }
  }
  return part;
}

struct AdminOptions {
  std::string id_property = "id";
  // Projected coordinates are rounded to this grid (m); 0 disables.
  double snap_grid = 0.001;
};

// One region per Polygon feature; MultiPolygon parts become sibling
// regions labelled "<id>-k", the largest part first and the rest in file
// order.
inline Partition admin_partition(std::string_view bytes, const Projection& proj, const AdminOptions& opts = {}) {
  constexpr std::string_view what = "admin boundaries";
  const auto doc = geojson::parse_document(bytes, what);
  const auto& feats = geojson::features(doc, what);

  auto snap = [&](PlanarPoint p) {
    if (opts.snap_grid <= 0.0) return p;
    return PlanarPoint{std::round(p.x / opts.snap_grid) * opts.snap_grid,
                       std::round(p.y / opts.snap_grid) * opts.snap_grid};
  };
  auto read_ring = [&](const geojson::json& coords, std::size_t fi) {
    if (!coords.is_array()) throw ParseError(std::string(what) + ": ring is not an array", 0, fi);
    Ring ring;
    ring.reserve(coords.size());
    for (const auto& c : coords) ring.push_back(snap(project(geojson::position(c, fi, what), proj)));
    ring = detail::clean_ring(std::move(ring));
    if (ring.size() < 3) throw ParseError(std::string(what) + ": invalid ring with fewer than 3 points", 0, fi);
    return ring;
  };
  auto read_polygon = [&](const geojson::json& rings, std::size_t fi) {
    if (!rings.is_array() || rings.empty())
      throw ParseError(std::string(what) + ": polygon has no rings", 0, fi);
    Ring ext = read_ring(rings[0], fi);
    std::vector<Ring> holes;
    for (std::size_t k = 1; k < rings.size(); ++k) holes.push_back(read_ring(rings[k], fi));
    try {
      return Polygon(std::move(ext), std::move(holes));
    } catch (const ParseError&) {
      throw;
    } catch (const Error& e) {
      throw ParseError(std::string(what) + ": " + e.what(), 0, fi);
    }
  };

  Partition part;
  part.proj = proj;
  part.kind = RegionKind::admin;
  for (std::size_t fi = 0; fi < feats.size(); ++fi) {
    const auto& f = feats[fi];
    if (!f.is_object()) throw ParseError(std::string(what) + ": feature is not an object", 0, fi);
    const auto props = f.find("properties");
    if (props == f.end() || !props->is_object() || !props->contains(opts.id_property))
      throw ParseError(std::string(what) + ": missing id property '" + opts.id_property + "'", 0, fi);
    const auto& idv = (*props)[opts.id_property];
    std::string label;
    if (idv.is_string()) label = idv.get<std::string>();
    else if (idv.is_number_integer()) label = std::to_string(idv.get<long long>());
    else if (idv.is_number()) label = idv.dump();
    else throw ParseError(std::string(what) + ": id property '" + opts.id_property + "' is not a string or number", 0, fi);

    const auto git = f.find("geometry");
    if (git == f.end() || !git->is_object())
      throw ParseError(std::string(what) + ": feature has no geometry", 0, fi);
    const std::string type = git->value("type", "");
    const auto cit = git->find("coordinates");
    if (cit == git->end()) throw ParseError(std::string(what) + ": geometry has no coordinates", 0, fi);
    if (type == "Polygon") {
      part.regions.push_back({part.regions.size(), read_polygon(*cit, fi), RegionKind::admin, label});
    } else if (type == "MultiPolygon") {
      if (!cit->is_array() || cit->empty())
        throw ParseError(std::string(what) + ": empty MultiPolygon", 0, fi);
      std::vector<Polygon> parts;
      for (const auto& p : *cit) parts.push_back(read_polygon(p, fi));
      if (parts.size() == 1) {
        part.regions.push_back({part.regions.size(), std::move(parts[0]), RegionKind::admin, label});
        continue;
      }
      std::size_t largest = 0;
      for (std::size_t k = 1; k < parts.size(); ++k)
        if (polygon_area(parts[k]) > polygon_area(parts[largest])) largest = k;
      std::vector<std::size_t> order{largest};
      for (std::size_t k = 0; k < parts.size(); ++k)
        if (k != largest) order.push_back(k);
      for (std::size_t k = 0; k < order.size(); ++k)
        part.regions.push_back({part.regions.size(), std::move(parts[order[k]]), RegionKind::admin,
                                label + "-" + std::to_string(k)});
    } else {
      throw ParseError(std::string(what) + ": unsupported geometry type '" + type + "'", 0, fi);
    }
  }
  if (part.regions.empty()) throw Error("admin boundaries: no polygon features");
  part.bbox = part.regions.front().geometry.bbox();
  for (const auto& r : part.regions) part.bbox.expand(r.geometry.bbox());
  return part;
}

namespace detail {

// Cell of seeds[i] within bbox. Other seeds are visited nearest first; once
// a seed is farther than twice the cell's circumradius it cannot clip.
inline Polygon voronoi_cell(std::size_t i, const std::vector<PlanarPoint>& seeds, const BoundingBox& bbox) {
  const PlanarPoint s = seeds[i];
  std::vector<std::pair<double, std::size_t>> order;
  order.reserve(seeds.size());
  for (std::size_t j = 0; j < seeds.size(); ++j)
    if (j != i) order.emplace_back(distance(s, seeds[j]), j);
  std::sort(order.begin(), order.end());
  Polygon cell = Polygon::rectangle(bbox);
  double radius = 0.0;
  for (const auto& p : cell.exterior()) radius = std::max(radius, distance(s, p));
  for (const auto& [d, j] : order) {
    if (d > 2.0 * radius) break;
    auto clipped = halfplane_clip(cell, s, seeds[j]);
    if (!clipped) throw Error("voronoi_partition: seed " + std::to_string(i) + " has an empty cell");
    cell = std::move(*clipped);
    radius = 0.0;
    for (const auto& p : cell.exterior()) radius = std::max(radius, distance(s, p));
  }
  return cell;
}

}  // namespace detail

// Half-plane-intersection Voronoi, clipped to bbox. Region i belongs to
// seed i. Cells are computed independently, so workers > 1 only changes
// the schedule.
inline Partition voronoi_partition(const std::vector<PlanarPoint>& seeds, const BoundingBox& bbox,
                                   const Projection& proj = {}, unsigned workers = 1) {
  if (seeds.empty()) throw Error("voronoi_partition: no seeds");
  if (bbox.degenerate()) throw Error("voronoi_partition: degenerate bounding box");
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    if (!bbox.contains(seeds[i])) throw Error("voronoi_partition: seed " + std::to_string(i) + " outside bbox");
  }
  {
    std::vector<std::size_t> idx(seeds.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return seeds[a].x < seeds[b].x; });
    for (std::size_t k = 0; k < idx.size(); ++k)
      for (std::size_t m = k + 1; m < idx.size() && seeds[idx[m]].x - seeds[idx[k]].x < 1e-9; ++m)
        if (distance(seeds[idx[k]], seeds[idx[m]]) < 1e-9)
          throw Error("voronoi_partition: duplicate seeds " + std::to_string(std::min(idx[k], idx[m])) +
                      " and " + std::to_string(std::max(idx[k], idx[m])));
  }

  std::vector<std::optional<Polygon>> cells(seeds.size());
  workers = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(seeds.size())));
  if (workers == 1) {
    for (std::size_t i = 0; i < seeds.size(); ++i) cells[i] = detail::voronoi_cell(i, seeds, bbox);
  } else {
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(workers);
    for (unsigned w = 0; w < workers; ++w)
      pool.emplace_back([&, w] {
        try {
          for (std::size_t i = w; i < seeds.size(); i += workers) cells[i] = detail::voronoi_cell(i, seeds, bbox);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    for (auto& t : pool) t.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }

  Partition part;
  part.proj = proj;
  part.bbox = bbox;
  part.kind = RegionKind::voronoi;
  part.seeds = seeds;
  part.regions.reserve(seeds.size());
  for (std::size_t i = 0; i < seeds.size(); ++i)
    part.regions.push_back({i, std::move(*cells[i]), RegionKind::voronoi, std::to_string(i)});
  return part;
}

inline Partition voronoi_partition(const SeedSet& seeds, const BoundingBox& bbox, const Projection& proj = {},
                                   unsigned workers = 1) {
  Partition p = voronoi_partition(seeds.seeds(), bbox, proj, workers);
  p.seed_source = seeds.source();
  return p;
}

// ---------------------------------------------------------------------------
// Serialization

namespace detail {

inline geojson::ordered_json ring_json(const Ring& r) {
  geojson::ordered_json a = geojson::ordered_json::array();
  for (const auto& p : r) a.push_back({p.x, p.y});
  return a;
}

inline Ring ring_from_json(const geojson::json& a) {
  Ring r;
  for (const auto& p : a) r.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
  return r;
}

}  // namespace detail

inline geojson::ordered_json to_json(const Partition& part) {
  using oj = geojson::ordered_json;
  oj out;
  out["kind"] = to_string(part.kind);
  out["projection"] = {{"origin_lon", part.proj.origin_lon()},
                       {"origin_lat", part.proj.origin_lat()},
                       {"earth_radius", part.proj.earth_radius()}};
  out["bbox"] = {part.bbox.min_x, part.bbox.min_y, part.bbox.max_x, part.bbox.max_y};
  if (part.grid) out["grid"] = {{"rows", part.grid->rows}, {"cols", part.grid->cols}, {"cell_size", part.grid->cell_size}};
  if (!part.seeds.empty()) {
    oj seeds = oj::array();
    for (std::size_t i = 0; i < part.seeds.size(); ++i) {
      oj s = {{"x", part.seeds[i].x}, {"y", part.seeds[i].y}};
      if (i < part.seed_source.size()) s["source"] = to_string(part.seed_source[i]);
      seeds.push_back(std::move(s));
    }
    out["seeds"] = std::move(seeds);
  }
  oj regions = oj::array();
  for (const auto& r : part.regions) {
    oj j;
    j["id"] = r.id;
    j["kind"] = to_string(r.kind);
    j["label"] = r.label;
    j["ring"] = detail::ring_json(r.geometry.exterior());
    if (!r.geometry.holes().empty()) {
      oj holes = oj::array();
      for (const auto& h : r.geometry.holes()) holes.push_back(detail::ring_json(h));
      j["holes"] = std::move(holes);
    }
    regions.push_back(std::move(j));
  }
  out["regions"] = std::move(regions);
  return out;
}

inline Partition partition_from_json(const geojson::json& j) {
  try {
    Partition part;
    part.kind = region_kind_from_string(j.at("kind").get<std::string>());
    const auto& pj = j.at("projection");
    part.proj = Projection(pj.at("origin_lon").get<double>(), pj.at("origin_lat").get<double>(),
                           pj.at("earth_radius").get<double>());
    const auto& b = j.at("bbox");
    part.bbox = BoundingBox(b.at(0).get<double>(), b.at(1).get<double>(), b.at(2).get<double>(), b.at(3).get<double>());
    if (j.contains("grid")) {
      const auto& g = j["grid"];
      part.grid = GridLayout{g.at("rows").get<std::size_t>(), g.at("cols").get<std::size_t>(),
                             g.at("cell_size").get<double>()};
    }
    if (j.contains("seeds")) {
      for (const auto& s : j["seeds"]) {
        part.seeds.push_back({s.at("x").get<double>(), s.at("y").get<double>()});
        if (s.contains("source"))
          part.seed_source.push_back(s["source"] == "road-node" ? SeedSource::road_node : SeedSource::fallback_grid);
      }
    }
    for (const auto& rj : j.at("regions")) {
      Region r;
      r.id = rj.at("id").get<std::size_t>();
      if (r.id != part.regions.size()) throw Error("partition file: region ids are not dense");
      r.kind = region_kind_from_string(rj.at("kind").get<std::string>());
      r.label = rj.at("label").get<std::string>();
      std::vector<Ring> holes;
      if (rj.contains("holes"))
        for (const auto& h : rj["holes"]) holes.push_back(detail::ring_from_json(h));
      r.geometry = Polygon(Polygon::trusted, detail::ring_from_json(rj.at("ring")), std::move(holes));
      part.regions.push_back(std::move(r));
    }
    return part;
  } catch (const geojson::json::exception& e) {
    throw Error(std::string("partition file: ") + e.what());
  }
}

// WGS84 FeatureCollection of the regions with id/kind/label properties;
// extra per-region properties can be attached through `extra`.
template <typename Extra>
geojson::ordered_json regions_geojson(const Partition& part, Extra&& extra) {
  using oj = geojson::ordered_json;
  oj feats = oj::array();
  for (const auto& r : part.regions) {
    oj props = {{"id", r.id}, {"kind", to_string(r.kind)}, {"label", r.label}};
    extra(r, props);
    feats.push_back({{"type", "Feature"},
                     {"properties", std::move(props)},
                     {"geometry", geojson::polygon_geometry(r.geometry, part.proj)}});
  }
  return {{"type", "FeatureCollection"}, {"features", std::move(feats)}};
}

inline geojson::ordered_json regions_geojson(const Partition& part) {
  return regions_geojson(part, [](const Region&, geojson::ordered_json&) {});
}

}  // namespace stm
