#pragma once

// Thin GeoJSON reading/writing layer over nlohmann::json.

#include <algorithm>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "stm/error.hpp"
#include "stm/geo.hpp"

namespace stm::geojson {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

inline std::size_t line_of(std::string_view bytes, std::size_t offset) {
  offset = std::min(offset, bytes.size());
  return 1 + static_cast<std::size_t>(std::count(bytes.begin(), bytes.begin() + offset, '\n'));
}

inline json parse_document(std::string_view bytes, std::string_view what) {
  try {
    return json::parse(bytes.begin(), bytes.end());
  } catch (const json::parse_error& e) {
    throw ParseError(std::string(what) + ": malformed JSON: " + e.what(), line_of(bytes, e.byte));
  }
}

// Returns the "features" array of a FeatureCollection.
inline const json& features(const json& doc, std::string_view what) {
  if (!doc.is_object() || doc.value("type", "") != "FeatureCollection")
    throw ParseError(std::string(what) + ": expected a GeoJSON FeatureCollection", 0);
  auto it = doc.find("features");
  if (it == doc.end() || !it->is_array())
    throw ParseError(std::string(what) + ": FeatureCollection has no features array", 0);
  return *it;
}

inline GeoPoint position(const json& coord, std::size_t feature, std::string_view what) {
  if (!coord.is_array() || coord.size() < 2 || !coord[0].is_number() || !coord[1].is_number())
    throw ParseError(std::string(what) + ": invalid coordinate", 0, feature);
  GeoPoint g{coord[0].get<double>(), coord[1].get<double>()};
  if (!g.valid()) throw ParseError(std::string(what) + ": coordinate out of WGS84 range", 0, feature);
  return g;
}

// Closed WGS84 ring for output, as GeoJSON requires.
inline ordered_json ring_to_lonlat(const Ring& ring, const Projection& proj) {
  ordered_json out = ordered_json::array();
  for (const auto& p : ring) {
    const GeoPoint g = unproject(p, proj);
    out.push_back({g.lon, g.lat});
  }
  if (!ring.empty()) {
    const GeoPoint g = unproject(ring.front(), proj);
    out.push_back({g.lon, g.lat});
  }
  return out;
}

inline ordered_json polygon_geometry(const Polygon& poly, const Projection& proj) {
  ordered_json rings = ordered_json::array();
  poly.for_each_ring([&](const Ring& r) { rings.push_back(ring_to_lonlat(r, proj)); });
  return {{"type", "Polygon"}, {"coordinates", std::move(rings)}};
}

}  // namespace stm::geojson
