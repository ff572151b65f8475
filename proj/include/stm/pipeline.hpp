#pragma once

// End-to-end pipeline stages behind the stmgraph CLI: partition, build,
// train, evaluate and export. Every stage reads the run configuration,
// writes its outputs atomically into the output directory and records
// itself in manifest.json.

#include <algorithm>
#include <array>
#include <chrono>
#include <cstdint>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <openssl/evp.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <nlohmann/json.hpp>

#include "stm/error.hpp"
#include "stm/event_mapping.hpp"
#include "stm/geo.hpp"
#include "stm/graph.hpp"
#include "stm/metrics.hpp"
#include "stm/partition.hpp"
#include "stm/predictor.hpp"
#include "stm/road_network.hpp"
#include "stm/temporal.hpp"

namespace stm::pipeline {

namespace fs = std::filesystem;
using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Files

inline std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error("cannot open '" + p.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Writes to a sibling temporary and renames over the target.
inline void write_file_atomic(const fs::path& p, std::string_view bytes) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  fs::path tmp = p;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write '" + tmp.string() + "'");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error("write failed for '" + tmp.string() + "'");
  }
  fs::rename(tmp, p);
}

inline void write_json(const fs::path& p, const ordered_json& j) { write_file_atomic(p, j.dump(1) + "\n"); }

inline std::string sha256_hex(std::string_view bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1)
    throw Error("sha256 digest failed");
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[md[i] >> 4]);
    out.push_back(hex[md[i] & 0xf]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Logging

inline spdlog::level::level_enum parse_log_level(const std::string& s) {
  if (s == "error") return spdlog::level::err;
  if (s == "warn") return spdlog::level::warn;
  if (s == "info") return spdlog::level::info;
  if (s == "debug") return spdlog::level::debug;
  throw Error("unknown log level '" + s + "' (expected error | warn | info | debug)");
}

inline std::shared_ptr<spdlog::logger> make_logger(const std::string& level) {
  auto logger = spdlog::get("stmgraph");
  if (!logger) {
    logger = spdlog::stderr_color_st("stmgraph");
    logger->set_pattern("[%l] %v");
  }
  logger->set_level(parse_log_level(level));
  return logger;
}

// ---------------------------------------------------------------------------
// Configuration

struct MappingConfig {
  RegionKind kind = RegionKind::grid;
  double cell_size = 1000.0;
  std::string id_property = "id";
  SeedParams seeds;
  double snap_tol = 0.5;
  // Voronoi edge weights: shared road length, or shared boundary length.
  bool road_weights = true;
  bool queen = false;
};

struct RunConfig {
  fs::path events, roads, admin, poi, output = "out";
  EventSchema schema;
  MappingConfig mapping;
  // WGS84 [min_lon, min_lat, max_lon, max_lat]; events' extent when absent.
  std::optional<std::array<double, 4>> bbox;
  std::optional<GeoPoint> origin;
  std::int64_t bin_width = 86400;
  std::size_t window = 12;
  SplitFractions split;
  bool normalize_features = false;
  bool binary_adjacency = true;
  TrainConfig train;
  std::optional<std::string> log_level;
  unsigned workers = 1;
};

namespace detail {

inline void reject_unknown(const json& obj, std::initializer_list<std::string_view> keys, std::string_view where) {
  for (auto it = obj.begin(); it != obj.end(); ++it)
    if (std::find(keys.begin(), keys.end(), it.key()) == keys.end())
      throw Error("config: unknown key '" + it.key() + "' in " + std::string(where));
}

template <typename T>
void take(const json& obj, const char* key, T& out) {
  if (auto it = obj.find(key); it != obj.end() && !it->is_null()) {
    try {
      out = it->get<T>();
    } catch (const json::exception&) {
      throw Error(std::string("config: invalid value for '") + key + "'");
    }
  }
}

}  // namespace detail

inline RunConfig config_from_json(const json& j, const fs::path& base_dir = {}) {
  if (!j.is_object()) throw Error("config: top level must be an object");
  detail::reject_unknown(j, {"paths", "events_schema", "mapping", "bbox", "projection_origin", "bin_width", "window",
                             "split", "normalize_features", "binary_adjacency", "train", "log_level", "workers"},
                         "config");
  RunConfig c;
  auto path = [&](const json& obj, const char* key, fs::path& out) {
    if (auto it = obj.find(key); it != obj.end() && !it->is_null()) {
      if (!it->is_string()) throw Error(std::string("config: path '") + key + "' must be a string");
      fs::path p = it->get<std::string>();
      out = p.is_absolute() || base_dir.empty() ? p : base_dir / p;
    }
  };
  if (auto it = j.find("paths"); it != j.end()) {
    detail::reject_unknown(*it, {"events", "roads", "admin", "poi", "output"}, "paths");
    path(*it, "events", c.events);
    path(*it, "roads", c.roads);
    path(*it, "admin", c.admin);
    path(*it, "poi", c.poi);
    path(*it, "output", c.output);
  }
  if (auto it = j.find("events_schema"); it != j.end()) {
    detail::reject_unknown(*it, {"timestamp", "latitude", "longitude", "category"}, "events_schema");
    detail::take(*it, "timestamp", c.schema.timestamp);
    detail::take(*it, "latitude", c.schema.latitude);
    detail::take(*it, "longitude", c.schema.longitude);
    detail::take(*it, "category", c.schema.category);
  }
  if (auto it = j.find("mapping"); it != j.end()) {
    const auto& m = *it;
    detail::reject_unknown(m, {"kind", "cell_size", "id_property", "min_degree", "d_small", "d_big", "snap_tol",
                               "weights", "connectivity"},
                           "mapping");
    if (!m.contains("kind")) throw Error("config: mapping.kind is required (grid | admin | voronoi)");
    try {
      c.mapping.kind = region_kind_from_string(m["kind"].get<std::string>());
    } catch (const json::exception&) {
      throw Error("config: mapping.kind must be a string");
    }
    detail::take(m, "cell_size", c.mapping.cell_size);
    detail::take(m, "id_property", c.mapping.id_property);
    detail::take(m, "min_degree", c.mapping.seeds.min_degree);
    detail::take(m, "d_small", c.mapping.seeds.d_small);
    detail::take(m, "d_big", c.mapping.seeds.d_big);
    detail::take(m, "snap_tol", c.mapping.snap_tol);
    std::string weights = "road", conn = "rook";
    detail::take(m, "weights", weights);
    detail::take(m, "connectivity", conn);
    if (weights != "road" && weights != "boundary") throw Error("config: mapping.weights must be road | boundary");
    if (conn != "rook" && conn != "queen") throw Error("config: mapping.connectivity must be rook | queen");
    c.mapping.road_weights = weights == "road";
    c.mapping.queen = conn == "queen";
  } else {
    throw Error("config: a mapping section is required");
  }
  if (auto it = j.find("bbox"); it != j.end() && !it->is_null()) {
    std::array<double, 4> b{};
    detail::take(j, "bbox", b);
    if (!GeoPoint{b[0], b[1]}.valid() || !GeoPoint{b[2], b[3]}.valid() || !(b[0] < b[2]) || !(b[1] < b[3]))
      throw Error("config: bbox must be [min_lon, min_lat, max_lon, max_lat]");
    c.bbox = b;
  }
  if (auto it = j.find("projection_origin"); it != j.end() && !it->is_null()) {
    std::array<double, 2> o{};
    detail::take(j, "projection_origin", o);
    c.origin = GeoPoint{o[0], o[1]};
    if (!c.origin->valid()) throw Error("config: projection_origin out of range");
  }
  detail::take(j, "bin_width", c.bin_width);
  detail::take(j, "window", c.window);
  if (auto it = j.find("split"); it != j.end()) {
    std::array<double, 3> f{};
    detail::take(j, "split", f);
    c.split = {f[0], f[1], f[2]};
    if (f[0] < 0.0 || f[1] < 0.0 || f[2] < 0.0 || std::abs(f[0] + f[1] + f[2] - 1.0) > 1e-9)
      throw Error("config: split fractions must be non-negative and sum to 1");
  }
  detail::take(j, "normalize_features", c.normalize_features);
  detail::take(j, "binary_adjacency", c.binary_adjacency);
  if (auto it = j.find("train"); it != j.end()) {
    detail::reject_unknown(*it, {"learning_rate", "epochs", "hidden", "seed", "pos_weight"}, "train");
    detail::take(*it, "learning_rate", c.train.learning_rate);
    detail::take(*it, "epochs", c.train.epochs);
    detail::take(*it, "hidden", c.train.hidden);
    detail::take(*it, "seed", c.train.seed);
    if (auto pw = it->find("pos_weight"); pw != it->end() && !pw->is_null()) {
      if (pw->is_string() && pw->get<std::string>() == "auto") c.train.pos_weight.reset();
      else if (pw->is_number()) c.train.pos_weight = pw->get<double>();
      else throw Error("config: train.pos_weight must be a number or \"auto\"");
    }
  }
  if (auto it = j.find("log_level"); it != j.end() && !it->is_null()) {
    if (!it->is_string()) throw Error("config: log_level must be a string");
    c.log_level = it->get<std::string>();
    parse_log_level(*c.log_level);
  }
  detail::take(j, "workers", c.workers);

  if (c.bin_width <= 0) throw Error("config: bin_width must be positive");
  if (c.window < 1) throw Error("config: window must be >= 1");
  if (!(c.train.learning_rate > 0.0)) throw Error("config: train.learning_rate must be positive");
  if (c.train.epochs < 1) throw Error("config: train.epochs must be >= 1");
  if (c.train.hidden < 1) throw Error("config: train.hidden must be >= 1");
  if (c.mapping.kind == RegionKind::grid && !(c.mapping.cell_size > 0.0))
    throw Error("config: mapping.cell_size must be positive");
  return c;
}

inline RunConfig load_config(const fs::path& p) {
  const std::string bytes = read_file(p);
  json j;
  try {
    j = json::parse(bytes);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("config: malformed JSON: ") + e.what(), geojson::line_of(bytes, e.byte));
  }
  return config_from_json(j, p.parent_path());
}

// Canonical snapshot of the resolved configuration; its digest ties
// reports to manifests.
inline ordered_json config_snapshot(const RunConfig& c) {
  ordered_json j;
  j["paths"] = {{"events", c.events.string()}, {"roads", c.roads.string()}, {"admin", c.admin.string()},
                {"poi", c.poi.string()}, {"output", c.output.string()}};
  j["events_schema"] = {{"timestamp", c.schema.timestamp}, {"latitude", c.schema.latitude},
                        {"longitude", c.schema.longitude}, {"category", c.schema.category}};
  ordered_json m;
  m["kind"] = to_string(c.mapping.kind);
  switch (c.mapping.kind) {
    case RegionKind::grid:
      m["cell_size"] = c.mapping.cell_size;
      m["connectivity"] = c.mapping.queen ? "queen" : "rook";
      break;
    case RegionKind::admin: m["id_property"] = c.mapping.id_property; break;
    case RegionKind::voronoi:
      m["min_degree"] = c.mapping.seeds.min_degree;
      m["d_small"] = c.mapping.seeds.d_small;
      m["d_big"] = c.mapping.seeds.d_big;
      m["snap_tol"] = c.mapping.snap_tol;
      m["weights"] = c.mapping.road_weights ? "road" : "boundary";
      break;
  }
  j["mapping"] = std::move(m);
  j["bbox"] = c.bbox ? ordered_json(*c.bbox) : ordered_json(nullptr);
  j["projection_origin"] = c.origin ? ordered_json({c.origin->lon, c.origin->lat}) : ordered_json(nullptr);
  j["bin_width"] = c.bin_width;
  j["window"] = c.window;
  j["split"] = {c.split.train, c.split.val, c.split.test};
  j["normalize_features"] = c.normalize_features;
  j["binary_adjacency"] = c.binary_adjacency;
  j["train"] = {{"learning_rate", c.train.learning_rate},
                {"epochs", c.train.epochs},
                {"hidden", c.train.hidden},
                {"seed", c.train.seed},
                {"pos_weight", c.train.pos_weight ? ordered_json(*c.train.pos_weight) : ordered_json("auto")}};
  return j;
}

inline std::string config_digest(const RunConfig& c) { return sha256_hex(config_snapshot(c).dump()); }

// ---------------------------------------------------------------------------
// Manifest

class Manifest {
 public:
  Manifest(const RunConfig& cfg) : cfg_(cfg), path_(cfg.output / "manifest.json") {
    digest_ = config_digest(cfg);
    if (fs::exists(path_)) {
      try {
        const json old = json::parse(read_file(path_));
        if (old.value("config_digest", "") == digest_ && old.contains("stages")) stages_ = old["stages"];
      } catch (const json::exception&) {
      }
    }
    if (!stages_.is_object()) stages_ = ordered_json::object();
  }

  const std::string& digest() const { return digest_; }

  void stage(const std::string& name, double seconds, std::vector<std::string> outputs, ordered_json counts) {
    std::sort(outputs.begin(), outputs.end());
    stages_[name] = {{"seconds", seconds}, {"outputs", outputs}, {"counts", std::move(counts)}};
  }

  void write() const {
    ordered_json j;
    j["config"] = config_snapshot(cfg_);
    j["config_digest"] = digest_;
    ordered_json inputs = ordered_json::object();
    auto add = [&](const char* name, const fs::path& p) {
      if (p.empty() || !fs::exists(p)) return;
      inputs[name] = {{"path", p.string()}, {"sha256", sha256_hex(read_file(p))}};
    };
    add("events", cfg_.events);
    add("roads", cfg_.roads);
    add("admin", cfg_.admin);
    add("poi", cfg_.poi);
    j["inputs"] = std::move(inputs);
    // Stage order follows the pipeline, not insertion.
    ordered_json stages = ordered_json::object();
    std::vector<std::string> all;
    for (const char* s : {"partition", "build", "train", "evaluate", "export"}) {
      if (!stages_.contains(s)) continue;
      stages[s] = stages_[s];
      for (const auto& o : stages_[s]["outputs"]) all.push_back(o.get<std::string>());
    }
    std::sort(all.begin(), all.end());
    all.erase(std::unique(all.begin(), all.end()), all.end());
    j["stages"] = std::move(stages);
    j["outputs"] = all;
    write_json(path_, j);
  }

 private:
  RunConfig cfg_;
  fs::path path_;
  std::string digest_;
  ordered_json stages_;
};

// ---------------------------------------------------------------------------
// Stages

struct Context {
  RunConfig cfg;
  std::shared_ptr<spdlog::logger> log;
};

inline Context make_context(RunConfig cfg) {
  auto log = make_logger(cfg.log_level.value_or("info"));
  return {std::move(cfg), std::move(log)};
}

namespace detail {

class Timer {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

inline void require_file(const fs::path& p, const char* what) {
  if (p.empty()) throw Error(std::string("config: paths.") + what + " is required for this stage");
  if (!fs::exists(p)) throw Error(std::string("input file for ") + what + " not found: " + p.string());
}

inline ParsedEvents load_events(const RunConfig& cfg) {
  require_file(cfg.events, "events");
  return parse_events_csv(read_file(cfg.events), cfg.schema);
}

inline std::optional<ParsedEvents> load_pois(const RunConfig& cfg) {
  if (cfg.poi.empty()) return std::nullopt;
  require_file(cfg.poi, "poi");
  EventSchema s = cfg.schema;
  s.require_category = true;
  s.timestamp_optional = true;
  return parse_events_csv(read_file(cfg.poi), s);
}

inline Projection study_projection(const RunConfig& cfg, std::span<const Event> events) {
  if (cfg.origin) return Projection(cfg.origin->lon, cfg.origin->lat);
  if (events.empty()) throw Error("cannot derive a projection origin: no valid events");
  double lon = 0.0, lat = 0.0;
  for (const auto& e : events) {
    lon += e.pos.lon;
    lat += e.pos.lat;
  }
  const double n = static_cast<double>(events.size());
  return Projection(lon / n, lat / n);
}

inline BoundingBox study_area(const RunConfig& cfg, std::span<const Event> events, const Projection& proj) {
  if (cfg.bbox) {
    const auto& b = *cfg.bbox;
    const PlanarPoint lo = project({b[0], b[1]}, proj), hi = project({b[2], b[3]}, proj);
    return BoundingBox(lo.x, lo.y, hi.x, hi.y);
  }
  std::vector<PlanarPoint> pts;
  pts.reserve(events.size());
  for (const auto& e : events) pts.push_back(project(e.pos, proj));
  const BoundingBox b = BoundingBox::of(pts);
  if (b.degenerate()) throw Error("events span a degenerate area; set bbox in the config");
  return b;
}

inline ordered_json dropped_json(const ParsedEvents& p) {
  return {{"rows", p.rows},
          {"kept", p.events.size()},
          {"dropped_timestamp", p.dropped_timestamp},
          {"dropped_coordinates", p.dropped_coordinates},
          {"dropped_malformed", p.dropped_malformed},
          {"dropped_category", p.dropped_category}};
}

inline Partition load_partition(const RunConfig& cfg) {
  const fs::path p = cfg.output / "partition.json";
  if (!fs::exists(p)) throw Error("partition.json not found in " + cfg.output.string() + "; run 'partition' first");
  return partition_from_json(json::parse(read_file(p)));
}

inline RegionGraph load_graph(const RunConfig& cfg) {
  const fs::path p = cfg.output / "graph.json";
  if (!fs::exists(p)) throw Error("graph.json not found in " + cfg.output.string() + "; run 'build' first");
  return graph_from_json(json::parse(read_file(p)));
}

inline CountMatrix load_counts(const RunConfig& cfg) {
  const fs::path c = cfg.output / "counts.csv", s = cfg.output / "counts.json";
  if (!fs::exists(c) || !fs::exists(s)) throw Error("count matrix not found in " + cfg.output.string() + "; run 'build' first");
  return read_counts(read_file(c), json::parse(read_file(s)));
}

inline SplitDataset load_dataset(const RunConfig& cfg, const CountMatrix& cm) {
  auto shared = std::make_shared<const CountMatrix>(cm);
  try {
    return chronological_split(make_windows(shared, cfg.window), cfg.split);
  } catch (const Error& e) {
    throw Error(std::string(e.what()) + " [T=" + std::to_string(cm.bins()) + ", window=" + std::to_string(cfg.window) +
                ", bin_width=" + std::to_string(cm.bin_width()) + "s]");
  }
}

inline ordered_json heatmap_geojson(const Partition& part, const CountMatrix& cm) {
  return regions_geojson(part, [&](const Region& r, ordered_json& props) { props["total_count"] = cm.region_total(r.id); });
}

}  // namespace detail

struct PartitionResult {
  Partition partition;
  std::size_t seeds_from_roads = 0;
  std::size_t seeds_fallback = 0;
};

inline PartitionResult run_partition(const Context& ctx) {
  const auto& cfg = ctx.cfg;
  detail::Timer timer;
  Manifest manifest(cfg);
  const ParsedEvents ev = detail::load_events(cfg);
  ctx.log->info("partition: {} events parsed, {} dropped", ev.events.size(), ev.dropped());
  const Projection proj = detail::study_projection(cfg, ev.events);

  PartitionResult res;
  switch (cfg.mapping.kind) {
    case RegionKind::grid:
      res.partition = grid_partition(detail::study_area(cfg, ev.events, proj), cfg.mapping.cell_size, proj);
      break;
    case RegionKind::admin:
      detail::require_file(cfg.admin, "admin");
      res.partition = admin_partition(read_file(cfg.admin), proj, {cfg.mapping.id_property});
      break;
    case RegionKind::voronoi: {
      detail::require_file(cfg.roads, "roads");
      const RoadNetwork net = parse_road_geojson(read_file(cfg.roads), proj, cfg.mapping.snap_tol);
      if (net.skipped_features) ctx.log->warn("partition: skipped {} non-LineString road features", net.skipped_features);
      const BoundingBox area = detail::study_area(cfg, ev.events, proj);
      const SeedSet seeds = select_seeds(net, cfg.mapping.seeds, area);
      for (auto s : seeds.source()) (s == SeedSource::road_node ? res.seeds_from_roads : res.seeds_fallback)++;
      res.partition = voronoi_partition(seeds, area, proj, cfg.workers);
      break;
    }
  }
  ctx.log->info("partition: {} {} regions", res.partition.size(), to_string(cfg.mapping.kind));
  write_json(cfg.output / "partition.json", to_json(res.partition));
  write_json(cfg.output / "regions.geojson", regions_geojson(res.partition));
  ordered_json counts = {{"events", detail::dropped_json(ev)}, {"regions", res.partition.size()}};
  if (cfg.mapping.kind == RegionKind::voronoi)
    counts["seeds"] = {{"road_node", res.seeds_from_roads}, {"fallback_grid", res.seeds_fallback}};
  manifest.stage("partition", timer.seconds(), {"partition.json", "regions.geojson"}, std::move(counts));
  manifest.write();
  return res;
}

struct BuildResult {
  RegionGraph graph;
  CountMatrix counts{1, 1, 0, 1};
  std::size_t events = 0;
  std::size_t inside = 0;
  std::size_t outside = 0;
};

inline BuildResult run_build(const Context& ctx) {
  const auto& cfg = ctx.cfg;
  detail::Timer timer;
  Manifest manifest(cfg);
  Partition part = detail::load_partition(cfg);
  const ParsedEvents ev = detail::load_events(cfg);
  const BucketIndex index(part);
  const auto assigned = assign_events(ev.events, part, index, cfg.workers);
  BuildResult res;
  res.events = assigned.size();
  for (const auto& a : assigned) (a.inside() ? res.inside : res.outside)++;
  ctx.log->info("build: {} events, {} inside regions, {} outside", res.events, res.inside, res.outside);
  if (res.inside == 0)
    throw Error("build: no events fall inside any region; the event coordinates likely do not overlap the "
                "partition bbox (check bbox / projection_origin and the admin or road file extent)");

  UrbanFeatures features;
  ordered_json counts = {{"events", detail::dropped_json(ev)}};
  if (auto pois = detail::load_pois(cfg)) {
    features = aggregate_poi_features(pois->events, part, index, cfg.normalize_features);
    counts["poi"] = detail::dropped_json(*pois);
    ctx.log->info("build: {} POI categories", features.cols());
  }

  std::vector<GraphEdge> edges;
  if (part.kind == RegionKind::voronoi && cfg.mapping.road_weights && !cfg.roads.empty()) {
    detail::require_file(cfg.roads, "roads");
    edges = build_road_weights(part, parse_road_geojson(read_file(cfg.roads), part.proj, cfg.mapping.snap_tol));
  } else {
    edges = build_adjacency(part, {.tol = 0.01, .queen = cfg.mapping.queen});
  }
  res.graph = assemble_graph(std::move(part), std::move(edges), std::move(features));
  ctx.log->info("build: {} edges", res.graph.edges.size());

  res.counts = bin_events(assigned, res.graph.size(), cfg.bin_width);
  ctx.log->info("build: {} time bins of {} s", res.counts.bins(), res.counts.bin_width());

  write_json(cfg.output / "graph.json", to_json(res.graph));
  write_file_atomic(cfg.output / "counts.csv", counts_csv(res.counts));
  write_json(cfg.output / "counts.json", counts_sidecar(res.counts));
  write_json(cfg.output / "heatmap.geojson", detail::heatmap_geojson(res.graph.partition, res.counts));

  counts["assigned"] = {{"total", res.events}, {"inside", res.inside}, {"outside", res.outside}};
  counts["edges"] = res.graph.edges.size();
  counts["bins"] = res.counts.bins();
  manifest.stage("build", timer.seconds(), {"graph.json", "counts.csv", "counts.json", "heatmap.geojson"}, std::move(counts));
  manifest.write();
  return res;
}

inline ordered_json report_json(const EvaluationReport& r, const std::string& split, const std::string& digest) {
  ordered_json j = to_json(r);
  j["split"] = split;
  j["config_digest"] = digest;
  return j;
}

struct TrainStageResult {
  TrainResult training;
  EvaluationReport test;
};

inline TrainStageResult run_train(const Context& ctx) {
  const auto& cfg = ctx.cfg;
  detail::Timer timer;
  Manifest manifest(cfg);
  const RegionGraph graph = detail::load_graph(cfg);
  const CountMatrix cm = detail::load_counts(cfg);
  if (cm.regions() != graph.size()) throw Error("train: count matrix and graph disagree on region count");
  const SplitDataset data = detail::load_dataset(cfg, cm);
  ctx.log->info("train: {} train / {} val / {} test samples ({} straddling dropped)", data.train.size(),
                data.val.size(), data.test.size(), data.dropped);
  const NormalizedAdjacency adj = normalize_adjacency(graph, cfg.binary_adjacency);
  TrainStageResult res;
  res.training = train(adj, data, graph.static_features, cfg.train, [&](const EpochRecord& r) {
    ctx.log->debug("epoch {:4d} loss {:.6f} val_auc {}", r.epoch, r.train_loss,
                   r.val_auc ? format_double(*r.val_auc) : std::string("n/a"));
  });
  res.test = evaluate(res.training.model, adj, data.test, graph.static_features);
  ctx.log->info("train: best epoch {}, test MCC {:.4f}", res.training.best_epoch, res.test.mcc);

  write_json(cfg.output / "model.json", checkpoint_json(res.training.model, cfg.train, res.training.pos_weight));
  write_file_atomic(cfg.output / "loss_trace.csv", loss_trace_csv(res.training.trace));
  write_json(cfg.output / "report.json", report_json(res.test, "test", manifest.digest()));
  manifest.stage("train", timer.seconds(), {"model.json", "loss_trace.csv", "report.json"},
                 {{"train_samples", data.train.size()},
                  {"val_samples", data.val.size()},
                  {"test_samples", data.test.size()},
                  {"straddling_dropped", data.dropped},
                  {"boundaries", {data.b1, data.b2}},
                  {"best_epoch", res.training.best_epoch}});
  manifest.write();
  return res;
}

inline EvaluationReport run_evaluate(const Context& ctx, const std::string& split = "test") {
  const auto& cfg = ctx.cfg;
  detail::Timer timer;
  Manifest manifest(cfg);
  const RegionGraph graph = detail::load_graph(cfg);
  const CountMatrix cm = detail::load_counts(cfg);
  const SplitDataset data = detail::load_dataset(cfg, cm);
  const fs::path mp = cfg.output / "model.json";
  if (!fs::exists(mp)) throw Error("model.json not found in " + cfg.output.string() + "; run 'train' first");
  const GCNModel model = model_from_checkpoint(json::parse(read_file(mp)));
  const std::vector<WindowSample>* samples = nullptr;
  if (split == "train") samples = &data.train;
  else if (split == "val") samples = &data.val;
  else if (split == "test") samples = &data.test;
  else throw Error("evaluate: unknown split '" + split + "' (expected train | val | test)");
  const NormalizedAdjacency adj = normalize_adjacency(graph, cfg.binary_adjacency);
  const EvaluationReport rep = evaluate(model, adj, *samples, graph.static_features);
  ctx.log->info("evaluate[{}]: AUC {} acc {:.4f} bal {:.4f} F1 {:.4f} MCC {:.4f}", split,
                rep.auc ? format_double(*rep.auc) : std::string("undefined"), rep.accuracy, rep.balanced_accuracy,
                rep.f1, rep.mcc);
  const std::string name = "evaluation_" + split + ".json";
  write_json(cfg.output / name, report_json(rep, split, manifest.digest()));
  manifest.stage("evaluate", timer.seconds(), {name}, {{"samples", samples->size()}});
  manifest.write();
  return rep;
}

// Visual-analytics exports: regions, heatmap, edges between region
// centroids, and per-bin series of the most active regions.
inline void run_export(const Context& ctx, std::size_t top_k = 10) {
  const auto& cfg = ctx.cfg;
  detail::Timer timer;
  Manifest manifest(cfg);
  const RegionGraph graph = detail::load_graph(cfg);
  const CountMatrix cm = detail::load_counts(cfg);
  const Partition& part = graph.partition;

  write_json(cfg.output / "regions.geojson", regions_geojson(part));
  write_json(cfg.output / "heatmap.geojson", detail::heatmap_geojson(part, cm));

  ordered_json feats = ordered_json::array();
  for (const auto& e : graph.edges) {
    const GeoPoint a = unproject(centroid(part.regions[e.u].geometry), part.proj);
    const GeoPoint b = unproject(centroid(part.regions[e.v].geometry), part.proj);
    feats.push_back({{"type", "Feature"},
                     {"properties", {{"u", e.u}, {"v", e.v}, {"weight", e.weight}}},
                     {"geometry", {{"type", "LineString"}, {"coordinates", {{a.lon, a.lat}, {b.lon, b.lat}}}}}});
  }
  write_json(cfg.output / "edges.geojson", {{"type", "FeatureCollection"}, {"features", std::move(feats)}});

  std::vector<std::size_t> order(cm.regions());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return cm.region_total(a) > cm.region_total(b); });
  order.resize(std::min(top_k, order.size()));
  std::string csv = "bin,t_start";
  for (auto r : order) csv += ",region_" + std::to_string(r);
  csv += "\n";
  for (std::size_t t = 0; t < cm.bins(); ++t) {
    csv += std::to_string(t) + "," + std::to_string(cm.t0() + static_cast<std::int64_t>(t) * cm.bin_width());
    for (auto r : order) csv += "," + std::to_string(cm.at(r, t));
    csv += "\n";
  }
  write_file_atomic(cfg.output / "top_regions.csv", csv);
  manifest.stage("export", timer.seconds(), {"regions.geojson", "heatmap.geojson", "edges.geojson", "top_regions.csv"},
                 {{"regions", part.size()}, {"edges", graph.edges.size()}});
  manifest.write();
  ctx.log->info("export: wrote GeoJSON and series for {} regions", part.size());
}

}  // namespace stm::pipeline
