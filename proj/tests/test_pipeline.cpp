#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <map>

#include "stm/pipeline.hpp"
#include "support.hpp"

namespace fs = std::filesystem;
namespace pl = stm::pipeline;
using nlohmann::json;

namespace {

fs::path toy_copy(const std::string& name) {
  const fs::path dir = stm::testing::temp_dir(name);
  for (const auto& e : fs::directory_iterator(fs::path(STM_SOURCE_DIR) / "data" / "toy"))
    if (e.is_regular_file()) fs::copy_file(e.path(), dir / e.path().filename());
  return dir;
}

struct CliRun {
  int code = -1;
  std::string err;
};

CliRun cli(const fs::path& dir, const std::string& args, const std::string& env = "") {
  const fs::path err = dir / "stderr.txt";
  const std::string cmd = "cd '" + dir.string() + "' && env -u STM_LOG_LEVEL " + env + " '" + STMGRAPH_EXE + "' " + args +
                          " > /dev/null 2> '" + err.string() + "'";
  const int status = std::system(cmd.c_str());
  CliRun r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.err = pl::read_file(err);
  return r;
}

json read_json(const fs::path& p) { return json::parse(pl::read_file(p)); }

void edit_json(const fs::path& p, const std::function<void(json&)>& f) {
  json j = read_json(p);
  f(j);
  pl::write_file_atomic(p, j.dump(1));
}

// Every output file's bytes; the manifest with stage timings removed.
std::map<std::string, std::string> snapshot(const fs::path& out) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::directory_iterator(out)) {
    const std::string name = e.path().filename().string();
    if (name == "manifest.json") {
      json m = read_json(e.path());
      for (auto& [k, s] : m["stages"].items()) s.erase("seconds");
      files[name] = m.dump();
    } else {
      files[name] = pl::read_file(e.path());
    }
  }
  return files;
}

const char* kStages[] = {"partition", "build", "train", "evaluate", "export"};

}  // namespace

TEST(Cli, GridEndToEnd) {
  const fs::path dir = toy_copy("cli_grid");
  for (const char* s : kStages) ASSERT_EQ(cli(dir, std::string(s) + " --config grid.json").code, 0) << s;
  const fs::path out = dir / "out" / "grid";
  for (const char* f : {"partition.json", "regions.geojson", "graph.json", "counts.csv", "counts.json",
                        "heatmap.geojson", "model.json", "loss_trace.csv", "report.json", "evaluation_test.json",
                        "edges.geojson", "top_regions.csv", "manifest.json"})
    EXPECT_TRUE(fs::exists(out / f)) << f;

  const json m = read_json(out / "manifest.json");
  const auto& assigned = m["stages"]["build"]["counts"]["assigned"];
  EXPECT_EQ(assigned["total"].get<int>(), 100);
  EXPECT_EQ(assigned["inside"].get<int>() + assigned["outside"].get<int>(), 100);
  for (const char* s : kStages) EXPECT_TRUE(m["stages"].contains(s)) << s;
  EXPECT_EQ(m["config_digest"].get<std::string>().size(), 64u);

  const json rep = read_json(out / "report.json");
  EXPECT_EQ(rep["config_digest"], m["config_digest"]);
  EXPECT_EQ(rep["split"], "test");
  for (const char* k : {"auc", "accuracy", "balanced_accuracy", "f1", "mcc"}) EXPECT_TRUE(rep.contains(k)) << k;
  // train reports on the test split with the best snapshot; evaluate must agree.
  const json ev = read_json(out / "evaluation_test.json");
  EXPECT_EQ(ev["mcc"], rep["mcc"]);
  EXPECT_EQ(ev["confusion"], rep["confusion"]);

  // Heatmap totals equal the inside count.
  const json heat = read_json(out / "heatmap.geojson");
  long sum = 0;
  for (const auto& f : heat["features"]) sum += f["properties"]["total_count"].get<long>();
  EXPECT_EQ(sum, assigned["inside"].get<long>());
}

TEST(Cli, RerunIsByteIdentical) {
  const fs::path dir = toy_copy("cli_rerun");
  auto run_all = [&] {
    for (const char* s : kStages) ASSERT_EQ(cli(dir, std::string(s) + " --config grid.json --log-level error").code, 0);
  };
  run_all();
  const auto first = snapshot(dir / "out" / "grid");
  run_all();
  EXPECT_EQ(snapshot(dir / "out" / "grid"), first);
}

TEST(Cli, AdminAndVoronoiRuns) {
  const fs::path dir = toy_copy("cli_kinds");
  for (const char* cfg : {"admin.json", "voronoi.json"})
    for (const char* s : {"partition", "build", "train"})
      ASSERT_EQ(cli(dir, std::string(s) + " --config " + cfg).code, 0) << cfg << " " << s;
  const json admin = read_json(dir / "out" / "admin" / "manifest.json");
  // Six districts, the last split into two parts.
  EXPECT_EQ(admin["stages"]["partition"]["counts"]["regions"], 7);
  const json vor = read_json(dir / "out" / "voronoi" / "manifest.json");
  const auto& seeds = vor["stages"]["partition"]["counts"]["seeds"];
  EXPECT_EQ(vor["stages"]["partition"]["counts"]["regions"].get<int>(),
            seeds["road_node"].get<int>() + seeds["fallback_grid"].get<int>());
}

TEST(Cli, VoronoiWideSpacingOneRegionPerSeed) {
  const fs::path dir = toy_copy("cli_voronoi_wide");
  edit_json(dir / "voronoi.json", [](json& j) {
    j["mapping"]["d_small"] = 5000;
    j["mapping"]["d_big"] = 20000;
  });
  ASSERT_EQ(cli(dir, "partition --config voronoi.json").code, 0);
  const json m = read_json(dir / "out" / "voronoi" / "manifest.json");
  const auto& c = m["stages"]["partition"]["counts"];
  const int seeds = c["seeds"]["road_node"].get<int>() + c["seeds"]["fallback_grid"].get<int>();
  EXPECT_GE(seeds, 1);
  EXPECT_EQ(c["regions"].get<int>(), seeds);
  EXPECT_EQ(read_json(dir / "out" / "voronoi" / "partition.json")["regions"].size(), static_cast<std::size_t>(seeds));
}

TEST(Cli, ExitCodes) {
  const fs::path dir = toy_copy("cli_errors");
  // Data error: a district without its id property.
  edit_json(dir / "districts.geojson", [](json& j) { j["features"][2]["properties"].erase("id"); });
  const CliRun admin = cli(dir, "partition --config admin.json");
  EXPECT_EQ(admin.code, 2);
  EXPECT_NE(admin.err.find("id"), std::string::npos);

  fs::copy_file(dir / "grid.json", dir / "bad.json");
  edit_json(dir / "bad.json", [](json& j) { j["cell_sise"] = 10; });
  const CliRun bad = cli(dir, "partition --config bad.json");
  EXPECT_EQ(bad.code, 2);
  EXPECT_NE(bad.err.find("cell_sise"), std::string::npos);

  pl::write_file_atomic(dir / "broken.json", "{ \"paths\": ");
  EXPECT_EQ(cli(dir, "partition --config broken.json").code, 2);

  // evaluate before train.
  ASSERT_EQ(cli(dir, "partition --config grid.json").code, 0);
  ASSERT_EQ(cli(dir, "build --config grid.json").code, 0);
  const CliRun ev = cli(dir, "evaluate --config grid.json");
  EXPECT_EQ(ev.code, 2);
  EXPECT_NE(ev.err.find("train"), std::string::npos);

  // build without a partition.
  EXPECT_EQ(cli(dir, "build --config grid.json --output fresh").code, 2);

  // Command-line usage errors are reported by the parser, never as success.
  EXPECT_NE(cli(dir, "").code, 0);
  EXPECT_NE(cli(dir, "partition").code, 0);
  EXPECT_NE(cli(dir, "partition --config missing.json").code, 0);
  EXPECT_NE(cli(dir, "partition --config grid.json --log-level loud").code, 0);
}

TEST(Cli, LogLevelPrecedence) {
  const fs::path dir = toy_copy("cli_log");
  // grid.json without a level; admin.json keeps "info".
  edit_json(dir / "grid.json", [](json& j) { j.erase("log_level"); });
  ASSERT_EQ(read_json(dir / "admin.json")["log_level"], "info");
  EXPECT_NE(cli(dir, "partition --config grid.json").err.find("[info]"), std::string::npos);
  EXPECT_EQ(cli(dir, "partition --config grid.json", "STM_LOG_LEVEL=error").err.find("[info]"), std::string::npos);
  EXPECT_NE(cli(dir, "partition --config admin.json", "STM_LOG_LEVEL=error").err.find("[info]"), std::string::npos);
  EXPECT_EQ(cli(dir, "partition --config admin.json --log-level error").err.find("[info]"), std::string::npos);
  ASSERT_EQ(cli(dir, "build --config grid.json --log-level error").code, 0);
  EXPECT_NE(cli(dir, "train --config grid.json", "STM_LOG_LEVEL=debug").err.find("[debug] epoch"), std::string::npos);
  EXPECT_EQ(cli(dir, "partition --config grid.json", "STM_LOG_LEVEL=chatty").code, 2);
}

TEST(Cli, OutputAndSeedOverrides) {
  const fs::path dir = toy_copy("cli_overrides");
  const fs::path alt = dir / "alt";
  for (const char* s : {"partition", "build", "train"})
    ASSERT_EQ(cli(dir, std::string(s) + " --config grid.json --output '" + alt.string() + "' --seed 42").code, 0);
  EXPECT_FALSE(fs::exists(dir / "out" / "grid"));
  const json model = read_json(alt / "model.json");
  EXPECT_EQ(model["seed"], 42);
  EXPECT_EQ(read_json(alt / "manifest.json")["config"]["train"]["seed"], 42);
}

TEST(Manifest, ConfigChangeDropsStaleStages) {
  const fs::path dir = toy_copy("manifest_stale");
  ASSERT_EQ(cli(dir, "partition --config grid.json").code, 0);
  ASSERT_EQ(cli(dir, "build --config grid.json").code, 0);
  EXPECT_TRUE(read_json(dir / "out" / "grid" / "manifest.json")["stages"].contains("partition"));
  edit_json(dir / "grid.json", [](json& j) { j["bin_width"] = 43200; });
  ASSERT_EQ(cli(dir, "build --config grid.json").code, 0);
  const json m = read_json(dir / "out" / "grid" / "manifest.json");
  EXPECT_FALSE(m["stages"].contains("partition"));
  EXPECT_TRUE(m["stages"].contains("build"));
  EXPECT_EQ(m["config"]["bin_width"], 43200);
}

TEST(Config, ParsesToyConfigs) {
  const fs::path toy = fs::path(STM_SOURCE_DIR) / "data" / "toy";
  const pl::RunConfig g = pl::load_config(toy / "grid.json");
  EXPECT_EQ(g.mapping.kind, stm::RegionKind::grid);
  EXPECT_DOUBLE_EQ(g.mapping.cell_size, 500);
  EXPECT_EQ(g.window, 3u);
  EXPECT_EQ(g.events, toy / "events.csv");
  EXPECT_FALSE(g.train.pos_weight.has_value());
  const pl::RunConfig v = pl::load_config(toy / "voronoi.json");
  EXPECT_EQ(v.mapping.kind, stm::RegionKind::voronoi);
  EXPECT_DOUBLE_EQ(v.mapping.seeds.d_big, 800);
  EXPECT_TRUE(v.mapping.road_weights);
  EXPECT_EQ(pl::config_digest(g), pl::config_digest(pl::load_config(toy / "grid.json")));
  EXPECT_NE(pl::config_digest(g), pl::config_digest(v));
}

TEST(Config, Rejections) {
  const json base = read_json(fs::path(STM_SOURCE_DIR) / "data" / "toy" / "grid.json");
  auto rejects = [&](const std::function<void(json&)>& f) {
    json j = base;
    f(j);
    EXPECT_THROW(pl::config_from_json(j), stm::Error) << j.dump();
  };
  rejects([](json& j) { j["split"] = {0.5, 0.2, 0.2}; });
  rejects([](json& j) { j["split"] = {0.7, 0.3}; });
  rejects([](json& j) { j["mapping"]["kind"] = "hex"; });
  rejects([](json& j) { j["mapping"].erase("kind"); });
  rejects([](json& j) { j["mapping"]["cell_size"] = -5; });
  rejects([](json& j) { j["mapping"]["colour"] = 1; });
  rejects([](json& j) { j["paths"]["event"] = "x.csv"; });
  rejects([](json& j) { j["train"]["pos_weight"] = "sometimes"; });
  rejects([](json& j) { j["train"]["learning_rate"] = 0; });
  rejects([](json& j) { j["bin_width"] = 0; });
  rejects([](json& j) { j["log_level"] = "loud"; });
  rejects([](json& j) { j["log_level"] = 3; });
  rejects([](json& j) { j["bbox"] = {1, 2, 3}; });
  rejects([](json& j) { j = json::array(); });

  json ok = base;
  ok["train"]["pos_weight"] = 2.5;
  ok["mapping"] = {{"kind", "voronoi"}, {"weights", "boundary"}};
  const pl::RunConfig c = pl::config_from_json(ok);
  EXPECT_EQ(c.train.pos_weight, 2.5);
  EXPECT_FALSE(c.mapping.road_weights);
}

TEST(Files, AtomicWriteAndDigest) {
  const fs::path dir = stm::testing::temp_dir("files");
  pl::write_file_atomic(dir / "a.txt", "hello");
  pl::write_file_atomic(dir / "a.txt", "hello again");
  EXPECT_EQ(pl::read_file(dir / "a.txt"), "hello again");
  std::size_t n = 0;
  for ([[maybe_unused]] const auto& e : fs::directory_iterator(dir)) ++n;
  EXPECT_EQ(n, 1u);
  EXPECT_EQ(pl::sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  EXPECT_THROW(pl::read_file(dir / "nope"), stm::Error);
}
