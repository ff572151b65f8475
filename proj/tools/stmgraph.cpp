// stmgraph: event logs -> region graphs -> GCN baseline.

#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "stm/pipeline.hpp"

namespace {

namespace pl = stm::pipeline;

struct Options {
  std::string config;
  std::string output;
  std::optional<std::uint64_t> seed;
  std::string log_level;
  std::string split = "test";
};

pl::Context resolve(const Options& o) {
  pl::RunConfig cfg = pl::load_config(o.config);
  if (!o.output.empty()) cfg.output = o.output;
  if (o.seed) cfg.train.seed = *o.seed;
  // flag > config file > STM_LOG_LEVEL > info
  if (!o.log_level.empty()) {
    cfg.log_level = o.log_level;
  } else if (!cfg.log_level) {
    if (const char* env = std::getenv("STM_LOG_LEVEL"); env && *env) cfg.log_level = env;
  }
  return pl::make_context(std::move(cfg));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Build region graphs from urban event logs and evaluate a GCN baseline"};
  app.require_subcommand(1);
  Options opts;
  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", opts.config, "Run configuration (JSON)")->required()->check(CLI::ExistingFile);
    sub->add_option("--output", opts.output, "Output directory (overrides paths.output)");
    sub->add_option("--seed", opts.seed, "Training seed (overrides train.seed)");
    sub->add_option("--log-level", opts.log_level, "error | warn | info | debug")
        ->check(CLI::IsMember({"error", "warn", "info", "debug"}));
  };
  auto* partition = app.add_subcommand("partition", "Partition the study area into regions");
  auto* build = app.add_subcommand("build", "Assign events, build the region graph and count matrix");
  auto* train = app.add_subcommand("train", "Train the GCN and report test metrics");
  auto* evaluate = app.add_subcommand("evaluate", "Evaluate a trained checkpoint on one split");
  auto* exp = app.add_subcommand("export", "Write GeoJSON/CSV exports for visualization");
  for (auto* s : {partition, build, train, evaluate, exp}) common(s);
  evaluate->add_option("--split", opts.split, "train | val | test")->check(CLI::IsMember({"train", "val", "test"}));

  CLI11_PARSE(app, argc, argv);

  try {
    const pl::Context ctx = resolve(opts);
    if (*partition) pl::run_partition(ctx);
    else if (*build) pl::run_build(ctx);
    else if (*train) pl::run_train(ctx);
    else if (*evaluate) pl::run_evaluate(ctx, opts.split);
    else if (*exp) pl::run_export(ctx);
  } catch (const stm::Error& e) {
    std::cerr << "stmgraph: error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "stmgraph: internal error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
