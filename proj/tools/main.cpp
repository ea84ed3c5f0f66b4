// Command-line driver for the pipeline stages.

#include "recomb/pipeline.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <cstdlib>
#include <iostream>

namespace {

struct Options {
  std::string config = "config.json";
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  std::optional<std::string> out;
  std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, Options& opt) {
  cmd->add_option("-c,--config", opt.config, "Pipeline config file (JSON)")->capture_default_str();
  cmd->add_option("--seed", opt.seed, "Global random seed");
  cmd->add_option("--threads", opt.threads, "Worker threads (0 = OpenMP default)");
  cmd->add_option("--out", opt.out, "Output directory");
  cmd->add_option("--set", opt.overrides, "Override a config key, e.g. --set train.k=20");
}

recomb::PipelineConfig resolve_config(const Options& opt) {
  auto cfg = recomb::PipelineConfig::load(opt.config);
  for (const auto& o : opt.overrides) cfg.set(o);
  if (opt.seed) cfg.set(fmt::format("seed={}", *opt.seed));
  if (opt.threads) cfg.set(fmt::format("threads={}", *opt.threads));
  if (opt.out) {
    // Relative to the working directory, not the config file.
    cfg.paths.out = std::filesystem::absolute(*opt.out).string();
  }
  return cfg;
}

void setup_logging() {
  auto logger = spdlog::stderr_color_mt("recomb");
  logger->set_pattern("[%l] %v");
  spdlog::set_default_logger(logger);
  spdlog::set_level(spdlog::level::info);
  if (const char* env = std::getenv("RECOMB_LOG")) spdlog::set_level(spdlog::level::from_str(env));
}

}  // namespace

int main(int argc, char** argv) {
  setup_logging();
  CLI::App app{"Temporal word embeddings, discourse atoms and venture recombination measures"};
  app.require_subcommand(1);
  Options opt;

  std::vector<std::pair<CLI::App*, std::optional<recomb::Stage>>> commands;
  for (auto s : recomb::kStages) {
    auto* cmd = app.add_subcommand(std::string(recomb::to_string(s)), fmt::format("Run the {} stage", recomb::to_string(s)));
    add_common(cmd, opt);
    commands.emplace_back(cmd, s);
  }
  auto* all = app.add_subcommand("run-all", "Run every stage in order, skipping current ones");
  add_common(all, opt);
  commands.emplace_back(all, std::nullopt);

  CLI11_PARSE(app, argc, argv);

  try {
    auto cfg = resolve_config(opt);
    recomb::Pipeline pipeline(std::move(cfg));
    for (const auto& [cmd, stage] : commands) {
      if (!cmd->parsed()) continue;
      if (stage) {
        if (pipeline.run(*stage) == recomb::StageStatus::up_to_date)
          std::cout << recomb::to_string(*stage) << ": up to date\n";
      } else {
        pipeline.run_all();
      }
    }
  } catch (const recomb::Error& e) {
    spdlog::error("{}", e.what());
    return e.exit_code();
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 1;
  }
  return 0;
}
