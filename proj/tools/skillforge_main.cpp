// Pipeline entry point: one subcommand per process, composed via output_dir.
#include <exception>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "skillforge/common/error.hpp"
#include "skillforge/pipeline/commands.hpp"

namespace {

constexpr int kUsageError = 2;
constexpr int kRunError = 1;

}  // namespace

int main(int argc, char** argv) {
  using namespace skillforge;
  CLI::App app{"skillforge: skill retrieval and adaptation on 2D insertion tasks"};
  app.require_subcommand(1, 1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string strategy;
  bool no_sil = false;
  std::string reward;
  std::optional<int> top_k, episodes, count;
  std::vector<std::string> run_dirs;

  for (const auto& name : pipeline::subcommand_names()) {
    auto* sub = app.add_subcommand(name);
    sub->add_option("--config", config_path, "JSON run config")->check(CLI::ExistingFile);
    sub->add_option("--seed", seed, "master seed");
    sub->add_option("--out", out, "output directory");
    sub->add_option("--strategy", strategy, "retrieval strategy")
        ->check(CLI::IsMember({"signature", "behavior", "forward", "geometry", "srsa", "random", "oracle"}));
    sub->add_flag("--no-sil", no_sil, "disable self-imitation during fine-tuning");
    sub->add_option("--reward", reward, "reward mode")->check(CLI::IsMember({"dense", "sparse"}));
    sub->add_option("--top-k", top_k, "SRSA candidates evaluated zero-shot")->check(CLI::PositiveNumber);
    sub->add_option("--episodes", episodes, "evaluation episodes")->check(CLI::PositiveNumber);
    if (name == "gen-tasks") sub->add_option("--count", count, "task family size")->check(CLI::PositiveNumber);
    if (name == "report") sub->add_option("runs", run_dirs, "extra run directories to pool");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kUsageError;
  }
  const std::string name = app.get_subcommands().front()->get_name();

  pipeline::RunConfig cfg;
  try {
    if (!config_path.empty()) cfg = pipeline::load_run_config(config_path);
    pipeline::Overrides o;
    o.seed = seed;
    if (!out.empty()) o.out = out;
    if (!strategy.empty()) o.strategy = retrieval::strategy_from_string(strategy);
    o.no_sil = no_sil;
    if (!reward.empty()) o.reward = env::reward_mode_from_string(reward);
    o.top_k = top_k;
    o.episodes = episodes;
    o.count = count;
    cfg = pipeline::apply_overrides(cfg, o);
  } catch (const std::exception& e) {
    std::cerr << "invalid config: " << e.what() << "\n\n" << app.help() << '\n';
    return kUsageError;
  }

  try {
    if (name == "report" && !run_dirs.empty()) {
      std::vector<std::filesystem::path> dirs{cfg.output_dir};
      dirs.insert(dirs.end(), run_dirs.begin(), run_dirs.end());
      pipeline::write_report(dirs, cfg.output_dir / "report", cfg.train.target);
      pipeline::write_manifest(cfg, name);
    } else {
      pipeline::run_subcommand(name, cfg);
    }
  } catch (const std::exception& e) {
    std::cerr << name << ": " << e.what() << '\n';
    return kRunError;
  }
  std::cout << name << ": wrote " << cfg.output_dir.string() << '\n';
  return 0;
}
