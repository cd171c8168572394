#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "skillforge/pipeline/run_config.hpp"

namespace skillforge::pipeline {

/// Command-line overrides applied on top of the config file.
struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::filesystem::path> out;
  std::optional<retrieval::Strategy> strategy;
  bool no_sil = false;
  std::optional<env::RewardMode> reward;
  std::optional<int> top_k;
  std::optional<int> episodes;  // every zero-shot and curve evaluation
  std::optional<int> count;     // task family size
};

/// Applies the overrides and re-validates.
RunConfig apply_overrides(RunConfig cfg, const Overrides& o);

const std::vector<std::string>& subcommand_names();

/// Runs one pipeline stage. Every stage writes below cfg.output_dir and
/// finishes with `manifests/<name>.json`. Throws InvalidArgument on an
/// unknown name.
void run_subcommand(const std::string& name, const RunConfig& cfg);

/// Seed of one stage, independent of the others.
std::uint64_t stage_seed(const RunConfig& cfg, std::string_view stage);

// Curve directory label, e.g. "scratch", "srsa-nosil", "geometry-sparse".
std::string scratch_label(const RunConfig& cfg);
std::string finetune_label(const RunConfig& cfg);

/// Target-side task data; same seed as library skills so twins match.
features::TaskData target_data(const RunConfig& cfg, const env::TaskSpec& task);

/// The configured retrieval strategy for one target. Models that the
/// strategy does not need may be null.
retrieval::RetrievalResult retrieve_for(const RunConfig& cfg, retrieval::Strategy strategy,
                                        const library::SkillLibrary& lib, const features::TaskData& target,
                                        const features::FeatureEncoders* enc, const retrieval::BehaviorVae* vae,
                                        const predictor::Predictor* f);

/// Pointwise mean and population std over runs. Shorter runs (stopped early)
/// are padded with their last value.
struct CurveStats {
  std::vector<double> mean;
  std::vector<double> std;
};
CurveStats aggregate_curves(const std::vector<std::vector<double>>& runs);

/// Collects `<run>/curves/<label>/<task>/seed*.csv` from every run dir into
/// `<out>/summary.csv` and `<out>/curves.json`. A task directory without
/// curves raises IntegrityError naming it.
void write_report(const std::vector<std::filesystem::path>& run_dirs, const std::filesystem::path& out,
                  double target);

void write_manifest(const RunConfig& cfg, const std::string& subcommand);

}  // namespace skillforge::pipeline
