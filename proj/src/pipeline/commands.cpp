#include "skillforge/pipeline/commands.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>

#include <fmt/chrono.h>
#include <fmt/format.h>

#include "skillforge/common/error.hpp"
#include "skillforge/common/rng.hpp"

namespace skillforge::pipeline {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void write_json(const fs::path& path, const json& j) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw InvalidArgument("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IntegrityError("missing file " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw IntegrityError("corrupt file " + path.string() + ": " + e.what());
  }
}

// Artifacts of earlier stages; the message says which stage makes them.
void require(const fs::path& path, std::string_view stage) {
  if (!fs::exists(path)) throw IntegrityError(fmt::format("missing {} (run {} first)", path.string(), stage));
}

std::uint64_t task_seed(std::uint64_t base, const std::string& id, int k) {
  return derive_seed(derive_seed(base, hash_string(id)), static_cast<std::uint64_t>(k));
}

fs::path curve_path(const RunConfig& cfg, const std::string& label, const std::string& id, int k) {
  return cfg.output_dir / "curves" / label / id / fmt::format("seed{}.csv", k);
}

void save_curve(const fs::path& path, const std::vector<rl::CurvePoint>& curve) {
  fs::create_directories(path.parent_path());
  rl::write_curve_csv(path, curve);
}

library::SkillLibrary load_prior_library(const RunConfig& cfg) {
  const fs::path dir = cfg.output_dir / "library";
  require(dir, "build-library");
  return library::load_library(dir);
}

features::FeatureEncoders load_encoders(const RunConfig& cfg) {
  const fs::path stem = cfg.output_dir / "features" / "encoders";
  require(fs::path(stem).replace_extension(".ckpt"), "learn-features");
  return features::FeatureEncoders::load(stem);
}

std::uint64_t zero_shot_seed(const RunConfig& cfg, const std::string& target_id) {
  return derive_seed(stage_seed(cfg, "zero-shot"), hash_string(target_id));
}

void cmd_gen_tasks(const RunConfig& cfg) {
  const Split split = resolve_split(cfg);
  for (const auto& t : split.family) write_json(cfg.output_dir / "tasks" / (t.id + ".json"), env::task_to_json(t));
  write_json(cfg.output_dir / "split.json", {{"prior", split.prior}, {"test", split.test}});
}

void cmd_train_scratch(const RunConfig& cfg) {
  const Split split = resolve_split(cfg);
  const std::string label = scratch_label(cfg);
  for (const auto& id : split.test) {
    const auto task = with_reward(split.task(id), cfg.reward);
    for (int k = 0; k < cfg.eval_seeds; ++k) {
      const auto run = rl::train_scratch(task, cfg.train, task_seed(stage_seed(cfg, "train-scratch"), id, k));
      save_curve(curve_path(cfg, label, id, k), run.curve);
    }
  }
}

void cmd_build_library(const RunConfig& cfg) {
  const Split split = resolve_split(cfg);
  library::SkillLibrary lib;
  for (const auto& id : split.prior) {
    auto trained = library::train_skill(split.task(id), cfg.task_data, cfg.train, cfg.library_seeds, cfg.seed);
    for (std::size_t k = 0; k < trained.runs.size(); ++k) {
      save_curve(curve_path(cfg, "library", id, static_cast<int>(k)), trained.runs[k].curve);
    }
    lib.add(std::move(trained.skill));
  }
  library::save_library(lib, cfg.output_dir / "library");
}

void cmd_learn_features(const RunConfig& cfg) {
  const auto lib = load_prior_library(cfg);
  if (lib.empty()) throw InvalidArgument("learn-features: the library is empty");
  const auto enc = features::train_feature_encoders(lib.task_data(), cfg.features, stage_seed(cfg, "learn-features"));
  fs::create_directories(cfg.output_dir / "features");
  enc.save(cfg.output_dir / "features" / "encoders");

  std::vector<const core::Trajectory*> trajs;
  for (const auto* skill : lib.skills()) {
    for (const auto& t : skill->data.disassembly) trajs.push_back(&t);
  }
  const auto vae = retrieval::train_behavior_vae(trajs, cfg.behavior_vae, stage_seed(cfg, "behavior-vae"));
  vae.vae.save(cfg.output_dir / "features" / "behavior");
  write_json(cfg.output_dir / "features" / "behavior_losses.json", vae.losses);
}

void cmd_train_predictor(const RunConfig& cfg) {
  const auto lib = load_prior_library(cfg);
  const auto enc = load_encoders(cfg);
  std::vector<predictor::SkillRef> refs;
  predictor::TaskDataMap data;
  for (const auto* skill : lib.skills()) {
    refs.push_back({&skill->data.task, &skill->policy});
    data[skill->id()] = &skill->data;
  }
  const auto records = predictor::build_transfer_dataset(refs, cfg.transfer_episodes, stage_seed(cfg, "transfer"));
  const fs::path dir = cfg.output_dir / "predictor";
  fs::create_directories(dir);
  predictor::write_transfer_csv(dir / "transfer.csv", records);
  const auto successes = lib.train_successes();
  const auto fit = predictor::train_predictor(records, data, enc, cfg.predictor, stage_seed(cfg, "train-predictor"),
                                              cfg.predictor.use_source_success ? &successes : nullptr);
  fit.model.save(dir / "F.ckpt");
  write_json(dir / "fit.json", {{"train_mse", fit.train_mse},
                                {"label_variance", fit.label_variance},
                                {"epoch_losses", fit.epoch_losses}});
}

void cmd_eval_retrieval(const RunConfig& cfg) {
  const Split split = resolve_split(cfg);
  const auto lib = load_prior_library(cfg);
  using retrieval::Strategy;
  std::optional<features::FeatureEncoders> enc;
  std::optional<retrieval::BehaviorVae> vae;
  std::optional<predictor::Predictor> f;
  if (cfg.strategy == Strategy::Forward || cfg.strategy == Strategy::Geometry || cfg.strategy == Strategy::Srsa) {
    enc = load_encoders(cfg);
  }
  if (cfg.strategy == Strategy::Behavior) {
    const fs::path stem = cfg.output_dir / "features" / "behavior";
    require(fs::path(stem).replace_extension(".ckpt"), "learn-features");
    vae = retrieval::BehaviorVae::load(stem);
  }
  if (cfg.strategy == Strategy::Srsa) {
    const fs::path path = cfg.output_dir / "predictor" / "F.ckpt";
    require(path, "train-predictor");
    f = predictor::Predictor::load(path, cfg.predictor);
  }

  const fs::path dir = cfg.output_dir / "retrieval" / retrieval::to_string(cfg.strategy);
  fs::create_directories(dir);
  std::ofstream summary(dir / "summary.csv");
  summary << "task_id,chosen_source,zero_shot_success\n";
  for (const auto& id : split.test) {
    const auto target = target_data(cfg, split.task(id));
    const auto result = retrieve_for(cfg, cfg.strategy, lib, target, enc ? &*enc : nullptr, vae ? &*vae : nullptr,
                                     f ? &*f : nullptr);
    const double success = predictor::eval_zero_shot(lib.at(result.chosen).policy, target.task,
                                                     cfg.transfer_episodes, zero_shot_seed(cfg, id));
    json j = retrieval::to_json(result);
    j["target"] = id;
    j["zero_shot_success"] = success;
    write_json(dir / (id + ".json"), j);
    summary << fmt::format("{},{},{}\n", id, result.chosen, success);
  }
}

void cmd_finetune(const RunConfig& cfg) {
  const Split split = resolve_split(cfg);
  const auto lib = load_prior_library(cfg);
  const std::string label = finetune_label(cfg);
  const fs::path dir = cfg.output_dir / "retrieval" / retrieval::to_string(cfg.strategy);
  rl::TrainConfig tc = cfg.train;
  tc.curriculum_from_zero = false;
  for (const auto& id : split.test) {
    const fs::path result_path = dir / (id + ".json");
    require(result_path, "eval-retrieval");
    const std::string chosen = read_json(result_path).value("chosen", std::string{});
    if (!lib.contains(chosen)) throw IntegrityError(result_path.string() + ": unknown source '" + chosen + "'");
    const auto task = with_reward(split.task(id), cfg.reward);
    for (int k = 0; k < cfg.eval_seeds; ++k) {
      const auto run = rl::finetune(lib.at(chosen).policy, task, tc, cfg.sil_enabled,
                                    task_seed(stage_seed(cfg, "finetune"), id, k));
      save_curve(curve_path(cfg, label, id, k), run.curve);
    }
  }
}

void cmd_continual(const RunConfig& cfg) {
  const Split split = resolve_split(cfg);
  const ContinualPlan plan = resolve_continual(cfg, split);
  const auto prior = load_prior_library(cfg);
  library::SkillLibrary initial;
  for (const auto& id : plan.initial) {
    if (!prior.contains(id)) throw IntegrityError("continual: initial skill " + id + " is not in the library");
    initial.add(prior.at(id));
  }
  std::vector<env::TaskSpec> tasks;
  for (const auto& t : split.family) tasks.push_back(with_reward(t, cfg.reward));
  const auto result = library::continual_run(initial, tasks, continual_config(cfg, plan), stage_seed(cfg, "continual"));
  const fs::path dir = cfg.output_dir / "continual";
  fs::create_directories(dir);
  library::write_report_csv(dir / "report.csv", result.report);
  library::save_library(result.library, dir / "library");
}

}  // namespace

RunConfig apply_overrides(RunConfig cfg, const Overrides& o) {
  if (o.seed) cfg.seed = *o.seed;
  if (o.out) cfg.output_dir = *o.out;
  if (o.strategy) cfg.strategy = *o.strategy;
  if (o.no_sil) cfg.sil_enabled = false;
  if (o.reward) cfg.reward = *o.reward;
  if (o.top_k) cfg.srsa.top_k = *o.top_k;
  if (o.episodes) {
    cfg.train.eval_episodes = *o.episodes;
    cfg.srsa.eval_episodes = *o.episodes;
    cfg.transfer_episodes = *o.episodes;
  }
  if (o.count) cfg.task_family.count = *o.count;
  cfg.validate();
  return cfg;
}

const std::vector<std::string>& subcommand_names() {
  static const std::vector<std::string> names{"gen-tasks",       "train-scratch",  "build-library",
                                              "learn-features",  "train-predictor", "eval-retrieval",
                                              "finetune",        "continual",       "report"};
  return names;
}

void run_subcommand(const std::string& name, const RunConfig& cfg) {
  static const std::map<std::string, std::function<void(const RunConfig&)>> table{
      {"gen-tasks", cmd_gen_tasks},
      {"train-scratch", cmd_train_scratch},
      {"build-library", cmd_build_library},
      {"learn-features", cmd_learn_features},
      {"train-predictor", cmd_train_predictor},
      {"eval-retrieval", cmd_eval_retrieval},
      {"finetune", cmd_finetune},
      {"continual", cmd_continual},
      {"report", [](const RunConfig& c) { write_report({c.output_dir}, c.output_dir / "report", c.train.target); }},
  };
  const auto it = table.find(name);
  if (it == table.end()) throw InvalidArgument("unknown subcommand '" + name + "'");
  cfg.validate();
  fs::create_directories(cfg.output_dir);
  it->second(cfg);
  write_manifest(cfg, name);
}

std::uint64_t stage_seed(const RunConfig& cfg, std::string_view stage) {
  return derive_seed(cfg.seed, hash_string(stage));
}

std::string scratch_label(const RunConfig& cfg) {
  return cfg.reward == env::RewardMode::Sparse ? "scratch-sparse" : "scratch";
}

std::string finetune_label(const RunConfig& cfg) {
  std::string label = retrieval::to_string(cfg.strategy);
  if (!cfg.sil_enabled) label += "-nosil";
  if (cfg.reward == env::RewardMode::Sparse) label += "-sparse";
  return label;
}

features::TaskData target_data(const RunConfig& cfg, const env::TaskSpec& task) {
  return library::make_skill_data(task, cfg.task_data, cfg.seed);
}

retrieval::RetrievalResult retrieve_for(const RunConfig& cfg, retrieval::Strategy strategy,
                                        const library::SkillLibrary& lib, const features::TaskData& target,
                                        const features::FeatureEncoders* enc, const retrieval::BehaviorVae* vae,
                                        const predictor::Predictor* f) {
  using retrieval::Strategy;
  const auto sources = lib.sources();
  const std::string& id = target.task.id;
  auto need = [&](const void* p, const char* what) {
    if (!p) throw InvalidArgument(fmt::format("{} retrieval needs {}", retrieval::to_string(strategy), what));
  };
  switch (strategy) {
    case Strategy::Signature:
      return retrieval::retrieve_signature(sources, target.disassembly);
    case Strategy::Behavior:
      need(vae, "the behavior VAE");
      return retrieval::retrieve_behavior(sources, target.disassembly, *vae);
    case Strategy::Forward:
      need(enc, "the feature encoders");
      return retrieval::retrieve_forward(sources, target, *enc);
    case Strategy::Geometry:
      need(enc, "the feature encoders");
      return retrieval::retrieve_geometry(sources, target, *enc);
    case Strategy::Srsa: {
      need(enc, "the feature encoders");
      need(f, "the transfer predictor");
      const auto successes = lib.train_successes();
      return retrieval::retrieve_srsa(sources, target, *f, *enc, cfg.srsa,
                                      derive_seed(stage_seed(cfg, "srsa"), hash_string(id)), &successes);
    }
    case Strategy::Random:
      return retrieval::retrieve_random(sources, derive_seed(stage_seed(cfg, "random"), hash_string(id)));
    case Strategy::Oracle:
      return retrieval::oracle_best_source(sources, target.task, cfg.transfer_episodes, zero_shot_seed(cfg, id));
  }
  throw InvalidArgument("unknown strategy");
}

CurveStats aggregate_curves(const std::vector<std::vector<double>>& runs) {
  if (runs.empty()) throw InvalidArgument("aggregate_curves: no runs");
  std::size_t len = 0;
  for (const auto& r : runs) {
    if (r.empty()) throw InvalidArgument("aggregate_curves: empty curve");
    len = std::max(len, r.size());
  }
  CurveStats s;
  const double n = static_cast<double>(runs.size());
  for (std::size_t i = 0; i < len; ++i) {
    auto at = [i](const std::vector<double>& r) { return i < r.size() ? r[i] : r.back(); };
    double mean = 0.0, var = 0.0;
    for (const auto& r : runs) mean += at(r);
    mean /= n;
    for (const auto& r : runs) var += (at(r) - mean) * (at(r) - mean);
    s.mean.push_back(mean);
    s.std.push_back(std::sqrt(var / n));
  }
  return s;
}

void write_report(const std::vector<fs::path>& run_dirs, const fs::path& out, double target) {
  if (run_dirs.empty()) throw InvalidArgument("report: no run directories");
  // label -> task -> curves
  std::map<std::string, std::map<std::string, std::vector<std::vector<double>>>> pooled;
  auto sorted_entries = [](const fs::path& dir) {
    std::vector<fs::path> out;
    for (const auto& e : fs::directory_iterator(dir)) out.push_back(e.path());
    std::sort(out.begin(), out.end());
    return out;
  };
  for (const auto& run : run_dirs) {
    const fs::path curves = run / "curves";
    if (!fs::is_directory(curves)) throw IntegrityError("report: missing curves directory " + curves.string());
    for (const auto& label_dir : sorted_entries(curves)) {
      if (!fs::is_directory(label_dir)) continue;
      for (const auto& task_dir : sorted_entries(label_dir)) {
        if (!fs::is_directory(task_dir)) continue;
        auto& bucket = pooled[label_dir.filename().string()][task_dir.filename().string()];
        const std::size_t before = bucket.size();
        for (const auto& file : sorted_entries(task_dir)) {
          if (file.extension() != ".csv") continue;
          std::vector<double> curve;
          for (const auto& p : rl::read_curve_csv(file)) curve.push_back(p.success_rate);
          if (curve.empty()) throw IntegrityError("report: empty curve file " + file.string());
          bucket.push_back(std::move(curve));
        }
        if (bucket.size() == before) throw IntegrityError("report: no curves in " + task_dir.string());
      }
    }
  }
  if (pooled.empty()) throw IntegrityError("report: no curves found under " + run_dirs.front().string());

  fs::create_directories(out);
  std::ofstream csv(out / "summary.csv");
  if (!csv) throw InvalidArgument("report: cannot write " + (out / "summary.csv").string());
  csv << "label,task_id,runs,final_success_mean,final_success_std_population,epochs_to_target_mean\n";
  json curves_json = json::object();
  auto row = [&](const std::string& label, const std::string& task, const std::vector<std::vector<double>>& runs) {
    std::vector<std::vector<double>> finals;
    for (const auto& r : runs) finals.push_back({r.back()});
    const auto fin = aggregate_curves(finals);
    const auto ett = library::mean_epochs_to_target(runs, target);
    csv << fmt::format("{},{},{},{},{},{}\n", label, task, runs.size(), fin.mean[0], fin.std[0],
                       ett ? fmt::format("{}", *ett) : std::string{});
  };
  for (const auto& [label, tasks] : pooled) {
    std::vector<std::vector<double>> all;
    for (const auto& [task, runs] : tasks) {
      row(label, task, runs);
      const auto stats = aggregate_curves(runs);
      curves_json[label][task] = {{"runs", runs.size()}, {"mean", stats.mean}, {"std", stats.std}};
      all.insert(all.end(), runs.begin(), runs.end());
    }
    row(label, "ALL", all);
  }
  write_json(out / "curves.json", curves_json);
}

void write_manifest(const RunConfig& cfg, const std::string& subcommand) {
  const auto now = std::chrono::floor<std::chrono::seconds>(std::chrono::system_clock::now());
  write_json(cfg.output_dir / "manifests" / (subcommand + ".json"),
             {{"subcommand", subcommand},
              {"config_hash", config_hash(cfg)},
              {"seed", cfg.seed},
              {"timestamp", fmt::format("{:%Y-%m-%dT%H:%M:%SZ}", now)},
              {"config", to_json(cfg)}});
}

}  // namespace skillforge::pipeline
