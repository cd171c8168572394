#include "skillforge/library/skill_library.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include <fmt/format.h>
#include <json.hpp>

#include "skillforge/common/error.hpp"
#include "skillforge/common/rng.hpp"
#include "skillforge/env/disassembly.hpp"
#include "skillforge/nn/checkpoint.hpp"

namespace skillforge::library {
namespace fs = std::filesystem;
namespace {

constexpr std::uint64_t kSkillDataStream = 0x5D47A, kScratchStream = 0x5C7A7C, kFeatureStream = 0xFEA7,
                        kTransferStream = 0x7F5F, kPredictorStream = 0x9F3D, kRetrieveStream = 0x3E7,
                        kFinetuneStream = 0xF1E7;

// Runs `load` and reports any failure as an integrity error naming `file`.
template <class F>
auto checked(const fs::path& file, F&& load) {
  if (!fs::exists(file)) throw IntegrityError("skill library: missing file " + file.string());
  try {
    return load();
  } catch (const IntegrityError&) {
    throw;
  } catch (const std::exception& e) {
    throw IntegrityError("skill library: corrupt file " + file.string() + ": " + e.what());
  }
}

nlohmann::json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open");
  return nlohmann::json::parse(in);
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw InvalidArgument("cannot write " + path.string());
  out << text;
}

std::string format_double(double v) { return fmt::format("{}", v); }

}  // namespace

void SkillLibrary::add(Skill skill) {
  if (!(skill.train_success >= 0.0 && skill.train_success <= 1.0)) {
    throw InvalidArgument("SkillLibrary::add: train_success outside [0, 1] for " + skill.id());
  }
  if (skill.id().empty()) throw InvalidArgument("SkillLibrary::add: empty task id");
  if (contains(skill.id())) throw ConflictError("SkillLibrary::add: task " + skill.id() + " is already present");
  const std::string id = skill.id();
  skills_.emplace(id, std::move(skill));
}

const Skill& SkillLibrary::at(const std::string& id) const {
  const auto it = skills_.find(id);
  if (it == skills_.end()) throw InvalidArgument("SkillLibrary: no skill " + id);
  return it->second;
}

std::vector<const Skill*> SkillLibrary::skills() const {
  std::vector<const Skill*> out;
  for (const auto& [id, s] : skills_) out.push_back(&s);
  return out;
}

std::vector<std::string> SkillLibrary::ids() const {
  std::vector<std::string> out;
  for (const auto& [id, s] : skills_) out.push_back(id);
  return out;
}

std::vector<retrieval::Source> SkillLibrary::sources() const {
  std::vector<retrieval::Source> out;
  for (const auto& [id, s] : skills_) out.push_back({&s.data, &s.policy});
  return out;
}

std::vector<const features::TaskData*> SkillLibrary::task_data() const {
  std::vector<const features::TaskData*> out;
  for (const auto& [id, s] : skills_) out.push_back(&s.data);
  return out;
}

predictor::SuccessMap SkillLibrary::train_successes() const {
  predictor::SuccessMap out;
  for (const auto& [id, s] : skills_) out[id] = s.train_success;
  return out;
}

void save_library(const SkillLibrary& lib, const fs::path& dir) {
  fs::create_directories(dir);
  for (const auto* s : lib.skills()) {
    const fs::path sub = dir / s->id();
    fs::create_directories(sub);
    const SkillRecord rec{s->id(), s->train_success};
    write_text(sub / rec.task_file, env::task_to_json(s->data.task).dump(2) + "\n");
    nn::save_checkpoint(s->policy.to_checkpoint(), sub / rec.policy_checkpoint);
    env::write_trajectories_jsonl(sub / rec.disassembly_paths, s->data.disassembly);
    features::write_clouds_json(sub / rec.clouds, s->data.clouds);
    const nlohmann::json meta{{"schema_version", kLibrarySchemaVersion},
                              {"task_id", rec.task_id},
                              {"train_success", rec.train_success},
                              {"files",
                               {{"task", rec.task_file},
                                {"policy_checkpoint", rec.policy_checkpoint},
                                {"disassembly_paths", rec.disassembly_paths},
                                {"clouds", rec.clouds}}}};
    write_text(sub / "meta.json", meta.dump(2) + "\n");
  }
}

SkillLibrary load_library(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IntegrityError("skill library: " + dir.string() + " is not a directory");
  std::vector<fs::path> subs;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_directory()) subs.push_back(entry.path());
  }
  std::sort(subs.begin(), subs.end());
  SkillLibrary lib;
  for (const auto& sub : subs) {
    const fs::path meta_path = sub / "meta.json";
    const SkillRecord rec = checked(meta_path, [&] {
      const auto j = read_json(meta_path);
      if (j.at("schema_version").get<int>() != kLibrarySchemaVersion) throw VersionError("unsupported schema_version");
      SkillRecord r;
      r.task_id = j.at("task_id").get<std::string>();
      r.train_success = j.at("train_success").get<double>();
      const auto& files = j.at("files");
      r.task_file = files.at("task").get<std::string>();
      r.policy_checkpoint = files.at("policy_checkpoint").get<std::string>();
      r.disassembly_paths = files.at("disassembly_paths").get<std::string>();
      r.clouds = files.at("clouds").get<std::string>();
      if (!(r.train_success >= 0.0 && r.train_success <= 1.0)) throw FormatError("train_success outside [0, 1]");
      if (r.task_id != sub.filename().string()) throw FormatError("task_id does not match the directory name");
      return r;
    });
    Skill s;
    s.train_success = rec.train_success;
    s.data.task = checked(sub / rec.task_file, [&] {
      auto t = env::task_from_json(read_json(sub / rec.task_file));
      if (t.id != rec.task_id) throw FormatError("task id " + t.id + " does not match meta.json");
      return t;
    });
    s.policy = checked(sub / rec.policy_checkpoint,
                       [&] { return rl::PolicyPair::from_checkpoint(nn::load_checkpoint(sub / rec.policy_checkpoint)); });
    s.data.disassembly = checked(sub / rec.disassembly_paths, [&] {
      auto trajs = env::read_trajectories_jsonl(sub / rec.disassembly_paths);
      if (trajs.empty()) throw FormatError("no trajectories");
      return trajs;
    });
    s.data.clouds = checked(sub / rec.clouds, [&] {
      auto clouds = features::read_clouds_json(sub / rec.clouds);
      if (clouds.empty()) throw FormatError("no cloud samples");
      return clouds;
    });
    lib.add(std::move(s));
  }
  return lib;
}

features::TaskData make_skill_data(const env::TaskSpec& task, const features::TaskDataConfig& cfg,
                                   std::uint64_t seed) {
  return features::make_task_data(task, cfg, derive_seed(seed, kSkillDataStream));
}

SkillTraining train_skill(const env::TaskSpec& task, const features::TaskDataConfig& data_cfg,
                          const rl::TrainConfig& cfg, int seeds, std::uint64_t seed) {
  if (seeds < 1) throw InvalidArgument("train_skill: seeds must be >= 1");
  SkillTraining out;
  const std::uint64_t task_seed = derive_seed(derive_seed(seed, kScratchStream), hash_string(task.id));
  std::size_t best = 0;
  for (int k = 0; k < seeds; ++k) {
    out.runs.push_back(rl::train_scratch(task, cfg, derive_seed(task_seed, static_cast<std::uint64_t>(k))));
    if (out.runs.back().best_success() > out.runs[best].best_success()) best = out.runs.size() - 1;
  }
  out.skill.data = make_skill_data(task, data_cfg, seed);
  out.skill.policy = out.runs[best].policy;
  out.skill.train_success = out.runs[best].best_success();
  return out;
}

void ContinualConfig::validate() const {
  if (predictor_min_library < 1) throw InvalidArgument("ContinualConfig: predictor_min_library must be >= 1");
  if (seeds_per_task < 1) throw InvalidArgument("ContinualConfig: seeds_per_task must be >= 1");
  if (!(success_target >= 0.0 && success_target <= 1.0)) throw InvalidArgument("ContinualConfig: success_target outside [0, 1]");
  if (transfer_episodes < 1) throw InvalidArgument("ContinualConfig: transfer_episodes must be >= 1");
  std::set<std::string> seen;
  for (const auto& batch : batch_schedule) {
    for (const auto& id : batch) {
      if (!seen.insert(id).second) throw InvalidArgument("ContinualConfig: task " + id + " appears in two batches");
    }
  }
  train.validate();
  features.validate();
  predictor.validate();
  srsa.validate();
}

retrieval::Strategy choose_strategy(std::size_t library_size, const ContinualConfig& cfg) {
  return library_size < static_cast<std::size_t>(cfg.predictor_min_library) ? retrieval::Strategy::Geometry
                                                                             : retrieval::Strategy::Srsa;
}

std::optional<double> mean_epochs_to_target(const std::vector<std::vector<double>>& curves, double target) {
  double total = 0.0;
  bool any = false;
  for (const auto& c : curves) {
    const auto e = rl::epochs_to_target(c, target);
    any = any || e.has_value();
    total += e ? *e : static_cast<double>(c.size());
  }
  if (!any || curves.empty()) return std::nullopt;
  return total / static_cast<double>(curves.size());
}

ContinualResult continual_run(const SkillLibrary& initial, const std::vector<env::TaskSpec>& tasks,
                              const ContinualConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  std::map<std::string, const env::TaskSpec*> by_id;
  for (const auto& t : tasks) by_id[t.id] = &t;
  for (const auto& batch : cfg.batch_schedule) {
    for (const auto& id : batch) {
      if (!by_id.contains(id)) throw InvalidArgument("continual_run: unknown task " + id);
      if (initial.contains(id)) throw ConflictError("continual_run: task " + id + " is already in the library");
    }
  }
  ContinualResult out;
  out.library = initial;
  if (cfg.batch_schedule.empty()) return out;
  if (initial.empty()) throw InvalidArgument("continual_run: the initial library is empty");

  rl::TrainConfig ft = cfg.train;
  ft.curriculum_from_zero = false;
  ft.target = cfg.success_target;
  predictor::TransferCache cache;

  for (std::size_t b = 0; b < cfg.batch_schedule.size(); ++b) {
    const auto& lib = out.library;
    const auto strategy = choose_strategy(lib.size(), cfg);
    const std::uint64_t batch_seed = derive_seed(seed, b);
    const auto enc = features::train_feature_encoders(lib.task_data(), cfg.features, derive_seed(batch_seed, kFeatureStream));
    std::optional<predictor::Predictor> f;
    const auto successes = lib.train_successes();
    if (strategy == retrieval::Strategy::Srsa) {
      std::vector<predictor::SkillRef> refs;
      predictor::TaskDataMap data_map;
      for (const auto* s : lib.skills()) {
        refs.push_back({&s->data.task, &s->policy});
        data_map[s->id()] = &s->data;
      }
      // One dataset seed for all batches keeps cached pairs consistent.
      const auto records =
          predictor::build_transfer_dataset(refs, cfg.transfer_episodes, derive_seed(seed, kTransferStream), &cache);
      f = predictor::train_predictor(records, data_map, enc, cfg.predictor, derive_seed(batch_seed, kPredictorStream),
                                     &successes)
              .model;
    }

    // Retrieval sees the library as it was at the start of the batch.
    const auto sources = lib.sources();
    std::vector<Skill> added;
    for (const auto& id : cfg.batch_schedule[b]) {
      const env::TaskSpec& task = *by_id.at(id);
      const std::uint64_t task_seed = derive_seed(seed, hash_string(id));
      auto target = make_skill_data(task, cfg.task_data, seed);
      const auto r = strategy == retrieval::Strategy::Srsa
                         ? retrieval::retrieve_srsa(sources, target, *f, enc, cfg.srsa,
                                                    derive_seed(task_seed, kRetrieveStream), &successes)
                         : retrieval::retrieve_geometry(sources, target, enc);
      const auto& init = lib.at(r.chosen).policy;

      ContinualRow row;
      row.task_id = id;
      row.batch = static_cast<int>(b);
      row.strategy = strategy;
      row.chosen_source = r.chosen;
      std::optional<rl::TrainResult> best;
      double final_sum = 0.0;
      for (int k = 0; k < cfg.seeds_per_task; ++k) {
        auto run = rl::finetune(init, task, ft, cfg.sil_enabled,
                                derive_seed(derive_seed(task_seed, kFinetuneStream), static_cast<std::uint64_t>(k)));
        row.curves.push_back(run.success_curve());
        final_sum += run.final_success();
        if (!best || run.best_success() > best->best_success()) best = std::move(run);
      }
      row.final_success = final_sum / cfg.seeds_per_task;
      row.epochs_to_target = mean_epochs_to_target(row.curves, cfg.success_target);
      row.added_success = best->best_success();
      row.flagged = row.added_success < cfg.success_target;
      out.report.push_back(std::move(row));
      added.push_back({std::move(target), best->policy, best->best_success()});
    }
    for (auto& s : added) out.library.add(std::move(s));
  }
  return out;
}

void write_report_csv(const fs::path& path, const std::vector<ContinualRow>& rows) {
  std::ostringstream out;
  out << "task_id,batch,strategy,chosen_source,epochs_to_target,final_success,flagged\n";
  for (const auto& r : rows) {
    out << r.task_id << ',' << r.batch << ',' << retrieval::to_string(r.strategy) << ',' << r.chosen_source << ','
        << (r.epochs_to_target ? format_double(*r.epochs_to_target) : "") << ',' << format_double(r.final_success)
        << ',' << (r.flagged ? 1 : 0) << '\n';
  }
  write_text(path, out.str());
}

std::vector<ContinualRow> read_report_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("read_report_csv: cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != "task_id,batch,strategy,chosen_source,epochs_to_target,final_success,flagged") {
    throw FormatError("read_report_csv: bad header in " + path.string());
  }
  std::vector<ContinualRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (line.back() == ',') cells.emplace_back();
    if (cells.size() != 7) throw FormatError("read_report_csv: expected 7 columns: " + line);
    try {
      ContinualRow r;
      r.task_id = cells[0];
      r.batch = std::stoi(cells[1]);
      r.strategy = retrieval::strategy_from_string(cells[2]);
      r.chosen_source = cells[3];
      if (!cells[4].empty()) r.epochs_to_target = std::stod(cells[4]);
      r.final_success = std::stod(cells[5]);
      r.flagged = cells[6] == "1";
      rows.push_back(std::move(r));
    } catch (const std::exception& e) {
      throw FormatError("read_report_csv: bad row '" + line + "': " + e.what());
    }
  }
  return rows;
}

}  // namespace skillforge::library
