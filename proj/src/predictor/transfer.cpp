#include "skillforge/predictor/transfer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <fmt/format.h>

#include "skillforge/common/error.hpp"
#include "skillforge/env/assembly_env.hpp"
#include "skillforge/nn/adam.hpp"
#include "skillforge/nn/checkpoint.hpp"

namespace skillforge::predictor {
namespace {

constexpr std::uint64_t kInitStream = 0xF001, kSampleStream = 0xF002, kCheckStream = 0xF003;

const features::TaskData& lookup(const TaskDataMap& data, const std::string& id) {
  const auto it = data.find(id);
  if (it == data.end() || it->second == nullptr) throw InvalidArgument("predictor: no task data for " + id);
  return *it->second;
}

double lookup_success(const SuccessMap* m, const std::string& id) {
  if (!m) return 0.0;
  const auto it = m->find(id);
  if (it == m->end()) throw InvalidArgument("predictor: no source success for " + id);
  return it->second;
}

Eigen::VectorXd make_input(const Eigen::VectorXd& zs, const Eigen::VectorXd& zt, bool with_success, double success) {
  Eigen::VectorXd x(zs.size() + zt.size() + (with_success ? 1 : 0));
  x.head(zs.size()) = zs;
  x.segment(zs.size(), zt.size()) = zt;
  if (with_success) x(x.size() - 1) = success;
  return x;
}

}  // namespace

double eval_zero_shot(const rl::Controller& controller, const env::TaskSpec& task, int episodes, std::uint64_t seed) {
  const env::AssemblyEnv env(task);
  return rl::evaluate(env, controller, episodes, seed).success_rate;
}

double eval_zero_shot(const rl::PolicyPair& policy, const env::TaskSpec& task, int episodes, std::uint64_t seed) {
  return eval_zero_shot(rl::mean_controller(policy), task, episodes, seed);
}

std::uint64_t pair_seed(std::uint64_t seed, const std::string& src_id, const std::string& trg_id) {
  return derive_seed(seed, hash_string(src_id + '\x1f' + trg_id));
}

std::vector<TransferRecord> build_transfer_dataset(const std::vector<SkillRef>& skills, int episodes,
                                                   std::uint64_t seed, TransferCache* cache) {
  if (skills.empty()) throw InvalidArgument("build_transfer_dataset: empty library");
  if (episodes < 1) throw InvalidArgument("build_transfer_dataset: episodes must be >= 1");
  std::vector<const SkillRef*> sorted;
  for (const auto& s : skills) {
    if (!s.task) throw InvalidArgument("build_transfer_dataset: skill without a task");
    if (!s.policy) throw IntegrityError("build_transfer_dataset: missing policy for task " + s.task->id);
    sorted.push_back(&s);
  }
  std::sort(sorted.begin(), sorted.end(), [](const SkillRef* a, const SkillRef* b) { return a->task->id < b->task->id; });
  std::vector<TransferRecord> out;
  out.reserve(sorted.size() * sorted.size());
  for (const auto* src : sorted) {
    for (const auto* trg : sorted) {
      const auto key = std::make_pair(src->task->id, trg->task->id);
      double success = 0.0;
      if (cache && cache->contains(key)) {
        success = cache->at(key);
      } else {
        success = eval_zero_shot(*src->policy, *trg->task, episodes, pair_seed(seed, key.first, key.second));
        if (cache) (*cache)[key] = success;
      }
      out.push_back({key.first, key.second, success});
    }
  }
  return out;
}

void write_transfer_csv(const std::filesystem::path& path, const std::vector<TransferRecord>& records) {
  std::ofstream out(path);
  if (!out) throw InvalidArgument("write_transfer_csv: cannot open " + path.string());
  out << "src_id,trg_id,success\n";
  for (const auto& r : records) out << fmt::format("{},{},{}\n", r.src_id, r.trg_id, r.success);
}

std::vector<TransferRecord> read_transfer_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("read_transfer_csv: cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != "src_id,trg_id,success") {
    throw FormatError("read_transfer_csv: bad header in " + path.string());
  }
  std::vector<TransferRecord> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto a = line.find(','), b = line.rfind(',');
    if (a == std::string::npos || a == b) throw FormatError("read_transfer_csv: malformed row: " + line);
    TransferRecord r{line.substr(0, a), line.substr(a + 1, b - a - 1), 0.0};
    try {
      r.success = std::stod(line.substr(b + 1));
    } catch (const std::exception&) {
      throw FormatError("read_transfer_csv: bad success value: " + line);
    }
    if (!(r.success >= 0.0 && r.success <= 1.0)) throw FormatError("read_transfer_csv: success outside [0, 1]: " + line);
    out.push_back(std::move(r));
  }
  return out;
}

void PredictorConfig::validate() const {
  if (epochs < 0 || batch_size < 1) throw InvalidArgument("PredictorConfig: epochs/batch out of range");
  if (!(lr > 0.0)) throw InvalidArgument("PredictorConfig: lr must be > 0");
}

double Predictor::raw(const Eigen::VectorXd& z_src, const Eigen::VectorXd& z_trg, double source_success) const {
  return nn::forward(net, make_input(z_src, z_trg, use_source_success, source_success))(0);
}

void Predictor::save(const std::filesystem::path& path) const {
  nn::save_checkpoint({{"F", net.params}, {"F_flags", Eigen::VectorXd::Constant(1, use_source_success ? 1.0 : 0.0)}},
                      path);
}

Predictor Predictor::load(const std::filesystem::path& path, const PredictorConfig& cfg) {
  const auto ckpt = nn::load_checkpoint(path);
  Predictor p;
  for (const auto& e : ckpt) {
    if (e.name == "F_flags" && e.params.size() == 1) p.use_source_success = e.params(0) != 0.0;
  }
  const int in = 2 * features::kTaskFeatureDim + (p.use_source_success ? 1 : 0);
  p.net = nn::DenseNet::mlp(in, cfg.hidden, 1, nn::Activation::Relu);
  const auto& params = nn::find_entry(ckpt, "F");
  if (params.size() != p.net.param_count()) throw FormatError("predictor checkpoint " + path.string() + " has the wrong size");
  p.net.params = params;
  return p;
}

PredictorFit train_predictor(const std::vector<TransferRecord>& records, const TaskDataMap& data,
                             const features::FeatureEncoders& enc, const PredictorConfig& cfg, std::uint64_t seed,
                             const SuccessMap* source_success) {
  cfg.validate();
  if (records.empty()) throw InvalidArgument("train_predictor: no records");
  if (cfg.use_source_success && !source_success) {
    throw InvalidArgument("train_predictor: use_source_success needs source success values");
  }
  for (const auto& r : records) {
    lookup(data, r.src_id);
    lookup(data, r.trg_id);
  }
  PredictorFit fit;
  auto& f = fit.model;
  f.use_source_success = cfg.use_source_success;
  f.net = nn::DenseNet::mlp(2 * features::kTaskFeatureDim + (cfg.use_source_success ? 1 : 0), cfg.hidden, 1,
                            nn::Activation::Relu);
  f.net.params = nn::init_params(f.net, derive_seed(seed, kInitStream));
  // Small output weights: training starts from a near-constant predictor.
  f.net.weight(f.net.num_layers() - 1) *= 0.01;
  auto opt = nn::AdamState::make(f.net.param_count(), cfg.lr);
  Rng rng = make_rng(seed, kSampleStream);
  const SuccessMap* ss = cfg.use_source_success ? source_success : nullptr;

  auto draw_inputs = [&](const std::vector<std::size_t>& idx, Rng& r) {
    Eigen::MatrixXd x(f.net.input_dim(), static_cast<Eigen::Index>(idx.size()));
    Eigen::RowVectorXd y(static_cast<Eigen::Index>(idx.size()));
    for (std::size_t k = 0; k < idx.size(); ++k) {
      const auto& rec = records[idx[k]];
      const Eigen::VectorXd zs = features::embed_task(lookup(data, rec.src_id), enc, r);
      const Eigen::VectorXd zt = features::embed_task(lookup(data, rec.trg_id), enc, r);
      x.col(static_cast<Eigen::Index>(k)) = make_input(zs, zt, f.use_source_success, lookup_success(ss, rec.src_id));
      y(static_cast<Eigen::Index>(k)) = rec.success;
    }
    return std::make_pair(x, y);
  };

  std::vector<std::size_t> order(records.size());
  std::iota(order.begin(), order.end(), 0);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    int batches = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      const std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(start),
                                         order.begin() + static_cast<std::ptrdiff_t>(end));
      const auto [x, y] = draw_inputs(idx, rng);
      nn::ForwardCache cache;
      const Eigen::RowVectorXd err = nn::forward(f.net, x, &cache).row(0) - y;
      const double inv_b = 1.0 / static_cast<double>(idx.size());
      const double loss = err.squaredNorm() * inv_b;
      if (!std::isfinite(loss)) throw TrainingError(fmt::format("train_predictor: non-finite loss at epoch {}", epoch));
      Eigen::VectorXd grad = Eigen::VectorXd::Zero(f.net.param_count());
      nn::backward(f.net, cache, 2.0 * inv_b * err, grad);
      nn::adam_step(opt, f.net.params, grad);
      epoch_loss += loss;
      ++batches;
    }
    fit.epoch_losses.push_back(epoch_loss / batches);
  }

  Rng check = make_rng(seed, kCheckStream);
  std::vector<std::size_t> all(records.size());
  std::iota(all.begin(), all.end(), 0);
  const auto [x, y] = draw_inputs(all, check);
  fit.train_mse = (nn::forward(f.net, x).row(0) - y).squaredNorm() / static_cast<double>(records.size());
  const double mean = y.mean();
  fit.label_variance = (y.array() - mean).square().mean();
  return fit;
}

double predict_transfer(const Predictor& f, const features::TaskData& src, const features::TaskData& trg,
                        const features::FeatureEncoders& enc, int m, std::uint64_t seed, double source_success) {
  if (m < 1) throw InvalidArgument("predict_transfer: m must be >= 1");
  Rng rng = make_rng(seed, kSampleStream);
  double total = 0.0;
  for (int i = 0; i < m; ++i) {
    const Eigen::VectorXd zs = features::embed_task(src, enc, rng);
    const Eigen::VectorXd zt = features::embed_task(trg, enc, rng);
    total += std::clamp(f.raw(zs, zt, source_success), 0.0, 1.0);
  }
  return total / m;
}

}  // namespace skillforge::predictor
