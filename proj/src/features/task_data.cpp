#include "skillforge/features/task_data.hpp"

#include <cmath>
#include <fstream>

#include <json.hpp>

#include "skillforge/common/error.hpp"
#include "skillforge/env/assembly_env.hpp"
#include "skillforge/env/disassembly.hpp"

namespace skillforge::features {
namespace {

constexpr std::uint64_t kPathStream = 0xDA7A01;
constexpr std::uint64_t kCloudStream = 0xDA7A02;
constexpr std::array<env::CloudPart, 3> kParts{env::CloudPart::Plug, env::CloudPart::Socket,
                                               env::CloudPart::Assembled};

Eigen::VectorXd to_vec(const core::Vec& v) { return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size())); }

bool same(const Eigen::VectorXd& a, const Eigen::VectorXd& b) { return a.size() == b.size() && a == b; }

nlohmann::json cloud_to_json(const env::PointCloud& c) {
  auto arr = nlohmann::json::array();
  for (Eigen::Index i = 0; i < c.cols(); ++i) arr.push_back({c(0, i), c(1, i)});
  return arr;
}

env::PointCloud cloud_from_json(const nlohmann::json& j) {
  if (!j.is_array() || j.empty()) throw FormatError("clouds.json: point list must be a nonempty array");
  env::PointCloud c(2, static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    const auto& pt = j[i];
    if (!pt.is_array() || pt.size() != 2) throw FormatError("clouds.json: points must be [x, y]");
    c(0, static_cast<Eigen::Index>(i)) = pt[0].get<double>();
    c(1, static_cast<Eigen::Index>(i)) = pt[1].get<double>();
  }
  return c;
}

}  // namespace

TaskData make_task_data(const env::TaskSpec& task, const TaskDataConfig& cfg, std::uint64_t seed) {
  if (cfg.n_paths < 1 || cfg.n_cloud_samples < 1 || cfg.n_points < 3) {
    throw InvalidArgument("make_task_data: counts out of range");
  }
  TaskData data;
  data.task = task;
  const env::AssemblyEnv env(task);
  Rng path_rng = make_rng(seed, kPathStream);
  data.disassembly = env::gen_disassembly(env, cfg.n_paths, path_rng);
  Rng cloud_rng = make_rng(seed, kCloudStream);
  for (int s = 0; s < cfg.n_cloud_samples; ++s) {
    CloudTriple triple;
    for (std::size_t k = 0; k < 3; ++k) {
      triple[k] = env::sample_point_cloud(task, kParts[k], static_cast<std::size_t>(cfg.n_points), cloud_rng);
    }
    data.clouds.push_back(std::move(triple));
  }
  return data;
}

void write_clouds_json(const std::filesystem::path& path, const std::vector<CloudTriple>& clouds) {
  nlohmann::json j;
  j["n_points"] = clouds.empty() ? 0 : clouds.front()[0].cols();
  auto samples = nlohmann::json::array();
  for (const auto& triple : clouds) {
    nlohmann::json s;
    for (std::size_t k = 0; k < 3; ++k) s[env::to_string(kParts[k])] = cloud_to_json(triple[k]);
    samples.push_back(std::move(s));
  }
  j["samples"] = std::move(samples);
  std::ofstream out(path);
  if (!out) throw InvalidArgument("write_clouds_json: cannot open " + path.string());
  // shortest round-trip doubles, so clouds reload bitwise identical
  out << j.dump() << '\n';
}

std::vector<CloudTriple> read_clouds_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("read_clouds_json: cannot open " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("read_clouds_json: " + path.string() + ": " + e.what());
  }
  if (!j.contains("samples") || !j["samples"].is_array()) throw FormatError("clouds.json: missing samples");
  std::vector<CloudTriple> out;
  try {
    for (const auto& s : j["samples"]) {
      CloudTriple triple;
      for (std::size_t k = 0; k < 3; ++k) {
        const auto key = env::to_string(kParts[k]);
        if (!s.contains(key)) throw FormatError("clouds.json: sample missing " + key);
        triple[k] = cloud_from_json(s[key]);
      }
      out.push_back(std::move(triple));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("read_clouds_json: " + path.string() + ": " + e.what());
  }
  return out;
}

Segment segment_at(const core::Trajectory& traj, int h, std::size_t start) {
  if (h < 1) throw InvalidArgument("segment: h must be >= 1");
  const auto need = static_cast<std::size_t>(h) + 1;
  if (traj.size() < need || start + need > traj.size()) {
    throw InvalidArgument("segment: trajectory shorter than h + 1 transitions");
  }
  const auto& first = traj.transitions[start];
  const auto sd = static_cast<Eigen::Index>(first.state.size());
  const auto ad = static_cast<Eigen::Index>(first.action.size());
  Segment seg;
  seg.start = start;
  seg.states.resize(sd, h);
  seg.actions.resize(ad, h);
  for (int k = 0; k < h; ++k) {
    const auto& tr = traj.transitions[start + static_cast<std::size_t>(k)];
    seg.states.col(k) = to_vec(tr.state);
    seg.actions.col(k) = to_vec(tr.action);
  }
  const auto& q = traj.transitions[start + static_cast<std::size_t>(h)];
  seg.query_state = to_vec(q.state);
  seg.query_action = to_vec(q.action);
  seg.next_state = to_vec(q.next_state);
  return seg;
}

Segment sample_segment(const core::Trajectory& traj, int h, Rng& rng) {
  if (h < 1) throw InvalidArgument("sample_segment: h must be >= 1");
  const auto need = static_cast<std::size_t>(h) + 1;
  if (traj.size() < need) throw InvalidArgument("sample_segment: trajectory shorter than h + 1 transitions");
  return segment_at(traj, h, uniform_index(rng, traj.size() - need + 1));
}

Normalizer Normalizer::fit(const std::vector<const core::Trajectory*>& trajs) {
  Eigen::Index sd = -1, ad = -1;
  double n = 0.0;
  Eigen::VectorXd s_sum, s_sq, a_sum, a_sq;
  for (const auto* t : trajs) {
    for (const auto& tr : t->transitions) {
      if (sd < 0) {
        sd = static_cast<Eigen::Index>(tr.state.size());
        ad = static_cast<Eigen::Index>(tr.action.size());
        s_sum = s_sq = Eigen::VectorXd::Zero(sd);
        a_sum = a_sq = Eigen::VectorXd::Zero(ad);
      }
      const Eigen::VectorXd s = to_vec(tr.state), a = to_vec(tr.action);
      if (s.size() != sd || a.size() != ad) throw InvalidArgument("Normalizer::fit: inconsistent dimensions");
      s_sum += s;
      s_sq += s.cwiseProduct(s);
      a_sum += a;
      a_sq += a.cwiseProduct(a);
      n += 1.0;
    }
  }
  if (n == 0.0) throw InvalidArgument("Normalizer::fit: no transitions");
  auto finish = [n](const Eigen::VectorXd& sum, const Eigen::VectorXd& sq, Eigen::VectorXd& mean,
                    Eigen::VectorXd& sd_out) {
    mean = sum / n;
    sd_out = (sq / n - mean.cwiseProduct(mean)).cwiseMax(0.0).cwiseSqrt();
    for (Eigen::Index i = 0; i < sd_out.size(); ++i) {
      if (sd_out(i) < 1e-8) sd_out(i) = 1.0;
    }
  };
  Normalizer out;
  finish(s_sum, s_sq, out.state_mean, out.state_std);
  finish(a_sum, a_sq, out.action_mean, out.action_std);
  return out;
}

Eigen::VectorXd Normalizer::state(const Eigen::VectorXd& s) const {
  return (s - state_mean).cwiseQuotient(state_std);
}

Eigen::VectorXd Normalizer::action(const Eigen::VectorXd& a) const {
  return (a - action_mean).cwiseQuotient(action_std);
}

Eigen::VectorXd Normalizer::context(const Segment& seg) const {
  const Eigen::Index sd = seg.states.rows(), ad = seg.actions.rows(), h = seg.states.cols();
  Eigen::VectorXd out((sd + ad) * h);
  for (Eigen::Index k = 0; k < h; ++k) {
    out.segment(k * (sd + ad), sd) = state(seg.states.col(k));
    out.segment(k * (sd + ad) + sd, ad) = action(seg.actions.col(k));
  }
  return out;
}

bool operator==(const Normalizer& a, const Normalizer& b) {
  return same(a.state_mean, b.state_mean) && same(a.state_std, b.state_std) && same(a.action_mean, b.action_mean) &&
         same(a.action_std, b.action_std);
}

bool operator==(const TaskData& a, const TaskData& b) {
  if (!(a.task == b.task) || a.disassembly != b.disassembly || a.clouds.size() != b.clouds.size()) return false;
  for (std::size_t i = 0; i < a.clouds.size(); ++i) {
    for (std::size_t k = 0; k < 3; ++k) {
      const auto& p = a.clouds[i][k];
      const auto& q = b.clouds[i][k];
      if (p.cols() != q.cols() || p != q) return false;
    }
  }
  return true;
}

}  // namespace skillforge::features
