#include "skillforge/retrieval/retrieval.hpp"

#include <algorithm>
#include <map>
#include <numeric>

#include "skillforge/common/error.hpp"
#include "skillforge/common/rng.hpp"
#include "skillforge/retrieval/signature.hpp"

namespace skillforge::retrieval {
namespace {

constexpr std::uint64_t kSrsaPredictStream = 0x5125A1, kSrsaEvalStream = 0x5125A2;

void check_library(const std::vector<Source>& library, const char* who) {
  if (library.empty()) throw InvalidArgument(std::string(who) + ": empty library");
  for (const auto& s : library) {
    if (!s.data) throw InvalidArgument(std::string(who) + ": source without task data");
  }
}

RetrievalResult finish(Strategy strategy, std::vector<RankedSource> scores) {
  RetrievalResult r;
  r.strategy = strategy;
  r.ranked = rank_scores(std::move(scores));
  r.chosen = r.ranked.front().id;
  return r;
}

// Index of the nearest column of `points` for every column of `queries`.
// Ties keep the first column.
std::vector<Eigen::Index> nearest_columns(const Eigen::MatrixXd& queries, const Eigen::MatrixXd& points) {
  constexpr Eigen::Index kChunk = 256;
  const Eigen::RowVectorXd p_sq = points.colwise().squaredNorm();
  std::vector<Eigen::Index> out(static_cast<std::size_t>(queries.cols()));
  for (Eigen::Index start = 0; start < queries.cols(); start += kChunk) {
    const Eigen::Index n = std::min(kChunk, queries.cols() - start);
    const auto q = queries.middleCols(start, n);
    // |p|^2 - 2 p.q; the |q|^2 term does not change the argmin.
    const Eigen::MatrixXd d = (-2.0 * points.transpose() * q).colwise() + p_sq.transpose();
    for (Eigen::Index j = 0; j < n; ++j) {
      Eigen::Index best = 0;
      d.col(j).minCoeff(&best);
      out[static_cast<std::size_t>(start + j)] = best;
    }
  }
  return out;
}

// One vote per query column, for the source owning its nearest point.
RetrievalResult vote(Strategy strategy, const std::vector<Source>& library, const Eigen::MatrixXd& points,
                     const std::vector<std::size_t>& owner, const Eigen::MatrixXd& queries) {
  if (points.cols() == 0) throw InvalidArgument("retrieval: library has no reference data");
  if (queries.cols() == 0) throw InvalidArgument("retrieval: target has no data");
  std::vector<double> votes(library.size(), 0.0);
  for (const auto j : nearest_columns(queries, points)) votes[owner[static_cast<std::size_t>(j)]] += 1.0;
  std::vector<RankedSource> scores;
  for (std::size_t i = 0; i < library.size(); ++i) scores.push_back({library[i].id(), votes[i]});
  return finish(strategy, std::move(scores));
}

RetrievalResult nearest_embedding(Strategy strategy, const std::vector<Source>& library,
                                  const Eigen::VectorXd& target, auto embed) {
  std::vector<RankedSource> scores;
  for (const auto& s : library) scores.push_back({s.id(), -(embed(*s.data) - target).norm()});
  return finish(strategy, std::move(scores));
}

Eigen::MatrixXd signatures(const std::vector<core::Trajectory>& trajs) {
  Eigen::MatrixXd out;
  for (std::size_t i = 0; i < trajs.size(); ++i) {
    const Eigen::VectorXd s = trajectory_signature(trajs[i]);
    if (i == 0) out.resize(s.size(), static_cast<Eigen::Index>(trajs.size()));
    out.col(static_cast<Eigen::Index>(i)) = s;
  }
  return out;
}

std::vector<const core::Trajectory*> pointers(const std::vector<core::Trajectory>& trajs) {
  std::vector<const core::Trajectory*> out;
  for (const auto& t : trajs) out.push_back(&t);
  return out;
}

}  // namespace

std::string to_string(Strategy s) {
  switch (s) {
    case Strategy::Signature: return "signature";
    case Strategy::Behavior: return "behavior";
    case Strategy::Forward: return "forward";
    case Strategy::Geometry: return "geometry";
    case Strategy::Srsa: return "srsa";
    case Strategy::Random: return "random";
    case Strategy::Oracle: return "oracle";
  }
  return "unknown";
}

Strategy strategy_from_string(const std::string& s) {
  for (auto v : {Strategy::Signature, Strategy::Behavior, Strategy::Forward, Strategy::Geometry, Strategy::Srsa,
                 Strategy::Random, Strategy::Oracle}) {
    if (to_string(v) == s) return v;
  }
  throw InvalidArgument("unknown retrieval strategy: " + s);
}

nlohmann::json to_json(const RetrievalResult& r) {
  auto list = [](const std::vector<RankedSource>& v) {
    nlohmann::json a = nlohmann::json::array();
    for (const auto& e : v) a.push_back({{"task_id", e.id}, {"score", e.score}});
    return a;
  };
  return {{"strategy", to_string(r.strategy)}, {"chosen", r.chosen}, {"ranked", list(r.ranked)},
          {"evaluated", list(r.evaluated)}};
}

RetrievalResult retrieval_from_json(const nlohmann::json& j) {
  try {
    RetrievalResult r;
    r.strategy = strategy_from_string(j.at("strategy").get<std::string>());
    r.chosen = j.at("chosen").get<std::string>();
    for (const auto& e : j.at("ranked")) r.ranked.push_back({e.at("task_id"), e.at("score")});
    if (j.contains("evaluated")) {
      for (const auto& e : j.at("evaluated")) r.evaluated.push_back({e.at("task_id"), e.at("score")});
    }
    return r;
  } catch (const nlohmann::json::exception& ex) {
    throw FormatError(std::string("retrieval result: ") + ex.what());
  } catch (const InvalidArgument& ex) {
    throw FormatError(ex.what());
  }
}

std::vector<RankedSource> rank_scores(std::vector<RankedSource> scores) {
  std::sort(scores.begin(), scores.end(), [](const RankedSource& a, const RankedSource& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.id < b.id;
  });
  return scores;
}

RetrievalResult retrieve_signature(const std::vector<Source>& library, const std::vector<core::Trajectory>& target) {
  check_library(library, "retrieve_signature");
  std::vector<core::Trajectory> all;
  std::vector<std::size_t> owner;
  for (std::size_t i = 0; i < library.size(); ++i) {
    for (const auto& t : library[i].data->disassembly) {
      all.push_back(t);
      owner.push_back(i);
    }
  }
  if (all.empty()) throw InvalidArgument("retrieve_signature: library has no disassembly trajectories");
  if (target.empty()) throw InvalidArgument("retrieve_signature: no target trajectories");
  return vote(Strategy::Signature, library, signatures(all), owner, signatures(target));
}

RetrievalResult retrieve_behavior(const std::vector<Source>& library, const std::vector<core::Trajectory>& target,
                                  const BehaviorVae& vae) {
  check_library(library, "retrieve_behavior");
  std::vector<const core::Trajectory*> all;
  std::vector<std::size_t> owner;
  for (std::size_t i = 0; i < library.size(); ++i) {
    for (const auto& t : library[i].data->disassembly) {
      all.push_back(&t);
      owner.insert(owner.end(), t.size(), i);
    }
  }
  const Eigen::MatrixXd points = vae.latent_means(vae.inputs(all));
  const Eigen::MatrixXd queries = vae.latent_means(vae.inputs(pointers(target)));
  return vote(Strategy::Behavior, library, points, owner, queries);
}

Eigen::VectorXd mean_dynamics_embedding(const features::TaskData& data, const features::FeatureEncoders& enc) {
  const int h = enc.config.segment_len;
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(enc.config.latent_dim);
  double n = 0.0;
  for (const auto& traj : data.disassembly) {
    if (traj.size() < static_cast<std::size_t>(h) + 1) continue;
    for (std::size_t start = 0; start + static_cast<std::size_t>(h) + 1 <= traj.size(); ++start) {
      sum += enc.encode_dynamics(features::segment_at(traj, h, start));
      n += 1.0;
    }
  }
  if (n == 0.0) throw InvalidArgument("mean_dynamics_embedding: task " + data.task.id + " has no long enough path");
  return sum / n;
}

RetrievalResult retrieve_forward(const std::vector<Source>& library, const features::TaskData& target,
                                 const features::FeatureEncoders& enc) {
  check_library(library, "retrieve_forward");
  const Eigen::VectorXd z = mean_dynamics_embedding(target, enc);
  return nearest_embedding(Strategy::Forward, library, z,
                           [&](const features::TaskData& d) { return mean_dynamics_embedding(d, enc); });
}

Eigen::VectorXd mean_geometry_embedding(const features::TaskData& data, const features::FeatureEncoders& enc) {
  if (data.clouds.empty()) throw InvalidArgument("mean_geometry_embedding: task " + data.task.id + " has no clouds");
  const Eigen::Index l = enc.config.latent_dim;
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(3 * l);
  for (const auto& triple : data.clouds) {
    for (Eigen::Index k = 0; k < 3; ++k) sum.segment(k * l, l) += enc.geometry.encode(triple[static_cast<std::size_t>(k)]);
  }
  return sum / static_cast<double>(data.clouds.size());
}

RetrievalResult retrieve_geometry(const std::vector<Source>& library, const features::TaskData& target,
                                  const features::FeatureEncoders& enc) {
  check_library(library, "retrieve_geometry");
  const Eigen::VectorXd z = mean_geometry_embedding(target, enc);
  return nearest_embedding(Strategy::Geometry, library, z,
                           [&](const features::TaskData& d) { return mean_geometry_embedding(d, enc); });
}

void SrsaConfig::validate() const {
  if (top_k < 1 || m < 1 || eval_episodes < 1) throw InvalidArgument("SrsaConfig: top_k, m and eval_episodes must be >= 1");
}

std::size_t pick_candidate(const std::vector<std::string>& ids, const std::vector<double>& predicted,
                           const std::vector<double>& measured) {
  if (ids.empty() || ids.size() != predicted.size() || ids.size() != measured.size()) {
    throw InvalidArgument("pick_candidate: need equally sized, non-empty lists");
  }
  std::size_t best = 0;
  for (std::size_t i = 1; i < ids.size(); ++i) {
    if (std::tie(measured[i], predicted[i]) > std::tie(measured[best], predicted[best]) ||
        (measured[i] == measured[best] && predicted[i] == predicted[best] && ids[i] < ids[best])) {
      best = i;
    }
  }
  return best;
}

RetrievalResult retrieve_srsa(const std::vector<Source>& library, const features::TaskData& target,
                              const predictor::Predictor& f, const features::FeatureEncoders& enc,
                              const SrsaConfig& cfg, std::uint64_t seed, const predictor::SuccessMap* source_success) {
  check_library(library, "retrieve_srsa");
  cfg.validate();
  std::vector<RankedSource> scores;
  const std::uint64_t predict_seed = derive_seed(seed, kSrsaPredictStream);
  for (const auto& s : library) {
    double succ = 0.0;
    if (f.use_source_success) {
      if (!source_success || !source_success->contains(s.id())) {
        throw InvalidArgument("retrieve_srsa: predictor needs the training success of " + s.id());
      }
      succ = source_success->at(s.id());
    }
    scores.push_back({s.id(), predictor::predict_transfer(f, *s.data, target, enc, cfg.m, predict_seed, succ)});
  }
  RetrievalResult r = finish(Strategy::Srsa, std::move(scores));

  std::map<std::string, const Source*> by_id;
  for (const auto& s : library) by_id[s.id()] = &s;
  const std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(cfg.top_k), r.ranked.size());
  std::vector<std::string> ids;
  std::vector<double> predicted, measured;
  const std::uint64_t eval_seed = derive_seed(seed, kSrsaEvalStream);
  for (std::size_t i = 0; i < k; ++i) {
    const auto& cand = r.ranked[i];
    const Source& src = *by_id.at(cand.id);
    if (!src.policy) throw IntegrityError("retrieve_srsa: missing policy for " + cand.id);
    ids.push_back(cand.id);
    predicted.push_back(cand.score);
    // One episode seed for all candidates: they face the same start states.
    measured.push_back(predictor::eval_zero_shot(*src.policy, target.task, cfg.eval_episodes, eval_seed));
    r.evaluated.push_back({cand.id, measured.back()});
  }
  r.chosen = ids[pick_candidate(ids, predicted, measured)];
  return r;
}

RetrievalResult retrieve_random(const std::vector<Source>& library, std::uint64_t seed) {
  check_library(library, "retrieve_random");
  Rng rng = make_rng(seed, 0xA4D0);
  std::vector<RankedSource> scores;
  for (const auto& s : library) scores.push_back({s.id(), uniform(rng, 0.0, 1.0)});
  return finish(Strategy::Random, std::move(scores));
}

RetrievalResult oracle_best_source(const std::vector<Source>& library, const env::TaskSpec& target, int episodes,
                                   std::uint64_t seed) {
  check_library(library, "oracle_best_source");
  std::vector<RankedSource> scores;
  for (const auto& s : library) {
    if (!s.policy) throw IntegrityError("oracle_best_source: missing policy for " + s.id());
    scores.push_back({s.id(), predictor::eval_zero_shot(*s.policy, target, episodes, seed)});
  }
  RetrievalResult r = finish(Strategy::Oracle, std::move(scores));
  r.evaluated = r.ranked;
  return r;
}

}  // namespace skillforge::retrieval
