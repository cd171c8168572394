#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "skillforge/features/encoders.hpp"
#include "skillforge/features/task_data.hpp"
#include "skillforge/predictor/transfer.hpp"
#include "skillforge/retrieval/behavior.hpp"
#include "skillforge/rl/policy.hpp"

namespace skillforge::retrieval {

enum class Strategy { Signature, Behavior, Forward, Geometry, Srsa, Random, Oracle };

std::string to_string(Strategy s);
/// Accepts the lower-case names printed by to_string.
Strategy strategy_from_string(const std::string& s);

/// One library skill as seen by retrieval. Policies are only needed by
/// strategies that run them (SRSA, oracle).
struct Source {
  const features::TaskData* data = nullptr;
  const rl::PolicyPair* policy = nullptr;

  const std::string& id() const { return data->task.id; }
};

struct RankedSource {
  std::string id;
  double score = 0.0;

  friend bool operator==(const RankedSource&, const RankedSource&) = default;
};

struct RetrievalResult {
  Strategy strategy = Strategy::Geometry;
  std::vector<RankedSource> ranked;     // best first, covers the whole library
  std::string chosen;
  std::vector<RankedSource> evaluated;  // measured zero-shot success of the candidates that were run

  friend bool operator==(const RetrievalResult&, const RetrievalResult&) = default;
};

nlohmann::json to_json(const RetrievalResult& r);
RetrievalResult retrieval_from_json(const nlohmann::json& j);

/// Sorts by score descending; equal scores fall back to the smaller id.
std::vector<RankedSource> rank_scores(std::vector<RankedSource> scores);

/// Each target trajectory votes for the source owning the nearest signature.
RetrievalResult retrieve_signature(const std::vector<Source>& library, const std::vector<core::Trajectory>& target);

/// Same vote, over nearest posterior means of (state, action) pairs.
RetrievalResult retrieve_behavior(const std::vector<Source>& library, const std::vector<core::Trajectory>& target,
                                  const BehaviorVae& vae);

/// Mean dynamics latent over every window of every disassembly path.
Eigen::VectorXd mean_dynamics_embedding(const features::TaskData& data, const features::FeatureEncoders& enc);
RetrievalResult retrieve_forward(const std::vector<Source>& library, const features::TaskData& target,
                                 const features::FeatureEncoders& enc);

/// Mean over cloud samples of (E_G(plug), E_G(socket), E_G(assembled)).
Eigen::VectorXd mean_geometry_embedding(const features::TaskData& data, const features::FeatureEncoders& enc);
RetrievalResult retrieve_geometry(const std::vector<Source>& library, const features::TaskData& target,
                                  const features::FeatureEncoders& enc);

struct SrsaConfig {
  int top_k = 5;
  int m = 8;
  int eval_episodes = 100;

  void validate() const;
};

/// Ranks every source by predicted transfer, runs the top k zero-shot on the
/// target and keeps the best measured one. Ties go to the higher prediction,
/// then the smaller id.
RetrievalResult retrieve_srsa(const std::vector<Source>& library, const features::TaskData& target,
                              const predictor::Predictor& f, const features::FeatureEncoders& enc,
                              const SrsaConfig& cfg, std::uint64_t seed,
                              const predictor::SuccessMap* source_success = nullptr);

/// Picks among already measured candidates (the last step of retrieve_srsa).
/// `predicted` and `measured` are parallel to `ids`.
std::size_t pick_candidate(const std::vector<std::string>& ids, const std::vector<double>& predicted,
                           const std::vector<double>& measured);

/// Uniformly random source, for baselines.
RetrievalResult retrieve_random(const std::vector<Source>& library, std::uint64_t seed);

/// Exhaustive zero-shot evaluation of every source on the target.
RetrievalResult oracle_best_source(const std::vector<Source>& library, const env::TaskSpec& target, int episodes,
                                   std::uint64_t seed);

}  // namespace skillforge::retrieval
