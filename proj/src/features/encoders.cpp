#include "skillforge/features/encoders.hpp"

#include <cmath>
#include <fstream>

#include <json.hpp>

#include "skillforge/common/error.hpp"
#include "skillforge/features/chamfer.hpp"
#include "skillforge/nn/adam.hpp"
#include "skillforge/nn/checkpoint.hpp"

namespace skillforge::features {
namespace {

constexpr std::uint64_t kGeomInit = 0xFE01, kGeomSample = 0xFE02;
constexpr std::uint64_t kDynInit = 0xFE11, kDynSample = 0xFE12;
constexpr std::uint64_t kActInit = 0xFE21, kActSample = 0xFE22;

using nn::Activation;

nn::SetEncoder make_geom_encoder(const FeatureConfig& cfg) {
  return nn::SetEncoder::make(2, cfg.point_hidden, cfg.pooled_dim, cfg.geom_head_hidden, cfg.latent_dim);
}

nn::DenseNet make_geom_decoder(const FeatureConfig& cfg) {
  return nn::DenseNet::mlp(cfg.latent_dim, cfg.geom_decoder_hidden, 2 * cfg.n_points, Activation::Relu);
}

nn::DenseNet make_seq_encoder(const FeatureConfig& cfg, int state_dim, int action_dim) {
  return nn::DenseNet::mlp(cfg.segment_len * (state_dim + action_dim), cfg.seq_encoder_hidden, cfg.latent_dim,
                           Activation::Relu);
}

nn::DenseNet make_dyn_decoder(const FeatureConfig& cfg, int state_dim, int action_dim) {
  return nn::DenseNet::mlp(cfg.latent_dim + state_dim + action_dim, cfg.seq_decoder_hidden, state_dim,
                           Activation::Relu);
}

nn::DenseNet make_act_decoder(const FeatureConfig& cfg, int action_dim) {
  return nn::DenseNet::mlp(cfg.latent_dim, cfg.seq_decoder_hidden, cfg.segment_len * action_dim, Activation::Relu);
}

void check_finite(double loss, const char* what) {
  if (!std::isfinite(loss)) throw TrainingError(std::string(what) + ": non-finite loss");
}

Segment draw_segment(const std::vector<const core::Trajectory*>& trajs, int h, Rng& rng) {
  return sample_segment(*trajs[uniform_index(rng, trajs.size())], h, rng);
}

struct SeqBatch {
  Eigen::MatrixXd context;  // encoder input
  Eigen::MatrixXd query;    // normalized (state, action) of the query step
  Eigen::MatrixXd next;     // normalized next state
  Eigen::MatrixXd actions;  // normalized context actions, flattened
};

SeqBatch make_batch(const std::vector<Segment>& segs, const Normalizer& norm) {
  const auto b = static_cast<Eigen::Index>(segs.size());
  const Eigen::Index sd = norm.state_mean.size(), ad = norm.action_mean.size();
  const Eigen::Index h = segs.front().states.cols();
  SeqBatch out{Eigen::MatrixXd((sd + ad) * h, b), Eigen::MatrixXd(sd + ad, b), Eigen::MatrixXd(sd, b),
               Eigen::MatrixXd(ad * h, b)};
  for (Eigen::Index i = 0; i < b; ++i) {
    const auto& s = segs[static_cast<std::size_t>(i)];
    out.context.col(i) = norm.context(s);
    out.query.col(i) << norm.state(s.query_state), norm.action(s.query_action);
    out.next.col(i) = norm.state(s.next_state);
    for (Eigen::Index k = 0; k < h; ++k) out.actions.col(i).segment(k * ad, ad) = norm.action(s.actions.col(k));
  }
  return out;
}

void require_trajs(const std::vector<const core::Trajectory*>& trajs, int h, const char* who) {
  if (trajs.empty()) throw InvalidArgument(std::string(who) + ": no trajectories");
  for (const auto* t : trajs) {
    if (t->size() < static_cast<std::size_t>(h) + 1) {
      throw InvalidArgument(std::string(who) + ": trajectory shorter than segment_len + 1");
    }
  }
}

nlohmann::json vec_json(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Eigen::VectorXd json_vec(const nlohmann::json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

void assign(Eigen::VectorXd& dst, const Eigen::VectorXd& src, const std::string& name) {
  if (dst.size() != src.size()) throw FormatError("encoder checkpoint entry " + name + " has the wrong size");
  dst = src;
}

}  // namespace

void FeatureConfig::validate() const {
  if (segment_len < 1 || latent_dim < 1 || n_points < 3 || pooled_dim < 1) {
    throw InvalidArgument("FeatureConfig: dimensions out of range");
  }
  if (geom_steps < 0 || dyn_steps < 0 || act_steps < 0 || geom_batch < 1 || seq_batch < 1) {
    throw InvalidArgument("FeatureConfig: step counts and batch sizes out of range");
  }
  if (!(lr > 0.0)) throw InvalidArgument("FeatureConfig: lr must be > 0");
}

Eigen::VectorXd GeometryModel::encode(const env::PointCloud& cloud) const {
  return nn::set_encode(encoder, cloud);
}

Eigen::MatrixXd GeometryModel::decode(const Eigen::VectorXd& latent) const {
  const Eigen::VectorXd flat = nn::forward(decoder, latent);
  return Eigen::Map<const Eigen::MatrixXd>(flat.data(), 2, flat.size() / 2);
}

Trained<GeometryModel> train_geometry_ae(const std::vector<env::PointCloud>& clouds, const FeatureConfig& cfg,
                                         std::uint64_t seed, bool allow_single) {
  cfg.validate();
  if (clouds.empty() || (clouds.size() < 2 && !allow_single)) {
    throw InvalidArgument("train_geometry_ae: needs at least 2 clouds");
  }
  Trained<GeometryModel> out;
  auto& m = out.model;
  m.encoder = make_geom_encoder(cfg);
  m.encoder.set_flat_params(nn::init_params(m.encoder, derive_seed(seed, kGeomInit)));
  m.decoder = make_geom_decoder(cfg);
  m.decoder.params = nn::init_params(m.decoder, derive_seed(seed, kGeomInit + 1));
  auto enc_opt = nn::AdamState::make(m.encoder.param_count(), cfg.lr);
  auto dec_opt = nn::AdamState::make(m.decoder.param_count(), cfg.lr);
  Rng rng = make_rng(seed, kGeomSample);

  const auto b = static_cast<Eigen::Index>(cfg.geom_batch);
  for (int step = 0; step < cfg.geom_steps; ++step) {
    std::vector<Eigen::MatrixXd> batch;
    batch.reserve(static_cast<std::size_t>(b));
    for (Eigen::Index i = 0; i < b; ++i) batch.push_back(clouds[uniform_index(rng, clouds.size())]);
    nn::SetEncoderCache enc_cache;
    const Eigen::MatrixXd z = nn::set_encode_batch(m.encoder, batch, &enc_cache);
    nn::ForwardCache dec_cache;
    const Eigen::MatrixXd recon = nn::forward(m.decoder, z, &dec_cache);
    Eigen::MatrixXd upstream(recon.rows(), b);
    double loss = 0.0;
    for (Eigen::Index i = 0; i < b; ++i) {
      const Eigen::Map<const Eigen::MatrixXd> q(recon.col(i).data(), 2, recon.rows() / 2);
      Eigen::MatrixXd g;
      loss += chamfer(batch[static_cast<std::size_t>(i)], q, &g) / static_cast<double>(b);
      upstream.col(i) = Eigen::Map<const Eigen::VectorXd>(g.data(), g.size()) / static_cast<double>(b);
    }
    check_finite(loss, "train_geometry_ae");
    out.log.losses.push_back(loss);
    Eigen::VectorXd g_dec = Eigen::VectorXd::Zero(m.decoder.param_count());
    Eigen::MatrixXd dz;
    nn::backward(m.decoder, dec_cache, upstream, g_dec, &dz);
    Eigen::VectorXd g_enc = Eigen::VectorXd::Zero(m.encoder.param_count());
    nn::set_encode_backward(m.encoder, enc_cache, dz, g_enc);
    Eigen::VectorXd enc_params = m.encoder.flat_params();
    nn::adam_step(enc_opt, enc_params, g_enc);
    m.encoder.set_flat_params(enc_params);
    nn::adam_step(dec_opt, m.decoder.params, g_dec);
  }
  return out;
}

double geometry_loss(const GeometryModel& m, const std::vector<env::PointCloud>& clouds) {
  if (clouds.empty()) throw InvalidArgument("geometry_loss: no clouds");
  double total = 0.0;
  for (const auto& c : clouds) total += chamfer(c, m.decode(m.encode(c)));
  return total / static_cast<double>(clouds.size());
}

Trained<DynamicsModel> train_dynamics(const std::vector<const core::Trajectory*>& trajs, const Normalizer& norm,
                                      const FeatureConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  require_trajs(trajs, cfg.segment_len, "train_dynamics");
  const auto sd = static_cast<int>(norm.state_mean.size()), ad = static_cast<int>(norm.action_mean.size());
  Trained<DynamicsModel> out;
  auto& m = out.model;
  m.encoder = make_seq_encoder(cfg, sd, ad);
  m.encoder.params = nn::init_params(m.encoder, derive_seed(seed, kDynInit));
  m.decoder = make_dyn_decoder(cfg, sd, ad);
  m.decoder.params = nn::init_params(m.decoder, derive_seed(seed, kDynInit + 1));
  auto enc_opt = nn::AdamState::make(m.encoder.param_count(), cfg.lr);
  auto dec_opt = nn::AdamState::make(m.decoder.param_count(), cfg.lr);
  Rng rng = make_rng(seed, kDynSample);
  const Eigen::Index latent = cfg.latent_dim;

  for (int step = 0; step < cfg.dyn_steps; ++step) {
    std::vector<Segment> segs;
    for (int i = 0; i < cfg.seq_batch; ++i) segs.push_back(draw_segment(trajs, cfg.segment_len, rng));
    const auto batch = make_batch(segs, norm);
    nn::ForwardCache enc_cache, dec_cache;
    const Eigen::MatrixXd z = nn::forward(m.encoder, batch.context, &enc_cache);
    Eigen::MatrixXd dec_in(latent + batch.query.rows(), z.cols());
    dec_in << z, batch.query;
    const Eigen::MatrixXd pred = nn::forward(m.decoder, dec_in, &dec_cache);
    const Eigen::MatrixXd err = pred - batch.next;
    const double scale = 1.0 / static_cast<double>(err.size());
    const double loss = err.squaredNorm() * scale;
    check_finite(loss, "train_dynamics");
    out.log.losses.push_back(loss);
    Eigen::VectorXd g_dec = Eigen::VectorXd::Zero(m.decoder.param_count());
    Eigen::MatrixXd d_in;
    nn::backward(m.decoder, dec_cache, 2.0 * scale * err, g_dec, &d_in);
    Eigen::VectorXd g_enc = Eigen::VectorXd::Zero(m.encoder.param_count());
    nn::backward(m.encoder, enc_cache, d_in.topRows(latent), g_enc);
    nn::adam_step(enc_opt, m.encoder.params, g_enc);
    nn::adam_step(dec_opt, m.decoder.params, g_dec);
  }
  return out;
}

double dynamics_mse(const DynamicsModel& m, const Normalizer& norm, const std::vector<Segment>& segs) {
  if (segs.empty()) throw InvalidArgument("dynamics_mse: no segments");
  const auto batch = make_batch(segs, norm);
  const Eigen::MatrixXd z = nn::forward(m.encoder, batch.context);
  Eigen::MatrixXd dec_in(z.rows() + batch.query.rows(), z.cols());
  dec_in << z, batch.query;
  const Eigen::MatrixXd err = nn::forward(m.decoder, dec_in) - batch.next;
  return err.squaredNorm() / static_cast<double>(err.size());
}

Trained<ActionModel> train_action_ae(const std::vector<const core::Trajectory*>& trajs, const Normalizer& norm,
                                     const FeatureConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  require_trajs(trajs, cfg.segment_len, "train_action_ae");
  const auto sd = static_cast<int>(norm.state_mean.size()), ad = static_cast<int>(norm.action_mean.size());
  Trained<ActionModel> out;
  auto& m = out.model;
  m.encoder = make_seq_encoder(cfg, sd, ad);
  m.encoder.params = nn::init_params(m.encoder, derive_seed(seed, kActInit));
  m.decoder = make_act_decoder(cfg, ad);
  m.decoder.params = nn::init_params(m.decoder, derive_seed(seed, kActInit + 1));
  auto enc_opt = nn::AdamState::make(m.encoder.param_count(), cfg.lr);
  auto dec_opt = nn::AdamState::make(m.decoder.param_count(), cfg.lr);
  Rng rng = make_rng(seed, kActSample);

  for (int step = 0; step < cfg.act_steps; ++step) {
    std::vector<Segment> segs;
    for (int i = 0; i < cfg.seq_batch; ++i) segs.push_back(draw_segment(trajs, cfg.segment_len, rng));
    const auto batch = make_batch(segs, norm);
    nn::ForwardCache enc_cache, dec_cache;
    const Eigen::MatrixXd z = nn::forward(m.encoder, batch.context, &enc_cache);
    const Eigen::MatrixXd err = nn::forward(m.decoder, z, &dec_cache) - batch.actions;
    const double scale = 1.0 / static_cast<double>(err.size());
    const double loss = err.squaredNorm() * scale;
    check_finite(loss, "train_action_ae");
    out.log.losses.push_back(loss);
    Eigen::VectorXd g_dec = Eigen::VectorXd::Zero(m.decoder.param_count());
    Eigen::MatrixXd dz;
    nn::backward(m.decoder, dec_cache, 2.0 * scale * err, g_dec, &dz);
    Eigen::VectorXd g_enc = Eigen::VectorXd::Zero(m.encoder.param_count());
    nn::backward(m.encoder, enc_cache, dz, g_enc);
    nn::adam_step(enc_opt, m.encoder.params, g_enc);
    nn::adam_step(dec_opt, m.decoder.params, g_dec);
  }
  return out;
}

double action_mse(const ActionModel& m, const Normalizer& norm, const std::vector<Segment>& segs) {
  if (segs.empty()) throw InvalidArgument("action_mse: no segments");
  const auto batch = make_batch(segs, norm);
  const Eigen::MatrixXd err = nn::forward(m.decoder, nn::forward(m.encoder, batch.context)) - batch.actions;
  return err.squaredNorm() / static_cast<double>(err.size());
}

Eigen::VectorXd FeatureEncoders::encode_dynamics(const Segment& seg) const {
  return nn::forward(dynamics.encoder, norm.context(seg));
}

Eigen::VectorXd FeatureEncoders::encode_action(const Segment& seg) const {
  return nn::forward(action.encoder, norm.context(seg));
}

void FeatureEncoders::save(const std::filesystem::path& stem) const {
  nn::save_checkpoint({{"E_G", geometry.encoder.flat_params()},
                       {"D_G", geometry.decoder.params},
                       {"E_D", dynamics.encoder.params},
                       {"D_D", dynamics.decoder.params},
                       {"E_A", action.encoder.params},
                       {"D_A", action.decoder.params}},
                      stem.string() + ".ckpt");
  nlohmann::json j;
  j["schema_version"] = 1;
  j["segment_len"] = config.segment_len;
  j["latent_dim"] = config.latent_dim;
  j["n_points"] = config.n_points;
  j["point_hidden"] = config.point_hidden;
  j["pooled_dim"] = config.pooled_dim;
  j["geom_head_hidden"] = config.geom_head_hidden;
  j["geom_decoder_hidden"] = config.geom_decoder_hidden;
  j["seq_encoder_hidden"] = config.seq_encoder_hidden;
  j["seq_decoder_hidden"] = config.seq_decoder_hidden;
  j["state_mean"] = vec_json(norm.state_mean);
  j["state_std"] = vec_json(norm.state_std);
  j["action_mean"] = vec_json(norm.action_mean);
  j["action_std"] = vec_json(norm.action_std);
  std::ofstream out(stem.string() + ".json");
  if (!out) throw InvalidArgument("FeatureEncoders::save: cannot write " + stem.string() + ".json");
  out << j.dump(2) << '\n';
}

FeatureEncoders FeatureEncoders::load(const std::filesystem::path& stem) {
  const std::string json_path = stem.string() + ".json";
  std::ifstream in(json_path);
  if (!in) throw FormatError("FeatureEncoders::load: cannot open " + json_path);
  FeatureEncoders e;
  try {
    nlohmann::json j;
    in >> j;
    if (j.at("schema_version").get<int>() != 1) throw VersionError("FeatureEncoders::load: unknown schema_version");
    auto& c = e.config;
    c.segment_len = j.at("segment_len").get<int>();
    c.latent_dim = j.at("latent_dim").get<int>();
    c.n_points = j.at("n_points").get<int>();
    c.point_hidden = j.at("point_hidden").get<std::vector<int>>();
    c.pooled_dim = j.at("pooled_dim").get<int>();
    c.geom_head_hidden = j.at("geom_head_hidden").get<std::vector<int>>();
    c.geom_decoder_hidden = j.at("geom_decoder_hidden").get<std::vector<int>>();
    c.seq_encoder_hidden = j.at("seq_encoder_hidden").get<std::vector<int>>();
    c.seq_decoder_hidden = j.at("seq_decoder_hidden").get<std::vector<int>>();
    e.norm.state_mean = json_vec(j.at("state_mean"));
    e.norm.state_std = json_vec(j.at("state_std"));
    e.norm.action_mean = json_vec(j.at("action_mean"));
    e.norm.action_std = json_vec(j.at("action_std"));
  } catch (const nlohmann::json::exception& ex) {
    throw FormatError("FeatureEncoders::load: " + json_path + ": " + ex.what());
  }
  const int sd = static_cast<int>(e.norm.state_mean.size()), ad = static_cast<int>(e.norm.action_mean.size());
  e.geometry.encoder = make_geom_encoder(e.config);
  e.geometry.decoder = make_geom_decoder(e.config);
  e.dynamics.encoder = make_seq_encoder(e.config, sd, ad);
  e.dynamics.decoder = make_dyn_decoder(e.config, sd, ad);
  e.action.encoder = make_seq_encoder(e.config, sd, ad);
  e.action.decoder = make_act_decoder(e.config, ad);
  const auto ckpt = nn::load_checkpoint(stem.string() + ".ckpt");
  Eigen::VectorXd geom_flat = Eigen::VectorXd::Zero(e.geometry.encoder.param_count());
  assign(geom_flat, nn::find_entry(ckpt, "E_G"), "E_G");
  e.geometry.encoder.set_flat_params(geom_flat);
  e.geometry.decoder.params.resize(e.geometry.decoder.param_count());
  assign(e.geometry.decoder.params, nn::find_entry(ckpt, "D_G"), "D_G");
  e.dynamics.encoder.params.resize(e.dynamics.encoder.param_count());
  assign(e.dynamics.encoder.params, nn::find_entry(ckpt, "E_D"), "E_D");
  e.dynamics.decoder.params.resize(e.dynamics.decoder.param_count());
  assign(e.dynamics.decoder.params, nn::find_entry(ckpt, "D_D"), "D_D");
  e.action.encoder.params.resize(e.action.encoder.param_count());
  assign(e.action.encoder.params, nn::find_entry(ckpt, "E_A"), "E_A");
  e.action.decoder.params.resize(e.action.decoder.param_count());
  assign(e.action.decoder.params, nn::find_entry(ckpt, "D_A"), "D_A");
  return e;
}

bool operator==(const FeatureEncoders& a, const FeatureEncoders& b) {
  const auto same = [](const Eigen::VectorXd& x, const Eigen::VectorXd& y) { return x.size() == y.size() && x == y; };
  return a.norm == b.norm && a.config.segment_len == b.config.segment_len &&
         same(a.geometry.encoder.flat_params(), b.geometry.encoder.flat_params()) &&
         same(a.geometry.decoder.params, b.geometry.decoder.params) &&
         same(a.dynamics.encoder.params, b.dynamics.encoder.params) &&
         same(a.dynamics.decoder.params, b.dynamics.decoder.params) &&
         same(a.action.encoder.params, b.action.encoder.params) && same(a.action.decoder.params, b.action.decoder.params);
}

FeatureEncoders train_feature_encoders(const std::vector<const TaskData*>& tasks, const FeatureConfig& cfg,
                                       std::uint64_t seed) {
  cfg.validate();
  if (tasks.empty()) throw InvalidArgument("train_feature_encoders: no tasks");
  std::vector<env::PointCloud> clouds;
  std::vector<const core::Trajectory*> trajs;
  for (const auto* t : tasks) {
    for (const auto& triple : t->clouds)
      for (const auto& c : triple) clouds.push_back(c);
    for (const auto& tr : t->disassembly) trajs.push_back(&tr);
  }
  if (clouds.empty() || trajs.empty()) throw InvalidArgument("train_feature_encoders: tasks lack clouds or paths");
  FeatureEncoders e;
  e.config = cfg;
  e.norm = Normalizer::fit(trajs);
  e.geometry = train_geometry_ae(clouds, cfg, derive_seed(seed, 1), true).model;
  e.dynamics = train_dynamics(trajs, e.norm, cfg, derive_seed(seed, 2)).model;
  e.action = train_action_ae(trajs, e.norm, cfg, derive_seed(seed, 3)).model;
  return e;
}

Eigen::VectorXd embed_task(const TaskData& data, const FeatureEncoders& enc, Rng& rng) {
  if (data.clouds.empty() || data.disassembly.empty()) {
    throw InvalidArgument("embed_task: task " + data.task.id + " has no clouds or disassembly paths");
  }
  const auto& triple = data.clouds[uniform_index(rng, data.clouds.size())];
  const auto& traj = data.disassembly[uniform_index(rng, data.disassembly.size())];
  const Segment seg = sample_segment(traj, enc.config.segment_len, rng);
  const Eigen::Index l = enc.config.latent_dim;
  Eigen::VectorXd z(5 * l);
  for (Eigen::Index k = 0; k < 3; ++k) z.segment(k * l, l) = enc.geometry.encode(triple[static_cast<std::size_t>(k)]);
  z.segment(3 * l, l) = enc.encode_dynamics(seg);
  z.segment(4 * l, l) = enc.encode_action(seg);
  return z;
}

}  // namespace skillforge::features
