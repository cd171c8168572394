#include "skillforge/retrieval/behavior.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "skillforge/common/error.hpp"
#include "skillforge/common/rng.hpp"
#include "skillforge/nn/adam.hpp"
#include "skillforge/nn/checkpoint.hpp"

namespace skillforge::retrieval {
namespace {

constexpr double kMinLogVar = -12.0, kMaxLogVar = 6.0;

Eigen::VectorXd to_vec(const core::Vec& v) { return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size())); }

std::vector<int> reversed(std::vector<int> v) {
  std::reverse(v.begin(), v.end());
  return v;
}

}  // namespace

void VaeConfig::validate() const {
  if (latent_dim < 1 || steps < 0 || batch_size < 1) throw InvalidArgument("VaeConfig: sizes out of range");
  if (!(kl_weight >= 0.0) || !(lr > 0.0)) throw InvalidArgument("VaeConfig: kl_weight >= 0 and lr > 0 required");
}

Eigen::MatrixXd BehaviorVae::inputs(const std::vector<const core::Trajectory*>& trajs) const {
  std::size_t n = 0;
  for (const auto* t : trajs) n += t->size();
  const Eigen::Index sd = norm.state_mean.size(), ad = norm.action_mean.size();
  Eigen::MatrixXd x(sd + ad, static_cast<Eigen::Index>(n));
  Eigen::Index c = 0;
  for (const auto* t : trajs) {
    for (const auto& tr : t->transitions) {
      x.col(c).head(sd) = norm.state(to_vec(tr.state));
      x.col(c).tail(ad) = norm.action(to_vec(tr.action));
      ++c;
    }
  }
  return x;
}

Eigen::MatrixXd BehaviorVae::latent_means(const Eigen::MatrixXd& x) const {
  return nn::forward(encoder, x).topRows(latent_dim());
}

Eigen::MatrixXd BehaviorVae::reconstruct(const Eigen::MatrixXd& x) const {
  return nn::forward(decoder, latent_means(x));
}

void BehaviorVae::save(const std::filesystem::path& stem) const {
  Eigen::VectorXd arch(encoder.layer_sizes.size());
  for (std::size_t i = 0; i < encoder.layer_sizes.size(); ++i) arch(static_cast<Eigen::Index>(i)) = encoder.layer_sizes[i];
  nn::save_checkpoint({{"arch", arch},
                       {"encoder", encoder.params},
                       {"decoder", decoder.params},
                       {"state_mean", norm.state_mean},
                       {"state_std", norm.state_std},
                       {"action_mean", norm.action_mean},
                       {"action_std", norm.action_std}},
                      stem.string() + ".ckpt");
}

BehaviorVae BehaviorVae::load(const std::filesystem::path& stem) {
  const auto path = stem.string() + ".ckpt";
  const auto ckpt = nn::load_checkpoint(path);
  const auto& arch = nn::find_entry(ckpt, "arch");
  if (arch.size() < 2) throw FormatError("behavior VAE " + path + ": bad arch entry");
  const int in = static_cast<int>(arch(0));
  const int out2 = static_cast<int>(arch(arch.size() - 1));
  std::vector<int> hidden;
  for (Eigen::Index i = 1; i + 1 < arch.size(); ++i) hidden.push_back(static_cast<int>(arch(i)));
  BehaviorVae v;
  v.encoder = nn::DenseNet::mlp(in, hidden, out2, nn::Activation::Relu);
  v.decoder = nn::DenseNet::mlp(out2 / 2, reversed(hidden), in, nn::Activation::Relu);
  v.encoder.params = nn::find_entry(ckpt, "encoder");
  v.decoder.params = nn::find_entry(ckpt, "decoder");
  if (v.encoder.params.size() != v.encoder.param_count() || v.decoder.params.size() != v.decoder.param_count()) {
    throw FormatError("behavior VAE " + path + ": parameter count does not match the architecture");
  }
  v.norm.state_mean = nn::find_entry(ckpt, "state_mean");
  v.norm.state_std = nn::find_entry(ckpt, "state_std");
  v.norm.action_mean = nn::find_entry(ckpt, "action_mean");
  v.norm.action_std = nn::find_entry(ckpt, "action_std");
  return v;
}

Eigen::RowVectorXd kl_to_standard_normal(const Eigen::MatrixXd& mean, const Eigen::MatrixXd& log_var) {
  return 0.5 * (mean.array().square() + log_var.array().exp() - 1.0 - log_var.array()).colwise().sum().matrix();
}

VaeLoss vae_loss(const BehaviorVae& vae, const Eigen::MatrixXd& x, const Eigen::MatrixXd& eps, double kl_weight,
                 Eigen::VectorXd* encoder_grad, Eigen::VectorXd* decoder_grad) {
  const Eigen::Index l = vae.latent_dim(), b = x.cols(), d = x.rows();
  if (eps.rows() != l || eps.cols() != b) throw InvalidArgument("vae_loss: noise shape mismatch");
  nn::ForwardCache enc_cache, dec_cache;
  const Eigen::MatrixXd h = nn::forward(vae.encoder, x, &enc_cache);
  const Eigen::MatrixXd mean = h.topRows(l);
  const Eigen::MatrixXd log_var = h.bottomRows(l).cwiseMax(kMinLogVar).cwiseMin(kMaxLogVar);
  const Eigen::MatrixXd sd = (0.5 * log_var.array()).exp();
  const Eigen::MatrixXd z = mean + sd.cwiseProduct(eps);
  const Eigen::MatrixXd err = nn::forward(vae.decoder, z, &dec_cache) - x;

  const double inv_b = 1.0 / static_cast<double>(b);
  VaeLoss out;
  out.reconstruction = err.squaredNorm() * inv_b / static_cast<double>(d);
  out.kl = kl_to_standard_normal(mean, log_var).sum() * inv_b;
  out.total = out.reconstruction + kl_weight * out.kl;
  if (!encoder_grad && !decoder_grad) return out;

  Eigen::VectorXd dec_grad = Eigen::VectorXd::Zero(vae.decoder.param_count());
  Eigen::MatrixXd dz;
  nn::backward(vae.decoder, dec_cache, (2.0 * inv_b / static_cast<double>(d)) * err, dec_grad, &dz);
  if (decoder_grad) *decoder_grad = dec_grad;
  if (encoder_grad) {
    Eigen::MatrixXd dh(2 * l, b);
    dh.topRows(l) = dz + (kl_weight * inv_b) * mean;
    Eigen::MatrixXd dlv = 0.5 * dz.cwiseProduct(eps).cwiseProduct(sd) +
                          (0.5 * kl_weight * inv_b) * (log_var.array().exp() - 1.0).matrix();
    const auto raw = h.bottomRows(l);
    for (Eigen::Index i = 0; i < dlv.size(); ++i) {
      if (raw(i % l, i / l) < kMinLogVar || raw(i % l, i / l) > kMaxLogVar) dlv(i % l, i / l) = 0.0;
    }
    dh.bottomRows(l) = dlv;
    encoder_grad->setZero(vae.encoder.param_count());
    nn::backward(vae.encoder, enc_cache, dh, *encoder_grad);
  }
  return out;
}

TrainedVae train_behavior_vae(const std::vector<const core::Trajectory*>& trajs, const VaeConfig& cfg,
                              std::uint64_t seed) {
  cfg.validate();
  TrainedVae out;
  auto& vae = out.vae;
  vae.norm = features::Normalizer::fit(trajs);  // throws when there are no pairs
  const Eigen::MatrixXd data = vae.inputs(trajs);
  const int in = static_cast<int>(data.rows());
  vae.encoder = nn::DenseNet::mlp(in, cfg.hidden, 2 * cfg.latent_dim, nn::Activation::Relu);
  vae.decoder = nn::DenseNet::mlp(cfg.latent_dim, reversed(cfg.hidden), in, nn::Activation::Relu);
  vae.encoder.params = nn::init_params(vae.encoder, derive_seed(seed, 1));
  vae.decoder.params = nn::init_params(vae.decoder, derive_seed(seed, 2));
  auto enc_opt = nn::AdamState::make(vae.encoder.param_count(), cfg.lr);
  auto dec_opt = nn::AdamState::make(vae.decoder.param_count(), cfg.lr);
  Rng rng = make_rng(seed, 3);
  const auto batch = std::min<Eigen::Index>(cfg.batch_size, data.cols());
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(batch));
  Eigen::VectorXd g_enc, g_dec;
  for (int step = 0; step < cfg.steps; ++step) {
    for (auto& i : idx) i = static_cast<Eigen::Index>(uniform_index(rng, static_cast<std::size_t>(data.cols())));
    Eigen::MatrixXd eps(cfg.latent_dim, batch);
    for (Eigen::Index i = 0; i < eps.size(); ++i) eps.data()[i] = gaussian(rng);
    const auto loss = vae_loss(vae, data(Eigen::all, idx), eps, cfg.kl_weight, &g_enc, &g_dec);
    if (!std::isfinite(loss.total)) throw TrainingError(fmt::format("train_behavior_vae: non-finite loss at step {}", step));
    nn::adam_step(enc_opt, vae.encoder.params, g_enc);
    nn::adam_step(dec_opt, vae.decoder.params, g_dec);
    out.losses.push_back(loss.total);
  }
  return out;
}

}  // namespace skillforge::retrieval
