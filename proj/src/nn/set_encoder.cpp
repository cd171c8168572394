#include "skillforge/nn/set_encoder.hpp"

#include "skillforge/common/error.hpp"
#include "skillforge/common/rng.hpp"

namespace skillforge::nn {

SetEncoder SetEncoder::make(int point_dim, const std::vector<int>& point_hidden, int pooled_dim,
                            const std::vector<int>& head_hidden, int out_dim) {
  SetEncoder e;
  e.point_mlp = DenseNet::mlp(point_dim, point_hidden, pooled_dim, Activation::Relu, Activation::Relu);
  e.head = DenseNet::mlp(pooled_dim, head_hidden, out_dim, Activation::Relu);
  return e;
}

Eigen::VectorXd SetEncoder::flat_params() const {
  Eigen::VectorXd flat(param_count());
  flat << point_mlp.params, head.params;
  return flat;
}

void SetEncoder::set_flat_params(const Eigen::VectorXd& flat) {
  if (flat.size() != param_count()) throw InvalidArgument("SetEncoder: parameter count mismatch");
  point_mlp.params = flat.head(point_mlp.param_count());
  head.params = flat.tail(head.param_count());
}

Eigen::VectorXd set_encode(const SetEncoder& enc, const Eigen::MatrixXd& points) {
  return set_encode_batch(enc, {points}).col(0);
}

Eigen::MatrixXd set_encode_batch(const SetEncoder& enc, const std::vector<Eigen::MatrixXd>& sets,
                                 SetEncoderCache* cache) {
  if (sets.empty()) throw InvalidArgument("set_encode: empty batch");
  std::vector<Eigen::Index> offsets{0};
  for (const auto& s : sets) {
    if (s.cols() < 1) throw InvalidArgument("set_encode: empty point set");
    if (s.rows() != enc.point_mlp.input_dim()) throw InvalidArgument("set_encode: point dimension mismatch");
    offsets.push_back(offsets.back() + s.cols());
  }
  Eigen::MatrixXd all(enc.point_mlp.input_dim(), offsets.back());
  for (std::size_t b = 0; b < sets.size(); ++b) all.middleCols(offsets[b], sets[b].cols()) = sets[b];

  ForwardCache point_cache;
  const Eigen::MatrixXd feats = forward(enc.point_mlp, all, cache ? &point_cache : nullptr);
  const auto batch = static_cast<Eigen::Index>(sets.size());
  Eigen::MatrixXd pooled(feats.rows(), batch);
  Eigen::MatrixXi argmax(feats.rows(), batch);
  // Column sweep keeps memory access contiguous; ties keep the first point.
  for (Eigen::Index b = 0; b < batch; ++b) {
    const Eigen::Index begin = offsets[static_cast<std::size_t>(b)];
    const Eigen::Index end = offsets[static_cast<std::size_t>(b) + 1];
    pooled.col(b) = feats.col(begin);
    argmax.col(b).setConstant(static_cast<int>(begin));
    for (Eigen::Index j = begin + 1; j < end; ++j) {
      for (Eigen::Index c = 0; c < feats.rows(); ++c) {
        if (feats(c, j) > pooled(c, b)) {
          pooled(c, b) = feats(c, j);
          argmax(c, b) = static_cast<int>(j);
        }
      }
    }
  }
  if (!cache) return forward(enc.head, pooled);
  cache->point = std::move(point_cache);
  cache->cloud_offsets = std::move(offsets);
  cache->argmax = std::move(argmax);
  return forward(enc.head, pooled, &cache->head);
}

void set_encode_backward(const SetEncoder& enc, const SetEncoderCache& cache,
                         const Eigen::MatrixXd& upstream, Eigen::Ref<Eigen::VectorXd> param_grad) {
  if (param_grad.size() != enc.param_count()) throw InvalidArgument("set_encode_backward: gradient not sized");
  const Eigen::Index n_point = enc.point_mlp.param_count();
  Eigen::MatrixXd pooled_grad;
  backward(enc.head, cache.head, upstream, param_grad.tail(enc.head.param_count()), &pooled_grad);
  const auto& feats = cache.point.acts.back();
  Eigen::MatrixXd feat_grad = Eigen::MatrixXd::Zero(feats.rows(), feats.cols());
  for (Eigen::Index b = 0; b < pooled_grad.cols(); ++b) {
    for (Eigen::Index c = 0; c < pooled_grad.rows(); ++c) feat_grad(c, cache.argmax(c, b)) += pooled_grad(c, b);
  }
  backward(enc.point_mlp, cache.point, feat_grad, param_grad.head(n_point));
}

Eigen::VectorXd init_params(const SetEncoder& enc, std::uint64_t seed) {
  Eigen::VectorXd flat(enc.param_count());
  flat << init_params(enc.point_mlp, derive_seed(seed, 1)), init_params(enc.head, derive_seed(seed, 2));
  return flat;
}

}  // namespace skillforge::nn
