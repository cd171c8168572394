#include "skillforge/nn/dense_net.hpp"

#include <cmath>

#include "skillforge/common/error.hpp"
#include "skillforge/common/rng.hpp"

namespace skillforge::nn {
namespace {

void activate(Activation a, Eigen::MatrixXd& z) {
  switch (a) {
    case Activation::Identity: break;
    case Activation::Tanh: z = z.array().tanh(); break;
    case Activation::Relu: z = z.cwiseMax(0.0); break;
  }
}

// Multiplies `grad` in place by the activation derivative, given its output.
void activation_grad(Activation a, const Eigen::MatrixXd& out, Eigen::MatrixXd& grad) {
  switch (a) {
    case Activation::Identity: break;
    case Activation::Tanh: grad.array() *= 1.0 - out.array().square(); break;
    case Activation::Relu: grad = (out.array() > 0.0).select(grad, 0.0); break;
  }
}

}  // namespace

std::string to_string(Activation a) {
  switch (a) {
    case Activation::Identity: return "identity";
    case Activation::Tanh: return "tanh";
    case Activation::Relu: return "relu";
  }
  return "identity";
}

DenseNet::DenseNet(std::vector<int> sizes, std::vector<Activation> acts)
    : layer_sizes(std::move(sizes)), activations(std::move(acts)) {
  if (layer_sizes.size() < 2 || activations.size() + 1 != layer_sizes.size()) {
    throw InvalidArgument("DenseNet: need one activation per layer");
  }
  for (int s : layer_sizes) {
    if (s < 1) throw InvalidArgument("DenseNet: layer sizes must be positive");
  }
  params = Eigen::VectorXd::Zero(param_count());
}

DenseNet DenseNet::mlp(int in, const std::vector<int>& hidden, int out, Activation hidden_act,
                       Activation out_act) {
  std::vector<int> sizes{in};
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  sizes.push_back(out);
  std::vector<Activation> acts(hidden.size(), hidden_act);
  acts.push_back(out_act);
  return DenseNet(std::move(sizes), std::move(acts));
}

Eigen::Index DenseNet::param_count() const { return offset(num_layers()); }

Eigen::Index DenseNet::offset(int layer) const {
  Eigen::Index off = 0;
  for (int l = 0; l < layer; ++l) {
    off += static_cast<Eigen::Index>(layer_sizes[l + 1]) * (layer_sizes[l] + 1);
  }
  return off;
}

Eigen::Map<const Eigen::MatrixXd> DenseNet::weight(int l) const {
  return {params.data() + offset(l), layer_sizes[l + 1], layer_sizes[l]};
}
Eigen::Map<Eigen::MatrixXd> DenseNet::weight(int l) {
  return {params.data() + offset(l), layer_sizes[l + 1], layer_sizes[l]};
}
Eigen::Map<const Eigen::VectorXd> DenseNet::bias(int l) const {
  return {params.data() + offset(l) + static_cast<Eigen::Index>(layer_sizes[l + 1]) * layer_sizes[l],
          layer_sizes[l + 1]};
}
Eigen::Map<Eigen::VectorXd> DenseNet::bias(int l) {
  return {params.data() + offset(l) + static_cast<Eigen::Index>(layer_sizes[l + 1]) * layer_sizes[l],
          layer_sizes[l + 1]};
}

Eigen::MatrixXd forward(const DenseNet& net, const Eigen::MatrixXd& input, ForwardCache* cache) {
  if (input.rows() != net.input_dim()) {
    throw InvalidArgument("forward: input has " + std::to_string(input.rows()) + " rows, net expects " +
                          std::to_string(net.input_dim()));
  }
  if (net.params.size() != net.param_count()) throw InvalidArgument("forward: params not sized");
  if (cache) {
    cache->acts.resize(static_cast<std::size_t>(net.num_layers()) + 1);
    cache->acts[0] = input;
  }
  Eigen::MatrixXd a = input;
  for (int l = 0; l < net.num_layers(); ++l) {
    Eigen::MatrixXd z = net.weight(l) * a;
    z.colwise() += net.bias(l);
    activate(net.activations[l], z);
    a = std::move(z);
    if (cache) cache->acts[static_cast<std::size_t>(l) + 1] = a;
  }
  return a;
}

Eigen::VectorXd forward(const DenseNet& net, const Eigen::VectorXd& input) {
  return forward(net, Eigen::MatrixXd(input), nullptr).col(0);
}

void backward(const DenseNet& net, const ForwardCache& cache, const Eigen::MatrixXd& upstream,
              Eigen::Ref<Eigen::VectorXd> param_grad, Eigen::MatrixXd* input_grad) {
  const auto layers = static_cast<std::size_t>(net.num_layers());
  if (cache.acts.size() != layers + 1) throw InvalidArgument("backward: cache does not match net");
  if (param_grad.size() != net.param_count()) throw InvalidArgument("backward: gradient not sized");
  if (upstream.rows() != net.output_dim() || upstream.cols() != cache.acts.back().cols()) {
    throw InvalidArgument("backward: upstream shape mismatch");
  }
  Eigen::MatrixXd g = upstream;
  for (int l = net.num_layers() - 1; l >= 0; --l) {
    const auto& out = cache.acts[static_cast<std::size_t>(l) + 1];
    const auto& in = cache.acts[static_cast<std::size_t>(l)];
    activation_grad(net.activations[l], out, g);
    const Eigen::Index off = net.offset(l);
    const int n_out = net.layer_sizes[l + 1], n_in = net.layer_sizes[l];
    Eigen::Map<Eigen::MatrixXd> dw(param_grad.data() + off, n_out, n_in);
    Eigen::Map<Eigen::VectorXd> db(param_grad.data() + off + static_cast<Eigen::Index>(n_out) * n_in, n_out);
    dw.noalias() += g * in.transpose();
    db += g.rowwise().sum();
    if (l > 0 || input_grad) {
      Eigen::MatrixXd next = net.weight(l).transpose() * g;
      g = std::move(next);
    }
  }
  if (input_grad) *input_grad = std::move(g);
}

Gradients backward(const DenseNet& net, const Eigen::MatrixXd& input,
                   const Eigen::MatrixXd& upstream) {
  ForwardCache cache;
  forward(net, input, &cache);
  Gradients grads;
  grads.params = Eigen::VectorXd::Zero(net.param_count());
  backward(net, cache, upstream, grads.params, &grads.input);
  return grads;
}

Eigen::VectorXd init_params(const DenseNet& net, std::uint64_t seed) {
  Rng rng = make_rng(seed, 0x1A17);
  DenseNet out = net;
  out.params = Eigen::VectorXd::Zero(net.param_count());
  for (int l = 0; l < net.num_layers(); ++l) {
    const double bound = std::sqrt(6.0 / (net.layer_sizes[l] + net.layer_sizes[l + 1]));
    auto w = out.weight(l);
    for (Eigen::Index j = 0; j < w.cols(); ++j) {
      for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) = uniform(rng, -bound, bound);
    }
  }
  return out.params;
}

}  // namespace skillforge::nn
