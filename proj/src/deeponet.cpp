#include "cald/deeponet.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace cald {

namespace {

void apply_activation(Activation act, Eigen::MatrixXd& z) {
  if (act == Activation::relu) {
    z = z.cwiseMax(0.0);
  } else {
    z = z.array().tanh();
  }
}

// Derivative evaluated at the preactivation; relu' (0) = 0.
Eigen::MatrixXd activation_derivative(Activation act, const Eigen::MatrixXd& z) {
  if (act == Activation::relu) {
    return (z.array() > 0.0).cast<double>();
  }
  return 1.0 - z.array().tanh().square();
}

bool activates(const MlpParams& theta, int j) {
  return j + 1 < theta.depth() && theta.layers[j].activate;
}

}  // namespace

bool MlpParams::dims_chain() const {
  if (layers.empty()) return false;
  for (size_t j = 0; j + 1 < layers.size(); ++j) {
    if (layers[j + 1].w.cols() != layers[j].w.rows()) return false;
  }
  for (const auto& l : layers) {
    if (l.b.size() != l.w.rows()) return false;
  }
  return true;
}

MlpParams make_mlp(const std::vector<int>& widths, Activation activation, std::uint64_t seed) {
  if (widths.size() < 2) throw std::invalid_argument("network needs at least one layer");
  MlpParams theta;
  theta.activation = activation;
  std::mt19937_64 gen(seed);
  for (size_t j = 0; j + 1 < widths.size(); ++j) {
    const int fan_in = widths[j], fan_out = widths[j + 1];
    if (fan_in < 1 || fan_out < 1) throw std::invalid_argument("layer widths must be positive");
    const double lim = std::sqrt(6.0 / (fan_in + fan_out));
    std::uniform_real_distribution<double> uni(-lim, lim);
    Layer l;
    l.w.resize(fan_out, fan_in);
    for (int r = 0; r < fan_out; ++r) {
      for (int c = 0; c < fan_in; ++c) l.w(r, c) = uni(gen);
    }
    l.b = Eigen::VectorXd::Zero(fan_out);
    theta.layers.push_back(std::move(l));
  }
  return theta;
}

Eigen::MatrixXd mlp_forward_batch(const MlpParams& theta, const Eigen::MatrixXd& xs) {
  if (!theta.dims_chain()) throw std::invalid_argument("layer dimensions do not chain");
  if (xs.rows() != theta.input_width()) {
    throw std::invalid_argument("input width does not match the first layer");
  }
  Eigen::MatrixXd h = xs;
  for (int j = 0; j < theta.depth(); ++j) {
    h = (theta.layers[j].w * h).colwise() + theta.layers[j].b;
    if (activates(theta, j)) apply_activation(theta.activation, h);
  }
  return h;
}

Eigen::VectorXd mlp_forward(const MlpParams& theta, const Eigen::VectorXd& x) {
  return mlp_forward_batch(theta, x);
}

MlpGradient mlp_gradient(const MlpParams& theta, const Eigen::VectorXd& x,
                         const Eigen::VectorXd& cotangent) {
  if (!theta.dims_chain()) throw std::invalid_argument("layer dimensions do not chain");
  if (x.size() != theta.input_width() || cotangent.size() != theta.output_width()) {
    throw std::invalid_argument("gradient input/cotangent width mismatch");
  }
  const int L = theta.depth();
  std::vector<Eigen::VectorXd> inputs(L);   // input to each layer
  std::vector<Eigen::VectorXd> preact(L);
  Eigen::MatrixXd h = x;
  for (int j = 0; j < L; ++j) {
    inputs[j] = h;
    h = (theta.layers[j].w * h).colwise() + theta.layers[j].b;
    preact[j] = h;
    if (activates(theta, j)) apply_activation(theta.activation, h);
  }

  MlpGradient g;
  g.layers.resize(L);
  Eigen::VectorXd delta = cotangent;
  for (int j = L - 1; j >= 0; --j) {
    if (activates(theta, j)) {
      delta = delta.cwiseProduct(activation_derivative(theta.activation, preact[j]));
    }
    g.layers[j].w = delta * inputs[j].transpose();
    g.layers[j].b = delta;
    delta = theta.layers[j].w.transpose() * delta;
  }
  g.input_cotangent = delta;
  return g;
}

MlpParams build_clipping(int kappa, double M, double delta) {
  if (kappa < 1 || !(M > 0.0) || !(delta > 0.0)) {
    throw std::invalid_argument("clipping needs kappa >= 1, M > 0, delta > 0");
  }
  const double B = M + 2.0 * delta;
  const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(kappa, kappa);
  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(kappa);

  // relu(x + B) -> identity -> relu(2B - s) -> identity -> B - s: the exact
  // coordinate-wise clamp to [-B, B] in five affine layers.
  MlpParams theta;
  theta.activation = Activation::relu;
  theta.layers = {
      Layer{I, Eigen::VectorXd::Constant(kappa, B), true},
      Layer{I, zero, true},
      Layer{-I, Eigen::VectorXd::Constant(kappa, 2.0 * B), true},
      Layer{I, zero, true},
      Layer{-I, Eigen::VectorXd::Constant(kappa, B), true},
  };
  return theta;
}

MlpParams compose(const MlpParams& theta2, const MlpParams& theta1) {
  if (theta1.output_width() != theta2.input_width()) {
    throw std::invalid_argument("composition width mismatch");
  }
  if (theta1.activation != theta2.activation) {
    throw std::invalid_argument("composition requires matching activations");
  }
  MlpParams out;
  out.activation = theta1.activation;
  out.layers = theta1.layers;
  out.layers.back().activate = false;   // keep the interface affine pair unfused
  out.layers.insert(out.layers.end(), theta2.layers.begin(), theta2.layers.end());
  return out;
}

bool DeepOnetParams::valid() const {
  return theta.dims_chain() && theta.input_width() == d && theta.output_width() == m &&
         d >= 0 && d <= in_basis.size && m >= 0 && m <= out_basis.size;
}

Eigen::VectorXd deeponet_forward(const DeepOnetParams& p, const Eigen::VectorXd& x) {
  if (!p.valid()) throw std::invalid_argument("inconsistent DeepONet parameters");
  return extend(mlp_forward(p.theta, project(x, p.in_basis, p.d)), p.out_basis, p.m);
}

double GramSandwichLoss::value(const Eigen::VectorXd& pred,
                               const Eigen::VectorXd& target) const {
  const Eigen::Index n = gram.rows();
  const Eigen::MatrixXd d =
      Eigen::Map<const Eigen::MatrixXd>(pred.data(), n, n) -
      Eigen::Map<const Eigen::MatrixXd>(target.data(), n, n);
  return (d.cwiseProduct(gram * d * gram)).sum();
}

Eigen::VectorXd GramSandwichLoss::grad(const Eigen::VectorXd& pred,
                                       const Eigen::VectorXd& target) const {
  const Eigen::Index n = gram.rows();
  const Eigen::MatrixXd d =
      Eigen::Map<const Eigen::MatrixXd>(pred.data(), n, n) -
      Eigen::Map<const Eigen::MatrixXd>(target.data(), n, n);
  const Eigen::MatrixXd g = 2.0 * gram * d * gram;
  return Eigen::Map<const Eigen::VectorXd>(g.data(), n * n);
}

TrainingDivergence::TrainingDivergence(int it, double l)
    : std::runtime_error("training diverged at iteration " + std::to_string(it)),
      iteration(it),
      loss(l) {}

namespace {

struct AdamState {
  std::vector<Layer> m, v;
  int step = 0;
};

double dataset_loss(const MlpParams& theta, const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y,
                    const LossFn& loss) {
  const Eigen::MatrixXd P = mlp_forward_batch(theta, X);
  double total = 0.0;
  for (Eigen::Index c = 0; c < X.cols(); ++c) total += loss.value(P.col(c), Y.col(c));
  return total / static_cast<double>(X.cols());
}

}  // namespace

TrainResult sgd_train(const MlpParams& init, const Eigen::MatrixXd& inputs,
                      const Eigen::MatrixXd& targets, const LossFn& loss,
                      const TrainHyper& hyper) {
  if (inputs.cols() == 0 || inputs.cols() != targets.cols()) {
    throw std::invalid_argument("training set is empty or inconsistent");
  }
  if (!init.dims_chain() || inputs.rows() != init.input_width() ||
      targets.rows() != init.output_width()) {
    throw std::invalid_argument("network does not match the dataset dimensions");
  }

  const int n = static_cast<int>(inputs.cols());
  const int L = init.depth();
  const int batch = std::max(1, std::min(hyper.batch, n));

  MlpParams theta = init;
  AdamState adam;
  adam.m.resize(L);
  adam.v.resize(L);
  for (int j = 0; j < L; ++j) {
    adam.m[j].w = Eigen::MatrixXd::Zero(theta.layers[j].w.rows(), theta.layers[j].w.cols());
    adam.m[j].b = Eigen::VectorXd::Zero(theta.layers[j].b.size());
    adam.v[j] = adam.m[j];
  }

  TrainResult result;
  result.initial_loss = dataset_loss(theta, inputs, targets, loss);
  if (!std::isfinite(result.initial_loss)) throw TrainingDivergence(0, result.initial_loss);
  result.best_loss = result.initial_loss;
  result.params = theta;
  result.trace.push_back({0, result.initial_loss, result.best_loss});

  std::mt19937_64 gen(hyper.seed);
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);

  std::vector<Eigen::MatrixXd> layer_inputs(L), preacts(L);
  for (int epoch = 1; epoch <= hyper.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), gen);
    for (int start = 0; start < n; start += batch) {
      const int bs = std::min(batch, n - start);
      Eigen::MatrixXd X(inputs.rows(), bs), Y(targets.rows(), bs);
      for (int c = 0; c < bs; ++c) {
        X.col(c) = inputs.col(order[start + c]);
        Y.col(c) = targets.col(order[start + c]);
      }

      Eigen::MatrixXd h = X;
      for (int j = 0; j < L; ++j) {
        layer_inputs[j] = h;
        h = (theta.layers[j].w * h).colwise() + theta.layers[j].b;
        preacts[j] = h;
        if (activates(theta, j)) apply_activation(theta.activation, h);
      }

      Eigen::MatrixXd delta(targets.rows(), bs);
      for (int c = 0; c < bs; ++c) delta.col(c) = loss.grad(h.col(c), Y.col(c));
      delta /= static_cast<double>(bs);

      for (int j = L - 1; j >= 0; --j) {
        if (activates(theta, j)) {
          delta = delta.cwiseProduct(activation_derivative(theta.activation, preacts[j]));
        }
        const Eigen::MatrixXd gw = delta * layer_inputs[j].transpose();
        const Eigen::VectorXd gb = delta.rowwise().sum();
        if (j > 0) delta = theta.layers[j].w.transpose() * delta;

        if (hyper.optimizer == Optimizer::sgd) {
          theta.layers[j].w -= hyper.lr * gw;
          theta.layers[j].b -= hyper.lr * gb;
        } else {
          constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
          auto& mw = adam.m[j].w;
          auto& vw = adam.v[j].w;
          auto& mb = adam.m[j].b;
          auto& vb = adam.v[j].b;
          mw = b1 * mw + (1.0 - b1) * gw;
          vw = b2 * vw + (1.0 - b2) * gw.cwiseProduct(gw);
          mb = b1 * mb + (1.0 - b1) * gb;
          vb = b2 * vb + (1.0 - b2) * gb.cwiseProduct(gb);
        }
      }
      if (hyper.optimizer == Optimizer::adam) {
        adam.step += 1;
        const double c1 = 1.0 - std::pow(0.9, adam.step);
        const double c2 = 1.0 - std::pow(0.999, adam.step);
        for (int j = 0; j < L; ++j) {
          theta.layers[j].w.array() -=
              hyper.lr * (adam.m[j].w.array() / c1) /
              ((adam.v[j].w.array() / c2).sqrt() + 1e-8);
          theta.layers[j].b.array() -=
              hyper.lr * (adam.m[j].b.array() / c1) /
              ((adam.v[j].b.array() / c2).sqrt() + 1e-8);
        }
      }
    }

    const double epoch_loss = dataset_loss(theta, inputs, targets, loss);
    if (!std::isfinite(epoch_loss)) throw TrainingDivergence(epoch, epoch_loss);
    if (epoch_loss < result.best_loss) {
      result.best_loss = epoch_loss;
      result.params = theta;
    }
    result.trace.push_back({epoch, epoch_loss, result.best_loss});
  }
  return result;
}

TrainResult sgd_train(DeepOnetParams& model, const std::vector<Eigen::VectorXd>& inputs,
                      const std::vector<Eigen::VectorXd>& targets, const LossFn& loss,
                      const TrainHyper& hyper) {
  if (inputs.empty() || inputs.size() != targets.size()) {
    throw std::invalid_argument("training set is empty or inconsistent");
  }
  Eigen::MatrixXd X(model.d, static_cast<Eigen::Index>(inputs.size()));
  Eigen::MatrixXd Y(model.m, static_cast<Eigen::Index>(targets.size()));
  for (size_t i = 0; i < inputs.size(); ++i) {
    X.col(static_cast<Eigen::Index>(i)) = project(inputs[i], model.in_basis, model.d);
    Y.col(static_cast<Eigen::Index>(i)) = project(targets[i], model.out_basis, model.m);
  }
  TrainResult result = sgd_train(model.theta, X, Y, loss, hyper);
  model.theta = result.params;
  return result;
}

}  // namespace cald
