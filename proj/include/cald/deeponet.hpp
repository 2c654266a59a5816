#ifndef CALD_DEEPONET_HPP
#define CALD_DEEPONET_HPP

#include "cald/hilbert.hpp"

#include <cstdint>
#include <stdexcept>
#include <vector>

// Finite-dimensional multilayer networks with exact reverse-mode gradients,
// the explicit relu clipping construction, and the projection/extension
// composition that turns a finite network into an operator between Hilbert
// spaces.

namespace cald {

enum class Activation { relu, tanh };

struct Layer {
  Eigen::MatrixXd w;
  Eigen::VectorXd b;
  // Apply the activation after this layer. Ignored for the last layer (the
  // realization never activates the output). Composition clears it at the
  // interface so that two stacked networks keep their exact function.
  bool activate = true;
};

struct MlpParams {
  std::vector<Layer> layers;
  Activation activation = Activation::tanh;

  int depth() const { return static_cast<int>(layers.size()); }
  int input_width() const { return static_cast<int>(layers.front().w.cols()); }
  int output_width() const { return static_cast<int>(layers.back().w.rows()); }
  bool dims_chain() const;
};

// Glorot-uniform initialization, seed-deterministic. `widths` lists the layer
// sizes from input to output, so L = widths.size() - 1 >= 1.
MlpParams make_mlp(const std::vector<int>& widths, Activation activation, std::uint64_t seed);

Eigen::VectorXd mlp_forward(const MlpParams& theta, const Eigen::VectorXd& x);
// Column-per-sample batched evaluation; identical arithmetic per column.
Eigen::MatrixXd mlp_forward_batch(const MlpParams& theta, const Eigen::MatrixXd& xs);

struct MlpGradient {
  std::vector<Layer> layers;         // dW, db per layer
  Eigen::VectorXd input_cotangent;
};

// Exact reverse-mode derivatives of mlp_forward; relu subgradient at 0 is 0.
MlpGradient mlp_gradient(const MlpParams& theta, const Eigen::VectorXd& x,
                         const Eigen::VectorXd& cotangent);

// Coordinate-wise clamp to [-B, B], B = M + 2*delta, as a 5-layer relu
// network: exact identity for |x_i| <= B and |f(x)_i| <= B everywhere (the
// Euclidean-ball statement holds up to a sqrt(kappa) factor).
MlpParams build_clipping(int kappa, double M, double delta);

// Single network realizing f_theta2 o f_theta1 with depth L1 + L2; the
// interface affine pair is kept unfused.
MlpParams compose(const MlpParams& theta2, const MlpParams& theta1);

struct DeepOnetParams {
  int d = 0;   // input projection dimension
  int m = 0;   // output extension dimension
  MlpParams theta;
  OrthoBasis in_basis;
  OrthoBasis out_basis;

  bool valid() const;
};

// E_{W,m} o f_theta o P_{H,d} on coefficient vectors of the input space.
Eigen::VectorXd deeponet_forward(const DeepOnetParams& p, const Eigen::VectorXd& x);

enum class Optimizer { sgd, adam };

struct TrainHyper {
  double lr = 1e-3;
  int batch = 64;
  int epochs = 100;
  std::uint64_t seed = 0;
  Optimizer optimizer = Optimizer::adam;
};

// Loss on the network output; value and gradient with respect to the
// prediction. Implementations must be pure.
struct LossFn {
  virtual ~LossFn() = default;
  virtual double value(const Eigen::VectorXd& pred, const Eigen::VectorXd& target) const = 0;
  virtual Eigen::VectorXd grad(const Eigen::VectorXd& pred,
                               const Eigen::VectorXd& target) const = 0;
};

struct SquaredLoss final : LossFn {
  double value(const Eigen::VectorXd& pred, const Eigen::VectorXd& target) const override {
    return (pred - target).squaredNorm();
  }
  Eigen::VectorXd grad(const Eigen::VectorXd& pred,
                       const Eigen::VectorXd& target) const override {
    return 2.0 * (pred - target);
  }
};

// ||G^{1/2} (P - T) G^{1/2}||_F^2 on vectorized square matrices (column-major),
// the empirical bilinear-form distance induced by a quadrature Gram matrix.
struct GramSandwichLoss final : LossFn {
  Eigen::MatrixXd gram;
  explicit GramSandwichLoss(Eigen::MatrixXd g) : gram(std::move(g)) {}
  double value(const Eigen::VectorXd& pred, const Eigen::VectorXd& target) const override;
  Eigen::VectorXd grad(const Eigen::VectorXd& pred,
                       const Eigen::VectorXd& target) const override;
};

struct TraceRow {
  int iteration = 0;
  double loss = 0.0;
  double best_loss = 0.0;
};

struct TrainResult {
  MlpParams params;         // best iterate
  std::vector<TraceRow> trace;
  double initial_loss = 0.0;
  double best_loss = 0.0;
};

class TrainingDivergence : public std::runtime_error {
 public:
  TrainingDivergence(int iteration, double loss);
  int iteration;
  double loss;
};

// Mini-batch training with best-iterate tracking; deterministic per seed
// (fixed shuffle and summation order). Columns of inputs/targets are samples.
TrainResult sgd_train(const MlpParams& init, const Eigen::MatrixXd& inputs,
                      const Eigen::MatrixXd& targets, const LossFn& loss,
                      const TrainHyper& hyper);

// DeepONet convenience: projects coefficient-vector data through the bases
// and trains the inner network.
TrainResult sgd_train(DeepOnetParams& model, const std::vector<Eigen::VectorXd>& inputs,
                      const std::vector<Eigen::VectorXd>& targets, const LossFn& loss,
                      const TrainHyper& hyper);

}  // namespace cald

#endif
