#ifndef CALD_TESTS_ORACLES_HPP
#define CALD_TESTS_ORACLES_HPP

// Independent oracles used by the test suites. Everything here is derived
// from closed-form solutions on the unit disk, not from the library code
// under test.

#include "cald/deeponet.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <numbers>

namespace cald::oracle {

// Dirichlet-to-Neumann eigenvalue of mode k >= 1 on the unit disk for the
// two-layer radial conductivity a = a_in on r < r0, a_out on r >= r0.
//
// Separation of variables: u = A r^k inside, B r^k + C r^{-k} outside, with
// u(1) = 1, continuity of u and of the radial flux a u' at r0. The boundary
// flux is lambda_k = a_out * k * (B - C), and the raw-trig DtN diagonal entry
// equals pi * lambda_k.
inline double annulus_dtn_eigenvalue(double a_in, double a_out, double r0, int k) {
  if (a_in == a_out) return a_out * k;
  const double gamma = std::pow(r0, 2.0 * k);
  // B = C * (a_in + a_out) / ((a_out - a_in) * gamma), B + C = 1.
  const double ratio = (a_in + a_out) / ((a_out - a_in) * gamma);
  const double C = 1.0 / (1.0 + ratio);
  const double B = 1.0 - C;
  return a_out * k * (B - C);
}

// Unit-disk DtN diagonal for constant conductivity c: <Lambda cos k, cos k>
// = c * k * pi (harmonic extension r^k cos k(theta)).
inline double disk_dtn_diag_raw(double c, int k) { return c * k * std::numbers::pi; }

// H^{1/2}-orthonormal diagonal for the same operator: c * k / sqrt(1 + k^2).
inline double disk_dtn_diag_orth(double c, int k) {
  return c * k / std::sqrt(1.0 + static_cast<double>(k) * k);
}

// Max relative error between the exact mlp gradients and central finite
// differences over every weight and bias.
inline double gradient_fd_defect(const MlpParams& theta, const Eigen::VectorXd& x,
                                 const Eigen::VectorXd& cotangent, double step = 1e-5) {
  const MlpGradient g = mlp_gradient(theta, x, cotangent);
  const auto scalar_loss = [&](const MlpParams& t) {
    return cotangent.dot(mlp_forward(t, x));
  };
  double worst = 0.0;
  MlpParams probe = theta;
  for (size_t j = 0; j < theta.layers.size(); ++j) {
    for (Eigen::Index r = 0; r < theta.layers[j].w.rows(); ++r) {
      for (Eigen::Index c = 0; c < theta.layers[j].w.cols(); ++c) {
        const double keep = probe.layers[j].w(r, c);
        probe.layers[j].w(r, c) = keep + step;
        const double up = scalar_loss(probe);
        probe.layers[j].w(r, c) = keep - step;
        const double dn = scalar_loss(probe);
        probe.layers[j].w(r, c) = keep;
        const double fd = (up - dn) / (2.0 * step);
        worst = std::max(worst, std::abs(fd - g.layers[j].w(r, c)) /
                                    std::max(1.0, std::abs(fd)));
      }
      const double keep = probe.layers[j].b[r];
      probe.layers[j].b[r] = keep + step;
      const double up = scalar_loss(probe);
      probe.layers[j].b[r] = keep - step;
      const double dn = scalar_loss(probe);
      probe.layers[j].b[r] = keep;
      const double fd = (up - dn) / (2.0 * step);
      worst = std::max(worst,
                       std::abs(fd - g.layers[j].b[r]) / std::max(1.0, std::abs(fd)));
    }
  }
  return worst;
}

}  // namespace cald::oracle

#endif
