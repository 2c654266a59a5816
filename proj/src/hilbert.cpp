#include "cald/hilbert.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace cald {

namespace {
constexpr double kPi = std::numbers::pi;
}

int order_for_modes(Eigen::Index n_modes) {
  if (n_modes < 1 || n_modes % 2 == 0) {
    throw std::invalid_argument("coefficient vector must have odd length 2K+1");
  }
  return static_cast<int>((n_modes - 1) / 2);
}

int mode_frequency(int slot) {
  if (slot < 0) throw std::invalid_argument("negative coefficient slot");
  return (slot + 1) / 2;
}

double h_half_weight(int slot) {
  const int k = mode_frequency(slot);
  if (k == 0) return 2.0 * kPi;
  return kPi * std::sqrt(1.0 + static_cast<double>(k) * k);
}

Eigen::VectorXd h_half_weights(int K) {
  Eigen::VectorXd w(modes_for_order(K));
  for (int i = 0; i < w.size(); ++i) w[i] = h_half_weight(i);
  return w;
}

BoundaryFunction::BoundaryFunction(Eigen::VectorXd c) : coeffs(std::move(c)) {
  order_for_modes(coeffs.size());
}

BoundaryFunction BoundaryFunction::zero(int K) {
  return BoundaryFunction(Eigen::VectorXd::Zero(modes_for_order(K)));
}

double BoundaryFunction::operator()(double theta) const {
  double v = coeffs[0];
  const int K = order();
  for (int k = 1; k <= K; ++k) {
    v += coeffs[2 * k - 1] * std::cos(k * theta);
    v += coeffs[2 * k] * std::sin(k * theta);
  }
  return v;
}

BoundaryFunctional::BoundaryFunctional(Eigen::VectorXd c) : coeffs(std::move(c)) {
  order_for_modes(coeffs.size());
}

BoundaryFunctional BoundaryFunctional::zero(int K) {
  return BoundaryFunctional(Eigen::VectorXd::Zero(modes_for_order(K)));
}

double h_half_norm(const BoundaryFunction& f) {
  double s = 0.0;
  for (int i = 0; i < f.coeffs.size(); ++i) {
    s += h_half_weight(i) * f.coeffs[i] * f.coeffs[i];
  }
  return std::sqrt(s);
}

double h_minus_half_norm(const BoundaryFunctional& F) {
  double s = 0.0;
  for (int i = 0; i < F.coeffs.size(); ++i) {
    s += F.coeffs[i] * F.coeffs[i] / h_half_weight(i);
  }
  return std::sqrt(s);
}

double pairing(const BoundaryFunctional& F, const BoundaryFunction& f) {
  const Eigen::Index n = std::min(F.coeffs.size(), f.coeffs.size());
  return F.coeffs.head(n).dot(f.coeffs.head(n));
}

BoundaryFunction riesz_map(const BoundaryFunctional& F) {
  Eigen::VectorXd c(F.coeffs.size());
  for (int i = 0; i < c.size(); ++i) c[i] = F.coeffs[i] / h_half_weight(i);
  return BoundaryFunction(std::move(c));
}

BoundaryFunctional riesz_inverse(const BoundaryFunction& f) {
  Eigen::VectorXd c(f.coeffs.size());
  for (int i = 0; i < c.size(); ++i) c[i] = f.coeffs[i] * h_half_weight(i);
  return BoundaryFunctional(std::move(c));
}

OrthoBasis make_circle_basis(int K) {
  OrthoBasis b;
  b.kind = BasisKind::h_half_circle;
  b.size = modes_for_order(K);
  b.normalization.resize(b.size);
  for (int i = 0; i < b.size; ++i) b.normalization[i] = 1.0 / std::sqrt(h_half_weight(i));
  return b;
}

double orthonormality_defect(const OrthoBasis& basis) {
  double worst = 0.0;
  if (basis.kind == BasisKind::h_half_circle) {
    // Members are diagonal in the trig coefficients; the Gram matrix is
    // diag(w_i * n_i^2).
    for (int i = 0; i < basis.size; ++i) {
      const double g = h_half_weight(i) * basis.normalization[i] * basis.normalization[i];
      worst = std::max(worst, std::abs(g - 1.0));
    }
    return worst;
  }
  const Eigen::MatrixXd G = basis.members.transpose() * (basis.gram * basis.members);
  for (int i = 0; i < basis.size; ++i) {
    for (int j = i; j < basis.size; ++j) {
      worst = std::max(worst, std::abs(G(i, j) - (i == j ? 1.0 : 0.0)));
    }
  }
  return worst;
}

namespace {

void check_dims(const OrthoBasis& basis, int d) {
  if (d < 0 || d > basis.size) {
    throw std::invalid_argument("requested dimension exceeds basis size");
  }
}

}  // namespace

Eigen::VectorXd project(const Eigen::VectorXd& x, const OrthoBasis& basis, int d) {
  check_dims(basis, d);
  if (basis.kind == BasisKind::h_half_circle) {
    if (x.size() != basis.size) {
      throw std::invalid_argument("coefficient vector does not match basis size");
    }
    Eigen::VectorXd out(d);
    for (int i = 0; i < d; ++i) out[i] = x[i] / basis.normalization[i];
    return out;
  }
  if (x.size() != basis.members.rows()) {
    throw std::invalid_argument("nodal vector does not match mesh size");
  }
  return basis.members.leftCols(d).transpose() * (basis.gram * x);
}

Eigen::VectorXd extend(const Eigen::VectorXd& a, const OrthoBasis& basis, int m) {
  check_dims(basis, m);
  if (a.size() != m) throw std::invalid_argument("vector length does not match m");
  if (basis.kind == BasisKind::h_half_circle) {
    Eigen::VectorXd out = Eigen::VectorXd::Zero(basis.size);
    for (int i = 0; i < m; ++i) out[i] = a[i] * basis.normalization[i];
    return out;
  }
  return basis.members.leftCols(m) * a;
}

double space_norm(const Eigen::VectorXd& x, const OrthoBasis& basis) {
  if (basis.kind == BasisKind::h_half_circle) {
    return h_half_norm(BoundaryFunction(x));
  }
  return std::sqrt(std::max(0.0, x.dot(basis.gram * x)));
}

double projection_tail_error(const Eigen::VectorXd& x, const OrthoBasis& basis, int d) {
  const Eigen::VectorXd back = extend(project(x, basis, d), basis, d);
  return space_norm(x - back, basis);
}

Eigen::VectorXd project_dual(const BoundaryFunctional& F, const OrthoBasis& basis, int d) {
  if (basis.kind != BasisKind::h_half_circle) {
    throw std::invalid_argument("dual coordinates are defined for the circle basis only");
  }
  check_dims(basis, d);
  if (F.coeffs.size() != basis.size) {
    throw std::invalid_argument("functional does not match basis size");
  }
  // <F, e_i> = n_i * F.coeffs[i]; an isometry for the H^{-1/2} norm.
  Eigen::VectorXd out(d);
  for (int i = 0; i < d; ++i) out[i] = F.coeffs[i] * basis.normalization[i];
  return out;
}

BoundaryFunctional extend_dual(const Eigen::VectorXd& a, const OrthoBasis& basis, int m) {
  if (basis.kind != BasisKind::h_half_circle) {
    throw std::invalid_argument("dual coordinates are defined for the circle basis only");
  }
  check_dims(basis, m);
  if (a.size() != m) throw std::invalid_argument("vector length does not match m");
  Eigen::VectorXd c = Eigen::VectorXd::Zero(basis.size);
  for (int i = 0; i < m; ++i) c[i] = a[i] / basis.normalization[i];
  return BoundaryFunctional(std::move(c));
}

}  // namespace cald
