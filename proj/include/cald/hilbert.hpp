#ifndef CALD_HILBERT_HPP
#define CALD_HILBERT_HPP

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <string>

// Coefficient-space realizations of H^{1/2} and H^{-1/2} on the unit circle,
// plus the orthonormal-basis projection/extension machinery used by every
// operator surrogate in this repo.
//
// Boundary coefficient layout (normative for all files emitted by the CLI):
//   [const, 1c, 1s, 2c, 2s, ..., Kc, Ks]
// against the raw trigonometric family {1, cos(k T), sin(k T)}.

namespace cald {

inline int modes_for_order(int K) { return 2 * K + 1; }

// Inverse of modes_for_order; throws std::invalid_argument on even length.
int order_for_modes(Eigen::Index n_modes);

// Angular frequency of a coefficient slot: 0, 1, 1, 2, 2, ...
int mode_frequency(int slot);

// H^{1/2} multiplier weight of a slot: w_0 = 2*pi, w_k = pi*sqrt(1 + k^2).
// The norm is ||f||_{1/2}^2 = sum_k w_k c_k^2 over raw trig coefficients.
double h_half_weight(int slot);
Eigen::VectorXd h_half_weights(int K);

struct BoundaryFunction {
  // Raw trig coefficients, size 2K+1.
  Eigen::VectorXd coeffs;

  BoundaryFunction() = default;
  explicit BoundaryFunction(Eigen::VectorXd c);
  static BoundaryFunction zero(int K);

  int order() const { return order_for_modes(coeffs.size()); }
  double operator()(double theta) const;
};

struct BoundaryFunctional {
  // Slot i holds the action of the functional on the raw trig member t_i,
  // so pairing(F, f) = sum_i F.coeffs[i] * f.coeffs[i].
  Eigen::VectorXd coeffs;

  BoundaryFunctional() = default;
  explicit BoundaryFunctional(Eigen::VectorXd c);
  static BoundaryFunctional zero(int K);

  int order() const { return order_for_modes(coeffs.size()); }
};

double h_half_norm(const BoundaryFunction& f);
double h_minus_half_norm(const BoundaryFunctional& F);

// Duality pairing <F, f>; bilinear in both arguments.
double pairing(const BoundaryFunctional& F, const BoundaryFunction& f);

// Isometric isomorphism H^{-1/2} -> H^{1/2}: coefficient-wise division by w_k.
BoundaryFunction riesz_map(const BoundaryFunctional& F);
// Its inverse, H^{1/2} -> H^{-1/2}: coefficient-wise multiplication by w_k.
BoundaryFunctional riesz_inverse(const BoundaryFunction& f);

enum class BasisKind { h_half_circle, l2_domain_kl };

// An orthonormal family in one of the two Hilbert spaces of the build.
//
// h_half_circle: member i is normalization[i] * t_i, diagonal in the trig
// coefficients, unit H^{1/2} norm by construction. Coefficient vectors passed
// to project/extend are raw trig coefficient vectors of length `size`.
//
// l2_domain_kl: members are nodal fields on a fixed mesh (columns of
// `members`), orthonormal under the quadrature inner product <u,v> = u' G v
// with G the P1 mass matrix. Coefficient vectors are nodal vectors.
struct OrthoBasis {
  BasisKind kind = BasisKind::h_half_circle;
  int size = 0;
  Eigen::VectorXd normalization;

  // l2_domain_kl only.
  Eigen::MatrixXd members;
  Eigen::SparseMatrix<double> gram;
  std::string family;
};

// The H^{1/2}(circle) orthonormal basis e_i = (1+k^2)^{-1/4} * (L2-normalized
// trig member), stored through its diagonal normalization constants.
OrthoBasis make_circle_basis(int K);

// Numeric orthonormality defect max_{i<=j} |<e_i,e_j> - delta_ij|.
double orthonormality_defect(const OrthoBasis& basis);

// P_{H,d}: coefficient vector -> first d orthonormal coordinates.
Eigen::VectorXd project(const Eigen::VectorXd& x, const OrthoBasis& basis, int d);

// E_{W,m}: R^m -> coefficient vector, a -> sum a_i g_i.
Eigen::VectorXd extend(const Eigen::VectorXd& a, const OrthoBasis& basis, int m);

// Norm of a coefficient vector in the basis's ambient space.
double space_norm(const Eigen::VectorXd& x, const OrthoBasis& basis);

// || x - E_d P_d x || in the ambient norm.
double projection_tail_error(const Eigen::VectorXd& x, const OrthoBasis& basis, int d);

// Coordinates of a functional against the Riesz images of the circle basis;
// equals (<F, e_i>)_i and is an isometry onto R^d just like project().
Eigen::VectorXd project_dual(const BoundaryFunctional& F, const OrthoBasis& basis, int d);
BoundaryFunctional extend_dual(const Eigen::VectorXd& a, const OrthoBasis& basis, int m);

}  // namespace cald

#endif
