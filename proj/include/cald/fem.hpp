#ifndef CALD_FEM_HPP
#define CALD_FEM_HPP

#include "cald/hilbert.hpp"

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include <functional>
#include <memory>
#include <vector>

// P1 finite-element forward solver for div(a grad u) = 0 on the unit disk and
// weak assembly of the Dirichlet-to-Neumann operator as a bilinear form.

namespace cald {

struct Mesh {
  Eigen::MatrixX2d vertices;                    // one point per row
  Eigen::Matrix<int, Eigen::Dynamic, 3> triangles;  // CCW vertex ids
  std::vector<int> boundary;                    // unit-circle ids, sorted by angle
  Eigen::VectorXd boundary_angles;              // matching angles in [0, 2pi)
  double h = 0.0;

  int num_vertices() const { return static_cast<int>(vertices.rows()); }
  int num_triangles() const { return static_cast<int>(triangles.rows()); }
  int num_boundary() const { return static_cast<int>(boundary.size()); }
};

// Deterministic ring triangulation of the unit disk. The boundary vertex
// count is 12 * 2^k rounded so that it is at least 2*pi/h; halving h exactly
// doubles it.
Mesh generate_mesh(double h);

double mesh_area(const Mesh& mesh);
double min_signed_triangle_area(const Mesh& mesh);

struct ConductivityField {
  Eigen::VectorXd nodal_values;
  Eigen::VectorXd kl_coeffs;   // empty when the field was specified directly
  double a_lo = 0.0;
  double a_hi = 0.0;

  bool admissible() const {
    return a_lo > 0.0 && nodal_values.size() > 0 &&
           nodal_values.minCoeff() >= a_lo - 1e-12 &&
           nodal_values.maxCoeff() <= a_hi + 1e-12;
  }
};

ConductivityField constant_conductivity(const Mesh& mesh, double value);
ConductivityField conductivity_from(const Mesh& mesh,
                                    const std::function<double(double, double)>& f);
// a = inner for r < r0, outer for r >= r0.
ConductivityField radial_two_layer(const Mesh& mesh, double inner, double outer, double r0);

enum class DtnBasis { raw_trig, orthonormal };

struct DtNMatrix {
  Eigen::MatrixXd entries;   // (2K+1)^2, entry (i,j) = <Lambda_a b_j, b_i>
  DtnBasis basis_kind = DtnBasis::raw_trig;
  int K = 0;

  double symmetry_defect() const;       // max relative |M_ij - M_ji|
  double constant_mode_defect() const;  // max |row 0|, |col 0| relative to ||M||
};

Eigen::SparseMatrix<double> stiffness_matrix(const Mesh& mesh, const ConductivityField& a);
Eigen::SparseMatrix<double> mass_matrix(const Mesh& mesh);

// Factorizes the interior block of the stiffness matrix once so that many
// Dirichlet problems with the same (mesh, a) share it. Read-only after
// construction; solves may run concurrently.
class DirichletSolver {
 public:
  DirichletSolver(const Mesh& mesh, const ConductivityField& a);

  // Nodal P1 solution; boundary nodes carry f at their angles.
  Eigen::VectorXd solve(const BoundaryFunction& f) const;
  Eigen::VectorXd solve_nodal(const Eigen::VectorXd& boundary_values) const;

  // Residual of the interior equations for a full nodal vector, relative.
  double interior_residual(const Eigen::VectorXd& u) const;

  // (K u) restricted to boundary ids: the weak boundary flux of u.
  Eigen::VectorXd boundary_flux(const Eigen::VectorXd& u) const;

  const Mesh& mesh() const { return mesh_; }
  const Eigen::SparseMatrix<double>& stiffness() const { return stiffness_; }

 private:
  const Mesh& mesh_;
  Eigen::SparseMatrix<double> stiffness_;
  Eigen::SparseMatrix<double> interior_matrix_;
  Eigen::SparseMatrix<double> coupling_;   // interior x boundary block
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt_;
  std::vector<int> interior_;
  std::vector<int> interior_slot_;   // vertex id -> interior index, -1 on boundary
  bool use_cg_fallback_ = false;
};

Eigen::VectorXd solve_dirichlet(const Mesh& mesh, const ConductivityField& a,
                                const BoundaryFunction& f);

// Lambda_a f (g) = int_Omega a grad u . grad v, v any lifting of g.
double dtn_pairing(const Mesh& mesh, const ConductivityField& a,
                   const BoundaryFunction& f, const BoundaryFunction& g);

// Functional with coefficients <Lambda_a f, t_i> over the raw trig members,
// truncated at the order of f.
BoundaryFunctional dtn_apply(const Mesh& mesh, const ConductivityField& a,
                             const BoundaryFunction& f);
BoundaryFunctional dtn_apply(const DirichletSolver& solver, const BoundaryFunction& f);

// Requires 2K+1 <= boundary count / 4 (anti-aliasing margin). One stiffness
// factorization is shared by the 2K+1 solves; `threads` > 1 runs them
// concurrently into disjoint columns.
DtNMatrix dtn_matrix(const Mesh& mesh, const ConductivityField& a, int K,
                     DtnBasis basis = DtnBasis::raw_trig, int threads = 1);

// Rescales raw-trig entries to the H^{1/2}-orthonormal basis (the finite
// section of the Riesz-composed operator) and back.
Eigen::MatrixXd to_orthonormal(const Eigen::MatrixXd& raw_entries);
Eigen::MatrixXd to_raw_trig(const Eigen::MatrixXd& orth_entries);

// L2(Omega) basis of radial-polynomial x trig seeds (Zernike-style ordering),
// Gram-Schmidt orthonormalized under the mesh mass matrix.
OrthoBasis make_domain_basis(const Mesh& mesh, int n);

// L2(Omega) basis spanned by indicators of the annuli split at `breaks`
// (member count = breaks.size() + 1). Suited to piecewise-radial fields.
OrthoBasis make_radial_shell_basis(const Mesh& mesh, const std::vector<double>& breaks);

}  // namespace cald

#endif
