#include "cald/fem.hpp"

#include <Eigen/IterativeLinearSolvers>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <thread>

namespace cald {

namespace {

constexpr double kPi = std::numbers::pi;

// Vertex budget; rings below scale like (boundary count)^2 / 4pi.
constexpr int kMaxEstimatedVertices = 400000;

double cross2(const Eigen::Vector2d& u, const Eigen::Vector2d& v) {
  return u.x() * v.y() - u.y() * v.x();
}

double signed_area(const Mesh& mesh, int t) {
  const Eigen::Vector2d p0 = mesh.vertices.row(mesh.triangles(t, 0));
  const Eigen::Vector2d p1 = mesh.vertices.row(mesh.triangles(t, 1));
  const Eigen::Vector2d p2 = mesh.vertices.row(mesh.triangles(t, 2));
  return 0.5 * cross2(p1 - p0, p2 - p0);
}

}  // namespace

Mesh generate_mesh(double h) {
  if (!(h > 0.0 && h < 1.0)) throw std::invalid_argument("mesh size h must lie in (0, 1)");

  // 12 * 2^k boundary vertices, the smallest such count >= 2pi/h. The
  // power-of-two ladder makes one refinement step double the boundary count.
  int doublings = 0;
  while ((12 << doublings) * h < 2.0 * kPi) ++doublings;
  const int n_boundary = 12 << doublings;
  const int n_rings = std::max(2, static_cast<int>(std::lround(n_boundary / (2.0 * kPi))));
  if (static_cast<long>(n_boundary) * (n_rings + 1) / 2 > kMaxEstimatedVertices) {
    throw std::runtime_error("mesh resource budget exceeded: h too small");
  }

  Mesh mesh;
  mesh.h = h;

  std::vector<int> ring_start(n_rings + 1, 0);
  std::vector<int> ring_count(n_rings + 1, 0);
  int total = 1;  // center vertex
  for (int j = 1; j <= n_rings; ++j) {
    ring_start[j] = total;
    ring_count[j] = std::max(6, static_cast<int>(std::lround(
                                    static_cast<double>(n_boundary) * j / n_rings)));
    total += ring_count[j];
  }

  mesh.vertices.resize(total, 2);
  mesh.vertices.row(0) << 0.0, 0.0;
  for (int j = 1; j <= n_rings; ++j) {
    const double r = static_cast<double>(j) / n_rings;
    for (int i = 0; i < ring_count[j]; ++i) {
      const double theta = 2.0 * kPi * i / ring_count[j];
      // Boundary ring: exact unit-circle placement.
      const double rr = (j == n_rings) ? 1.0 : r;
      mesh.vertices.row(ring_start[j] + i) << rr * std::cos(theta), rr * std::sin(theta);
    }
  }

  std::vector<Eigen::Vector3i> tris;
  tris.reserve(2 * total);

  // Fan between the center and ring 1.
  for (int i = 0; i < ring_count[1]; ++i) {
    tris.emplace_back(0, ring_start[1] + i, ring_start[1] + (i + 1) % ring_count[1]);
  }

  // Angle-merge zipper between consecutive rings.
  for (int j = 2; j <= n_rings; ++j) {
    const int p = ring_count[j - 1];
    const int q = ring_count[j];
    const int si = ring_start[j - 1];
    const int so = ring_start[j];
    int i = 0, o = 0;
    while (i < p || o < q) {
      bool advance_outer;
      if (i == p) {
        advance_outer = true;
      } else if (o == q) {
        advance_outer = false;
      } else {
        advance_outer = (static_cast<double>(o + 1) / q <= static_cast<double>(i + 1) / p);
      }
      if (advance_outer) {
        tris.emplace_back(si + (i % p), so + (o % q), so + ((o + 1) % q));
        ++o;
      } else {
        tris.emplace_back(si + (i % p), so + (o % q), si + ((i + 1) % p));
        ++i;
      }
    }
  }

  mesh.triangles.resize(static_cast<int>(tris.size()), 3);
  for (size_t t = 0; t < tris.size(); ++t) mesh.triangles.row(static_cast<int>(t)) = tris[t];

  mesh.boundary.resize(ring_count[n_rings]);
  mesh.boundary_angles.resize(ring_count[n_rings]);
  for (int i = 0; i < ring_count[n_rings]; ++i) {
    mesh.boundary[i] = ring_start[n_rings] + i;
    mesh.boundary_angles[i] = 2.0 * kPi * i / ring_count[n_rings];
  }

  for (int t = 0; t < mesh.num_triangles(); ++t) {
    if (signed_area(mesh, t) <= 0.0) {
      throw std::runtime_error("mesh construction produced a non-positive triangle");
    }
  }
  return mesh;
}

double mesh_area(const Mesh& mesh) {
  double area = 0.0;
  for (int t = 0; t < mesh.num_triangles(); ++t) area += signed_area(mesh, t);
  return area;
}

double min_signed_triangle_area(const Mesh& mesh) {
  double lo = std::numeric_limits<double>::infinity();
  for (int t = 0; t < mesh.num_triangles(); ++t) lo = std::min(lo, signed_area(mesh, t));
  return lo;
}

ConductivityField constant_conductivity(const Mesh& mesh, double value) {
  if (!(value > 0.0)) throw std::invalid_argument("conductivity must be positive");
  ConductivityField a;
  a.nodal_values = Eigen::VectorXd::Constant(mesh.num_vertices(), value);
  a.a_lo = a.a_hi = value;
  return a;
}

ConductivityField conductivity_from(const Mesh& mesh,
                                    const std::function<double(double, double)>& f) {
  ConductivityField a;
  a.nodal_values.resize(mesh.num_vertices());
  for (int v = 0; v < mesh.num_vertices(); ++v) {
    a.nodal_values[v] = f(mesh.vertices(v, 0), mesh.vertices(v, 1));
  }
  a.a_lo = a.nodal_values.minCoeff();
  a.a_hi = a.nodal_values.maxCoeff();
  if (!(a.a_lo > 0.0)) throw std::invalid_argument("conductivity must be positive everywhere");
  return a;
}

ConductivityField radial_two_layer(const Mesh& mesh, double inner, double outer, double r0) {
  return conductivity_from(mesh, [&](double x, double y) {
    return std::hypot(x, y) < r0 ? inner : outer;
  });
}

double DtNMatrix::symmetry_defect() const {
  double worst = 0.0;
  for (int i = 0; i < entries.rows(); ++i) {
    for (int j = i + 1; j < entries.cols(); ++j) {
      const double scale = 1.0 + std::abs(entries(i, i)) + std::abs(entries(j, j));
      worst = std::max(worst, std::abs(entries(i, j) - entries(j, i)) / scale);
    }
  }
  return worst;
}

double DtNMatrix::constant_mode_defect() const {
  const double scale = entries.norm();
  if (scale == 0.0) return 0.0;
  return std::max(entries.row(0).cwiseAbs().maxCoeff(),
                  entries.col(0).cwiseAbs().maxCoeff()) /
         scale;
}

namespace {

struct P1Element {
  Eigen::Matrix<double, 2, 3> grads;
  double area;
};

P1Element element_geometry(const Mesh& mesh, int t) {
  const Eigen::Vector2d p0 = mesh.vertices.row(mesh.triangles(t, 0));
  const Eigen::Vector2d p1 = mesh.vertices.row(mesh.triangles(t, 1));
  const Eigen::Vector2d p2 = mesh.vertices.row(mesh.triangles(t, 2));
  const double det = cross2(p1 - p0, p2 - p0);
  P1Element e;
  e.area = 0.5 * det;
  e.grads.col(0) << (p1.y() - p2.y()) / det, (p2.x() - p1.x()) / det;
  e.grads.col(1) << (p2.y() - p0.y()) / det, (p0.x() - p2.x()) / det;
  e.grads.col(2) << (p0.y() - p1.y()) / det, (p1.x() - p0.x()) / det;
  return e;
}

}  // namespace

Eigen::SparseMatrix<double> stiffness_matrix(const Mesh& mesh, const ConductivityField& a) {
  if (a.nodal_values.size() != mesh.num_vertices()) {
    throw std::invalid_argument("conductivity does not match mesh");
  }
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(9 * mesh.num_triangles());
  for (int t = 0; t < mesh.num_triangles(); ++t) {
    const P1Element e = element_geometry(mesh, t);
    const int v0 = mesh.triangles(t, 0), v1 = mesh.triangles(t, 1), v2 = mesh.triangles(t, 2);
    // Centroid value of a: the average of the nodal values.
    const double at = (a.nodal_values[v0] + a.nodal_values[v1] + a.nodal_values[v2]) / 3.0;
    const Eigen::Matrix3d local = at * e.area * (e.grads.transpose() * e.grads);
    const int ids[3] = {v0, v1, v2};
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 3; ++j) trips.emplace_back(ids[i], ids[j], local(i, j));
    }
  }
  Eigen::SparseMatrix<double> K(mesh.num_vertices(), mesh.num_vertices());
  K.setFromTriplets(trips.begin(), trips.end());
  return K;
}

Eigen::SparseMatrix<double> mass_matrix(const Mesh& mesh) {
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(9 * mesh.num_triangles());
  for (int t = 0; t < mesh.num_triangles(); ++t) {
    const double area = signed_area(mesh, t);
    const int ids[3] = {mesh.triangles(t, 0), mesh.triangles(t, 1), mesh.triangles(t, 2)};
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 3; ++j) {
        trips.emplace_back(ids[i], ids[j], area / 12.0 * (i == j ? 2.0 : 1.0));
      }
    }
  }
  Eigen::SparseMatrix<double> M(mesh.num_vertices(), mesh.num_vertices());
  M.setFromTriplets(trips.begin(), trips.end());
  return M;
}

DirichletSolver::DirichletSolver(const Mesh& mesh, const ConductivityField& a) : mesh_(mesh) {
  if (!a.admissible()) {
    throw std::invalid_argument("conductivity violates its positivity invariant");
  }
  stiffness_ = stiffness_matrix(mesh, a);

  std::vector<int> boundary_slot(mesh.num_vertices(), -1);
  for (int i = 0; i < mesh.num_boundary(); ++i) boundary_slot[mesh.boundary[i]] = i;

  interior_slot_.assign(mesh.num_vertices(), 0);
  for (int b : mesh.boundary) interior_slot_[b] = -1;
  for (int v = 0; v < mesh.num_vertices(); ++v) {
    if (interior_slot_[v] == 0) {
      interior_slot_[v] = static_cast<int>(interior_.size());
      interior_.push_back(v);
    }
  }
  const int ni = static_cast<int>(interior_.size());

  std::vector<Eigen::Triplet<double>> aii, aib;
  for (int col = 0; col < stiffness_.outerSize(); ++col) {
    for (Eigen::SparseMatrix<double>::InnerIterator it(stiffness_, col); it; ++it) {
      const int r = static_cast<int>(it.row());
      const int c = static_cast<int>(it.col());
      if (interior_slot_[r] < 0) continue;
      if (interior_slot_[c] >= 0) {
        aii.emplace_back(interior_slot_[r], interior_slot_[c], it.value());
      } else {
        aib.emplace_back(interior_slot_[r], boundary_slot[c], it.value());
      }
    }
  }
  interior_matrix_.resize(ni, ni);
  interior_matrix_.setFromTriplets(aii.begin(), aii.end());
  coupling_.resize(ni, mesh.num_boundary());
  coupling_.setFromTriplets(aib.begin(), aib.end());

  ldlt_.compute(interior_matrix_);
  if (ldlt_.info() != Eigen::Success) {
    use_cg_fallback_ = true;
  }
}

Eigen::VectorXd DirichletSolver::solve_nodal(const Eigen::VectorXd& boundary_values) const {
  if (boundary_values.size() != mesh_.num_boundary()) {
    throw std::invalid_argument("boundary value vector does not match boundary size");
  }
  const Eigen::VectorXd rhs = -(coupling_ * boundary_values);
  Eigen::VectorXd ui;
  const double rhs_norm = rhs.norm();
  if (!use_cg_fallback_) {
    ui = ldlt_.solve(rhs);
  }
  double res = use_cg_fallback_ ? std::numeric_limits<double>::infinity()
                                : (interior_matrix_ * ui - rhs).norm() / (rhs_norm + 1e-300);
  if (res > 1e-10) {
    Eigen::ConjugateGradient<Eigen::SparseMatrix<double>, Eigen::Lower | Eigen::Upper> cg;
    cg.setTolerance(1e-12);
    cg.compute(interior_matrix_);
    if (use_cg_fallback_) {
      ui = cg.solve(rhs);
    } else {
      ui = cg.solveWithGuess(rhs, ui);
    }
    res = (interior_matrix_ * ui - rhs).norm() / (rhs_norm + 1e-300);
    if (res > 1e-10) {
      throw std::runtime_error("Dirichlet solve failed to converge, relative residual " +
                               std::to_string(res));
    }
  }
  Eigen::VectorXd u(mesh_.num_vertices());
  for (size_t i = 0; i < interior_.size(); ++i) u[interior_[i]] = ui[static_cast<int>(i)];
  for (int i = 0; i < mesh_.num_boundary(); ++i) u[mesh_.boundary[i]] = boundary_values[i];
  return u;
}

Eigen::VectorXd DirichletSolver::solve(const BoundaryFunction& f) const {
  if (4 * f.order() > mesh_.num_boundary()) {
    throw std::invalid_argument("boundary data order exceeds the mesh aliasing limit");
  }
  Eigen::VectorXd fb(mesh_.num_boundary());
  for (int i = 0; i < mesh_.num_boundary(); ++i) fb[i] = f(mesh_.boundary_angles[i]);
  return solve_nodal(fb);
}

double DirichletSolver::interior_residual(const Eigen::VectorXd& u) const {
  const Eigen::VectorXd r = stiffness_ * u;
  double num = 0.0;
  for (int v : interior_) num += r[v] * r[v];
  return std::sqrt(num) / (u.norm() + 1e-300);
}

Eigen::VectorXd DirichletSolver::boundary_flux(const Eigen::VectorXd& u) const {
  const Eigen::VectorXd r = stiffness_ * u;
  Eigen::VectorXd flux(mesh_.num_boundary());
  for (int i = 0; i < mesh_.num_boundary(); ++i) flux[i] = r[mesh_.boundary[i]];
  return flux;
}

Eigen::VectorXd solve_dirichlet(const Mesh& mesh, const ConductivityField& a,
                                const BoundaryFunction& f) {
  return DirichletSolver(mesh, a).solve(f);
}

double dtn_pairing(const Mesh& mesh, const ConductivityField& a, const BoundaryFunction& f,
                   const BoundaryFunction& g) {
  const DirichletSolver solver(mesh, a);
  const Eigen::VectorXd flux = solver.boundary_flux(solver.solve(f));
  double s = 0.0;
  for (int i = 0; i < mesh.num_boundary(); ++i) s += flux[i] * g(mesh.boundary_angles[i]);
  return s;
}

namespace {

// Columns are the raw trig members evaluated at the boundary angles.
Eigen::MatrixXd trig_trace_matrix(const Mesh& mesh, int K) {
  Eigen::MatrixXd T(mesh.num_boundary(), modes_for_order(K));
  T.col(0).setOnes();
  for (int k = 1; k <= K; ++k) {
    for (int i = 0; i < mesh.num_boundary(); ++i) {
      T(i, 2 * k - 1) = std::cos(k * mesh.boundary_angles[i]);
      T(i, 2 * k) = std::sin(k * mesh.boundary_angles[i]);
    }
  }
  return T;
}

}  // namespace

BoundaryFunctional dtn_apply(const DirichletSolver& solver, const BoundaryFunction& f) {
  const Eigen::VectorXd flux = solver.boundary_flux(solver.solve(f));
  const Eigen::MatrixXd T = trig_trace_matrix(solver.mesh(), f.order());
  return BoundaryFunctional(T.transpose() * flux);
}

BoundaryFunctional dtn_apply(const Mesh& mesh, const ConductivityField& a,
                             const BoundaryFunction& f) {
  return dtn_apply(DirichletSolver(mesh, a), f);
}

DtNMatrix dtn_matrix(const Mesh& mesh, const ConductivityField& a, int K, DtnBasis basis,
                     int threads) {
  const int n = modes_for_order(K);
  if (4 * K > mesh.num_boundary()) {
    throw std::invalid_argument("truncation K exceeds the mesh aliasing limit");
  }
  const DirichletSolver solver(mesh, a);
  const Eigen::MatrixXd T = trig_trace_matrix(mesh, K);

  DtNMatrix result;
  result.K = K;
  result.basis_kind = basis;
  result.entries.resize(n, n);

  const auto run = [&](int j0, int j1) {
    for (int j = j0; j < j1; ++j) {
      const Eigen::VectorXd u = solver.solve_nodal(T.col(j));
      result.entries.col(j) = T.transpose() * solver.boundary_flux(u);
    }
  };
  threads = std::max(1, std::min(threads, n));
  if (threads == 1) {
    run(0, n);
  } else {
    std::vector<std::thread> pool;
    const int chunk = (n + threads - 1) / threads;
    for (int t = 0; t < threads; ++t) {
      const int j0 = t * chunk;
      const int j1 = std::min(n, j0 + chunk);
      if (j0 < j1) pool.emplace_back(run, j0, j1);
    }
    for (auto& th : pool) th.join();
  }

  if (basis == DtnBasis::orthonormal) result.entries = to_orthonormal(result.entries);
  return result;
}

Eigen::MatrixXd to_orthonormal(const Eigen::MatrixXd& raw_entries) {
  order_for_modes(raw_entries.rows());
  Eigen::VectorXd n(raw_entries.rows());
  for (int i = 0; i < n.size(); ++i) n[i] = 1.0 / std::sqrt(h_half_weight(i));
  return n.asDiagonal() * raw_entries * n.asDiagonal();
}

Eigen::MatrixXd to_raw_trig(const Eigen::MatrixXd& orth_entries) {
  order_for_modes(orth_entries.rows());
  Eigen::VectorXd n(orth_entries.rows());
  for (int i = 0; i < n.size(); ++i) n[i] = std::sqrt(h_half_weight(i));
  return n.asDiagonal() * orth_entries * n.asDiagonal();
}

namespace {

OrthoBasis gram_schmidt_domain_basis(const Mesh& mesh, Eigen::MatrixXd seeds,
                                     const std::string& family) {
  OrthoBasis basis;
  basis.kind = BasisKind::l2_domain_kl;
  basis.size = static_cast<int>(seeds.cols());
  basis.gram = mass_matrix(mesh);
  basis.family = family;
  basis.normalization.resize(basis.size);

  for (int c = 0; c < seeds.cols(); ++c) {
    Eigen::VectorXd v = seeds.col(c);
    const double initial = std::sqrt(v.dot(basis.gram * v));
    for (int pass = 0; pass < 2; ++pass) {
      for (int k = 0; k < c; ++k) {
        const Eigen::VectorXd ek = seeds.col(k);
        v -= ek.dot(basis.gram * v) * ek;
      }
    }
    const double nrm = std::sqrt(v.dot(basis.gram * v));
    if (!(nrm > 1e-10 * (initial + 1e-300))) {
      throw std::runtime_error("domain basis seeds are numerically dependent");
    }
    seeds.col(c) = v / nrm;
    basis.normalization[c] = nrm;
  }
  basis.members = std::move(seeds);
  return basis;
}

}  // namespace

OrthoBasis make_domain_basis(const Mesh& mesh, int n) {
  if (n < 1) throw std::invalid_argument("domain basis needs at least one member");
  Eigen::MatrixXd seeds(mesh.num_vertices(), n);
  int col = 0;
  // Zernike-style ladder: shell s contributes r^s * {cos q, sin q} for
  // q = s, s-2, ..., listed low frequency first.
  for (int s = 0; col < n; ++s) {
    for (int q = (s % 2 == 0) ? 0 : 1; q <= s && col < n; q += 2) {
      for (int v = 0; v < mesh.num_vertices(); ++v) {
        const double x = mesh.vertices(v, 0), y = mesh.vertices(v, 1);
        const double r = std::hypot(x, y);
        const double theta = std::atan2(y, x);
        const double radial = std::pow(r, s);
        seeds(v, col) = (q == 0) ? radial : radial * std::cos(q * theta);
      }
      ++col;
      if (q > 0 && col < n) {
        for (int v = 0; v < mesh.num_vertices(); ++v) {
          const double x = mesh.vertices(v, 0), y = mesh.vertices(v, 1);
          const double r = std::hypot(x, y);
          const double theta = std::atan2(y, x);
          seeds(v, col) = std::pow(r, s) * std::sin(q * theta);
        }
        ++col;
      }
    }
  }
  return gram_schmidt_domain_basis(mesh, std::move(seeds), "polynomial_trig");
}

OrthoBasis make_radial_shell_basis(const Mesh& mesh, const std::vector<double>& breaks) {
  std::vector<double> edges{0.0};
  for (double b : breaks) {
    if (!(b > edges.back() && b < 1.0)) {
      throw std::invalid_argument("shell breaks must be increasing inside (0, 1)");
    }
    edges.push_back(b);
  }
  edges.push_back(std::numeric_limits<double>::infinity());
  const int n = static_cast<int>(edges.size()) - 1;
  Eigen::MatrixXd seeds = Eigen::MatrixXd::Zero(mesh.num_vertices(), n);
  for (int v = 0; v < mesh.num_vertices(); ++v) {
    const double r = mesh.vertices.row(v).norm();
    for (int s = 0; s < n; ++s) {
      if (r >= edges[s] && r < edges[s + 1]) seeds(v, s) = 1.0;
    }
  }
  return gram_schmidt_domain_basis(mesh, std::move(seeds), "radial_shells");
}

}  // namespace cald
