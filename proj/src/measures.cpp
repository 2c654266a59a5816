#include "cald/measures.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <random>
#include <stdexcept>

namespace cald {

bool GaussianMeasureSpec::valid() const {
  if (alphas.size() != basis.size || alphas.size() == 0) return false;
  if (alphas.minCoeff() < 0.0) return false;
  for (int i = 1; i < alphas.size(); ++i) {
    if (alphas[i] > alphas[i - 1] + 1e-15) return false;
  }
  return true;
}

GaussianMeasureSpec make_boundary_measure(int K, double decay_s) {
  GaussianMeasureSpec spec;
  spec.basis = make_circle_basis(K);
  spec.alphas.resize(spec.basis.size);
  for (int i = 0; i < spec.alphas.size(); ++i) {
    const double k = mode_frequency(i);
    spec.alphas[i] = std::pow(1.0 + k * k, -decay_s);
  }
  return spec;
}

ConductivityMeasureSpec make_conductivity_measure(const Mesh& mesh, int kl_modes, double decay,
                                                  double M) {
  if (!(M > 1.0)) throw std::invalid_argument("clamp bound M must exceed 1");
  ConductivityMeasureSpec spec;
  spec.M = M;
  spec.log_field_spec.basis = make_domain_basis(mesh, kl_modes);
  spec.log_field_spec.alphas.resize(kl_modes);
  for (int j = 0; j < kl_modes; ++j) {
    spec.log_field_spec.alphas[j] = std::pow(1.0 + j, -decay);
  }
  return spec;
}

namespace {

Eigen::VectorXd gaussian_coordinates(const GaussianMeasureSpec& spec, std::uint64_t seed) {
  if (!spec.valid()) throw std::invalid_argument("invalid Gaussian measure spec");
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::VectorXd coords(spec.alphas.size());
  for (int i = 0; i < coords.size(); ++i) {
    coords[i] = std::sqrt(spec.alphas[i]) * normal(gen);
  }
  return coords;
}

}  // namespace

BoundaryFunction sample_boundary(const GaussianMeasureSpec& spec, std::uint64_t seed) {
  const Eigen::VectorXd coords = gaussian_coordinates(spec, seed);
  return BoundaryFunction(extend(coords, spec.basis, spec.basis.size));
}

ConductivityField sample_conductivity(const ConductivityMeasureSpec& spec, const Mesh& mesh,
                                      std::uint64_t seed) {
  const auto& ls = spec.log_field_spec;
  if (ls.basis.kind != BasisKind::l2_domain_kl ||
      ls.basis.members.rows() != mesh.num_vertices()) {
    throw std::invalid_argument("conductivity measure basis does not match the mesh");
  }
  const Eigen::VectorXd coords = gaussian_coordinates(ls, seed);
  const Eigen::VectorXd g = extend(coords, ls.basis, ls.basis.size);
  const double cap = std::log(spec.M);

  ConductivityField a;
  a.kl_coeffs = coords;
  a.nodal_values.resize(mesh.num_vertices());
  for (int v = 0; v < mesh.num_vertices(); ++v) {
    a.nodal_values[v] = std::exp(std::clamp(g[v], -cap, cap));
  }
  a.a_lo = 1.0 / spec.M;
  a.a_hi = spec.M;
  return a;
}

std::vector<BoundaryFunction> sample_boundary_batch(const GaussianMeasureSpec& spec, int n,
                                                    std::uint64_t base_seed) {
  std::vector<BoundaryFunction> out;
  out.reserve(n);
  for (int i = 0; i < n; ++i) {
    out.push_back(sample_boundary(spec, base_seed + static_cast<std::uint64_t>(i)));
  }
  return out;
}

CovarianceResult empirical_covariance(const std::vector<BoundaryFunction>& samples,
                                      const OrthoBasis& basis) {
  if (samples.size() < 2) throw std::invalid_argument("need at least two samples");
  const int n = basis.size;
  Eigen::MatrixXd C = Eigen::MatrixXd::Zero(n, n);
  for (const auto& f : samples) {
    const Eigen::VectorXd phi = project(f.coeffs, basis, n);
    C.noalias() += phi * phi.transpose();
  }
  C /= static_cast<double>(samples.size());

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(C);
  if (eig.info() != Eigen::Success) throw std::runtime_error("covariance eigensolve failed");

  CovarianceResult result;
  result.matrix = C;
  result.eigenvalues = eig.eigenvalues().reverse();
  result.eigenvectors = eig.eigenvectors().rowwise().reverse();
  for (int i = 0; i < n; ++i) {
    const double r =
        (C * result.eigenvectors.col(i) - result.eigenvalues[i] * result.eigenvectors.col(i))
            .norm();
    result.residual = std::max(result.residual, r);
  }
  return result;
}

MonteCarloEstimate mean_with_error(const Eigen::VectorXd& values) {
  MonteCarloEstimate est;
  est.n = static_cast<int>(values.size());
  if (est.n == 0) throw std::invalid_argument("empty sample set");
  est.mean = values.mean();
  if (est.n > 1) {
    const double var = (values.array() - est.mean).square().sum() / (est.n - 1);
    est.std_error = std::sqrt(var / est.n);
  }
  return est;
}

}  // namespace cald
