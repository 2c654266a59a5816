#ifndef CALD_MEASURES_HPP
#define CALD_MEASURES_HPP

#include "cald/fem.hpp"
#include "cald/hilbert.hpp"

#include <cstdint>
#include <functional>
#include <vector>

// Gaussian sampling measures with finite second moment on the boundary-data
// and conductivity spaces, plus empirical covariance diagnostics.

namespace cald {

struct GaussianMeasureSpec {
  Eigen::VectorXd alphas;   // covariance eigenvalues, non-increasing, summable
  OrthoBasis basis;

  double trace() const { return alphas.sum(); }
  bool valid() const;
};

// alpha at slot k = (1 + freq(k)^2)^{-decay_s} over the H^{1/2} circle basis.
GaussianMeasureSpec make_boundary_measure(int K, double decay_s);

struct ConductivityMeasureSpec {
  GaussianMeasureSpec log_field_spec;
  double M = 10.0;      // hard clamp: 1/M <= a <= M
  int m_smooth = 2;     // Sobolev smoothness tag of the sampled fields
};

// Log-Gaussian construction: KL eigenvalues (1+j)^{-decay} over the smooth
// domain basis, exponentiated and clamped into [1/M, M].
ConductivityMeasureSpec make_conductivity_measure(const Mesh& mesh, int kl_modes,
                                                  double decay, double M);

// f = sum_k sqrt(alpha_k) xi_k e_k with seeded standard normals; bit-identical
// per seed.
BoundaryFunction sample_boundary(const GaussianMeasureSpec& spec, std::uint64_t seed);

ConductivityField sample_conductivity(const ConductivityMeasureSpec& spec, const Mesh& mesh,
                                      std::uint64_t seed);

std::vector<BoundaryFunction> sample_boundary_batch(const GaussianMeasureSpec& spec, int n,
                                                    std::uint64_t base_seed);

struct CovarianceResult {
  Eigen::MatrixXd matrix;        // second moment in the orthonormal basis
  Eigen::VectorXd eigenvalues;   // non-increasing
  Eigen::MatrixXd eigenvectors;  // matching columns
  double residual = 0.0;         // max ||C v - lambda v||
};

CovarianceResult empirical_covariance(const std::vector<BoundaryFunction>& samples,
                                      const OrthoBasis& basis);

struct MonteCarloEstimate {
  double mean = 0.0;
  double std_error = 0.0;
  int n = 0;
};

MonteCarloEstimate mean_with_error(const Eigen::VectorXd& values);

// Monte-Carlo second moment of ||map(a)||^2 under the supplied norm.
template <class Sample, class Map, class Norm>
MonteCarloEstimate pushforward_second_moment(const std::vector<Sample>& samples,
                                             const Map& map, const Norm& norm) {
  Eigen::VectorXd vals(static_cast<Eigen::Index>(samples.size()));
  for (size_t i = 0; i < samples.size(); ++i) {
    const double v = norm(map(samples[i]));
    vals[static_cast<Eigen::Index>(i)] = v * v;
  }
  return mean_with_error(vals);
}

}  // namespace cald

#endif
