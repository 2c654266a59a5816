#ifndef CALD_CALDERON_HPP
#define CALD_CALDERON_HPP

#include "cald/deeponet.hpp"
#include "cald/fem.hpp"
#include "cald/measures.hpp"

#include <cstdint>
#include <utility>
#include <vector>

// The three operator-learning pipelines (fixed-conductivity DtN surrogate,
// direct and inverse Calderon surrogates), the Monte-Carlo bilinear-form norm
// they are measured in, the three-term error decomposition, and Chebyshev
// coverage reporting.

namespace cald {

// Fixed batch of boundary samples defining the empirical mu (x) mu quadrature.
struct WmuQuadrature {
  Eigen::MatrixXd coords;  // n x kappa, row p = orthonormal coordinates of f_p
  Eigen::MatrixXd gram;    // coords' coords / n
};

WmuQuadrature make_wmu_quadrature(const GaussianMeasureSpec& mu, int n, std::uint64_t seed);

struct WmuNormEstimate {
  double norm = 0.0;      // sqrt of the double-integral estimate
  double norm_sq = 0.0;   // the double-integral estimate itself
  double se_sq = 0.0;     // first-order standard error of norm_sq
};

// U-statistic over all ordered sample pairs of |B(f_p, f_q)|^2 for a bilinear
// form given by its orthonormal-basis matrix.
WmuNormEstimate wmu_norm(const Eigen::MatrixXd& bilinear, const WmuQuadrature& quad);

struct LinearDtnFit {
  Eigen::MatrixXd theta;      // d x d
  double residual = 0.0;      // mean squared fit residual
  bool regularized = false;   // rank-deficient design handled by ridge
};

// Least squares for Y ~ Theta X, columns are samples.
LinearDtnFit fit_linear_map(const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y);

// Closed-form fit of the projected DtN action from mu samples; equals the
// finite section of the Riesz-composed operator up to solver tolerance.
LinearDtnFit linear_dtn_fit(const Mesh& mesh, const ConductivityField& a,
                            const GaussianMeasureSpec& mu, int d, int n_samples,
                            std::uint64_t seed);

struct BoundednessWitness {
  double c_emp = 0.0;        // sup ratio ||Lambda_a f||_{-1/2} / (a_hi ||f||_{1/2})
  Eigen::VectorXd ratios;
};

BoundednessWitness empirical_boundedness(const Mesh& mesh, const ConductivityField& a,
                                         const GaussianMeasureSpec& mu, int n,
                                         std::uint64_t seed);
BoundednessWitness empirical_boundedness(const Mesh& mesh, const ConductivityMeasureSpec& eta,
                                         const GaussianMeasureSpec& mu, int n,
                                         std::uint64_t seed);

// Conductivity families the pipelines train on.
enum class ConductivityFamily { lognormal, constant_range, two_layer_radial };

struct FamilySpec {
  ConductivityFamily kind = ConductivityFamily::lognormal;
  ConductivityMeasureSpec eta;            // lognormal
  double const_lo = 0.5, const_hi = 2.0;  // constant_range
  double r0 = 0.5;                        // two_layer_radial interface
  double inner_lo = 0.5, inner_hi = 4.0;  // two_layer_radial inner value range
  double outer = 1.0;
};

ConductivityField sample_family(const FamilySpec& family, const Mesh& mesh,
                                std::uint64_t seed);

struct DatasetProvenance {
  std::uint64_t data_seed = 0;
  double mesh_h = 0.0;
  int K = 0;
  int n = 0;
};

struct CalderonDataset {
  std::vector<ConductivityField> conductivities;
  std::vector<Eigen::MatrixXd> dtn_orth;   // orthonormal-basis DtN entries
  DatasetProvenance provenance;

  // Both per-sample invariants: Y_M membership and bilinear-form symmetry.
  bool invariants_hold(double symmetry_tol = 1e-8) const;
};

CalderonDataset generate_calderon_dataset(const Mesh& mesh, const FamilySpec& family, int K,
                                          int n, std::uint64_t seed, int threads = 1);

struct ArchSpec {
  int d_lat = 0;
  int m = 0;
  std::vector<int> widths;   // hidden widths; empty = linear model
  Activation activation = Activation::tanh;
};

struct SurrogateReport {
  double train_loss = 0.0;           // best training loss reached
  double heldout_loss = 0.0;         // mean squared error in the target norm
  double heldout_relative = 0.0;     // see each pipeline for the convention
  Eigen::VectorXd heldout_errors;    // per-sample norm errors
  std::vector<TraceRow> trace;
};

// ---------------------------------------------------------------------------
// Fixed-conductivity DtN surrogate: H^{1/2} data to H^{-1/2} functionals.
// heldout_relative = mean squared dual-norm error / mean squared dual norm of
// the targets.
struct DtnSurrogate {
  DeepOnetParams model;
  SurrogateReport report;
  double target_second_moment = 0.0;
  double fem_floor = 0.0;   // heldout loss of the assembled FEM section itself

  BoundaryFunctional apply(const BoundaryFunction& f) const;
};

DtnSurrogate train_dtn_fixed_a(const Mesh& mesh, const ConductivityField& a,
                               const GaussianMeasureSpec& mu, const ArchSpec& arch,
                               const TrainHyper& hyper, int n_train, int n_heldout,
                               std::uint64_t data_seed, std::uint64_t init_seed);

// ---------------------------------------------------------------------------
// Direct Calderon surrogate: conductivity to its bilinear-form representative.
// heldout_relative is the RMS ratio of W_mu errors to W_mu target norms on a
// disjoint evaluation quadrature.
struct DirectSurrogate {
  OrthoBasis in_basis;
  int d_lat = 0;
  MlpParams theta;
  int kappa = 0;
  SurrogateReport report;
  double heldout_relative_eval = 0.0;   // disjoint-quadrature re-check

  Eigen::MatrixXd predict(const ConductivityField& a) const;
};

DirectSurrogate train_calderon_direct(const Mesh& mesh, const CalderonDataset& dataset,
                                      const OrthoBasis& in_basis,
                                      const GaussianMeasureSpec& mu, const ArchSpec& arch,
                                      const TrainHyper& hyper, int n_heldout,
                                      std::uint64_t quad_seed, std::uint64_t init_seed,
                                      int wmu_samples = 256);

// ---------------------------------------------------------------------------
// Inverse Calderon surrogate: bilinear-form entries to the conductivity.
// heldout_relative is the RMS ratio of L2(Omega) field errors to field norms.
struct InverseSurrogate {
  int kappa = 0;
  int d_lat = 0;   // number of shell-ordered matrix entries fed to the net
  MlpParams theta;
  OrthoBasis out_basis;
  int m = 0;
  SurrogateReport report;
  double ood_threshold = 0.0;
  Eigen::MatrixXd train_features;   // columns; retained for the OOD heuristic
  int worst_index = -1;
  double worst_error = 0.0;
  Eigen::VectorXd worst_true_coords, worst_pred_coords;

  Eigen::VectorXd features(const Eigen::MatrixXd& dtn_orth) const;
  Eigen::VectorXd predict_coords(const Eigen::MatrixXd& dtn_orth) const;
  Eigen::VectorXd predict_field(const Eigen::MatrixXd& dtn_orth) const;   // nodal values
  // Distance-to-training-set heuristic; accuracy holds only on-distribution.
  bool flag_ood(const Eigen::MatrixXd& dtn_orth) const;
};

// Entry (i,j) visiting order that grows the top-left corner one L-shaped shell
// at a time, so a prefix of length s^2 is exactly the s x s block.
std::vector<std::pair<int, int>> shell_order(int kappa);

InverseSurrogate train_inverse(const Mesh& mesh, const CalderonDataset& dataset,
                               const OrthoBasis& out_basis, const ArchSpec& arch,
                               const TrainHyper& hyper, int n_heldout,
                               std::uint64_t init_seed);

// ---------------------------------------------------------------------------
// Three-term error decomposition of a linear latent model against the finite
// section of the Riesz-composed DtN operator.
struct ErrorDecomposition {
  int d = 0;
  double i1 = 0.0, i2 = 0.0, i3 = 0.0;
  double i1_se = 0.0, i2_se = 0.0, i3_se = 0.0;
  double total_mse = 0.0, total_se = 0.0;
  double analytic_tail = 0.0;   // sum of alphas past d
  double i2_bound = 0.0;        // c_emp * a_hi * analytic_tail

  bool sound() const {
    return total_mse <= 3.0 * (i1 + i2 + i3) + 3.0 * (i1_se + i2_se + i3_se) + 1e-12;
  }
};

ErrorDecomposition error_decomposition(const Eigen::MatrixXd& theta_d,
                                       const Eigen::MatrixXd& dtn_orth_full,
                                       const GaussianMeasureSpec& mu, int d, double c_emp,
                                       double a_hi, int n_samples, std::uint64_t seed);

ErrorDecomposition error_decomposition(const Mesh& mesh, const ConductivityField& a,
                                       const Eigen::MatrixXd& theta_d,
                                       const GaussianMeasureSpec& mu, int d, int n_samples,
                                       std::uint64_t seed);

// ---------------------------------------------------------------------------
struct ChebyshevRow {
  double lambda = 0.0;
  double fraction = 0.0;   // empirical exceedance
  double bound = 0.0;      // mean(err^2) / lambda^2
  double se = 0.0;         // combined standard error
  bool holds = false;      // fraction <= bound + 3 se
};

std::vector<ChebyshevRow> chebyshev_coverage(const Eigen::VectorXd& errors,
                                             const std::vector<double>& lambdas);

}  // namespace cald

#endif
