#include "cald/calderon.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>
#include <thread>

namespace cald {

WmuQuadrature make_wmu_quadrature(const GaussianMeasureSpec& mu, int n, std::uint64_t seed) {
  if (n < 2) throw std::invalid_argument("quadrature needs at least two samples");
  WmuQuadrature quad;
  quad.coords.resize(n, mu.basis.size);
  for (int p = 0; p < n; ++p) {
    const BoundaryFunction f = sample_boundary(mu, seed + static_cast<std::uint64_t>(p));
    quad.coords.row(p) = project(f.coeffs, mu.basis, mu.basis.size).transpose();
  }
  quad.gram = quad.coords.transpose() * quad.coords / static_cast<double>(n);
  return quad;
}

WmuNormEstimate wmu_norm(const Eigen::MatrixXd& bilinear, const WmuQuadrature& quad) {
  const int n = static_cast<int>(quad.coords.rows());
  if (n == 0) throw std::invalid_argument("empty quadrature batch");
  if (bilinear.rows() != bilinear.cols() || bilinear.rows() > quad.coords.cols()) {
    throw std::invalid_argument("bilinear form does not fit the quadrature coordinates");
  }
  const int kappa = static_cast<int>(bilinear.rows());
  const Eigen::MatrixXd X = quad.coords.leftCols(kappa);
  const Eigen::MatrixXd S = X * bilinear * X.transpose();

  WmuNormEstimate est;
  est.norm_sq = S.squaredNorm() / (static_cast<double>(n) * n);
  est.norm = std::sqrt(std::max(0.0, est.norm_sq));
  // First-order (Hajek projection) error of the two-slot U-statistic.
  Eigen::VectorXd row_means(n);
  for (int p = 0; p < n; ++p) row_means[p] = S.row(p).squaredNorm() / n;
  const MonteCarloEstimate rm = mean_with_error(row_means);
  est.se_sq = 2.0 * rm.std_error;
  return est;
}

LinearDtnFit fit_linear_map(const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y) {
  if (X.cols() == 0 || X.cols() != Y.cols()) {
    throw std::invalid_argument("fit needs matching nonempty sample columns");
  }
  LinearDtnFit fit;
  Eigen::MatrixXd G = X * X.transpose();
  Eigen::MatrixXd rhs = X * Y.transpose();   // solves G Theta' = X Y'
  Eigen::LLT<Eigen::MatrixXd> llt(G);
  if (llt.info() != Eigen::Success ||
      G.diagonal().minCoeff() <= 1e-14 * std::max(1.0, G.diagonal().maxCoeff())) {
    const double ridge = 1e-12 * std::max(1.0, G.trace() / G.rows());
    G.diagonal().array() += ridge;
    llt.compute(G);
    if (llt.info() != Eigen::Success) throw std::runtime_error("normal equations failed");
    fit.regularized = true;
  }
  fit.theta = llt.solve(rhs).transpose();
  fit.residual = (Y - fit.theta * X).squaredNorm() / static_cast<double>(X.cols());
  return fit;
}

LinearDtnFit linear_dtn_fit(const Mesh& mesh, const ConductivityField& a,
                            const GaussianMeasureSpec& mu, int d, int n_samples,
                            std::uint64_t seed) {
  const int K = order_for_modes(mu.basis.size);
  if (d > mu.basis.size) throw std::invalid_argument("d exceeds the boundary mode count");
  const Eigen::MatrixXd M =
      dtn_matrix(mesh, a, K, DtnBasis::orthonormal).entries;
  Eigen::MatrixXd X(d, n_samples), Y(d, n_samples);
  for (int p = 0; p < n_samples; ++p) {
    const BoundaryFunction f = sample_boundary(mu, seed + static_cast<std::uint64_t>(p));
    const Eigen::VectorXd phi = project(f.coeffs, mu.basis, mu.basis.size);
    X.col(p) = phi.head(d);
    Y.col(p) = (M * phi).head(d);
  }
  return fit_linear_map(X, Y);
}

namespace {

BoundednessWitness boundedness_from_ratios(Eigen::VectorXd ratios) {
  BoundednessWitness w;
  w.c_emp = ratios.maxCoeff();
  w.ratios = std::move(ratios);
  return w;
}

}  // namespace

BoundednessWitness empirical_boundedness(const Mesh& mesh, const ConductivityField& a,
                                         const GaussianMeasureSpec& mu, int n,
                                         std::uint64_t seed) {
  const DirichletSolver solver(mesh, a);
  Eigen::VectorXd ratios(n);
  for (int i = 0; i < n; ++i) {
    const BoundaryFunction f = sample_boundary(mu, seed + static_cast<std::uint64_t>(i));
    const BoundaryFunctional F = dtn_apply(solver, f);
    ratios[i] = h_minus_half_norm(F) / (a.a_hi * h_half_norm(f));
  }
  return boundedness_from_ratios(std::move(ratios));
}

BoundednessWitness empirical_boundedness(const Mesh& mesh, const ConductivityMeasureSpec& eta,
                                         const GaussianMeasureSpec& mu, int n,
                                         std::uint64_t seed) {
  Eigen::VectorXd ratios(n);
  for (int i = 0; i < n; ++i) {
    const std::uint64_t s = seed + static_cast<std::uint64_t>(i);
    const ConductivityField a = sample_conductivity(eta, mesh, s);
    const BoundaryFunction f = sample_boundary(mu, s ^ 0x9e3779b97f4a7c15ull);
    ratios[i] = h_minus_half_norm(dtn_apply(mesh, a, f)) / (a.a_hi * h_half_norm(f));
  }
  return boundedness_from_ratios(std::move(ratios));
}

ConductivityField sample_family(const FamilySpec& family, const Mesh& mesh,
                                std::uint64_t seed) {
  switch (family.kind) {
    case ConductivityFamily::lognormal:
      return sample_conductivity(family.eta, mesh, seed);
    case ConductivityFamily::constant_range: {
      std::mt19937_64 gen(seed);
      std::uniform_real_distribution<double> uni(family.const_lo, family.const_hi);
      return constant_conductivity(mesh, uni(gen));
    }
    case ConductivityFamily::two_layer_radial: {
      std::mt19937_64 gen(seed);
      std::uniform_real_distribution<double> uni(family.inner_lo, family.inner_hi);
      return radial_two_layer(mesh, uni(gen), family.outer, family.r0);
    }
  }
  throw std::logic_error("unknown conductivity family");
}

bool CalderonDataset::invariants_hold(double symmetry_tol) const {
  if (conductivities.size() != dtn_orth.size()) return false;
  for (size_t i = 0; i < conductivities.size(); ++i) {
    if (!conductivities[i].admissible()) return false;
    DtNMatrix m;
    m.entries = dtn_orth[i];
    m.basis_kind = DtnBasis::orthonormal;
    if (m.symmetry_defect() > symmetry_tol) return false;
  }
  return true;
}

CalderonDataset generate_calderon_dataset(const Mesh& mesh, const FamilySpec& family, int K,
                                          int n, std::uint64_t seed, int threads) {
  CalderonDataset ds;
  ds.provenance = {seed, mesh.h, K, n};
  ds.conductivities.resize(n);
  ds.dtn_orth.resize(n);

  const auto run = [&](int i0, int i1) {
    for (int i = i0; i < i1; ++i) {
      ds.conductivities[i] = sample_family(family, mesh, seed + static_cast<std::uint64_t>(i));
      ds.dtn_orth[i] =
          dtn_matrix(mesh, ds.conductivities[i], K, DtnBasis::orthonormal).entries;
    }
  };
  threads = std::max(1, std::min(threads, n));
  if (threads == 1) {
    run(0, n);
  } else {
    std::vector<std::thread> pool;
    const int chunk = (n + threads - 1) / threads;
    for (int t = 0; t < threads; ++t) {
      const int i0 = t * chunk, i1 = std::min(n, i0 + chunk);
      if (i0 < i1) pool.emplace_back(run, i0, i1);
    }
    for (auto& th : pool) th.join();
  }
  return ds;
}

// ---------------------------------------------------------------------------

BoundaryFunctional DtnSurrogate::apply(const BoundaryFunction& f) const {
  const Eigen::VectorXd y =
      mlp_forward(model.theta, project(f.coeffs, model.in_basis, model.d));
  return extend_dual(y, model.out_basis, model.m);
}

DtnSurrogate train_dtn_fixed_a(const Mesh& mesh, const ConductivityField& a,
                               const GaussianMeasureSpec& mu, const ArchSpec& arch,
                               const TrainHyper& hyper, int n_train, int n_heldout,
                               std::uint64_t data_seed, std::uint64_t init_seed) {
  const int K = order_for_modes(mu.basis.size);
  const int kappa = mu.basis.size;
  if (arch.d_lat < 1 || arch.d_lat > kappa || arch.m < 1 || arch.m > kappa) {
    throw std::invalid_argument("latent dimensions exceed the boundary mode count");
  }
  const Eigen::MatrixXd M = dtn_matrix(mesh, a, K, DtnBasis::orthonormal).entries;

  const int n = n_train + n_heldout;
  Eigen::MatrixXd coords(kappa, n);
  for (int p = 0; p < n; ++p) {
    const BoundaryFunction f = sample_boundary(mu, data_seed + static_cast<std::uint64_t>(p));
    coords.col(p) = project(f.coeffs, mu.basis, kappa);
  }
  const Eigen::MatrixXd targets = M * coords;   // dual coordinates of Lambda_a f

  const Eigen::MatrixXd Xtr = coords.topLeftCorner(arch.d_lat, n_train);
  const Eigen::MatrixXd Ytr = targets.topLeftCorner(arch.m, n_train);

  std::vector<int> widths{arch.d_lat};
  widths.insert(widths.end(), arch.widths.begin(), arch.widths.end());
  widths.push_back(arch.m);
  const MlpParams init = make_mlp(widths, arch.activation, init_seed);

  DtnSurrogate out;
  SquaredLoss loss;
  TrainResult tr = sgd_train(init, Xtr, Ytr, loss, hyper);

  out.model.d = arch.d_lat;
  out.model.m = arch.m;
  out.model.theta = tr.params;
  out.model.in_basis = mu.basis;
  out.model.out_basis = mu.basis;
  out.report.train_loss = tr.best_loss;
  out.report.trace = std::move(tr.trace);

  // Held-out dual-norm errors, output-projection tail included.
  out.report.heldout_errors.resize(n_heldout);
  double loss_sum = 0.0, norm_sum = 0.0, floor_sum = 0.0;
  const Eigen::MatrixXd section = M.topLeftCorner(arch.m, arch.d_lat);
  for (int p = 0; p < n_heldout; ++p) {
    const int col = n_train + p;
    const Eigen::VectorXd yfull = targets.col(col);
    const Eigen::VectorXd x = coords.col(col).head(arch.d_lat);
    const Eigen::VectorXd pred = mlp_forward(out.model.theta, x);
    const double tail_sq = yfull.tail(kappa - arch.m).squaredNorm();
    const double err_sq = (pred - yfull.head(arch.m)).squaredNorm() + tail_sq;
    const double floor_sq = (section * x - yfull.head(arch.m)).squaredNorm() + tail_sq;
    out.report.heldout_errors[p] = std::sqrt(err_sq);
    loss_sum += err_sq;
    floor_sum += floor_sq;
    norm_sum += yfull.squaredNorm();
  }
  out.report.heldout_loss = loss_sum / n_heldout;
  out.target_second_moment = norm_sum / n_heldout;
  out.report.heldout_relative = out.report.heldout_loss / out.target_second_moment;
  out.fem_floor = floor_sum / n_heldout;
  return out;
}

// ---------------------------------------------------------------------------

Eigen::MatrixXd DirectSurrogate::predict(const ConductivityField& a) const {
  const Eigen::VectorXd y =
      mlp_forward(theta, project(a.nodal_values, in_basis, d_lat));
  return Eigen::Map<const Eigen::MatrixXd>(y.data(), kappa, kappa);
}

DirectSurrogate train_calderon_direct(const Mesh& mesh, const CalderonDataset& dataset,
                                      const OrthoBasis& in_basis,
                                      const GaussianMeasureSpec& mu, const ArchSpec& arch,
                                      const TrainHyper& hyper, int n_heldout,
                                      std::uint64_t quad_seed, std::uint64_t init_seed,
                                      int wmu_samples) {
  const int n = static_cast<int>(dataset.conductivities.size());
  if (n_heldout < 1 || n_heldout >= n) throw std::invalid_argument("bad held-out split");
  const int kappa = static_cast<int>(dataset.dtn_orth.front().rows());
  const int m = kappa * kappa;
  if (arch.d_lat < 1 || arch.d_lat > in_basis.size) {
    throw std::invalid_argument("d_lat exceeds the domain basis size");
  }

  const int n_train = n - n_heldout;
  Eigen::MatrixXd X(arch.d_lat, n), Y(m, n);
  for (int i = 0; i < n; ++i) {
    X.col(i) = project(dataset.conductivities[i].nodal_values, in_basis, arch.d_lat);
    Y.col(i) = Eigen::Map<const Eigen::VectorXd>(dataset.dtn_orth[i].data(), m);
  }

  const WmuQuadrature quad = make_wmu_quadrature(mu, wmu_samples, quad_seed);
  const WmuQuadrature eval_quad =
      make_wmu_quadrature(mu, wmu_samples, quad_seed + 0x51ed2701ull);
  GramSandwichLoss loss(quad.gram.topLeftCorner(kappa, kappa));
  GramSandwichLoss eval_loss(eval_quad.gram.topLeftCorner(kappa, kappa));

  std::vector<int> widths{arch.d_lat};
  widths.insert(widths.end(), arch.widths.begin(), arch.widths.end());
  widths.push_back(m);
  TrainResult tr = sgd_train(make_mlp(widths, arch.activation, init_seed),
                             X.leftCols(n_train), Y.leftCols(n_train), loss, hyper);

  DirectSurrogate out;
  out.in_basis = in_basis;
  out.d_lat = arch.d_lat;
  out.theta = tr.params;
  out.kappa = kappa;
  out.report.train_loss = tr.best_loss;
  out.report.trace = std::move(tr.trace);

  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(m);
  out.report.heldout_errors.resize(n_heldout);
  double err_sum = 0.0, norm_sum = 0.0, err_eval = 0.0, norm_eval = 0.0;
  for (int p = 0; p < n_heldout; ++p) {
    const int i = n_train + p;
    const Eigen::VectorXd pred = mlp_forward(out.theta, X.col(i));
    const double e2 = loss.value(pred, Y.col(i));
    out.report.heldout_errors[p] = std::sqrt(std::max(0.0, e2));
    err_sum += e2;
    norm_sum += loss.value(Y.col(i), zero);
    err_eval += eval_loss.value(pred, Y.col(i));
    norm_eval += eval_loss.value(Y.col(i), zero);
  }
  out.report.heldout_loss = err_sum / n_heldout;
  out.report.heldout_relative = std::sqrt(err_sum / norm_sum);
  out.heldout_relative_eval = std::sqrt(err_eval / norm_eval);
  return out;
}

// ---------------------------------------------------------------------------

std::vector<std::pair<int, int>> shell_order(int kappa) {
  std::vector<std::pair<int, int>> order;
  order.reserve(static_cast<size_t>(kappa) * kappa);
  for (int s = 0; s < kappa; ++s) {
    for (int i = 0; i <= s; ++i) order.emplace_back(i, s);
    for (int j = s - 1; j >= 0; --j) order.emplace_back(s, j);
  }
  return order;
}

Eigen::VectorXd InverseSurrogate::features(const Eigen::MatrixXd& dtn_orth) const {
  if (dtn_orth.rows() < kappa || dtn_orth.cols() < kappa) {
    throw std::invalid_argument("matrix smaller than the surrogate's truncation");
  }
  const auto order = shell_order(kappa);
  Eigen::VectorXd x(d_lat);
  for (int i = 0; i < d_lat; ++i) x[i] = dtn_orth(order[i].first, order[i].second);
  return x;
}

Eigen::VectorXd InverseSurrogate::predict_coords(const Eigen::MatrixXd& dtn_orth) const {
  return mlp_forward(theta, features(dtn_orth));
}

Eigen::VectorXd InverseSurrogate::predict_field(const Eigen::MatrixXd& dtn_orth) const {
  return extend(predict_coords(dtn_orth), out_basis, m);
}

bool InverseSurrogate::flag_ood(const Eigen::MatrixXd& dtn_orth) const {
  const Eigen::VectorXd x = features(dtn_orth);
  double best = std::numeric_limits<double>::infinity();
  for (Eigen::Index c = 0; c < train_features.cols(); ++c) {
    best = std::min(best, (train_features.col(c) - x).norm());
  }
  return best > ood_threshold;
}

InverseSurrogate train_inverse(const Mesh& mesh, const CalderonDataset& dataset,
                               const OrthoBasis& out_basis, const ArchSpec& arch,
                               const TrainHyper& hyper, int n_heldout,
                               std::uint64_t init_seed) {
  const int n = static_cast<int>(dataset.conductivities.size());
  if (n_heldout < 1 || n_heldout >= n) throw std::invalid_argument("bad held-out split");
  const int kappa = static_cast<int>(dataset.dtn_orth.front().rows());
  if (arch.d_lat < 1 || arch.d_lat > kappa * kappa) {
    throw std::invalid_argument("d_lat exceeds the matrix entry count");
  }
  if (arch.m < 1 || arch.m > out_basis.size) {
    throw std::invalid_argument("m exceeds the output basis size");
  }
  const int n_train = n - n_heldout;

  InverseSurrogate out;
  out.kappa = kappa;
  out.d_lat = arch.d_lat;
  out.out_basis = out_basis;
  out.m = arch.m;

  Eigen::MatrixXd X(arch.d_lat, n), Y(arch.m, n);
  for (int i = 0; i < n; ++i) {
    X.col(i) = out.features(dataset.dtn_orth[i]);
    Y.col(i) = project(dataset.conductivities[i].nodal_values, out_basis, arch.m);
  }

  std::vector<int> widths{arch.d_lat};
  widths.insert(widths.end(), arch.widths.begin(), arch.widths.end());
  widths.push_back(arch.m);
  SquaredLoss loss;
  TrainResult tr = sgd_train(make_mlp(widths, arch.activation, init_seed),
                             X.leftCols(n_train), Y.leftCols(n_train), loss, hyper);
  out.theta = tr.params;
  out.report.train_loss = tr.best_loss;
  out.report.trace = std::move(tr.trace);

  out.train_features = X.leftCols(n_train);
  // OOD heuristic: three times the largest leave-one-out nearest-neighbor
  // distance seen in training.
  double worst_nn = 0.0;
  for (int i = 0; i < n_train; ++i) {
    double nn = std::numeric_limits<double>::infinity();
    for (int j = 0; j < n_train; ++j) {
      if (j != i) nn = std::min(nn, (X.col(i) - X.col(j)).norm());
    }
    if (n_train > 1) worst_nn = std::max(worst_nn, nn);
  }
  out.ood_threshold = 3.0 * worst_nn;

  out.report.heldout_errors.resize(n_heldout);
  double err_sum = 0.0, norm_sum = 0.0;
  for (int p = 0; p < n_heldout; ++p) {
    const int i = n_train + p;
    const Eigen::VectorXd pred = mlp_forward(out.theta, X.col(i));
    const Eigen::VectorXd field = extend(pred, out_basis, arch.m);
    const double err =
        space_norm(field - dataset.conductivities[i].nodal_values, out_basis);
    const double nrm = space_norm(dataset.conductivities[i].nodal_values, out_basis);
    out.report.heldout_errors[p] = err;
    err_sum += err * err;
    norm_sum += nrm * nrm;
    if (err > out.worst_error) {
      out.worst_error = err;
      out.worst_index = i;
      out.worst_true_coords = Y.col(i);
      out.worst_pred_coords = pred;
    }
  }
  out.report.heldout_loss = err_sum / n_heldout;
  out.report.heldout_relative = std::sqrt(err_sum / norm_sum);
  return out;
}

// ---------------------------------------------------------------------------

ErrorDecomposition error_decomposition(const Eigen::MatrixXd& theta_d,
                                       const Eigen::MatrixXd& dtn_orth_full,
                                       const GaussianMeasureSpec& mu, int d, double c_emp,
                                       double a_hi, int n_samples, std::uint64_t seed) {
  const int kappa = static_cast<int>(dtn_orth_full.rows());
  if (d < 1 || d > kappa) throw std::invalid_argument("d exceeds the section size");
  if (theta_d.rows() != d || theta_d.cols() != d) {
    throw std::invalid_argument("latent model must be d x d");
  }

  Eigen::VectorXd i1(n_samples), i2(n_samples), i3(n_samples), total(n_samples);
  const Eigen::MatrixXd section = dtn_orth_full.topLeftCorner(d, d);
  for (int p = 0; p < n_samples; ++p) {
    const BoundaryFunction f = sample_boundary(mu, seed + static_cast<std::uint64_t>(p));
    const Eigen::VectorXd phi = project(f.coeffs, mu.basis, kappa);
    const Eigen::VectorXd x = phi.head(d);
    const Eigen::VectorXd y = dtn_orth_full * phi;
    const Eigen::VectorXd model_head = theta_d * x;
    i1[p] = (model_head - section * x).squaredNorm();
    i2[p] = (dtn_orth_full.topRightCorner(d, kappa - d) * phi.tail(kappa - d)).squaredNorm();
    i3[p] = y.tail(kappa - d).squaredNorm();
    total[p] = (model_head - y.head(d)).squaredNorm() + i3[p];
  }

  ErrorDecomposition dec;
  dec.d = d;
  const MonteCarloEstimate e1 = mean_with_error(i1), e2 = mean_with_error(i2),
                           e3 = mean_with_error(i3), et = mean_with_error(total);
  dec.i1 = e1.mean;
  dec.i2 = e2.mean;
  dec.i3 = e3.mean;
  dec.i1_se = e1.std_error;
  dec.i2_se = e2.std_error;
  dec.i3_se = e3.std_error;
  dec.total_mse = et.mean;
  dec.total_se = et.std_error;
  dec.analytic_tail = mu.alphas.tail(kappa - d).sum();
  dec.i2_bound = c_emp * a_hi * dec.analytic_tail;
  return dec;
}

ErrorDecomposition error_decomposition(const Mesh& mesh, const ConductivityField& a,
                                       const Eigen::MatrixXd& theta_d,
                                       const GaussianMeasureSpec& mu, int d, int n_samples,
                                       std::uint64_t seed) {
  const int K = order_for_modes(mu.basis.size);
  const Eigen::MatrixXd M = dtn_matrix(mesh, a, K, DtnBasis::orthonormal).entries;
  const BoundednessWitness w = empirical_boundedness(mesh, a, mu, 200, seed ^ 0xabcdefull);
  return error_decomposition(theta_d, M, mu, d, w.c_emp, a.a_hi, n_samples, seed);
}

// ---------------------------------------------------------------------------

std::vector<ChebyshevRow> chebyshev_coverage(const Eigen::VectorXd& errors,
                                             const std::vector<double>& lambdas) {
  const int n = static_cast<int>(errors.size());
  std::vector<ChebyshevRow> rows;
  rows.reserve(lambdas.size());
  const MonteCarloEstimate sq = n > 0
                                    ? mean_with_error(errors.array().square().matrix())
                                    : MonteCarloEstimate{};
  for (double lambda : lambdas) {
    ChebyshevRow row;
    row.lambda = lambda;
    if (n > 0 && lambda > 0.0) {
      int count = 0;
      for (int i = 0; i < n; ++i) count += errors[i] > lambda ? 1 : 0;
      row.fraction = static_cast<double>(count) / n;
      row.bound = sq.mean / (lambda * lambda);
      const double se_frac = std::sqrt(row.fraction * (1.0 - row.fraction) / n);
      const double se_bound = sq.std_error / (lambda * lambda);
      row.se = se_frac + se_bound;
    }
    row.holds = row.fraction <= row.bound + 3.0 * row.se + 1e-12;
    rows.push_back(row);
  }
  return rows;
}

}  // namespace cald
