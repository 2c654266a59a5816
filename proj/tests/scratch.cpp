// Throwaway numeric probe used during development; replaced by real suites.
#include "cald/calderon.hpp"

#include <chrono>
#include <cstdio>

using namespace cald;

namespace {
double secs(std::chrono::steady_clock::time_point a, std::chrono::steady_clock::time_point b) {
  return std::chrono::duration<double>(b - a).count();
}
}  // namespace

int main() {
  const double h = 0.05;
  const int K = 16;
  Mesh mesh = generate_mesh(h);
  auto mu = make_boundary_measure(K, 2.0);
  auto t0 = std::chrono::steady_clock::now();

  FamilySpec fam;
  fam.kind = ConductivityFamily::lognormal;
  fam.eta = make_conductivity_measure(mesh, 16, 3.0, 10.0);
  CalderonDataset ds = generate_calderon_dataset(mesh, fam, K, 200, 11, 2);
  auto t1 = std::chrono::steady_clock::now();
  std::printf("dataset: %.1fs\n", secs(t0, t1));

  TrainHyper hyper;
  hyper.lr = 2e-3;
  hyper.batch = 32;
  hyper.epochs = 800;
  hyper.seed = 3;
  hyper.optimizer = Optimizer::adam;
  ArchSpec arch{16, 33 * 33, {64}, Activation::tanh};
  DirectSurrogate s = train_calderon_direct(mesh, ds, fam.eta.log_field_spec.basis, mu, arch,
                                            hyper, 40, 77, 5, 256);
  auto t2 = std::chrono::steady_clock::now();
  std::printf("direct: train=%.3e heldout_rel=%.4f eval_rel=%.4f  %.1fs\n",
              s.report.train_loss, s.report.heldout_relative, s.heldout_relative_eval,
              secs(t1, t2));

  // constant family for the linear-scaling oracle
  FamilySpec cf;
  cf.kind = ConductivityFamily::constant_range;
  cf.const_lo = 0.5;
  cf.const_hi = 2.0;
  CalderonDataset cds = generate_calderon_dataset(mesh, cf, K, 80, 13, 2);
  ArchSpec linarch{1, 33 * 33, {}, Activation::tanh};
  TrainHyper h2 = hyper;
  h2.epochs = 4000;
  h2.lr = 1e-2;
  h2.batch = 60;
  DirectSurrogate cs = train_calderon_direct(mesh, cds, make_domain_basis(mesh, 4), mu,
                                             linarch, h2, 20, 78, 5, 256);
  auto t3 = std::chrono::steady_clock::now();
  std::printf("const direct: rel=%.2e eval=%.2e  %.1fs\n", cs.report.heldout_relative,
              cs.heldout_relative_eval, secs(t2, t3));

  // inverse on two-layer radial family
  FamilySpec rf;
  rf.kind = ConductivityFamily::two_layer_radial;
  rf.r0 = 0.5;
  rf.inner_lo = 0.5;
  rf.inner_hi = 4.0;
  rf.outer = 1.0;
  CalderonDataset rds = generate_calderon_dataset(mesh, rf, K, 200, 17, 2);
  OrthoBasis shells = make_radial_shell_basis(mesh, {0.5});
  ArchSpec iarch{16, 2, {48}, Activation::tanh};
  TrainHyper h3 = hyper;
  h3.epochs = 6000;
  h3.lr = 3e-3;
  h3.batch = 160;
  InverseSurrogate inv = train_inverse(mesh, rds, shells, iarch, h3, 40, 5);
  auto t4 = std::chrono::steady_clock::now();
  std::printf("inverse radial: rel=%.4f worst=%.3e  %.1fs\n", inv.report.heldout_relative,
              inv.worst_error, secs(t3, t4));

  // inverse on constant family: recover c within 1%
  FamilySpec ccf = cf;
  CalderonDataset ccds = generate_calderon_dataset(mesh, ccf, K, 120, 19, 2);
  OrthoBasis const_basis = make_radial_shell_basis(mesh, {});
  ArchSpec carch{9, 1, {}, Activation::tanh};
  TrainHyper h4 = hyper;
  h4.epochs = 4000;
  h4.lr = 1e-2;
  h4.batch = 90;
  InverseSurrogate cinv = train_inverse(mesh, ccds, const_basis, carch, h4, 30, 5);
  auto t5 = std::chrono::steady_clock::now();
  // recovered constant = coord / ||1||_{L2} = coord / sqrt(pi-ish area)
  double worst_c_rel = 0.0;
  for (int p = 0; p < 30; ++p) {
    const int i = 90 + p;
    const double c_true = ccds.conductivities[i].nodal_values[0];
    const Eigen::VectorXd field = cinv.predict_field(ccds.dtn_orth[i]);
    const double c_rec = field[0];
    worst_c_rel = std::max(worst_c_rel, std::abs(c_rec - c_true) / c_true);
  }
  std::printf("inverse const: rel=%.2e worst_c_rel=%.2e  %.1fs\n",
              cinv.report.heldout_relative, worst_c_rel, secs(t4, t5));
  return 0;
}
