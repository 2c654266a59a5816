#include "cald/experiment.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <sstream>

namespace cald {

namespace fs = std::filesystem;

namespace {

void expect_keys(const Json& j, const char* ctx,
                 std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ConfigError(std::string(ctx) + " must be a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (std::none_of(allowed.begin(), allowed.end(),
                     [&](const char* k) { return it.key() == k; })) {
      throw ConfigError("unknown config key '" + it.key() + "' in " + ctx);
    }
  }
}

template <class T>
T get_or(const Json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const Json::exception&) {
    throw ConfigError(std::string("config key '") + key + "' has the wrong type");
  }
}

Pipeline parse_pipeline(const std::string& s) {
  if (s == "dtn_fixed") return Pipeline::dtn_fixed;
  if (s == "calderon_direct") return Pipeline::calderon_direct;
  if (s == "calderon_inverse") return Pipeline::calderon_inverse;
  if (s == "decomposition") return Pipeline::decomposition;
  throw ConfigError("unknown pipeline '" + s + "'");
}

std::string pipeline_name(Pipeline p) {
  switch (p) {
    case Pipeline::dtn_fixed: return "dtn_fixed";
    case Pipeline::calderon_direct: return "calderon_direct";
    case Pipeline::calderon_inverse: return "calderon_inverse";
    case Pipeline::decomposition: return "decomposition";
  }
  return "?";
}

class RunLock {
 public:
  explicit RunLock(const fs::path& dir) : path_(dir / ".lock") {
    if (fs::exists(path_)) {
      throw ConfigError("output directory is locked by another run: " + path_.string());
    }
    std::ofstream(path_) << "locked\n";
  }
  ~RunLock() {
    std::error_code ec;
    fs::remove(path_, ec);
  }

 private:
  fs::path path_;
};

struct ArtifactWriter {
  fs::path dir;
  Json hashes = Json::object();

  void write(const std::string& name, const std::string& content) {
    write_text_file(dir / name, content);
    hashes[name] = sha256_hex(content);
  }
};

fs::path ensure_output_dir(const ExperimentConfig& cfg) {
  if (cfg.output_dir.empty()) throw ConfigError("output_dir is required");
  fs::path dir(cfg.output_dir);
  fs::create_directories(dir);
  return dir;
}

Json coverage_to_json(const std::vector<ChebyshevRow>& rows) {
  Json j = Json::array();
  for (const auto& r : rows) {
    j.push_back({{"lambda", r.lambda},
                 {"fraction", r.fraction},
                 {"bound", r.bound},
                 {"se", r.se},
                 {"holds", r.holds}});
  }
  return j;
}

std::vector<ChebyshevRow> rms_coverage(const Eigen::VectorXd& errors) {
  if (errors.size() == 0) return {};
  const double rms = std::sqrt(errors.array().square().mean());
  if (!(rms > 0.0)) return chebyshev_coverage(errors, {1.0, 2.0, 3.0});
  return chebyshev_coverage(errors, {rms, 2.0 * rms, 3.0 * rms});
}

std::string loss_curve_svg(const std::vector<TraceRow>& trace) {
  SvgSeries loss{"loss", "#1f6fb2", {}, {}, false};
  SvgSeries best{"best_loss", "#c23b22", {}, {}, true};
  for (const auto& row : trace) {
    loss.x.push_back(row.iteration);
    loss.y.push_back(row.loss);
    best.x.push_back(row.iteration);
    best.y.push_back(row.best_loss);
  }
  return svg_line_plot("training loss", "iteration", "loss", {loss, best}, false, true);
}

}  // namespace

ExperimentConfig parse_config(const Json& j) {
  expect_keys(j, "config",
              {"mesh", "truncation", "mu", "eta", "pipeline", "arch", "hyper", "seeds",
               "output_dir", "conductivity", "dataset", "family", "decomposition",
               "wmu_samples"});
  ExperimentConfig cfg;

  if (j.contains("mesh")) {
    expect_keys(j["mesh"], "mesh", {"h"});
    cfg.mesh_h = get_or(j["mesh"], "h", cfg.mesh_h);
  }
  if (j.contains("truncation")) {
    expect_keys(j["truncation"], "truncation", {"K"});
    cfg.K = get_or(j["truncation"], "K", cfg.K);
  }
  cfg.mu_modes = modes_for_order(cfg.K);
  if (j.contains("mu")) {
    expect_keys(j["mu"], "mu", {"decay_s", "modes"});
    cfg.mu_decay_s = get_or(j["mu"], "decay_s", cfg.mu_decay_s);
    cfg.mu_modes = get_or(j["mu"], "modes", cfg.mu_modes);
  }
  if (j.contains("eta")) {
    expect_keys(j["eta"], "eta", {"M", "kl_modes", "decay"});
    cfg.eta_M = get_or(j["eta"], "M", cfg.eta_M);
    cfg.eta_kl_modes = get_or(j["eta"], "kl_modes", cfg.eta_kl_modes);
    cfg.eta_decay = get_or(j["eta"], "decay", cfg.eta_decay);
  }
  if (j.contains("pipeline")) cfg.pipeline = parse_pipeline(j["pipeline"].get<std::string>());
  if (j.contains("arch")) {
    expect_keys(j["arch"], "arch", {"d_lat", "m", "widths", "activation"});
    cfg.d_lat = get_or(j["arch"], "d_lat", cfg.d_lat);
    cfg.m = get_or(j["arch"], "m", cfg.m);
    cfg.widths = get_or(j["arch"], "widths", cfg.widths);
    const std::string act = get_or<std::string>(j["arch"], "activation", "tanh");
    if (act == "relu") {
      cfg.activation = Activation::relu;
    } else if (act == "tanh") {
      cfg.activation = Activation::tanh;
    } else {
      throw ConfigError("unknown activation '" + act + "'");
    }
  }
  if (j.contains("hyper")) {
    expect_keys(j["hyper"], "hyper", {"lr", "batch", "epochs", "optimizer"});
    cfg.lr = get_or(j["hyper"], "lr", cfg.lr);
    cfg.batch = get_or(j["hyper"], "batch", cfg.batch);
    cfg.epochs = get_or(j["hyper"], "epochs", cfg.epochs);
    const std::string opt = get_or<std::string>(j["hyper"], "optimizer", "adam");
    if (opt == "sgd") {
      cfg.optimizer = Optimizer::sgd;
    } else if (opt == "adam") {
      cfg.optimizer = Optimizer::adam;
    } else {
      throw ConfigError("unknown optimizer '" + opt + "'");
    }
  }
  if (j.contains("seeds")) {
    expect_keys(j["seeds"], "seeds", {"data", "init", "train"});
    cfg.seed_data = get_or<std::uint64_t>(j["seeds"], "data", cfg.seed_data);
    cfg.seed_init = get_or<std::uint64_t>(j["seeds"], "init", cfg.seed_init);
    cfg.seed_train = get_or<std::uint64_t>(j["seeds"], "train", cfg.seed_train);
  }
  cfg.output_dir = get_or<std::string>(j, "output_dir", "");
  if (j.contains("conductivity")) {
    expect_keys(j["conductivity"], "conductivity",
                {"kind", "value", "inner", "outer", "r0", "seed"});
    cfg.conductivity_kind = get_or<std::string>(j["conductivity"], "kind", "constant");
    cfg.conductivity_value = get_or(j["conductivity"], "value", cfg.conductivity_value);
    cfg.conductivity_inner = get_or(j["conductivity"], "inner", cfg.conductivity_inner);
    cfg.conductivity_outer = get_or(j["conductivity"], "outer", cfg.conductivity_outer);
    cfg.conductivity_r0 = get_or(j["conductivity"], "r0", cfg.conductivity_r0);
    cfg.conductivity_seed =
        get_or<std::uint64_t>(j["conductivity"], "seed", cfg.conductivity_seed);
  }
  if (j.contains("dataset")) {
    expect_keys(j["dataset"], "dataset", {"n_train", "n_heldout"});
    cfg.n_train = get_or(j["dataset"], "n_train", cfg.n_train);
    cfg.n_heldout = get_or(j["dataset"], "n_heldout", cfg.n_heldout);
  }
  if (j.contains("family")) {
    expect_keys(j["family"], "family",
                {"kind", "lo", "hi", "r0", "inner_lo", "inner_hi", "outer"});
    cfg.family = get_or<std::string>(j["family"], "kind", cfg.family);
    cfg.family_lo = get_or(j["family"], "lo", cfg.family_lo);
    cfg.family_hi = get_or(j["family"], "hi", cfg.family_hi);
    cfg.family_r0 = get_or(j["family"], "r0", cfg.family_r0);
    cfg.family_inner_lo = get_or(j["family"], "inner_lo", cfg.family_inner_lo);
    cfg.family_inner_hi = get_or(j["family"], "inner_hi", cfg.family_inner_hi);
    cfg.family_outer = get_or(j["family"], "outer", cfg.family_outer);
  }
  if (j.contains("decomposition")) {
    expect_keys(j["decomposition"], "decomposition", {"d_values", "samples"});
    cfg.d_values = get_or(j["decomposition"], "d_values", cfg.d_values);
    cfg.decomposition_samples =
        get_or(j["decomposition"], "samples", cfg.decomposition_samples);
  }
  cfg.wmu_samples = get_or(j, "wmu_samples", cfg.wmu_samples);

  // Cross-field preconditions, checked before any compute.
  if (!(cfg.mesh_h > 0.0 && cfg.mesh_h < 1.0)) throw ConfigError("mesh.h must lie in (0,1)");
  if (cfg.K < 1) throw ConfigError("truncation.K must be positive");
  if (cfg.mu_modes != modes_for_order(cfg.K)) {
    throw ConfigError("mu.modes must equal 2K+1");
  }
  if (cfg.eta_kl_modes < 1) throw ConfigError("eta.kl_modes must be positive");
  if (!(cfg.eta_M > 1.0)) throw ConfigError("eta.M must exceed 1");
  if (cfg.d_lat < 1 || cfg.m < 1) throw ConfigError("arch dimensions must be positive");
  if (!(cfg.lr > 0.0)) throw ConfigError("hyper.lr must be positive");
  if (cfg.batch < 1 || cfg.epochs < 0) throw ConfigError("bad hyper.batch/epochs");
  if (cfg.n_train < 1 || cfg.n_heldout < 1) throw ConfigError("dataset sizes must be positive");
  for (int d : cfg.d_values) {
    if (d < 1) throw ConfigError("decomposition d values must be positive");
  }
  if (cfg.pipeline == Pipeline::decomposition) {
    for (int d : cfg.d_values) {
      if (d > cfg.mu_modes) throw ConfigError("decomposition d exceeds 2K+1");
    }
  }
  if (cfg.wmu_samples < 2) throw ConfigError("wmu_samples must be at least 2");
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  Json j;
  try {
    j = Json::parse(read_text_file(path));
  } catch (const Json::exception& e) {
    throw ConfigError(std::string("config parse failure: ") + e.what());
  }
  return parse_config(j);
}

Json config_to_json(const ExperimentConfig& cfg) {
  Json j;
  j["mesh"] = {{"h", cfg.mesh_h}};
  j["truncation"] = {{"K", cfg.K}};
  j["mu"] = {{"decay_s", cfg.mu_decay_s}, {"modes", cfg.mu_modes}};
  j["eta"] = {{"M", cfg.eta_M}, {"kl_modes", cfg.eta_kl_modes}, {"decay", cfg.eta_decay}};
  j["pipeline"] = pipeline_name(cfg.pipeline);
  j["arch"] = {{"d_lat", cfg.d_lat},
               {"m", cfg.m},
               {"widths", cfg.widths},
               {"activation", cfg.activation == Activation::relu ? "relu" : "tanh"}};
  j["hyper"] = {{"lr", cfg.lr},
                {"batch", cfg.batch},
                {"epochs", cfg.epochs},
                {"optimizer", cfg.optimizer == Optimizer::adam ? "adam" : "sgd"}};
  j["seeds"] = {{"data", cfg.seed_data}, {"init", cfg.seed_init}, {"train", cfg.seed_train}};
  j["output_dir"] = cfg.output_dir;
  j["conductivity"] = {{"kind", cfg.conductivity_kind},
                       {"value", cfg.conductivity_value},
                       {"inner", cfg.conductivity_inner},
                       {"outer", cfg.conductivity_outer},
                       {"r0", cfg.conductivity_r0},
                       {"seed", cfg.conductivity_seed}};
  j["dataset"] = {{"n_train", cfg.n_train}, {"n_heldout", cfg.n_heldout}};
  j["family"] = {{"kind", cfg.family},
                 {"lo", cfg.family_lo},
                 {"hi", cfg.family_hi},
                 {"r0", cfg.family_r0},
                 {"inner_lo", cfg.family_inner_lo},
                 {"inner_hi", cfg.family_inner_hi},
                 {"outer", cfg.family_outer}};
  j["decomposition"] = {{"d_values", cfg.d_values}, {"samples", cfg.decomposition_samples}};
  j["wmu_samples"] = cfg.wmu_samples;
  return j;
}

std::string config_hash(const ExperimentConfig& cfg) {
  return sha256_hex(config_to_json(cfg).dump());
}

ExperimentConfig resolve_config(ExperimentConfig cfg, const CliOptions& opts) {
  if (opts.seed) cfg.seed_data = *opts.seed;
  if (opts.mesh_h) cfg.mesh_h = *opts.mesh_h;
  if (!(cfg.mesh_h > 0.0 && cfg.mesh_h < 1.0)) throw ConfigError("--mesh-h must lie in (0,1)");
  if (opts.dtn_basis != "raw" && opts.dtn_basis != "orthonormal") {
    throw ConfigError("--dtn-basis must be raw or orthonormal");
  }
  return cfg;
}

ConductivityField build_conductivity(const ExperimentConfig& cfg, const Mesh& mesh) {
  if (cfg.conductivity_kind == "constant") {
    return constant_conductivity(mesh, cfg.conductivity_value);
  }
  if (cfg.conductivity_kind == "two_layer_radial") {
    return radial_two_layer(mesh, cfg.conductivity_inner, cfg.conductivity_outer,
                            cfg.conductivity_r0);
  }
  if (cfg.conductivity_kind == "lognormal") {
    const auto eta = make_conductivity_measure(mesh, cfg.eta_kl_modes, cfg.eta_decay, cfg.eta_M);
    return sample_conductivity(eta, mesh, cfg.conductivity_seed);
  }
  throw ConfigError("unknown conductivity kind '" + cfg.conductivity_kind + "'");
}

FamilySpec build_family(const ExperimentConfig& cfg, const Mesh& mesh) {
  FamilySpec family;
  if (cfg.family == "lognormal") {
    family.kind = ConductivityFamily::lognormal;
    family.eta = make_conductivity_measure(mesh, cfg.eta_kl_modes, cfg.eta_decay, cfg.eta_M);
  } else if (cfg.family == "constant_range") {
    family.kind = ConductivityFamily::constant_range;
    family.const_lo = cfg.family_lo;
    family.const_hi = cfg.family_hi;
  } else if (cfg.family == "two_layer_radial") {
    family.kind = ConductivityFamily::two_layer_radial;
    family.r0 = cfg.family_r0;
    family.inner_lo = cfg.family_inner_lo;
    family.inner_hi = cfg.family_inner_hi;
    family.outer = cfg.family_outer;
  } else {
    throw ConfigError("unknown family kind '" + cfg.family + "'");
  }
  return family;
}

void cmd_dtn(const ExperimentConfig& cfg, const CliOptions& opts) {
  const fs::path dir = ensure_output_dir(cfg);
  RunLock lock(dir);
  const std::string hash = config_hash(cfg);

  const Mesh mesh = generate_mesh(cfg.mesh_h);
  if (4 * cfg.K > mesh.num_boundary()) {
    throw ConfigError("truncation.K exceeds the mesh aliasing limit for this h");
  }
  const ConductivityField a = build_conductivity(cfg, mesh);
  const DtnBasis basis =
      opts.dtn_basis == "orthonormal" ? DtnBasis::orthonormal : DtnBasis::raw_trig;
  const DtNMatrix M = dtn_matrix(mesh, a, cfg.K, basis, opts.threads);

  ArtifactWriter artifacts{dir};
  Json mesh_json = mesh_to_json(mesh);
  mesh_json["config_hash"] = hash;
  artifacts.write("mesh.json", mesh_json.dump(2) + "\n");
  artifacts.write("dtn.csv", dtn_to_csv(M, hash));
  Json dtn_json = dtn_to_json(M);
  dtn_json["config_hash"] = hash;
  artifacts.write("dtn.json", dtn_json.dump(2) + "\n");

  Json inv;
  inv["config_hash"] = hash;
  inv["symmetry_defect"] = M.symmetry_defect();
  inv["constant_mode_defect"] = M.constant_mode_defect();
  {
    const Eigen::MatrixXd body =
        0.5 * (M.entries.bottomRightCorner(M.entries.rows() - 1, M.entries.cols() - 1) +
               M.entries.bottomRightCorner(M.entries.rows() - 1, M.entries.cols() - 1)
                   .transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(body);
    inv["min_eigenvalue_nonconstant"] = eig.eigenvalues().minCoeff();
  }
  if (cfg.conductivity_kind == "constant" && cfg.conductivity_value == 1.0 &&
      basis == DtnBasis::raw_trig) {
    double worst = 0.0;
    for (int k = 1; k <= cfg.K; ++k) {
      const double exact = std::numbers::pi * k;
      worst = std::max(worst, std::abs(M.entries(2 * k - 1, 2 * k - 1) - exact) / exact);
      worst = std::max(worst, std::abs(M.entries(2 * k, 2 * k) - exact) / exact);
    }
    inv["unit_disk_spectrum_max_rel_err"] = worst;
  }
  artifacts.write("invariants.json", inv.dump(2) + "\n");

  Json report;
  report["config"] = config_to_json(cfg);
  report["config_hash"] = hash;
  report["dataset_checksums"] = Json::object();
  report["losses"] = Json::object();
  report["decomposition"] = nullptr;
  report["coverage"] = Json::array();
  report["artifacts"] = artifacts.hashes;
  write_text_file(dir / "report.json", report.dump(2) + "\n");
}

void cmd_sample(const ExperimentConfig& cfg, const CliOptions& opts, const std::string& what,
                int n) {
  (void)opts;
  if (n < 1) throw ConfigError("sample count must be positive");
  const fs::path dir = ensure_output_dir(cfg);
  RunLock lock(dir);
  const std::string hash = config_hash(cfg);

  std::ostringstream lines;
  lines << std::setprecision(17);
  if (what == "mu") {
    const auto mu = make_boundary_measure(cfg.K, cfg.mu_decay_s);
    for (int i = 0; i < n; ++i) {
      const BoundaryFunction f =
          sample_boundary(mu, cfg.seed_data + static_cast<std::uint64_t>(i));
      lines << to_json(f.coeffs).dump() << "\n";
    }
  } else if (what == "eta") {
    const Mesh mesh = generate_mesh(cfg.mesh_h);
    const auto eta = make_conductivity_measure(mesh, cfg.eta_kl_modes, cfg.eta_decay, cfg.eta_M);
    for (int i = 0; i < n; ++i) {
      const ConductivityField a =
          sample_conductivity(eta, mesh, cfg.seed_data + static_cast<std::uint64_t>(i));
      lines << to_json(a.kl_coeffs).dump() << "\n";
    }
  } else {
    throw ConfigError("sample target must be mu or eta");
  }

  ArtifactWriter artifacts{dir};
  artifacts.write("samples_" + what + ".jsonl", lines.str());
  Json manifest;
  manifest["config_hash"] = hash;
  manifest["what"] = what;
  manifest["n"] = n;
  manifest["seeds"] = {{"data", cfg.seed_data}};
  manifest["files"] = artifacts.hashes;
  write_text_file(dir / "manifest.json", manifest.dump(2) + "\n");
}

namespace {

std::string dataset_jsonl(const CalderonDataset& ds) {
  std::ostringstream lines;
  lines << std::setprecision(17);
  for (size_t i = 0; i < ds.conductivities.size(); ++i) {
    Json line;
    line["a_kl"] = to_json(ds.conductivities[i].kl_coeffs);
    line["a_bounds"] = {ds.conductivities[i].a_lo, ds.conductivities[i].a_hi};
    line["dtn"] = to_json(ds.dtn_orth[i]);
    lines << line.dump() << "\n";
  }
  return lines.str();
}

Json losses_json(const SurrogateReport& report) {
  return Json{{"train", report.train_loss},
              {"heldout", report.heldout_loss},
              {"heldout_relative", report.heldout_relative}};
}

}  // namespace

void cmd_train(const ExperimentConfig& cfg, const CliOptions& opts) {
  if (cfg.pipeline == Pipeline::decomposition) {
    cmd_decompose(cfg, opts);
    return;
  }
  const fs::path dir = ensure_output_dir(cfg);
  RunLock lock(dir);
  const std::string hash = config_hash(cfg);

  const Mesh mesh = generate_mesh(cfg.mesh_h);
  if (4 * cfg.K > mesh.num_boundary()) {
    throw ConfigError("truncation.K exceeds the mesh aliasing limit for this h");
  }
  const auto mu = make_boundary_measure(cfg.K, cfg.mu_decay_s);

  TrainHyper hyper;
  hyper.lr = cfg.lr;
  hyper.batch = cfg.batch;
  hyper.epochs = cfg.epochs;
  hyper.seed = cfg.seed_train;
  hyper.optimizer = cfg.optimizer;

  ArtifactWriter artifacts{dir};
  Json report;
  report["config"] = config_to_json(cfg);
  report["config_hash"] = hash;
  report["dataset_checksums"] = Json::object();
  report["decomposition"] = nullptr;

  if (cfg.pipeline == Pipeline::dtn_fixed) {
    const ConductivityField a = build_conductivity(cfg, mesh);
    ArchSpec arch{cfg.d_lat, cfg.m, cfg.widths, cfg.activation};
    if (arch.d_lat > cfg.mu_modes || arch.m > cfg.mu_modes) {
      throw ConfigError("arch dimensions exceed 2K+1 for the dtn_fixed pipeline");
    }
    const DtnSurrogate surr =
        train_dtn_fixed_a(mesh, a, mu, arch, hyper, cfg.n_train, cfg.n_heldout, cfg.seed_data,
                          cfg.seed_init);
    Json ckpt = deeponet_to_json(surr.model);
    ckpt["config_hash"] = hash;
    artifacts.write("checkpoint.json", ckpt.dump(2) + "\n");
    artifacts.write("loss_trace.csv", loss_trace_csv(surr.report.trace, hash));
    artifacts.write("loss_curve.svg", loss_curve_svg(surr.report.trace));
    report["losses"] = losses_json(surr.report);
    report["losses"]["target_second_moment"] = surr.target_second_moment;
    report["losses"]["fem_floor"] = surr.fem_floor;
    report["coverage"] = coverage_to_json(rms_coverage(surr.report.heldout_errors));
  } else {
    const FamilySpec family = build_family(cfg, mesh);
    const CalderonDataset dataset = generate_calderon_dataset(
        mesh, family, cfg.K, cfg.n_train + cfg.n_heldout, cfg.seed_data, opts.threads);
    const std::string ds_text = dataset_jsonl(dataset);
    write_text_file(dir / "dataset.jsonl", ds_text);
    report["dataset_checksums"]["dataset.jsonl"] = sha256_hex(ds_text);

    Json manifest;
    manifest["config_hash"] = hash;
    manifest["mesh_h"] = cfg.mesh_h;
    manifest["K"] = cfg.K;
    manifest["n"] = cfg.n_train + cfg.n_heldout;
    manifest["family"] = cfg.family;
    manifest["seeds"] = {{"data", cfg.seed_data}};
    manifest["files"] = {{"dataset.jsonl", sha256_hex(ds_text)}};
    write_text_file(dir / "manifest.json", manifest.dump(2) + "\n");

    if (cfg.pipeline == Pipeline::calderon_direct) {
      const OrthoBasis in_basis =
          cfg.family == "lognormal" && family.eta.log_field_spec.basis.size > 0
              ? family.eta.log_field_spec.basis
              : make_domain_basis(mesh, cfg.eta_kl_modes);
      ArchSpec arch{std::min(cfg.d_lat, in_basis.size), cfg.mu_modes * cfg.mu_modes,
                    cfg.widths, cfg.activation};
      const DirectSurrogate surr =
          train_calderon_direct(mesh, dataset, in_basis, mu, arch, hyper, cfg.n_heldout,
                                cfg.seed_data ^ 0x5eedu, cfg.seed_init, cfg.wmu_samples);
      Json ckpt = mlp_to_json(surr.theta);
      ckpt["d"] = surr.d_lat;
      ckpt["m"] = surr.kappa * surr.kappa;
      ckpt["in_basis"] = "l2_domain_kl:" + in_basis.family;
      ckpt["out_basis"] = "wmu_tensor:" + std::to_string(surr.kappa);
      ckpt["config_hash"] = hash;
      artifacts.write("checkpoint.json", ckpt.dump(2) + "\n");
      artifacts.write("loss_trace.csv", loss_trace_csv(surr.report.trace, hash));
      artifacts.write("loss_curve.svg", loss_curve_svg(surr.report.trace));
      report["losses"] = losses_json(surr.report);
      report["losses"]["heldout_relative_eval_quadrature"] = surr.heldout_relative_eval;
      report["coverage"] = coverage_to_json(rms_coverage(surr.report.heldout_errors));
    } else {
      OrthoBasis out_basis;
      if (cfg.family == "two_layer_radial") {
        out_basis = make_radial_shell_basis(mesh, {cfg.family_r0});
      } else if (cfg.family == "constant_range") {
        out_basis = make_radial_shell_basis(mesh, {});
      } else {
        out_basis = family.eta.log_field_spec.basis;
      }
      ArchSpec arch{std::min(cfg.d_lat, cfg.mu_modes * cfg.mu_modes),
                    std::min(cfg.m, out_basis.size), cfg.widths, cfg.activation};
      const InverseSurrogate surr =
          train_inverse(mesh, dataset, out_basis, arch, hyper, cfg.n_heldout, cfg.seed_init);
      Json ckpt = mlp_to_json(surr.theta);
      ckpt["d"] = surr.d_lat;
      ckpt["m"] = surr.m;
      ckpt["in_basis"] = "wmu_tensor_shell:" + std::to_string(surr.kappa);
      ckpt["out_basis"] = "l2_domain_kl:" + out_basis.family;
      ckpt["config_hash"] = hash;
      artifacts.write("checkpoint.json", ckpt.dump(2) + "\n");
      artifacts.write("loss_trace.csv", loss_trace_csv(surr.report.trace, hash));
      artifacts.write("loss_curve.svg", loss_curve_svg(surr.report.trace));
      report["losses"] = losses_json(surr.report);
      report["losses"]["worst_heldout_error"] = surr.worst_error;
      report["coverage"] = coverage_to_json(rms_coverage(surr.report.heldout_errors));
    }
  }

  report["artifacts"] = artifacts.hashes;
  write_text_file(dir / "report.json", report.dump(2) + "\n");
}

void cmd_decompose(const ExperimentConfig& cfg, const CliOptions& opts) {
  (void)opts;
  const fs::path dir = ensure_output_dir(cfg);
  RunLock lock(dir);
  const std::string hash = config_hash(cfg);

  const Mesh mesh = generate_mesh(cfg.mesh_h);
  if (4 * cfg.K > mesh.num_boundary()) {
    throw ConfigError("truncation.K exceeds the mesh aliasing limit for this h");
  }
  const auto mu = make_boundary_measure(cfg.K, cfg.mu_decay_s);
  for (int d : cfg.d_values) {
    if (d > cfg.mu_modes) throw ConfigError("decomposition d exceeds 2K+1");
  }
  const ConductivityField a = build_conductivity(cfg, mesh);
  const Eigen::MatrixXd M = dtn_matrix(mesh, a, cfg.K, DtnBasis::orthonormal).entries;
  const BoundednessWitness cw =
      empirical_boundedness(mesh, a, mu, 200, cfg.seed_data ^ 0xabcdefull);

  std::ostringstream csv;
  csv << std::setprecision(17);
  csv << "# config_hash=" << hash << "\n";
  csv << "d,i1,i2,i3,tail,total,i2_bound\n";
  Json dec;
  dec["d"] = Json::array();
  dec["i1"] = Json::array();
  dec["i2"] = Json::array();
  dec["i3"] = Json::array();
  dec["tail"] = Json::array();
  SvgSeries s1{"I1", "#1f6fb2", {}, {}, false}, s2{"I2", "#c23b22", {}, {}, false},
      s3{"I3", "#2f8f4e", {}, {}, false}, st{"tail", "#777777", {}, {}, true};

  for (int d : cfg.d_values) {
    // The exact finite section serves as the latent reference model.
    const Eigen::MatrixXd theta = M.topLeftCorner(d, d);
    const ErrorDecomposition e = error_decomposition(
        theta, M, mu, d, cw.c_emp, a.a_hi, cfg.decomposition_samples, cfg.seed_data);
    csv << e.d << "," << e.i1 << "," << e.i2 << "," << e.i3 << "," << e.analytic_tail << ","
        << e.total_mse << "," << e.i2_bound << "\n";
    dec["d"].push_back(e.d);
    dec["i1"].push_back(e.i1);
    dec["i2"].push_back(e.i2);
    dec["i3"].push_back(e.i3);
    dec["tail"].push_back(e.analytic_tail);
    s1.x.push_back(d);
    s1.y.push_back(std::max(e.i1, 1e-18));
    s2.x.push_back(d);
    s2.y.push_back(std::max(e.i2, 1e-18));
    s3.x.push_back(d);
    s3.y.push_back(std::max(e.i3, 1e-18));
    st.x.push_back(d);
    st.y.push_back(std::max(e.analytic_tail, 1e-18));
  }

  ArtifactWriter artifacts{dir};
  artifacts.write("decomposition.csv", csv.str());
  artifacts.write("decomposition.svg",
                  svg_line_plot("error decomposition", "d_lat", "mean squared error",
                                {s1, s2, s3, st}, false, true));

  Json report;
  report["config"] = config_to_json(cfg);
  report["config_hash"] = hash;
  report["dataset_checksums"] = Json::object();
  report["losses"] = Json::object();
  report["decomposition"] = dec;
  report["coverage"] = Json::array();
  report["artifacts"] = artifacts.hashes;
  write_text_file(dir / "report.json", report.dump(2) + "\n");
}

void cmd_report(const std::vector<std::string>& run_dirs, const std::string& out_path) {
  if (run_dirs.empty()) throw ConfigError("report needs at least one run directory");

  std::ostringstream csv, md;
  csv << "run,pipeline,config_hash,train_loss,heldout_loss,heldout_relative\n";
  md << "| run | pipeline | config hash | train | heldout | relative |\n";
  md << "|---|---|---|---|---|---|\n";

  std::vector<std::string> problems;
  for (const auto& rd : run_dirs) {
    const fs::path dir(rd);
    Json report;
    try {
      report = Json::parse(read_text_file(dir / "report.json"));
    } catch (const std::exception& e) {
      problems.push_back(rd + ": unreadable report (" + e.what() + ")");
      continue;
    }
    const auto check_files = [&](const Json& files) {
      for (auto it = files.begin(); it != files.end(); ++it) {
        const fs::path f = dir / it.key();
        std::string actual;
        try {
          actual = sha256_file(f);
        } catch (const std::exception&) {
          problems.push_back(rd + ": missing file " + it.key());
          continue;
        }
        if (actual != it.value().get<std::string>()) {
          problems.push_back(rd + ": checksum mismatch for " + it.key());
        }
      }
    };
    if (report.contains("dataset_checksums")) check_files(report["dataset_checksums"]);
    if (report.contains("artifacts")) check_files(report["artifacts"]);

    const Json losses = report.value("losses", Json::object());
    const std::string pipeline =
        report.contains("config") ? report["config"].value("pipeline", "?") : "?";
    const auto fmt = [&](const char* key) {
      if (!losses.contains(key)) return std::string("-");
      std::ostringstream v;
      v << std::setprecision(6) << losses[key].get<double>();
      return v.str();
    };
    csv << rd << "," << pipeline << "," << report.value("config_hash", "") << ","
        << fmt("train") << "," << fmt("heldout") << "," << fmt("heldout_relative") << "\n";
    md << "| " << rd << " | " << pipeline << " | " << report.value("config_hash", "").substr(0, 12)
       << " | " << fmt("train") << " | " << fmt("heldout") << " | " << fmt("heldout_relative")
       << " |\n";
  }

  if (!problems.empty()) {
    std::string msg = "integrity check failed:";
    for (const auto& p : problems) msg += "\n  " + p;
    throw IntegrityError(msg);
  }

  const fs::path out(out_path);
  fs::create_directories(out);
  write_text_file(out / "aggregate.csv", csv.str());
  write_text_file(out / "summary.md", md.str());
}

}  // namespace cald
