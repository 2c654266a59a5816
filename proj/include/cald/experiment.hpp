#ifndef CALD_EXPERIMENT_HPP
#define CALD_EXPERIMENT_HPP

#include "cald/calderon.hpp"
#include "cald/serialize.hpp"

#include <optional>
#include <string>
#include <vector>

// Experiment runner behind the CLI: strict JSON config, deterministic
// artifact emission, and integrity-checked report aggregation.

namespace cald {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IntegrityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Pipeline { dtn_fixed, calderon_direct, calderon_inverse, decomposition };

struct ExperimentConfig {
  double mesh_h = 0.05;
  int K = 16;

  double mu_decay_s = 2.0;
  int mu_modes = 33;

  double eta_M = 10.0;
  int eta_kl_modes = 16;
  double eta_decay = 3.0;

  Pipeline pipeline = Pipeline::dtn_fixed;

  // arch
  int d_lat = 33;
  int m = 33;
  std::vector<int> widths;
  Activation activation = Activation::tanh;

  // hyper
  double lr = 1e-3;
  int batch = 64;
  int epochs = 200;
  Optimizer optimizer = Optimizer::adam;

  std::uint64_t seed_data = 1;
  std::uint64_t seed_init = 2;
  std::uint64_t seed_train = 3;

  std::string output_dir;

  // conductivity block (dtn, dtn_fixed, decomposition)
  std::string conductivity_kind = "constant";   // constant | two_layer_radial | lognormal
  double conductivity_value = 1.0;
  double conductivity_inner = 4.0;
  double conductivity_outer = 1.0;
  double conductivity_r0 = 0.5;
  std::uint64_t conductivity_seed = 7;

  // dataset block
  int n_train = 256;
  int n_heldout = 64;

  // family block (calderon_direct / calderon_inverse)
  std::string family = "lognormal";   // lognormal | constant_range | two_layer_radial
  double family_lo = 0.5, family_hi = 2.0;
  double family_r0 = 0.5;
  double family_inner_lo = 0.5, family_inner_hi = 4.0;
  double family_outer = 1.0;

  // decomposition block
  std::vector<int> d_values{4, 8, 16, 32};
  int decomposition_samples = 4000;

  int wmu_samples = 256;
};

// Strict parse: unknown keys anywhere are errors; missing keys fall back to
// the documented defaults.
ExperimentConfig parse_config(const Json& j);
ExperimentConfig load_config(const std::string& path);
Json config_to_json(const ExperimentConfig& cfg);
std::string config_hash(const ExperimentConfig& cfg);

struct CliOptions {
  std::optional<std::uint64_t> seed;    // overrides seeds.data
  std::optional<double> mesh_h;         // overrides mesh.h
  int threads = 1;
  bool dry_run = false;
  std::string dtn_basis = "raw";        // raw | orthonormal
};

ExperimentConfig resolve_config(ExperimentConfig cfg, const CliOptions& opts);

// Exit codes: 0 success, 2 config error, 3 numerical failure, 4 integrity
// failure (mapped by the CLI wrapper from the exceptions these throw).
void cmd_dtn(const ExperimentConfig& cfg, const CliOptions& opts);
void cmd_sample(const ExperimentConfig& cfg, const CliOptions& opts, const std::string& what,
                int n);
void cmd_train(const ExperimentConfig& cfg, const CliOptions& opts);
void cmd_decompose(const ExperimentConfig& cfg, const CliOptions& opts);
void cmd_report(const std::vector<std::string>& run_dirs, const std::string& out_path);

ConductivityField build_conductivity(const ExperimentConfig& cfg, const Mesh& mesh);
FamilySpec build_family(const ExperimentConfig& cfg, const Mesh& mesh);

}  // namespace cald

#endif
