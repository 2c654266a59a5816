// Experiment runner for the Dirichlet-to-Neumann / Calderon surrogate library.
//
// Subcommands: dtn, sample, train, decompose, report.
// Exit codes: 0 success, 2 config error, 3 numerical failure, 4 integrity
// failure.

#include "cald/experiment.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <exception>
#include <string>
#include <vector>

namespace {

int run(int argc, char** argv) {
  CLI::App app{"DtN operators and Calderon surrogates on the unit disk"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  cald::CliOptions opts;
  std::uint64_t seed_override = 0;
  double mesh_h_override = 0.0;
  bool have_seed = false, have_h = false;

  app.add_option("--config", config_path, "experiment config JSON")->expected(1);
  app.add_flag("--dry-run", opts.dry_run, "validate and print the resolved config");
  app.add_option("--threads", opts.threads, "worker threads for solves and datasets")
      ->check(CLI::PositiveNumber);
  auto* seed_opt = app.add_option("--seed", seed_override, "override seeds.data");
  auto* h_opt = app.add_option("--mesh-h", mesh_h_override, "override mesh.h");

  auto* dtn = app.add_subcommand("dtn", "assemble a DtN matrix and its invariants report");
  dtn->fallthrough();
  dtn->add_option("--dtn-basis", opts.dtn_basis, "raw | orthonormal");

  auto* sample = app.add_subcommand("sample", "draw measure samples to JSON-lines");
  sample->fallthrough();
  std::string what = "mu";
  int n_samples = 16;
  sample->add_option("--what", what, "mu | eta");
  sample->add_option("--n", n_samples, "sample count")->check(CLI::PositiveNumber);

  auto* train = app.add_subcommand("train", "run the configured pipeline");
  train->fallthrough();
  auto* decompose = app.add_subcommand("decompose", "error-decomposition sweep over d_lat");
  decompose->fallthrough();

  auto* report = app.add_subcommand("report", "aggregate completed runs");
  report->fallthrough();
  std::vector<std::string> run_dirs;
  std::string report_out = ".";
  report->add_option("runs", run_dirs, "run directories");
  report->add_option("--out", report_out, "output directory for the aggregate");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  have_seed = seed_opt->count() > 0;
  have_h = h_opt->count() > 0;
  if (have_seed) opts.seed = seed_override;
  if (have_h) opts.mesh_h = mesh_h_override;

  if (report->parsed()) {
    cald::cmd_report(run_dirs, report_out);
    return 0;
  }

  if (config_path.empty()) throw cald::ConfigError("--config is required");
  cald::ExperimentConfig cfg = cald::resolve_config(cald::load_config(config_path), opts);

  if (opts.dry_run) {
    std::printf("%s\n", cald::config_to_json(cfg).dump(2).c_str());
    return 0;
  }

  if (dtn->parsed()) {
    cald::cmd_dtn(cfg, opts);
  } else if (sample->parsed()) {
    cald::cmd_sample(cfg, opts, what, n_samples);
  } else if (train->parsed()) {
    cald::cmd_train(cfg, opts);
  } else if (decompose->parsed()) {
    cald::cmd_decompose(cfg, opts);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const cald::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const cald::IntegrityError& e) {
    std::fprintf(stderr, "integrity error: %s\n", e.what());
    return 4;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "numerical failure: %s\n", e.what());
    return 3;
  }
}
