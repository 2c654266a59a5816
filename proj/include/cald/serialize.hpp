#ifndef CALD_SERIALIZE_HPP
#define CALD_SERIALIZE_HPP

#include "cald/deeponet.hpp"
#include "cald/fem.hpp"

#include <json.hpp>

#include <filesystem>
#include <string>
#include <vector>

// File formats of the repo. Coefficient vectors are JSON arrays in the
// normative slot order [const, 1c, 1s, 2c, 2s, ...]; this ordering also names
// the rows and columns of every DtN CSV.

namespace cald {

using Json = nlohmann::ordered_json;

Json to_json(const Eigen::VectorXd& v);
Json to_json(const Eigen::MatrixXd& m);
Eigen::VectorXd vector_from_json(const Json& j);
Eigen::MatrixXd matrix_from_json(const Json& j);

Json mesh_to_json(const Mesh& mesh);
Mesh mesh_from_json(const Json& j);

Json dtn_to_json(const DtNMatrix& m);
std::string dtn_to_csv(const DtNMatrix& m, const std::string& config_hash = "");

std::string mode_label(int slot);   // "const", "1c", "1s", ...

Json mlp_to_json(const MlpParams& theta);
MlpParams mlp_from_json(const Json& j);

// Checkpoint layout: {"d", "m", "activation", "layers": [{"w", "b"}...],
// "in_basis", "out_basis"} with bases named by kind (and family for domain
// bases).
Json deeponet_to_json(const DeepOnetParams& p);

std::string loss_trace_csv(const std::vector<TraceRow>& trace,
                           const std::string& config_hash = "");

// SHA-256 of a byte string / file, lowercase hex.
std::string sha256_hex(const std::string& bytes);
std::string sha256_file(const std::filesystem::path& path);

void write_text_file(const std::filesystem::path& path, const std::string& text);
std::string read_text_file(const std::filesystem::path& path);

// Minimal static SVG line plots (log-scale y), enough for loss curves and
// decomposition sweeps.
struct SvgSeries {
  std::string label;
  std::string color;
  std::vector<double> x, y;
  bool dashed = false;
};

std::string svg_line_plot(const std::string& title, const std::string& x_label,
                          const std::string& y_label, const std::vector<SvgSeries>& series,
                          bool log_x = false, bool log_y = true);

}  // namespace cald

#endif
