#include "cald/serialize.hpp"

#include <array>
#include <numbers>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>

namespace cald {

Json to_json(const Eigen::VectorXd& v) {
  Json j = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) j.push_back(v[i]);
  return j;
}

Json to_json(const Eigen::MatrixXd& m) {
  Json j = Json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    Json row = Json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    j.push_back(std::move(row));
  }
  return j;
}

Eigen::VectorXd vector_from_json(const Json& j) {
  Eigen::VectorXd v(j.size());
  for (size_t i = 0; i < j.size(); ++i) v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
  return v;
}

Eigen::MatrixXd matrix_from_json(const Json& j) {
  const Eigen::Index rows = static_cast<Eigen::Index>(j.size());
  const Eigen::Index cols = rows > 0 ? static_cast<Eigen::Index>(j[0].size()) : 0;
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = j[r][c].get<double>();
  }
  return m;
}

Json mesh_to_json(const Mesh& mesh) {
  Json j;
  Json verts = Json::array();
  for (int v = 0; v < mesh.num_vertices(); ++v) {
    verts.push_back({mesh.vertices(v, 0), mesh.vertices(v, 1)});
  }
  Json tris = Json::array();
  for (int t = 0; t < mesh.num_triangles(); ++t) {
    tris.push_back({mesh.triangles(t, 0), mesh.triangles(t, 1), mesh.triangles(t, 2)});
  }
  j["vertices"] = std::move(verts);
  j["triangles"] = std::move(tris);
  j["boundary"] = mesh.boundary;
  j["h"] = mesh.h;
  return j;
}

Mesh mesh_from_json(const Json& j) {
  Mesh mesh;
  const auto& verts = j.at("vertices");
  mesh.vertices.resize(static_cast<Eigen::Index>(verts.size()), 2);
  for (size_t v = 0; v < verts.size(); ++v) {
    mesh.vertices(static_cast<Eigen::Index>(v), 0) = verts[v][0].get<double>();
    mesh.vertices(static_cast<Eigen::Index>(v), 1) = verts[v][1].get<double>();
  }
  const auto& tris = j.at("triangles");
  mesh.triangles.resize(static_cast<Eigen::Index>(tris.size()), 3);
  for (size_t t = 0; t < tris.size(); ++t) {
    for (int c = 0; c < 3; ++c) {
      mesh.triangles(static_cast<Eigen::Index>(t), c) = tris[t][c].get<int>();
    }
  }
  mesh.boundary = j.at("boundary").get<std::vector<int>>();
  mesh.h = j.at("h").get<double>();
  mesh.boundary_angles.resize(static_cast<Eigen::Index>(mesh.boundary.size()));
  for (size_t i = 0; i < mesh.boundary.size(); ++i) {
    const auto v = mesh.boundary[i];
    mesh.boundary_angles[static_cast<Eigen::Index>(i)] =
        std::atan2(mesh.vertices(v, 1), mesh.vertices(v, 0));
    if (mesh.boundary_angles[static_cast<Eigen::Index>(i)] < 0.0) {
      mesh.boundary_angles[static_cast<Eigen::Index>(i)] += 2.0 * std::numbers::pi;
    }
  }
  return mesh;
}

std::string mode_label(int slot) {
  if (slot == 0) return "const";
  const int k = mode_frequency(slot);
  return std::to_string(k) + (slot % 2 == 1 ? "c" : "s");
}

Json dtn_to_json(const DtNMatrix& m) {
  Json j;
  j["K"] = m.K;
  j["basis"] = m.basis_kind == DtnBasis::raw_trig ? "raw" : "orthonormal";
  j["entries"] = to_json(m.entries);
  return j;
}

std::string dtn_to_csv(const DtNMatrix& m, const std::string& config_hash) {
  std::ostringstream out;
  out << std::setprecision(17);
  if (!config_hash.empty()) out << "# config_hash=" << config_hash << "\n";
  out << "mode";
  for (int c = 0; c < m.entries.cols(); ++c) out << "," << mode_label(c);
  out << "\n";
  for (int r = 0; r < m.entries.rows(); ++r) {
    out << mode_label(r);
    for (int c = 0; c < m.entries.cols(); ++c) out << "," << m.entries(r, c);
    out << "\n";
  }
  return out.str();
}

Json mlp_to_json(const MlpParams& theta) {
  Json j;
  j["activation"] = theta.activation == Activation::relu ? "relu" : "tanh";
  Json layers = Json::array();
  for (const auto& l : theta.layers) {
    Json jl;
    jl["w"] = to_json(l.w);
    jl["b"] = to_json(l.b);
    if (!l.activate) jl["activate"] = false;
    layers.push_back(std::move(jl));
  }
  j["layers"] = std::move(layers);
  return j;
}

MlpParams mlp_from_json(const Json& j) {
  MlpParams theta;
  const std::string act = j.at("activation").get<std::string>();
  if (act == "relu") {
    theta.activation = Activation::relu;
  } else if (act == "tanh") {
    theta.activation = Activation::tanh;
  } else {
    throw std::invalid_argument("unknown activation tag: " + act);
  }
  for (const auto& jl : j.at("layers")) {
    Layer l;
    l.w = matrix_from_json(jl.at("w"));
    l.b = vector_from_json(jl.at("b"));
    l.activate = jl.value("activate", true);
    theta.layers.push_back(std::move(l));
  }
  if (!theta.dims_chain()) throw std::invalid_argument("checkpoint layers do not chain");
  return theta;
}

namespace {

std::string basis_tag(const OrthoBasis& b) {
  if (b.kind == BasisKind::h_half_circle) return "h_half_circle";
  return "l2_domain_kl:" + b.family;
}

}  // namespace

Json deeponet_to_json(const DeepOnetParams& p) {
  Json j;
  j["d"] = p.d;
  j["m"] = p.m;
  j["activation"] = p.theta.activation == Activation::relu ? "relu" : "tanh";
  j["layers"] = mlp_to_json(p.theta)["layers"];
  j["in_basis"] = basis_tag(p.in_basis);
  j["out_basis"] = basis_tag(p.out_basis);
  return j;
}

std::string loss_trace_csv(const std::vector<TraceRow>& trace, const std::string& config_hash) {
  std::ostringstream out;
  out << std::setprecision(17);
  if (!config_hash.empty()) out << "# config_hash=" << config_hash << "\n";
  out << "iteration,loss,best_loss\n";
  for (const auto& row : trace) {
    out << row.iteration << "," << row.loss << "," << row.best_loss << "\n";
  }
  return out.str();
}

// ---------------------------------------------------------------------------
// SHA-256 (FIPS 180-4), compact single-buffer implementation.

namespace {

constexpr std::array<std::uint32_t, 64> kSha256K = {
    0x428a2f98, 0x71374491, 0xb5c0fbcf, 0xe9b5dba5, 0x3956c25b, 0x59f111f1, 0x923f82a4,
    0xab1c5ed5, 0xd807aa98, 0x12835b01, 0x243185be, 0x550c7dc3, 0x72be5d74, 0x80deb1fe,
    0x9bdc06a7, 0xc19bf174, 0xe49b69c1, 0xefbe4786, 0x0fc19dc6, 0x240ca1cc, 0x2de92c6f,
    0x4a7484aa, 0x5cb0a9dc, 0x76f988da, 0x983e5152, 0xa831c66d, 0xb00327c8, 0xbf597fc7,
    0xc6e00bf3, 0xd5a79147, 0x06ca6351, 0x14292967, 0x27b70a85, 0x2e1b2138, 0x4d2c6dfc,
    0x53380d13, 0x650a7354, 0x766a0abb, 0x81c2c92e, 0x92722c85, 0xa2bfe8a1, 0xa81a664b,
    0xc24b8b70, 0xc76c51a3, 0xd192e819, 0xd6990624, 0xf40e3585, 0x106aa070, 0x19a4c116,
    0x1e376c08, 0x2748774c, 0x34b0bcb5, 0x391c0cb3, 0x4ed8aa4a, 0x5b9cca4f, 0x682e6ff3,
    0x748f82ee, 0x78a5636f, 0x84c87814, 0x8cc70208, 0x90befffa, 0xa4506ceb, 0xbef9a3f7,
    0xc67178f2};

std::uint32_t rotr(std::uint32_t x, int n) { return (x >> n) | (x << (32 - n)); }

}  // namespace

std::string sha256_hex(const std::string& bytes) {
  std::array<std::uint32_t, 8> h = {0x6a09e667, 0xbb67ae85, 0x3c6ef372, 0xa54ff53a,
                                    0x510e527f, 0x9b05688c, 0x1f83d9ab, 0x5be0cd19};
  std::string msg = bytes;
  const std::uint64_t bit_len = static_cast<std::uint64_t>(bytes.size()) * 8;
  msg.push_back(static_cast<char>(0x80));
  while (msg.size() % 64 != 56) msg.push_back('\0');
  for (int i = 7; i >= 0; --i) msg.push_back(static_cast<char>((bit_len >> (8 * i)) & 0xff));

  std::array<std::uint32_t, 64> w{};
  for (size_t block = 0; block < msg.size(); block += 64) {
    for (int t = 0; t < 16; ++t) {
      w[t] = 0;
      for (int b = 0; b < 4; ++b) {
        w[t] = (w[t] << 8) | static_cast<std::uint8_t>(msg[block + 4 * t + b]);
      }
    }
    for (int t = 16; t < 64; ++t) {
      const std::uint32_t s0 = rotr(w[t - 15], 7) ^ rotr(w[t - 15], 18) ^ (w[t - 15] >> 3);
      const std::uint32_t s1 = rotr(w[t - 2], 17) ^ rotr(w[t - 2], 19) ^ (w[t - 2] >> 10);
      w[t] = w[t - 16] + s0 + w[t - 7] + s1;
    }
    auto [a, b, c, d, e, f, g, hh] = h;
    for (int t = 0; t < 64; ++t) {
      const std::uint32_t s1 = rotr(e, 6) ^ rotr(e, 11) ^ rotr(e, 25);
      const std::uint32_t ch = (e & f) ^ (~e & g);
      const std::uint32_t temp1 = hh + s1 + ch + kSha256K[t] + w[t];
      const std::uint32_t s0 = rotr(a, 2) ^ rotr(a, 13) ^ rotr(a, 22);
      const std::uint32_t maj = (a & b) ^ (a & c) ^ (b & c);
      const std::uint32_t temp2 = s0 + maj;
      hh = g;
      g = f;
      f = e;
      e = d + temp1;
      d = c;
      c = b;
      b = a;
      a = temp1 + temp2;
    }
    h[0] += a;
    h[1] += b;
    h[2] += c;
    h[3] += d;
    h[4] += e;
    h[5] += f;
    h[6] += g;
    h[7] += hh;
  }

  std::ostringstream out;
  for (std::uint32_t word : h) {
    out << std::hex << std::setw(8) << std::setfill('0') << word;
  }
  return out.str();
}

std::string sha256_file(const std::filesystem::path& path) {
  return sha256_hex(read_text_file(path));
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
  out << text;
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open for reading: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// ---------------------------------------------------------------------------

namespace {

double svg_coord(double v, double lo, double hi, double px0, double px1, bool log_scale) {
  if (log_scale) {
    v = std::log10(std::max(v, 1e-300));
    lo = std::log10(std::max(lo, 1e-300));
    hi = std::log10(std::max(hi, 1e-300));
  }
  if (hi <= lo) hi = lo + 1.0;
  return px0 + (v - lo) / (hi - lo) * (px1 - px0);
}

}  // namespace

std::string svg_line_plot(const std::string& title, const std::string& x_label,
                          const std::string& y_label, const std::vector<SvgSeries>& series,
                          bool log_x, bool log_y) {
  constexpr double W = 640, H = 420, L = 70, R = 610, T = 40, B = 370;
  double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
  for (const auto& s : series) {
    for (size_t i = 0; i < s.x.size(); ++i) {
      double yv = s.y[i];
      if (log_y && !(yv > 0.0)) yv = 1e-16;
      xmin = std::min(xmin, s.x[i]);
      xmax = std::max(xmax, s.x[i]);
      ymin = std::min(ymin, yv);
      ymax = std::max(ymax, yv);
    }
  }
  if (xmin > xmax) {
    xmin = 0;
    xmax = 1;
    ymin = 1e-1;
    ymax = 1;
  }

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
      << "\" viewBox=\"0 0 " << W << " " << H << "\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      << "<text x=\"" << W / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">"
      << title << "</text>\n"
      << "<line x1=\"" << L << "\" y1=\"" << B << "\" x2=\"" << R << "\" y2=\"" << B
      << "\" stroke=\"black\"/>\n"
      << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << B
      << "\" stroke=\"black\"/>\n"
      << "<text x=\"" << (L + R) / 2 << "\" y=\"" << H - 12
      << "\" text-anchor=\"middle\" font-size=\"12\">" << x_label << "</text>\n"
      << "<text x=\"16\" y=\"" << (T + B) / 2 << "\" font-size=\"12\" text-anchor=\"middle\" "
      << "transform=\"rotate(-90 16 " << (T + B) / 2 << ")\">" << y_label << "</text>\n";

  // Corner annotations of the data range stand in for tick machinery.
  std::ostringstream lofmt, hifmt;
  lofmt << std::scientific << std::setprecision(1) << ymin;
  hifmt << std::scientific << std::setprecision(1) << ymax;
  svg << "<text x=\"" << L - 4 << "\" y=\"" << B << "\" text-anchor=\"end\" font-size=\"10\">"
      << lofmt.str() << "</text>\n"
      << "<text x=\"" << L - 4 << "\" y=\"" << T + 10
      << "\" text-anchor=\"end\" font-size=\"10\">" << hifmt.str() << "</text>\n";

  int legend_row = 0;
  for (const auto& s : series) {
    svg << "<polyline fill=\"none\" stroke=\"" << s.color << "\" stroke-width=\"1.5\"";
    if (s.dashed) svg << " stroke-dasharray=\"6 4\"";
    svg << " points=\"";
    for (size_t i = 0; i < s.x.size(); ++i) {
      const double px = svg_coord(s.x[i], xmin, xmax, L, R, log_x);
      const double py = svg_coord(log_y ? std::max(s.y[i], 1e-16) : s.y[i], ymin, ymax, B, T,
                                  log_y);
      svg << px << "," << py << " ";
    }
    svg << "\"/>\n";
    svg << "<text x=\"" << R - 150 << "\" y=\"" << T + 14 + 14 * legend_row
        << "\" font-size=\"11\" fill=\"" << s.color << "\">" << s.label << "</text>\n";
    ++legend_row;
  }
  svg << "</svg>\n";
  return svg.str();
}

}  // namespace cald
