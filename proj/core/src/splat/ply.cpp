// Copyright (c) 2026 The splatedit Authors
// SPDX-License-Identifier: Apache-2.0

#include "splatedit/splat/ply.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>
#include <unordered_map>

#include "splatedit/common/error.hpp"

namespace splatedit::splat {
namespace {

int rest_count(int degree) { return 3 * (sh_coeff_count(degree) - 1); }

}  // namespace

std::vector<std::string> ply_property_names(int degree) {
  std::vector<std::string> names{"x", "y", "z", "nx", "ny", "nz", "f_dc_0", "f_dc_1", "f_dc_2"};
  for (int i = 0; i < rest_count(degree); ++i) names.push_back("f_rest_" + std::to_string(i));
  names.push_back("opacity");
  for (int i = 0; i < 3; ++i) names.push_back("scale_" + std::to_string(i));
  for (int i = 0; i < 4; ++i) names.push_back("rot_" + std::to_string(i));
  return names;
}

void save_ply(const SplatScene& scene, const std::string& path) {
  const int deg = scene.sh_degree();
  const int coeffs = scene.coeffs();
  const auto names = ply_property_names(deg);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open " + path + " for writing");
  out << "ply\nformat binary_little_endian 1.0\nelement vertex " << scene.size() << "\n";
  for (const auto& n : names) out << "property float " << n << "\n";
  out << "end_header\n";

  std::vector<float> row(names.size());
  for (std::int64_t i = 0; i < scene.size(); ++i) {
    const auto u = static_cast<std::size_t>(i);
    std::size_t c = 0;
    for (std::size_t a = 0; a < 3; ++a) row[c++] = scene.positions[3 * u + a];
    for (std::size_t a = 0; a < 3; ++a) row[c++] = 0.f;
    const float* sh = scene.sh.data() + u * static_cast<std::size_t>(3 * coeffs);
    for (int ch = 0; ch < 3; ++ch) row[c++] = sh[ch];
    // f_rest is channel-major: f_rest[ch * (C - 1) + (k - 1)].
    for (int ch = 0; ch < 3; ++ch) {
      for (int k = 1; k < coeffs; ++k) row[c++] = sh[3 * k + ch];
    }
    row[c++] = scene.opacity_logits[u];
    for (std::size_t a = 0; a < 3; ++a) row[c++] = scene.log_scales[3 * u + a];
    for (std::size_t a = 0; a < 4; ++a) row[c++] = scene.rotations[4 * u + a];
    out.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size() * sizeof(float)));
  }
  if (!out) throw Error("write failed: " + path);
}

SplatScene load_ply(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path);
  const std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  std::size_t pos = 0;
  auto next_line = [&](std::string& line) {
    const auto start = pos;
    while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
    if (pos >= bytes.size()) throw ParseError("unterminated PLY header line", start);
    line.assign(bytes.data() + start, pos - start);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    ++pos;
    return start;
  };

  std::string line;
  auto off = next_line(line);
  if (line != "ply") throw ParseError("missing 'ply' magic", off);
  off = next_line(line);
  if (line != "format binary_little_endian 1.0") throw ParseError("unsupported PLY format '" + line + "'", off);

  std::int64_t count = -1;
  std::vector<std::string> props;
  bool in_vertex = false;
  for (;;) {
    off = next_line(line);
    std::istringstream ls(line);
    std::string kw;
    ls >> kw;
    if (kw == "end_header") break;
    if (kw == "comment" || kw == "obj_info" || kw.empty()) continue;
    if (kw == "element") {
      std::string name;
      std::int64_t n = -1;
      ls >> name >> n;
      if (!ls || n < 0) throw ParseError("malformed element line '" + line + "'", off);
      if (name == "vertex") {
        if (count >= 0) throw ParseError("duplicate vertex element", off);
        count = n;
        in_vertex = true;
      } else {
        if (n != 0) throw ParseError("unsupported non-empty element '" + name + "'", off);
        in_vertex = false;
      }
      continue;
    }
    if (kw == "property") {
      std::string type, name;
      ls >> type >> name;
      if (!ls) throw ParseError("malformed property line '" + line + "'", off);
      if (!in_vertex) throw ParseError("property outside the vertex element", off);
      if (type != "float" && type != "float32") throw ParseError("property '" + name + "' is not float", off);
      props.push_back(name);
      continue;
    }
    throw ParseError("unknown header keyword '" + kw + "'", off);
  }
  if (count < 0) throw ParseError("no vertex element in header", pos);

  std::unordered_map<std::string, std::size_t> col;
  for (std::size_t i = 0; i < props.size(); ++i) col[props[i]] = i;
  auto need = [&](const std::string& name) {
    auto it = col.find(name);
    if (it == col.end()) throw FormatError("missing required PLY property \"" + name + "\"");
    return it->second;
  };
  int n_rest = 0;
  while (col.count("f_rest_" + std::to_string(n_rest)) != 0) ++n_rest;
  int degree = -1;
  for (int d = 0; d <= kMaxShDegree; ++d) {
    if (rest_count(d) == n_rest) degree = d;
  }
  if (degree < 0) throw FormatError("f_rest_* count " + std::to_string(n_rest) + " matches no SH degree");

  std::vector<std::size_t> pos_c{need("x"), need("y"), need("z")};
  std::vector<std::size_t> dc_c{need("f_dc_0"), need("f_dc_1"), need("f_dc_2")};
  const auto op_c = need("opacity");
  std::vector<std::size_t> sc_c{need("scale_0"), need("scale_1"), need("scale_2")};
  std::vector<std::size_t> rot_c{need("rot_0"), need("rot_1"), need("rot_2"), need("rot_3")};
  std::vector<std::size_t> rest_c;
  for (int i = 0; i < n_rest; ++i) rest_c.push_back(col["f_rest_" + std::to_string(i)]);

  const std::size_t stride = props.size() * sizeof(float);
  const auto body = static_cast<std::size_t>(count) * stride;
  if (bytes.size() - pos < body) throw ParseError("PLY body shorter than declared vertex count", bytes.size());

  SplatScene scene(degree);
  scene.reserve(count);
  const int coeffs = sh_coeff_count(degree);
  std::vector<float> row(props.size());
  Gaussian g;
  g.sh.resize(static_cast<std::size_t>(3 * coeffs));
  for (std::int64_t i = 0; i < count; ++i) {
    std::memcpy(row.data(), bytes.data() + pos + static_cast<std::size_t>(i) * stride, stride);
    for (std::size_t a = 0; a < 3; ++a) {
      g.position[a] = row[pos_c[a]];
      g.log_scale[a] = row[sc_c[a]];
      g.sh[a] = row[dc_c[a]];
    }
    for (int ch = 0; ch < 3; ++ch) {
      for (int k = 1; k < coeffs; ++k) {
        g.sh[static_cast<std::size_t>(3 * k + ch)] = row[rest_c[static_cast<std::size_t>(ch * (coeffs - 1) + k - 1)]];
      }
    }
    g.opacity_logit = row[op_c];
    double qn = 0.0;
    for (std::size_t a = 0; a < 4; ++a) {
      g.rotation[a] = row[rot_c[a]];
      qn += double(g.rotation[a]) * g.rotation[a];
    }
    qn = std::sqrt(qn);
    if (qn == 0.0) throw FormatError("zero quaternion on vertex " + std::to_string(i));
    if (std::abs(qn - 1.0) > 1e-6) {
      for (auto& q : g.rotation) q = static_cast<float>(q / qn);
    }
    scene.push_back(g);
  }
  return scene;
}

}  // namespace splatedit::splat
