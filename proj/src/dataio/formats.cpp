#include "pop/dataio/formats.hpp"

#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "pop/core/error.hpp"

namespace pop::io {

namespace {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& line) {
  std::istringstream ls(line);
  std::vector<std::string> out;
  for (std::string tok; ls >> tok;) out.push_back(tok);
  return out;
}

bool parse_double(const std::string& tok, double& out) {
  char* end = nullptr;
  out = std::strtod(tok.c_str(), &end);
  return end != tok.c_str() && *end == '\0';
}

}  // namespace

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

// ---- PLY -----------------------------------------------------------------------

std::string format_ply(const PointSet& ps) {
  std::string out = "ply\nformat ascii 1.0\nelement vertex " + std::to_string(ps.size()) + "\n";
  for (const char* p : {"x", "y", "z", "nx", "ny", "nz"}) out += std::string("property float ") + p + "\n";
  out += "end_header\n";
  char buf[160];
  for (std::size_t i = 0; i < ps.size(); ++i) {
    float v[6];
    for (int k = 0; k < 3; ++k) {
      v[k] = static_cast<float>(ps.points[i][k]);
      v[3 + k] = static_cast<float>(ps.normals[i][k]);
    }
    for (float f : v) {
      if (!std::isfinite(f)) throw std::invalid_argument("cannot write a non-finite value to PLY");
    }
    std::snprintf(buf, sizeof buf, "%.9g %.9g %.9g %.9g %.9g %.9g\n", v[0], v[1], v[2], v[3], v[4], v[5]);
    out += buf;
  }
  return out;
}

PointSet parse_ply(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  auto next = [&](const char* expect) {
    while (std::getline(in, line)) {
      ++line_no;
      line = trim(line);
      if (line.rfind("comment", 0) != 0 && line.rfind("obj_info", 0) != 0) return;
    }
    throw ParseError(std::string("unexpected end of file, expected ") + expect, line_no + 1);
  };

  next("'ply'");
  if (line != "ply") throw ParseError("missing 'ply' magic", line_no);
  next("format line");
  if (line != "format ascii 1.0") throw ParseError("only 'format ascii 1.0' is supported", line_no);
  next("vertex element");
  auto tokens = split(line);
  double count_d = 0;
  if (tokens.size() != 3 || tokens[0] != "element" || tokens[1] != "vertex" || !parse_double(tokens[2], count_d) ||
      count_d < 0 || count_d != std::floor(count_d)) {
    throw ParseError("expected 'element vertex <count>'", line_no);
  }
  const auto count = static_cast<std::size_t>(count_d);
  static const char* names[] = {"x", "y", "z", "nx", "ny", "nz"};
  for (const char* name : names) {
    next("property line");
    tokens = split(line);
    if (tokens.size() != 3 || tokens[0] != "property" || tokens[1] != "float" || tokens[2] != name) {
      throw ParseError(std::string("expected 'property float ") + name + "'", line_no);
    }
  }
  next("'end_header'");
  if (line != "end_header") throw ParseError("expected 'end_header' after the six vertex properties", line_no);

  PointSet ps;
  ps.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    if (!std::getline(in, line)) throw ParseError("file ends after " + std::to_string(i) + " vertices", line_no + 1);
    ++line_no;
    tokens = split(line);
    if (tokens.size() != 6) throw ParseError("expected 6 values per vertex", line_no);
    double v[6];
    for (int k = 0; k < 6; ++k) {
      if (!parse_double(tokens[k], v[k]) || !std::isfinite(v[k])) {
        throw ParseError("bad number '" + tokens[k] + "'", line_no);
      }
      v[k] = static_cast<float>(v[k]);
    }
    ps.push_back({v[0], v[1], v[2]}, {v[3], v[4], v[5]});
  }
  while (std::getline(in, line)) {
    ++line_no;
    if (!trim(line).empty()) throw ParseError("trailing data after the last vertex", line_no);
  }
  return ps;
}

void write_ply(const PointSet& ps, const std::filesystem::path& path) { write_text(path, format_ply(ps)); }
PointSet read_ply(const std::filesystem::path& path) { return parse_ply(read_text(path)); }

// ---- PMAP ----------------------------------------------------------------------

std::string format_pmap(const body::PositionalMap& map) {
  const std::size_t n = static_cast<std::size_t>(map.height) * map.width;
  if (map.height <= 0 || map.width <= 0 || map.values.size() != 3 * n || map.mask.size() != n) {
    throw DimensionError("positional map arrays do not match its size");
  }
  std::string out = "PMAP\n" + std::to_string(map.height) + " " + std::to_string(map.width) + " 3 f32\n";
  const std::size_t head = out.size();
  out.resize(head + 12 * n + n);
  std::memcpy(out.data() + head, map.values.data(), 12 * n);
  for (std::size_t i = 0; i < n; ++i) out[head + 12 * n + i] = static_cast<char>(map.mask[i] ? 1 : 0);
  return out;
}

body::PositionalMap parse_pmap(const std::string& bytes) {
  if (bytes.compare(0, 5, "PMAP\n") != 0) throw FormatError("not a PMAP file (bad magic)");
  const auto eol = bytes.find('\n', 5);
  if (eol == std::string::npos) throw FormatError("PMAP header line is missing");
  std::istringstream hs(bytes.substr(5, eol - 5));
  body::PositionalMap m;
  int channels = 0;
  std::string type, extra;
  if (!(hs >> m.height >> m.width >> channels >> type) || (hs >> extra) || m.height <= 0 || m.width <= 0 ||
      channels != 3 || type != "f32") {
    throw FormatError("PMAP header must read 'H W 3 f32'");
  }
  const std::size_t n = static_cast<std::size_t>(m.height) * m.width;
  const std::size_t head = eol + 1;
  if (bytes.size() != head + 13 * n) {
    throw FormatError("PMAP payload has " + std::to_string(bytes.size() - head) + " bytes, expected " +
                      std::to_string(13 * n));
  }
  m.values.resize(3 * n);
  std::memcpy(m.values.data(), bytes.data() + head, 12 * n);
  m.mask.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto b = static_cast<std::uint8_t>(bytes[head + 12 * n + i]);
    if (b > 1) throw FormatError("PMAP mask byte must be 0 or 1");
    m.mask[i] = b;
  }
  return m;
}

void write_pmap(const body::PositionalMap& map, const std::filesystem::path& path) {
  write_text(path, format_pmap(map));
}
body::PositionalMap read_pmap(const std::filesystem::path& path) { return parse_pmap(read_text(path)); }

// ---- pose files ----------------------------------------------------------------

std::string format_pose(const body::Pose& pose, const body::Skeleton& skeleton) {
  if (pose.size() != skeleton.size()) throw DimensionError("pose and skeleton differ in joint count");
  std::string out;
  char buf[256];
  for (std::size_t j = 0; j < pose.size(); ++j) {
    const auto& w = pose.rotations[j];
    std::snprintf(buf, sizeof buf, "%s %.17g %.17g %.17g\n", skeleton.joint(j).name.c_str(), w.x(), w.y(), w.z());
    out += buf;
  }
  const auto& t = pose.translation;
  std::snprintf(buf, sizeof buf, "translation %.17g %.17g %.17g\n", t.x(), t.y(), t.z());
  return out + buf;
}

body::Pose parse_pose(const std::string& text, const body::Skeleton& skeleton) {
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  body::Pose pose = body::Pose::identity(skeleton.size());
  std::vector<bool> seen(skeleton.size(), false);
  bool have_translation = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    const auto tokens = split(line);
    if (tokens.empty()) continue;
    if (tokens.size() != 4) throw ParseError("expected 'name x y z'", line_no);
    Eigen::Vector3d v;
    for (int k = 0; k < 3; ++k) {
      if (!parse_double(tokens[k + 1], v[k]) || !std::isfinite(v[k])) {
        throw ParseError("bad number '" + tokens[k + 1] + "'", line_no);
      }
    }
    if (tokens[0] == "translation") {
      if (have_translation) throw ParseError("duplicate translation line", line_no);
      have_translation = true;
      pose.translation = v;
      continue;
    }
    const int j = skeleton.find(tokens[0]);
    if (j < 0) throw ParseError("unknown joint '" + tokens[0] + "'", line_no);
    if (seen[j]) throw ParseError("duplicate joint '" + tokens[0] + "'", line_no);
    seen[j] = true;
    pose.rotations[j] = v;
  }
  for (std::size_t j = 0; j < seen.size(); ++j) {
    if (!seen[j]) throw ParseError("joint '" + skeleton.joint(j).name + "' is missing", line_no);
  }
  if (!have_translation) throw ParseError("translation line is missing", line_no);
  return pose;
}

void write_pose(const body::Pose& pose, const body::Skeleton& skeleton, const std::filesystem::path& path) {
  write_text(path, format_pose(pose, skeleton));
}
body::Pose read_pose(const std::filesystem::path& path, const body::Skeleton& skeleton) {
  return parse_pose(read_text(path), skeleton);
}

// ---- key = value ---------------------------------------------------------------

std::map<std::string, std::string> parse_key_values(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  std::map<std::string, std::string> out;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError("expected 'key = value'", line_no);
    const std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
    if (key.empty() || value.empty()) throw ParseError("expected 'key = value'", line_no);
    if (!out.emplace(key, value).second) throw ParseError("duplicate key '" + key + "'", line_no);
  }
  return out;
}

}  // namespace pop::io
