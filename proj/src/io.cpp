#include "varifold/io.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

#include <zlib.h>

#include "varifold/error.hpp"

namespace varifold {

namespace {

[[noreturn]] void parse_fail(const std::string& origin, std::size_t line, const std::string& what) {
  throw Error(ErrorCode::ParseError, origin + ":" + std::to_string(line) + ": " + what);
}

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= s.size(); ++i) {
    if (i == s.size() || s[i] == sep) {
      out.push_back(s.substr(start, i - start));
      start = i + 1;
    }
  }
  return out;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

bool to_double(std::string_view s, double& out) {
  s = trim(s);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && p == s.data() + s.size();
}

bool to_long(std::string_view s, long& out) {
  s = trim(s);
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && p == s.data() + s.size();
}

void append_double(std::string& out, double v) {
  char buf[32];
  const auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  out.append(buf, p);
}

std::vector<std::string_view> tokens(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
    const std::size_t j = i;
    while (i < s.size() && !std::isspace(static_cast<unsigned char>(s[i]))) ++i;
    if (i > j) out.push_back(s.substr(j, i - j));
  }
  return out;
}

bool has_suffix(const std::filesystem::path& p, const std::string& ext) {
  std::string e = p.extension().string();
  std::transform(e.begin(), e.end(), e.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return e == ext;
}

TriangleMesh finish_mesh(std::vector<Vec> verts, std::vector<Triangle> tris, const std::string& origin) {
  if (verts.empty()) throw Error(ErrorCode::EmptyInput, origin + ": no vertices");
  if (tris.empty()) throw Error(ErrorCode::EmptyInput, origin + ": no faces");
  TriangleMesh m;
  m.vertices.resize(verts.front().size(), static_cast<Eigen::Index>(verts.size()));
  for (std::size_t i = 0; i < verts.size(); ++i) m.vertices.col(static_cast<Eigen::Index>(i)) = verts[i];
  m.triangles = std::move(tris);
  check_manifold_edges(m);
  return m;
}

}  // namespace

// ---------------------------------------------------------------------------
// files

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  std::string raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (raw.size() < 2 || static_cast<unsigned char>(raw[0]) != 0x1f || static_cast<unsigned char>(raw[1]) != 0x8b)
    return raw;
  gzFile gz = gzopen(path.string().c_str(), "rb");
  if (!gz) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  std::string out;
  char buf[1 << 16];
  int got = 0;
  while ((got = gzread(gz, buf, sizeof buf)) > 0) out.append(buf, static_cast<std::size_t>(got));
  const bool bad = got < 0;
  gzclose(gz);
  if (bad) throw Error(ErrorCode::IoError, "corrupt gzip stream in " + path.string());
  return out;
}

void write_file(const std::filesystem::path& path, const std::string& data, bool gzip) {
  if (gzip || has_suffix(path, ".gz")) {
    gzFile gz = gzopen(path.string().c_str(), "wb");
    if (!gz) throw Error(ErrorCode::IoError, "cannot write " + path.string());
    const int put = data.empty() ? 0 : gzwrite(gz, data.data(), static_cast<unsigned>(data.size()));
    gzclose(gz);
    if (!data.empty() && put != static_cast<int>(data.size()))
      throw Error(ErrorCode::IoError, "short gzip write to " + path.string());
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out << data;
  if (!out) throw Error(ErrorCode::IoError, "write failed for " + path.string());
}

// ---------------------------------------------------------------------------
// point clouds

WeightedSurfaceSample parse_pointcloud(const std::string& text, const std::string& origin) {
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    for (auto f : split(trim(line), ',')) header.emplace_back(trim(f));
    break;
  }
  if (header.empty()) throw Error(ErrorCode::EmptyInput, origin + ": no header");

  int n = 0;
  while (n < static_cast<int>(header.size()) && header[static_cast<std::size_t>(n)] == "x" + std::to_string(n + 1)) ++n;
  if (n == 0 || n >= static_cast<int>(header.size()) || header[static_cast<std::size_t>(n)] != "weight")
    parse_fail(origin, lineno, "header must start with x1,..,xn,weight");
  const int extra = static_cast<int>(header.size()) - n - 1;
  if (extra != 0 && extra != 2 * n) parse_fail(origin, lineno, "tangent frames need 2n columns t11..t2n");
  for (int k = 0; k < extra; ++k) {
    const auto& h = header[static_cast<std::size_t>(n + 1 + k)];
    if (h.empty() || h.front() != 't') parse_fail(origin, lineno, "unexpected column '" + h + "'");
  }
  const std::size_t cols = header.size();

  std::vector<double> values;
  std::vector<double> weights;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const auto fields = split(trim(line), ',');
    if (fields.size() != cols)
      parse_fail(origin, lineno, "expected " + std::to_string(cols) + " fields, got " + std::to_string(fields.size()));
    for (std::size_t k = 0; k < cols; ++k) {
      double v = 0.0;
      if (!to_double(fields[k], v) || !std::isfinite(v))
        parse_fail(origin, lineno, "bad number '" + std::string(fields[k]) + "' in column " + header[k]);
      if (static_cast<int>(k) == n) {
        if (v <= 0.0) parse_fail(origin, lineno, "weight must be positive");
        weights.push_back(v);
      } else {
        values.push_back(v);
      }
    }
  }
  if (weights.empty()) throw Error(ErrorCode::EmptyInput, origin + ": no points");

  const auto count = static_cast<Eigen::Index>(weights.size());
  const std::size_t stride = static_cast<std::size_t>(n + extra);
  PointMatrix pts(n, count);
  std::vector<Plane> frames;
  for (Eigen::Index i = 0; i < count; ++i) {
    const double* row = values.data() + static_cast<std::size_t>(i) * stride;
    for (int d = 0; d < n; ++d) pts(d, i) = row[d];
    if (extra > 0) {
      Mat b(n, 2);
      for (int d = 0; d < n; ++d) {
        b(d, 0) = row[n + d];
        b(d, 1) = row[2 * n + d];
      }
      frames.push_back(Plane::from_orthonormal(b));
    }
  }
  return WeightedSurfaceSample(std::move(pts), std::move(weights), std::move(frames), 2);
}

WeightedSurfaceSample load_pointcloud(const std::filesystem::path& path) {
  return parse_pointcloud(read_file(path), path.string());
}

void save_pointcloud(const WeightedSurfaceSample& sample, const std::filesystem::path& path, bool gzip) {
  const int n = sample.ambient_dim();
  const int m = sample.intrinsic_dim();
  std::string out;
  for (int d = 1; d <= n; ++d) out += "x" + std::to_string(d) + ",";
  out += "weight";
  if (m == 2)
    for (int i = 1; i <= 2; ++i)
      for (int d = 1; d <= n; ++d) out += ",t" + std::to_string(i) + std::to_string(d);
  out += "\n";
  for (Eigen::Index k = 0; k < sample.size(); ++k) {
    for (int d = 0; d < n; ++d) {
      append_double(out, sample.point(k)[d]);
      out += ',';
    }
    append_double(out, sample.weight(k));
    if (m == 2) {
      const Mat& b = sample.tangent(k).basis();
      for (int i = 0; i < 2; ++i)
        for (int d = 0; d < n; ++d) {
          out += ',';
          append_double(out, b(d, i));
        }
    }
    out += '\n';
  }
  write_file(path, out, gzip);
}

// ---------------------------------------------------------------------------
// meshes

TriangleMesh parse_off(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  auto next = [&](std::vector<std::string_view>& tok, std::string& storage) {
    while (std::getline(in, storage)) {
      ++lineno;
      auto s = std::string_view(storage);
      if (auto h = s.find('#'); h != std::string_view::npos) s = s.substr(0, h);
      tok = tokens(s);
      if (!tok.empty()) return true;
    }
    return false;
  };
  std::vector<std::string_view> tok;
  if (!next(tok, line) || tok[0].substr(0, 3) != "OFF") parse_fail("off", lineno, "missing OFF header");
  tok.erase(tok.begin());
  std::string counts_line;
  if (tok.empty() && !next(tok, counts_line)) parse_fail("off", lineno, "missing counts");
  long nv = 0, nf = 0;
  if (tok.size() < 2 || !to_long(tok[0], nv) || !to_long(tok[1], nf) || nv < 0 || nf < 0)
    parse_fail("off", lineno, "bad vertex/face counts");

  std::vector<Vec> verts;
  for (long v = 0; v < nv; ++v) {
    if (!next(tok, line)) parse_fail("off", lineno, "unexpected end in vertex list");
    Vec p(static_cast<Eigen::Index>(tok.size()));
    for (std::size_t k = 0; k < tok.size(); ++k)
      if (!to_double(tok[k], p[static_cast<Eigen::Index>(k)])) parse_fail("off", lineno, "bad coordinate");
    if (!verts.empty() && p.size() != verts.front().size()) parse_fail("off", lineno, "vertex dimension changes");
    verts.push_back(std::move(p));
  }
  std::vector<Triangle> tris;
  for (long f = 0; f < nf; ++f) {
    if (!next(tok, line)) parse_fail("off", lineno, "unexpected end in face list");
    long k = 0;
    if (!to_long(tok[0], k)) parse_fail("off", lineno, "bad face size");
    if (k != 3) parse_fail("off", lineno, "face " + std::to_string(f) + " has " + std::to_string(k) + " vertices; only triangles are supported");
    if (tok.size() < 4) parse_fail("off", lineno, "face " + std::to_string(f) + " is truncated");
    Triangle t{};
    for (int j = 0; j < 3; ++j) {
      long idx = 0;
      if (!to_long(tok[static_cast<std::size_t>(j + 1)], idx) || idx < 0 || idx >= nv)
        parse_fail("off", lineno, "face " + std::to_string(f) + " has a bad vertex index");
      t[static_cast<std::size_t>(j)] = static_cast<int>(idx);
    }
    tris.push_back(t);
  }
  return finish_mesh(std::move(verts), std::move(tris), "off");
}

TriangleMesh parse_obj(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  std::vector<Vec> verts;
  std::vector<Triangle> tris;
  while (std::getline(in, line)) {
    ++lineno;
    auto s = std::string_view(line);
    if (auto h = s.find('#'); h != std::string_view::npos) s = s.substr(0, h);
    const auto tok = tokens(s);
    if (tok.empty()) continue;
    if (tok[0] == "v") {
      Vec p(static_cast<Eigen::Index>(tok.size() - 1));
      for (std::size_t k = 1; k < tok.size(); ++k)
        if (!to_double(tok[k], p[static_cast<Eigen::Index>(k - 1)])) parse_fail("obj", lineno, "bad coordinate");
      if (p.size() == 0 || (!verts.empty() && p.size() != verts.front().size()))
        parse_fail("obj", lineno, "vertex dimension changes");
      verts.push_back(std::move(p));
    } else if (tok[0] == "f") {
      const std::size_t face = tris.size();
      if (tok.size() != 4)
        parse_fail("obj", lineno, "face " + std::to_string(face) + " has " + std::to_string(tok.size() - 1) + " vertices; only triangles are supported");
      Triangle t{};
      for (int j = 0; j < 3; ++j) {
        auto ref = tok[static_cast<std::size_t>(j + 1)];
        ref = ref.substr(0, ref.find('/'));
        long idx = 0;
        if (!to_long(ref, idx) || idx == 0) parse_fail("obj", lineno, "face " + std::to_string(face) + " has a bad vertex index");
        idx = idx > 0 ? idx - 1 : static_cast<long>(verts.size()) + idx;
        if (idx < 0 || idx >= static_cast<long>(verts.size()))
          parse_fail("obj", lineno, "face " + std::to_string(face) + " refers to a missing vertex");
        t[static_cast<std::size_t>(j)] = static_cast<int>(idx);
      }
      tris.push_back(t);
    }
    // other records (vt, vn, g, o, s, usemtl) carry nothing we use
  }
  return finish_mesh(std::move(verts), std::move(tris), "obj");
}

TriangleMesh read_mesh(const std::filesystem::path& path) {
  const std::string text = read_file(path);
  if (has_suffix(path, ".off")) return parse_off(text);
  if (has_suffix(path, ".obj")) return parse_obj(text);
  throw Error(ErrorCode::ParseError, path.string() + ": unknown mesh extension");
}

WeightedSurfaceSample load_mesh(const std::filesystem::path& path) { return sample_from_mesh(read_mesh(path)); }

WeightedSurfaceSample load_any(const std::filesystem::path& path) {
  if (has_suffix(path, ".off") || has_suffix(path, ".obj")) return load_mesh(path);
  return load_pointcloud(path);
}

// ---------------------------------------------------------------------------
// exports

std::string mesh_to_obj(const TriangleMesh& mesh) {
  std::string out;
  for (Eigen::Index v = 0; v < mesh.vertex_count(); ++v) {
    out += "v";
    for (Eigen::Index d = 0; d < mesh.vertices.rows(); ++d) {
      out += ' ';
      append_double(out, mesh.vertices(d, v));
    }
    out += '\n';
  }
  for (const auto& t : mesh.triangles)
    out += "f " + std::to_string(t[0] + 1) + ' ' + std::to_string(t[1] + 1) + ' ' + std::to_string(t[2] + 1) + '\n';
  return out;
}

std::string parameterization_to_obj(const DiskParameterization& param) {
  std::string out;
  for (Eigen::Index v = 0; v < param.vertex_count(); ++v) {
    out += "v";
    for (Eigen::Index d = 0; d < param.image.rows(); ++d) {
      out += ' ';
      append_double(out, param.image(d, v));
    }
    out += "\nvt ";
    append_double(out, 0.5 * (param.disk(0, v) + 1.0));
    out += ' ';
    append_double(out, 0.5 * (param.disk(1, v) + 1.0));
    out += '\n';
  }
  for (const auto& t : param.triangles) {
    out += "f";
    for (int v : t) out += ' ' + std::to_string(v + 1) + '/' + std::to_string(v + 1);
    out += '\n';
  }
  return out;
}

std::string parameterization_to_svg(const DiskParameterization& param, int size) {
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (double w : param.w) lo = std::min(lo, w), hi = std::max(hi, w);
  const double span = hi > lo ? hi - lo : 1.0;
  const double half = 0.5 * size;
  std::ostringstream out;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << size << "\" height=\"" << size << "\" viewBox=\"0 0 "
      << size << ' ' << size << "\">\n";
  out << "<desc>w from " << lo << " to " << hi << "</desc>\n";
  out.setf(std::ios::fixed);
  out.precision(2);
  for (std::size_t t = 0; t < param.triangles.size(); ++t) {
    const double u = (param.w[t] - lo) / span;
    const int r = static_cast<int>(std::lround(255 * u)), b = 255 - r;
    out << "<polygon points=\"";
    for (int k = 0; k < 3; ++k) {
      const Eigen::Index v = param.triangles[t][static_cast<std::size_t>(k)];
      out << (k ? " " : "") << half * (1.0 + 0.95 * param.disk(0, v)) << ',' << half * (1.0 - 0.95 * param.disk(1, v));
    }
    out << "\" fill=\"rgb(" << r << ",64," << b << ")\" stroke=\"none\"/>\n";
  }
  out << "<circle cx=\"" << half << "\" cy=\"" << half << "\" r=\"" << 0.95 * half
      << "\" fill=\"none\" stroke=\"black\" stroke-width=\"1\"/>\n</svg>\n";
  return out.str();
}

}  // namespace varifold
