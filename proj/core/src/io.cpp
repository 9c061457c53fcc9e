// Copyright 2026 The metareg Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "metareg/io.hpp"

#include <bit>
#include <charconv>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>

namespace metareg {

namespace fs = std::filesystem;

const char* to_string(IoError::Kind kind) {
  switch (kind) {
    case IoError::Kind::Missing: return "missing";
    case IoError::Kind::BadHeader: return "bad header";
    case IoError::Kind::UnknownDtype: return "unknown dtype";
    case IoError::Kind::SizeMismatch: return "size mismatch";
    case IoError::Kind::Truncated: return "truncated";
    case IoError::Kind::Write: return "write failed";
  }
  return "unknown";
}

std::string format_double(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

double parse_double(const std::string& s) {
  double v = 0.0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size()) throw IoError(IoError::Kind::BadHeader, "not a number: '" + s + "'");
  return v;
}

namespace {

fs::path with_ext(const fs::path& stem, const char* ext) {
  fs::path p = stem;
  p += ext;
  return p;
}

std::ofstream open_out(const fs::path& p, std::ios::openmode mode = std::ios::out) {
  if (p.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(p.parent_path(), ec);
  }
  std::ofstream os(p, mode | std::ios::trunc);
  if (!os) throw IoError(IoError::Kind::Write, "cannot open " + p.string() + " for writing");
  return os;
}

std::ifstream open_in(const fs::path& p, std::ios::openmode mode = std::ios::in) {
  std::ifstream is(p, mode);
  if (!is) throw IoError(IoError::Kind::Missing, "cannot open " + p.string());
  return is;
}

void close_checked(std::ofstream& os, const fs::path& p) {
  os.close();
  if (!os) throw IoError(IoError::Kind::Write, "error writing " + p.string());
}

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

std::vector<std::string> words(const std::string& s) {
  std::istringstream is(s);
  std::vector<std::string> w;
  for (std::string t; is >> t;) w.push_back(t);
  return w;
}

// key = value lines; blank lines and '#' comments are skipped. Repeated
// keys are kept in order under the same name.
std::multimap<std::string, std::string> read_key_values(const fs::path& p) {
  auto is = open_in(p);
  std::multimap<std::string, std::string> kv;
  std::string line;
  int n = 0;
  while (std::getline(is, line)) {
    ++n;
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw IoError(IoError::Kind::BadHeader, p.string() + ":" + std::to_string(n) + ": expected 'key = value'");
    kv.emplace(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return kv;
}

const std::string& require_key(const std::multimap<std::string, std::string>& kv, const std::string& key, const fs::path& p) {
  const auto it = kv.find(key);
  if (it == kv.end()) throw IoError(IoError::Kind::Truncated, p.string() + ": header has no '" + key + "' entry");
  return it->second;
}

int parse_int(const std::string& s, const fs::path& p) {
  int v = 0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size()) throw IoError(IoError::Kind::BadHeader, p.string() + ": not an integer: '" + s + "'");
  return v;
}

void write_f32le(const fs::path& p, std::span<const float> values) {
  auto os = open_out(p, std::ios::out | std::ios::binary);
  std::vector<char> buf(values.size() * 4);
  for (std::size_t i = 0; i < values.size(); ++i) {
    const std::uint32_t u = std::bit_cast<std::uint32_t>(values[i]);
    for (int b = 0; b < 4; ++b) buf[i * 4 + b] = static_cast<char>((u >> (8 * b)) & 0xFF);
  }
  os.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  close_checked(os, p);
}

std::vector<float> read_f32le(const fs::path& p, std::size_t count) {
  auto is = open_in(p, std::ios::in | std::ios::binary);
  std::error_code ec;
  const auto bytes = fs::file_size(p, ec);
  if (ec) throw IoError(IoError::Kind::Missing, "cannot stat " + p.string());
  if (bytes < count * 4)
    throw IoError(IoError::Kind::Truncated, p.string() + ": expected " + std::to_string(count * 4) + " bytes, file has " +
                                                std::to_string(bytes));
  if (bytes != count * 4)
    throw IoError(IoError::Kind::SizeMismatch, p.string() + ": expected " + std::to_string(count * 4) + " bytes for " +
                                                   std::to_string(count) + " values, file has " + std::to_string(bytes));
  std::vector<char> buf(count * 4);
  is.read(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (static_cast<std::size_t>(is.gcount()) != buf.size()) throw IoError(IoError::Kind::Truncated, p.string() + ": short read");
  std::vector<float> v(count);
  for (std::size_t i = 0; i < count; ++i) {
    std::uint32_t u = 0;
    for (int b = 0; b < 4; ++b) u |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf[i * 4 + b])) << (8 * b);
    v[i] = std::bit_cast<float>(u);
  }
  return v;
}

void save_grid(const fs::path& stem, const Tensor& t, double spacing) {
  const auto hdr = with_ext(stem, ".hdr");
  auto os = open_out(hdr);
  os << "dims =";
  for (int d : t.dims()) os << ' ' << d;
  const std::string s = format_double(spacing);
  os << "\nspacing_mm = " << s << ' ' << s << ' ' << s << "\ndtype = f32le\norder = x-fastest\n";
  close_checked(os, hdr);
  write_f32le(with_ext(stem, ".raw"), t.values());
}

Tensor load_grid(const fs::path& stem, std::size_t rank, double* spacing) {
  const auto hdr = with_ext(stem, ".hdr");
  const auto kv = read_key_values(hdr);
  const auto dims_w = words(require_key(kv, "dims", hdr));
  const auto spacing_w = words(require_key(kv, "spacing_mm", hdr));
  const std::string dtype = require_key(kv, "dtype", hdr);
  const std::string order = require_key(kv, "order", hdr);
  if (dtype != "f32le") throw IoError(IoError::Kind::UnknownDtype, hdr.string() + ": unsupported dtype '" + dtype + "'");
  if (order != "x-fastest") throw IoError(IoError::Kind::BadHeader, hdr.string() + ": unsupported order '" + order + "'");
  if (dims_w.size() != rank)
    throw IoError(IoError::Kind::BadHeader, hdr.string() + ": expected " + std::to_string(rank) + " dims, got " + std::to_string(dims_w.size()));
  std::vector<int> dims;
  for (const auto& w : dims_w) {
    const int d = parse_int(w, hdr);
    if (d <= 0) throw IoError(IoError::Kind::BadHeader, hdr.string() + ": dims must be positive");
    dims.push_back(d);
  }
  if (spacing_w.size() != 3) throw IoError(IoError::Kind::BadHeader, hdr.string() + ": spacing_mm needs three values");
  double sp[3];
  for (int a = 0; a < 3; ++a) sp[a] = parse_double(spacing_w[static_cast<std::size_t>(a)]);
  if (!(sp[0] > 0.0) || sp[0] != sp[1] || sp[0] != sp[2])
    throw IoError(IoError::Kind::BadHeader, hdr.string() + ": spacing must be positive and isotropic");
  if (spacing) *spacing = sp[0];
  std::size_t count = 1;
  for (int d : dims) count *= static_cast<std::size_t>(d);
  return Tensor(std::move(dims), read_f32le(with_ext(stem, ".raw"), count));
}

void write_lines(const fs::path& p, const std::string& text) {
  auto os = open_out(p);
  os << text;
  close_checked(os, p);
}

}  // namespace

void save_volume(const fs::path& stem, const Volume& v) {
  if (v.grid.rank() != 3) throw ShapeError("save_volume: grid must be [X,Y,Z]");
  save_grid(stem, v.grid, v.spacing_mm);
}

Volume load_volume(const fs::path& stem) {
  Volume v;
  v.grid = load_grid(stem, 3, &v.spacing_mm);
  return v;
}

void save_ddf(const fs::path& stem, const DisplacementField& f) {
  if (f.vectors.rank() != 4 || f.vectors.dim(0) != 3) throw ShapeError("save_ddf: field must be [3,X,Y,Z]");
  save_grid(stem, f.vectors, 1.0);
}

DisplacementField load_ddf(const fs::path& stem) {
  Tensor t = load_grid(stem, 4, nullptr);
  if (t.dim(0) != 3) throw IoError(IoError::Kind::BadHeader, stem.string() + ": field needs a leading axis of 3");
  return DisplacementField{std::move(t)};
}

void save_landmarks(const fs::path& file, const LandmarkSet& set) {
  std::string text = "# name x_mm y_mm z_mm radius_mm\n";
  for (const Landmark& l : set.landmarks) {
    if (l.name.empty() || l.name.find_first_of(" \t\r\n#") != std::string::npos)
      throw DomainError("landmark names must be non-empty without whitespace: '" + l.name + "'");
    text += l.name;
    for (double c : l.centroid_mm) text += ' ' + format_double(c);
    text += ' ' + format_double(l.radius_mm) + '\n';
  }
  write_lines(file, text);
}

LandmarkSet load_landmarks(const fs::path& file) {
  auto is = open_in(file);
  LandmarkSet set;
  std::string line;
  int n = 0;
  while (std::getline(is, line)) {
    ++n;
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    const auto w = words(line);
    if (w.size() != 5) throw IoError(IoError::Kind::BadHeader, file.string() + ":" + std::to_string(n) + ": expected 'name x y z radius'");
    Landmark l;
    l.name = w[0];
    for (int a = 0; a < 3; ++a) l.centroid_mm[a] = parse_double(w[static_cast<std::size_t>(a + 1)]);
    l.radius_mm = parse_double(w[4]);
    set.landmarks.push_back(std::move(l));
  }
  return set;
}

void save_param_blob(const fs::path& file, const ParamVector& p) { write_f32le(file, p.values()); }

ParamVector load_param_blob(const fs::path& file, std::shared_ptr<const Layout> layout) {
  const std::size_t n = layout->total();
  return ParamVector(std::move(layout), read_f32le(file, n));
}

void save_checkpoint(const fs::path& stem, const RegNet& net) {
  const RegNetConfig& c = net.config;
  const Layout& layout = net.params.layout();
  if (!(layout == *regnet_layout(c))) throw ShapeError("save_checkpoint: parameters do not match the network config");
  std::ostringstream os;
  os << "format = metareg-checkpoint\nversion = 1\narchitecture = regnet\n"
     << "enc1 = " << c.enc1 << "\nenc2 = " << c.enc2 << "\nenc3 = " << c.enc3 << "\nbottleneck = " << c.bottleneck
     << "\ndec1 = " << c.dec1 << "\ndec2 = " << c.dec2 << "\nleaky_slope = " << format_double(c.leaky_slope)
     << "\nparam_count = " << layout.total() << "\ndtype = f32le\n";
  for (const Segment& s : layout.segments()) {
    os << "segment = " << s.name << ' ' << s.offset;
    for (int d : s.dims) os << ' ' << d;
    os << '\n';
  }
  write_lines(with_ext(stem, ".manifest"), os.str());
  save_param_blob(with_ext(stem, ".params"), net.params);
}

RegNet load_checkpoint(const fs::path& stem) {
  const auto path = with_ext(stem, ".manifest");
  const auto kv = read_key_values(path);
  if (require_key(kv, "format", path) != "metareg-checkpoint") throw IoError(IoError::Kind::BadHeader, path.string() + ": not a checkpoint manifest");
  if (require_key(kv, "version", path) != "1") throw IoError(IoError::Kind::BadHeader, path.string() + ": unsupported version");
  if (require_key(kv, "architecture", path) != "regnet") throw IoError(IoError::Kind::BadHeader, path.string() + ": unknown architecture");
  const std::string dtype = require_key(kv, "dtype", path);
  if (dtype != "f32le") throw IoError(IoError::Kind::UnknownDtype, path.string() + ": unsupported dtype '" + dtype + "'");
  RegNetConfig c;
  c.enc1 = parse_int(require_key(kv, "enc1", path), path);
  c.enc2 = parse_int(require_key(kv, "enc2", path), path);
  c.enc3 = parse_int(require_key(kv, "enc3", path), path);
  c.bottleneck = parse_int(require_key(kv, "bottleneck", path), path);
  c.dec1 = parse_int(require_key(kv, "dec1", path), path);
  c.dec2 = parse_int(require_key(kv, "dec2", path), path);
  c.leaky_slope = parse_double(require_key(kv, "leaky_slope", path));
  validate(c);
  auto layout = regnet_layout(c);
  const std::string count = require_key(kv, "param_count", path);
  if (count != std::to_string(layout->total()))
    throw IoError(IoError::Kind::SizeMismatch, path.string() + ": param_count " + count + " does not match the architecture (" +
                                                   std::to_string(layout->total()) + ")");
  std::vector<std::string> table;
  for (auto [it, end] = kv.equal_range("segment"); it != end; ++it) table.push_back(it->second);
  if (table.size() != layout->segments().size()) throw IoError(IoError::Kind::BadHeader, path.string() + ": layout table has the wrong length");
  for (std::size_t i = 0; i < table.size(); ++i) {
    const Segment& s = layout->segment(i);
    std::string expect = s.name + ' ' + std::to_string(s.offset);
    for (int d : s.dims) expect += ' ' + std::to_string(d);
    if (table[i] != expect) throw IoError(IoError::Kind::BadHeader, path.string() + ": layout entry '" + table[i] + "' expected '" + expect + "'");
  }
  return RegNet{c, load_param_blob(with_ext(stem, ".params"), std::move(layout))};
}

void save_case_pair(const fs::path& dir, const CasePair& p) {
  save_volume(dir / "moving", p.moving.image);
  save_volume(dir / "moving_mask", p.moving.gland_mask);
  save_landmarks(dir / "moving_landmarks.txt", p.moving.landmarks);
  save_volume(dir / "fixed", p.fixed.image);
  save_volume(dir / "fixed_mask", p.fixed.gland_mask);
  save_landmarks(dir / "fixed_landmarks.txt", p.fixed.landmarks);
  save_ddf(dir / "ground_truth_ddf", p.ground_truth_ddf);
  write_lines(dir / "case.txt", "seed = " + std::to_string(p.moving.seed) + "\ndeform_magnitude = " + format_double(p.moving.deform_magnitude) + "\n");
}

CasePair load_case_pair(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IoError(IoError::Kind::Missing, "no case directory " + dir.string());
  const auto kv = read_key_values(dir / "case.txt");
  const std::string seed_s = require_key(kv, "seed", dir / "case.txt");
  std::uint64_t seed = 0;
  const auto r = std::from_chars(seed_s.data(), seed_s.data() + seed_s.size(), seed);
  if (r.ec != std::errc() || r.ptr != seed_s.data() + seed_s.size()) throw IoError(IoError::Kind::BadHeader, (dir / "case.txt").string() + ": bad seed");
  const double mag = parse_double(require_key(kv, "deform_magnitude", dir / "case.txt"));
  CasePair p;
  p.moving = PhantomCase{load_volume(dir / "moving"), load_volume(dir / "moving_mask"), load_landmarks(dir / "moving_landmarks.txt"), seed, mag};
  p.fixed = PhantomCase{load_volume(dir / "fixed"), load_volume(dir / "fixed_mask"), load_landmarks(dir / "fixed_landmarks.txt"), seed, mag};
  p.ground_truth_ddf = load_ddf(dir / "ground_truth_ddf");
  if (p.moving.image.extent() != p.fixed.image.extent() || p.ground_truth_ddf.extent() != p.moving.image.extent())
    throw IoError(IoError::Kind::SizeMismatch, dir.string() + ": case volumes have different grids");
  return p;
}

}  // namespace metareg
