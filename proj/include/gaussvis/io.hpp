// Copyright 2026 The gaussvis Authors
// SPDX-License-Identifier: Apache-2.0

/// @file io.hpp
/// PPM/PFM image files and the sectioned scene text format.
///
/// Scene files are line oriented: `[section]` headers followed by
/// `key = value` lines; `#` starts a comment. Vectors are whitespace
/// separated. Sections:
///
///   [scene]      smoothness, cutoff
///   [samples]    offsets, step
///   [camera]     position, rotation (9 values, row major), fx, fy, cx, cy,
///                width, height, projection (repeatable)
///   [gaussian]   magnitude, center, sigma, albedo (repeatable)
///   [sphere]     center, radius, albedo (repeatable; calibrated at the
///                scene smoothness; cannot be mixed with [gaussian])
///   [mapping]    kind (rigid | free), couple_magnitude, theta
///   [object]     kind (rigid | position), gaussians, pivot (repeatable)
///   [energy]     term, color_space, hsv_value_scale, weighting,
///                accel_weight, limit_weight, limit (index lo hi),
///                exclude_far, exclusion_radius
///   [optimizer]  max_iterations, gradient_tolerance, initial_step,
///                sufficient_decrease, backtrack, max_backtracks,
///                restart_interval, preconditioner, max_step, refine_step,
///                gradient_in_line_search, seed
///   [track]      truth, init (repeatable), init_lo, init_hi
///
/// Index lists accept ranges: `gaussians = 0 3..5` is {0, 3, 4, 5}.

#pragma once

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>
#include <optional>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "gaussvis/calibration.hpp"
#include "gaussvis/energy.hpp"
#include "gaussvis/imaging.hpp"
#include "gaussvis/optimizer.hpp"
#include "gaussvis/parametrization.hpp"
#include "gaussvis/scene.hpp"
#include "gaussvis/visibility.hpp"

namespace gaussvis {

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Images

namespace detail {

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::string& path, const std::string& data) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out.write(data.data(), static_cast<std::streamsize>(data.size()));
  if (!out) throw IoError("write failed: " + path);
}

/// Reads whitespace-separated header tokens (skipping '#' comments in PPM).
class HeaderReader {
 public:
  HeaderReader(std::string_view data, bool comments) : d_(data), comments_(comments) {}

  std::string token() {
    skip();
    const std::size_t start = pos_;
    while (pos_ < d_.size() && !std::isspace(static_cast<unsigned char>(d_[pos_]))) ++pos_;
    if (start == pos_) throw IoError("malformed image header: unexpected end");
    return std::string(d_.substr(start, pos_ - start));
  }

  long integer() {
    const std::string t = token();
    long v = 0;
    auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (ec != std::errc() || p != t.data() + t.size()) throw IoError("malformed image header: bad integer '" + t + "'");
    return v;
  }

  double real() {
    const std::string t = token();
    double v = 0;
    auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (ec != std::errc() || p != t.data() + t.size()) throw IoError("malformed image header: bad number '" + t + "'");
    return v;
  }

  /// Consumes the single whitespace byte that ends a header.
  std::size_t payload_offset() {
    if (pos_ >= d_.size() || !std::isspace(static_cast<unsigned char>(d_[pos_])))
      throw IoError("malformed image header: missing separator");
    return pos_ + 1;
  }

 private:
  void skip() {
    while (pos_ < d_.size()) {
      if (std::isspace(static_cast<unsigned char>(d_[pos_]))) {
        ++pos_;
      } else if (comments_ && d_[pos_] == '#') {
        while (pos_ < d_.size() && d_[pos_] != '\n') ++pos_;
      } else {
        break;
      }
    }
  }
  std::string_view d_;
  bool comments_;
  std::size_t pos_ = 0;
};

inline bool host_little_endian() {
  const std::uint16_t one = 1;
  unsigned char b;
  std::memcpy(&b, &one, 1);
  return b == 1;
}

inline float load_float(const char* p, bool little) {
  unsigned char b[4];
  std::memcpy(b, p, 4);
  if (little != host_little_endian()) std::swap(b[0], b[3]), std::swap(b[1], b[2]);
  float f;
  std::memcpy(&f, b, 4);
  return f;
}

inline void store_float(std::string& out, float f) {
  unsigned char b[4];
  std::memcpy(b, &f, 4);
  if (!host_little_endian()) std::swap(b[0], b[3]), std::swap(b[1], b[2]);
  out.append(reinterpret_cast<const char*>(b), 4);
}

struct PfmData {
  int width = 0, height = 0, channels = 0;
  std::vector<float> values;  ///< top row first
};

inline PfmData parse_pfm(const std::string& data) {
  HeaderReader h(data, false);
  const std::string magic = h.token();
  PfmData out;
  if (magic == "PF") out.channels = 3;
  else if (magic == "Pf") out.channels = 1;
  else throw IoError("not a PFM file");
  const long w = h.integer(), ht = h.integer();
  const double scale = h.real();
  if (w < 1 || ht < 1 || w > 1 << 16 || ht > 1 << 16) throw IoError("malformed PFM header: bad dimensions");
  if (scale == 0.0 || !std::isfinite(scale)) throw IoError("malformed PFM header: bad scale");
  const bool little = scale < 0.0;
  const std::size_t off = h.payload_offset();
  out.width = static_cast<int>(w);
  out.height = static_cast<int>(ht);
  const std::size_t count = static_cast<std::size_t>(w) * ht * out.channels;
  if (data.size() - off < count * 4) throw IoError("truncated PFM payload");
  out.values.resize(count);
  const std::size_t row = static_cast<std::size_t>(w) * out.channels;
  for (long y = 0; y < ht; ++y) {
    // PFM stores the bottom row first.
    const char* src = data.data() + off + static_cast<std::size_t>(ht - 1 - y) * row * 4;
    for (std::size_t i = 0; i < row; ++i) {
      const float f = load_float(src + 4 * i, little);
      if (!std::isfinite(f)) throw IoError("PFM contains a non-finite value");
      out.values[static_cast<std::size_t>(y) * row + i] = f;
    }
  }
  return out;
}

inline std::string format_pfm(int w, int h, int channels, const std::vector<float>& top_first) {
  std::string out = (channels == 3 ? "PF\n" : "Pf\n") + std::to_string(w) + " " + std::to_string(h) + "\n-1.0\n";
  const std::size_t row = static_cast<std::size_t>(w) * channels;
  out.reserve(out.size() + top_first.size() * 4);
  for (int y = h - 1; y >= 0; --y)
    for (std::size_t i = 0; i < row; ++i) store_float(out, top_first[static_cast<std::size_t>(y) * row + i]);
  return out;
}

}  // namespace detail

inline Image read_pfm(const std::string& path) {
  const detail::PfmData d = detail::parse_pfm(detail::read_file(path));
  if (d.channels != 3) throw IoError(path + ": expected a color PFM");
  Image img(d.width, d.height);
  for (std::size_t i = 0; i < img.size(); ++i)
    img.pixels[i] = Vec3(d.values[3 * i], d.values[3 * i + 1], d.values[3 * i + 2]);
  return img;
}

/// Stores values as 32-bit floats; non-finite pixels are rejected.
inline void write_pfm(const std::string& path, const Image& img) {
  validate(img);
  std::vector<float> v;
  v.reserve(img.size() * 3);
  for (const auto& p : img.pixels)
    for (int c = 0; c < 3; ++c) {
      if (!std::isfinite(p[c])) throw IoError("write_pfm: non-finite pixel value");
      v.push_back(static_cast<float>(p[c]));
    }
  detail::write_file(path, detail::format_pfm(img.width, img.height, 3, v));
}

/// Single-channel PFM as per-pixel weights (row-major, top row first).
inline std::vector<double> read_weights(const std::string& path, int& width, int& height) {
  const detail::PfmData d = detail::parse_pfm(detail::read_file(path));
  if (d.channels != 1) throw IoError(path + ": expected a grayscale PFM");
  for (float v : d.values)
    if (v < 0.0f) throw IoError(path + ": negative pixel weight");
  width = d.width;
  height = d.height;
  return std::vector<double>(d.values.begin(), d.values.end());
}

inline void write_weights(const std::string& path, int width, int height, const std::vector<double>& w) {
  if (w.size() != static_cast<std::size_t>(width) * height) throw IoError("write_weights: size mismatch");
  std::vector<float> v(w.begin(), w.end());
  detail::write_file(path, detail::format_pfm(width, height, 1, v));
}

/// Binary P6; 8- or 16-bit samples are scaled by 1/maxval.
inline Image read_ppm(const std::string& path) {
  const std::string data = detail::read_file(path);
  detail::HeaderReader h(data, true);
  if (h.token() != "P6") throw IoError(path + ": not a binary PPM (P6)");
  const long w = h.integer(), ht = h.integer(), maxval = h.integer();
  if (w < 1 || ht < 1 || w > 1 << 16 || ht > 1 << 16) throw IoError(path + ": bad PPM dimensions");
  if (maxval < 1 || maxval > 65535) throw IoError(path + ": bad PPM maxval");
  const std::size_t off = h.payload_offset();
  const std::size_t bytes = maxval < 256 ? 1 : 2;
  const std::size_t count = static_cast<std::size_t>(w) * ht * 3;
  if (data.size() - off < count * bytes) throw IoError(path + ": truncated PPM payload");
  Image img(static_cast<int>(w), static_cast<int>(ht));
  const auto* p = reinterpret_cast<const unsigned char*>(data.data() + off);
  for (std::size_t i = 0; i < count; ++i) {
    const unsigned v = bytes == 1 ? p[i] : (static_cast<unsigned>(p[2 * i]) << 8 | p[2 * i + 1]);
    img.pixels[i / 3][static_cast<int>(i % 3)] = static_cast<double>(v) / static_cast<double>(maxval);
  }
  return img;
}

/// Clamps to [0,1], optionally applies a 1/gamma encoding, quantizes to 8 bits.
inline void write_ppm(const std::string& path, const Image& img, double gamma = 1.0) {
  validate(img);
  std::string out = "P6\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
  for (const auto& px : img.pixels)
    for (int c = 0; c < 3; ++c) {
      double v = std::isfinite(px[c]) ? std::clamp(px[c], 0.0, 1.0) : 0.0;
      if (gamma != 1.0) v = std::pow(v, 1.0 / gamma);
      out.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0))));
    }
  detail::write_file(path, out);
}

inline bool ends_with(std::string_view s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.substr(s.size() - suffix.size()) == suffix;
}

/// Dispatches on the file magic.
inline Image read_image(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  char magic[2] = {0, 0};
  in.read(magic, 2);
  if (magic[0] == 'P' && magic[1] == '6') return read_ppm(path);
  if (magic[0] == 'P' && (magic[1] == 'F' || magic[1] == 'f')) return read_pfm(path);
  throw IoError(path + ": unsupported image format");
}

/// Dispatches on the extension: .pfm or .ppm.
inline void write_image(const std::string& path, const Image& img) {
  if (ends_with(path, ".pfm")) return write_pfm(path, img);
  if (ends_with(path, ".ppm")) return write_ppm(path, img);
  throw IoError(path + ": unsupported image extension (use .pfm or .ppm)");
}

// ---------------------------------------------------------------------------
// Scene files

class ParseError : public std::runtime_error {
 public:
  ParseError(int line, int column, const std::string& msg)
      : std::runtime_error("line " + std::to_string(line) + ", column " + std::to_string(column) + ": " + msg),
        line(line),
        column(column) {}
  int line, column;
};

struct TrackSetup {
  std::vector<double> truth;
  std::vector<std::vector<double>> inits;
  std::vector<double> init_lo, init_hi;

  friend bool operator==(const TrackSetup&, const TrackSetup&) = default;
};

struct SceneFile {
  Scene scene;
  std::vector<SphereSpec> spheres;  ///< non-empty when geometry came from [sphere]
  std::vector<Camera> cameras;
  SampleScheme scheme{};
  std::optional<PoseParams> mapping;
  EnergyConfig energy{};
  OptimConfig optimizer{};
  TrackSetup track{};

  friend bool operator==(const SceneFile& a, const SceneFile& b) {
    return a.scene == b.scene && a.spheres == b.spheres && a.cameras == b.cameras &&
           a.scheme.offsets == b.scheme.offsets && a.scheme.step == b.scheme.step && a.mapping == b.mapping &&
           a.energy == b.energy && a.optimizer == b.optimizer && a.track == b.track;
  }
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

struct Field {
  std::string key;
  std::string value;
  int line = 0;
  int column = 0;  ///< of the value
};

/// Value accessors with position-addressed errors.
class FieldReader {
 public:
  explicit FieldReader(const Field& f) : f_(f) {}

  [[noreturn]] void fail(const std::string& msg, int offset = 0) const {
    throw ParseError(f_.line, f_.column + offset, f_.key + ": " + msg);
  }

  std::vector<std::string_view> tokens(std::vector<int>* offsets = nullptr) const {
    std::vector<std::string_view> out;
    std::string_view s = f_.value;
    std::size_t i = 0;
    while (i < s.size()) {
      while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
      const std::size_t start = i;
      while (i < s.size() && !std::isspace(static_cast<unsigned char>(s[i]))) ++i;
      if (i > start) {
        out.push_back(s.substr(start, i - start));
        if (offsets) offsets->push_back(static_cast<int>(start));
      }
    }
    return out;
  }

  std::vector<double> reals(std::size_t min_count = 0, std::size_t max_count = SIZE_MAX) const {
    std::vector<int> off;
    const auto t = tokens(&off);
    if (t.size() < min_count || t.size() > max_count) {
      if (min_count == max_count) fail("expected " + std::to_string(min_count) + " numbers, got " + std::to_string(t.size()));
      fail("unexpected number of values (" + std::to_string(t.size()) + ")");
    }
    std::vector<double> out;
    for (std::size_t i = 0; i < t.size(); ++i) {
      double v = 0;
      auto [p, ec] = std::from_chars(t[i].data(), t[i].data() + t[i].size(), v);
      if (ec != std::errc() || p != t[i].data() + t[i].size() || !std::isfinite(v))
        fail("'" + std::string(t[i]) + "' is not a finite number", off[i]);
      out.push_back(v);
    }
    return out;
  }

  double real() const { return reals(1, 1)[0]; }
  Vec3 vec3() const {
    const auto v = reals(3, 3);
    return Vec3(v[0], v[1], v[2]);
  }

  long integer() const {
    const auto t = tokens();
    if (t.size() != 1) fail("expected one integer");
    long v = 0;
    auto [p, ec] = std::from_chars(t[0].data(), t[0].data() + t[0].size(), v);
    if (ec != std::errc() || p != t[0].data() + t[0].size()) fail("'" + std::string(t[0]) + "' is not an integer");
    return v;
  }

  std::vector<std::size_t> indices() const {
    std::vector<int> off;
    const auto t = tokens(&off);
    std::vector<std::size_t> out;
    auto parse = [&](std::string_view s, int o) {
      std::size_t v = 0;
      auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
      if (ec != std::errc() || p != s.data() + s.size()) fail("'" + std::string(s) + "' is not an index", o);
      return v;
    };
    for (std::size_t i = 0; i < t.size(); ++i) {
      const auto dots = t[i].find("..");
      if (dots == std::string_view::npos) {
        out.push_back(parse(t[i], off[i]));
        continue;
      }
      const std::size_t a = parse(t[i].substr(0, dots), off[i]);
      const std::size_t b = parse(t[i].substr(dots + 2), off[i]);
      if (b < a) fail("descending index range", off[i]);
      for (std::size_t k = a; k <= b; ++k) out.push_back(k);
    }
    return out;
  }

  bool boolean() const {
    const std::string_view v = trim(f_.value);
    if (v == "true" || v == "1" || v == "on") return true;
    if (v == "false" || v == "0" || v == "off") return false;
    fail("expected true or false");
  }

  template <class E>
  E choice(std::initializer_list<std::pair<std::string_view, E>> options) const {
    const std::string_view v = trim(f_.value);
    std::string names;
    for (const auto& [name, e] : options) {
      if (v == name) return e;
      names += (names.empty() ? "" : ", ") + std::string(name);
    }
    fail("'" + std::string(v) + "' is not one of " + names);
  }

  const Field& field() const { return f_; }

 private:
  const Field& f_;
};

struct Section {
  std::string name;
  int line = 0;
  std::vector<Field> fields;
};

inline std::vector<Section> split_sections(std::string_view text) {
  std::vector<Section> out;
  int line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    ++line_no;
    pos = end + 1;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    const std::string_view t = trim(line);
    if (t.empty()) {
      if (end == text.size()) break;
      continue;
    }
    const int indent = static_cast<int>(line.find_first_not_of(" \t")) + 1;
    if (t.front() == '[') {
      if (t.back() != ']') throw ParseError(line_no, indent, "unterminated section header");
      out.push_back(Section{std::string(trim(t.substr(1, t.size() - 2))), line_no, {}});
    } else {
      const auto eq = line.find('=');
      if (eq == std::string_view::npos) throw ParseError(line_no, indent, "expected 'key = value'");
      if (out.empty()) throw ParseError(line_no, indent, "entry outside of any section");
      const std::string_view key = trim(line.substr(0, eq));
      if (key.empty()) throw ParseError(line_no, indent, "missing key");
      std::size_t vstart = eq + 1;
      while (vstart < line.size() && std::isspace(static_cast<unsigned char>(line[vstart]))) ++vstart;
      out.back().fields.push_back(Field{std::string(key), std::string(trim(line.substr(eq + 1))), line_no,
                                        static_cast<int>(vstart) + 1});
    }
    if (end == text.size()) break;
  }
  return out;
}

[[noreturn]] inline void unknown_key(const Section& s, const Field& f) {
  throw ParseError(f.line, 1, "unknown key '" + f.key + "' in [" + s.name + "]");
}

inline Camera parse_camera(const Section& s) {
  Camera c;
  for (const auto& f : s.fields) {
    FieldReader r(f);
    if (f.key == "position") c.position = r.vec3();
    else if (f.key == "rotation") {
      const auto v = r.reals(9, 9);
      for (int i = 0; i < 9; ++i) c.orientation(i / 3, i % 3) = v[i];
    } else if (f.key == "fx") c.fx = r.real();
    else if (f.key == "fy") c.fy = r.real();
    else if (f.key == "cx") c.cx = r.real();
    else if (f.key == "cy") c.cy = r.real();
    else if (f.key == "width") c.width = static_cast<int>(r.integer());
    else if (f.key == "height") c.height = static_cast<int>(r.integer());
    else if (f.key == "projection")
      c.projection = r.choice<Projection>({{"perspective", Projection::perspective}, {"orthographic", Projection::orthographic}});
    else unknown_key(s, f);
  }
  try {
    validate(c);
  } catch (const std::invalid_argument& e) {
    throw ParseError(s.line, 1, e.what());
  }
  return c;
}

inline Gaussian parse_gaussian(const Section& s) {
  Gaussian g;
  bool have_sigma = false;
  for (const auto& f : s.fields) {
    FieldReader r(f);
    if (f.key == "magnitude") g.magnitude = r.real();
    else if (f.key == "center") g.center = r.vec3();
    else if (f.key == "sigma") {
      const auto v = r.reals(1, 3);
      if (v.size() != 1 && !(v[0] == v[1] && v[1] == v[2]))
        r.fail("anisotropic sigma is not supported; Gaussians are isotropic");
      g.sigma = v[0];
      have_sigma = true;
      if (!(g.sigma > 0.0)) r.fail("gaussian.sigma must be positive");
    } else if (f.key == "covariance") {
      r.fail("covariance matrices are not supported; use an isotropic sigma");
    } else if (f.key == "albedo") g.albedo = r.vec3();
    else unknown_key(s, f);
  }
  if (!have_sigma) throw ParseError(s.line, 1, "[gaussian] requires sigma");
  try {
    validate(g);
  } catch (const std::invalid_argument& e) {
    throw ParseError(s.line, 1, e.what());
  }
  return g;
}

inline SphereSpec parse_sphere(const Section& s) {
  SphereSpec sp;
  for (const auto& f : s.fields) {
    FieldReader r(f);
    if (f.key == "center") sp.center = r.vec3();
    else if (f.key == "radius") {
      sp.radius = r.real();
      if (!(sp.radius > 0.0)) r.fail("sphere.radius must be positive");
    } else if (f.key == "albedo") {
      sp.albedo = r.vec3();
      if (!((sp.albedo.array() >= 0.0).all() && (sp.albedo.array() <= 1.0).all()))
        r.fail("sphere.albedo channels must lie in [0,1]");
    } else unknown_key(s, f);
  }
  return sp;
}

}  // namespace detail

/// Parses scene text; [sphere] entries are calibrated at the scene smoothness.
inline SceneFile parse_scene(std::string_view text) {
  using detail::FieldReader;
  SceneFile out;
  std::vector<Gaussian> gaussians;
  bool saw_mapping = false;
  const auto sections = detail::split_sections(text);
  for (const auto& s : sections) {
    if (s.name == "scene") {
      for (const auto& f : s.fields) {
        FieldReader r(f);
        if (f.key == "smoothness") {
          out.scene.smoothness = r.real();
          if (!(out.scene.smoothness > 0.0 && out.scene.smoothness < 1.0)) r.fail("scene.smoothness must lie in (0,1)");
        } else if (f.key == "cutoff") {
          out.scene.cutoff = r.real();
          if (!(out.scene.cutoff >= 0.0)) r.fail("scene.cutoff must be >= 0");
        } else detail::unknown_key(s, f);
      }
    } else if (s.name == "samples") {
      for (const auto& f : s.fields) {
        FieldReader r(f);
        if (f.key == "offsets") {
          out.scheme.offsets.clear();
          for (double v : r.reals(1)) {
            if (v != std::floor(v)) r.fail("samples.offsets must be integers");
            out.scheme.offsets.push_back(static_cast<int>(v));
          }
        } else if (f.key == "step") out.scheme.step = r.real();
        else detail::unknown_key(s, f);
      }
      try {
        validate(out.scheme);
      } catch (const std::invalid_argument& e) {
        throw ParseError(s.line, 1, e.what());
      }
    } else if (s.name == "camera") {
      out.cameras.push_back(detail::parse_camera(s));
    } else if (s.name == "gaussian") {
      if (!out.spheres.empty()) throw ParseError(s.line, 1, "[gaussian] cannot be combined with [sphere]");
      gaussians.push_back(detail::parse_gaussian(s));
    } else if (s.name == "sphere") {
      if (!gaussians.empty()) throw ParseError(s.line, 1, "[sphere] cannot be combined with [gaussian]");
      out.spheres.push_back(detail::parse_sphere(s));
    } else if (s.name == "mapping") {
      if (saw_mapping) throw ParseError(s.line, 1, "duplicate [mapping]");
      saw_mapping = true;
      PoseParams p = out.mapping.value_or(PoseParams{});
      for (const auto& f : s.fields) {
        FieldReader r(f);
        if (f.key == "kind")
          p.mapping = r.choice<MappingKind>({{"rigid", MappingKind::rigid_multi_object}, {"free", MappingKind::free_gaussian}});
        else if (f.key == "couple_magnitude") p.couple_magnitude = r.boolean();
        else if (f.key == "theta") p.values = r.reals();
        else detail::unknown_key(s, f);
      }
      out.mapping = p;
    } else if (s.name == "object") {
      ObjectDescriptor o;
      for (const auto& f : s.fields) {
        FieldReader r(f);
        if (f.key == "kind") o.kind = r.choice<ObjectKind>({{"rigid", ObjectKind::rigid}, {"position", ObjectKind::position}});
        else if (f.key == "gaussians") o.gaussians = r.indices();
        else if (f.key == "pivot") o.pivot = r.vec3();
        else detail::unknown_key(s, f);
      }
      if (!out.mapping) out.mapping = PoseParams{};
      out.mapping->objects.push_back(std::move(o));
    } else if (s.name == "energy") {
      auto& e = out.energy;
      for (const auto& f : s.fields) {
        FieldReader r(f);
        if (f.key == "term") e.term = r.choice<DataTerm>({{"pc", DataTerm::pc}, {"mc", DataTerm::mc}});
        else if (f.key == "color_space")
          e.color_space = r.choice<ColorSpace>({{"linear", ColorSpace::linear_rgb}, {"hsv", ColorSpace::hsv_scaled}});
        else if (f.key == "hsv_value_scale") e.hsv_value_scale = r.real();
        else if (f.key == "weighting")
          e.weighting = r.choice<PixelWeighting>({{"uniform", PixelWeighting::uniform}, {"per_pixel", PixelWeighting::per_pixel}});
        else if (f.key == "accel_weight") {
          e.accel_weight = r.real();
          if (e.accel_weight < 0.0) r.fail("energy.accel_weight must be >= 0");
        } else if (f.key == "limit_weight") {
          e.limit_weight = r.real();
          if (e.limit_weight < 0.0) r.fail("energy.limit_weight must be >= 0");
        } else if (f.key == "limit") {
          const auto v = r.reals(3, 3);
          if (v[0] < 0 || v[0] != std::floor(v[0])) r.fail("energy.limit index must be a nonnegative integer");
          if (!(v[1] <= v[2])) r.fail("energy.limit lo exceeds hi");
          const auto i = static_cast<std::size_t>(v[0]);
          if (e.limits.size() <= i) e.limits.resize(i + 1);
          e.limits[i] = ParamLimit{v[1], v[2]};
        } else if (f.key == "exclude_far") e.exclude_far_pixels = r.boolean();
        else if (f.key == "exclusion_radius") {
          e.exclusion_radius = r.real();
          if (!(e.exclusion_radius > 0.0)) r.fail("energy.exclusion_radius must be positive");
        } else detail::unknown_key(s, f);
      }
    } else if (s.name == "optimizer") {
      auto& o = out.optimizer;
      for (const auto& f : s.fields) {
        FieldReader r(f);
        if (f.key == "max_iterations") o.max_iterations = static_cast<int>(r.integer());
        else if (f.key == "gradient_tolerance") o.gradient_tolerance = r.real();
        else if (f.key == "initial_step") o.initial_step = r.real();
        else if (f.key == "sufficient_decrease") o.sufficient_decrease = r.real();
        else if (f.key == "backtrack") o.backtrack = r.real();
        else if (f.key == "max_backtracks") o.max_backtracks = static_cast<int>(r.integer());
        else if (f.key == "restart_interval") o.restart_interval = static_cast<int>(r.integer());
        else if (f.key == "preconditioner")
          o.preconditioner = r.choice<Preconditioner>({{"none", Preconditioner::none}, {"diagonal", Preconditioner::diagonal}});
        else if (f.key == "max_step")
          o.max_step = detail::trim(f.value) == "inf" ? std::numeric_limits<double>::infinity() : r.real();
        else if (f.key == "refine_step") o.refine_step = r.boolean();
        else if (f.key == "gradient_in_line_search") o.gradient_in_line_search = r.boolean();
        else if (f.key == "seed") o.seed = static_cast<std::uint64_t>(r.integer());
        else detail::unknown_key(s, f);
      }
      try {
        validate(o);
      } catch (const std::invalid_argument& e) {
        throw ParseError(s.line, 1, e.what());
      }
    } else if (s.name == "track") {
      for (const auto& f : s.fields) {
        FieldReader r(f);
        if (f.key == "truth") out.track.truth = r.reals();
        else if (f.key == "init") out.track.inits.push_back(r.reals());
        else if (f.key == "init_lo") out.track.init_lo = r.reals();
        else if (f.key == "init_hi") out.track.init_hi = r.reals();
        else detail::unknown_key(s, f);
      }
    } else {
      throw ParseError(s.line, 1, "unknown section [" + s.name + "]");
    }
  }

  if (!out.spheres.empty()) {
    const double cutoff = out.scene.cutoff;
    out.scene = build_from_spheres(out.spheres, out.scene.smoothness, out.scheme);
    out.scene.cutoff = cutoff;
  } else {
    out.scene.gaussians = std::move(gaussians);
  }

  if (out.mapping) {
    auto& p = *out.mapping;
    const std::size_t need = parameter_count(p, out.scene.size());
    if (p.values.empty()) p.values = identity_theta(p, out.scene);
    if (p.values.size() != need)
      throw ParseError(1, 1, "mapping.theta has " + std::to_string(p.values.size()) + " values, expected " + std::to_string(need));
    for (std::size_t oi = 0; oi < p.objects.size(); ++oi)
      for (std::size_t q : p.objects[oi].gaussians)
        if (q >= out.scene.size())
          throw ParseError(1, 1, "object " + std::to_string(oi) + ": gaussians index " + std::to_string(q) + " out of range");
    auto check_len = [&](const std::vector<double>& v, const char* name) {
      if (!v.empty() && v.size() != need)
        throw ParseError(1, 1, std::string("track.") + name + " has " + std::to_string(v.size()) + " values, expected " + std::to_string(need));
    };
    check_len(out.track.truth, "truth");
    for (const auto& i : out.track.inits) check_len(i, "init");
    check_len(out.track.init_lo, "init_lo");
    check_len(out.track.init_hi, "init_hi");
  }
  return out;
}

inline SceneFile load_scene(const std::string& path) { return parse_scene(detail::read_file(path)); }

namespace detail {

inline std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string nums(std::span<const double> v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? " " : "") + num(v[i]);
  return s;
}

inline std::string vec(const Vec3& v) { return num(v.x()) + " " + num(v.y()) + " " + num(v.z()); }

}  // namespace detail

/// Inverse of parse_scene; numbers are written with 17 significant digits.
inline std::string serialize_scene(const SceneFile& f) {
  using detail::num;
  using detail::vec;
  std::ostringstream os;
  os << "[scene]\nsmoothness = " << num(f.scene.smoothness) << "\ncutoff = " << num(f.scene.cutoff) << "\n\n";
  os << "[samples]\noffsets =";
  for (int k : f.scheme.offsets) os << ' ' << k;
  os << "\nstep = " << num(f.scheme.step) << "\n";
  for (const auto& c : f.cameras) {
    os << "\n[camera]\nposition = " << vec(c.position) << "\nrotation =";
    for (int i = 0; i < 9; ++i) os << ' ' << num(c.orientation(i / 3, i % 3));
    os << "\nfx = " << num(c.fx) << "\nfy = " << num(c.fy) << "\ncx = " << num(c.cx) << "\ncy = " << num(c.cy)
       << "\nwidth = " << c.width << "\nheight = " << c.height
       << "\nprojection = " << (c.projection == Projection::perspective ? "perspective" : "orthographic") << "\n";
  }
  if (!f.spheres.empty()) {
    for (const auto& s : f.spheres)
      os << "\n[sphere]\ncenter = " << vec(s.center) << "\nradius = " << num(s.radius) << "\nalbedo = " << vec(s.albedo) << "\n";
  } else {
    for (const auto& g : f.scene.gaussians)
      os << "\n[gaussian]\nmagnitude = " << num(g.magnitude) << "\ncenter = " << vec(g.center)
         << "\nsigma = " << num(g.sigma) << "\nalbedo = " << vec(g.albedo) << "\n";
  }
  if (f.mapping) {
    const auto& p = *f.mapping;
    os << "\n[mapping]\nkind = " << (p.mapping == MappingKind::free_gaussian ? "free" : "rigid")
       << "\ncouple_magnitude = " << (p.couple_magnitude ? "true" : "false") << "\ntheta = " << detail::nums(p.values) << "\n";
    for (const auto& o : p.objects) {
      os << "\n[object]\nkind = " << (o.kind == ObjectKind::rigid ? "rigid" : "position") << "\ngaussians =";
      for (std::size_t q : o.gaussians) os << ' ' << q;
      os << "\npivot = " << vec(o.pivot) << "\n";
    }
  }
  const auto& e = f.energy;
  os << "\n[energy]\nterm = " << (e.term == DataTerm::pc ? "pc" : "mc")
     << "\ncolor_space = " << (e.color_space == ColorSpace::linear_rgb ? "linear" : "hsv")
     << "\nhsv_value_scale = " << num(e.hsv_value_scale)
     << "\nweighting = " << (e.weighting == PixelWeighting::uniform ? "uniform" : "per_pixel")
     << "\naccel_weight = " << num(e.accel_weight) << "\nlimit_weight = " << num(e.limit_weight) << "\n";
  for (std::size_t i = 0; i < e.limits.size(); ++i)
    os << "limit = " << i << ' ' << num(e.limits[i].lo) << ' ' << num(e.limits[i].hi) << "\n";
  if (e.exclude_far_pixels) os << "exclude_far = " << (*e.exclude_far_pixels ? "true" : "false") << "\n";
  os << "exclusion_radius = " << num(e.exclusion_radius) << "\n";
  const auto& o = f.optimizer;
  os << "\n[optimizer]\nmax_iterations = " << o.max_iterations << "\ngradient_tolerance = " << num(o.gradient_tolerance)
     << "\ninitial_step = " << num(o.initial_step) << "\nsufficient_decrease = " << num(o.sufficient_decrease)
     << "\nbacktrack = " << num(o.backtrack) << "\nmax_backtracks = " << o.max_backtracks
     << "\nrestart_interval = " << o.restart_interval
     << "\npreconditioner = " << (o.preconditioner == Preconditioner::none ? "none" : "diagonal")
     << "\nmax_step = " << num(o.max_step) << "\nrefine_step = " << (o.refine_step ? "true" : "false")
     << "\ngradient_in_line_search = " << (o.gradient_in_line_search ? "true" : "false") << "\nseed = " << o.seed << "\n";
  const auto& t = f.track;
  if (!t.truth.empty() || !t.inits.empty() || !t.init_lo.empty() || !t.init_hi.empty()) {
    os << "\n[track]\n";
    if (!t.truth.empty()) os << "truth = " << detail::nums(t.truth) << "\n";
    for (const auto& i : t.inits) os << "init = " << detail::nums(i) << "\n";
    if (!t.init_lo.empty()) os << "init_lo = " << detail::nums(t.init_lo) << "\n";
    if (!t.init_hi.empty()) os << "init_hi = " << detail::nums(t.init_hi) << "\n";
  }
  return os.str();
}

}  // namespace gaussvis
