#pragma once

#include <bit>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "lidar2mm/convert.hpp"
#include "lidar2mm/loss.hpp"
#include "lidar2mm/preprocess.hpp"
#include "lidar2mm/types.hpp"

// Sequence files come in two interchangeable encodings, documented in
// FORMAT.md:
//   - line-delimited text (canonical): one header line, an optional joint
//     list, then one line per frame;
//   - a compact little-endian binary variant ("L2MBIN01").
// Coordinates are stored as IEEE-754 binary32 in both; writing quantizes the
// in-memory doubles to the nearest binary32, and the text encoding uses the
// shortest decimal that round-trips, so text and binary hold identical
// values and re-reading a written file reproduces it bit for bit.

namespace lidar2mm {

enum class FileFormat { kText, kBinary };

inline constexpr std::string_view kTextMagic = "lidar2mm-seq";
inline constexpr std::string_view kBinaryMagic = "L2MBIN01";

namespace detail {

inline void append_f32(std::string& out, double value) {
  char buf[48];
  const float f = static_cast<float>(value);
  const auto r = std::to_chars(buf, buf + sizeof(buf), f);
  out.append(buf, r.ptr);
}

inline void append_f64(std::string& out, double value) {
  char buf[48];
  const auto r = std::to_chars(buf, buf + sizeof(buf), value);
  out.append(buf, r.ptr);
}

struct LineError {
  const std::string& path;
  std::size_t line;
  [[noreturn]] void fail(const std::string& msg) const {
    throw ParseError(path + ":" + std::to_string(line) + ": " + msg);
  }
};

inline double parse_coord(std::string_view tok, const LineError& err) {
  float v = 0.0f;
  const auto r = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (r.ec != std::errc{} || r.ptr != tok.data() + tok.size()) {
    err.fail("bad coordinate '" + std::string(tok) + "'");
  }
  if (!std::isfinite(v)) {
    err.fail("non-finite coordinate '" + std::string(tok) + "'");
  }
  return static_cast<double>(v);
}

template <typename Int>
inline Int parse_int(std::string_view tok, const LineError& err,
                     const char* what) {
  Int v{};
  const auto r = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (r.ec != std::errc{} || r.ptr != tok.data() + tok.size()) {
    err.fail(std::string("bad ") + what + " '" + std::string(tok) + "'");
  }
  return v;
}

inline std::vector<std::string_view> split_tokens(std::string_view line) {
  std::vector<std::string_view> tokens;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && line[i] == ' ') ++i;
    std::size_t start = i;
    while (i < line.size() && line[i] != ' ') ++i;
    if (i > start) tokens.push_back(line.substr(start, i - start));
  }
  return tokens;
}

// little-endian scalar I/O
inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>(v >> (8 * i)));
}
inline void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>(v >> (8 * i)));
}
inline void put_f32(std::string& out, double v) {
  put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
}
inline void put_f64(std::string& out, double v) {
  put_u64(out, std::bit_cast<std::uint64_t>(v));
}

struct BinCursor {
  const std::string& path;
  std::string_view data;
  std::size_t pos = 0;

  void need(std::size_t n, const char* what) const {
    if (pos + n > data.size()) {
      throw ParseError(path + ": truncated binary sequence (reading " +
                       std::string(what) + " at offset " +
                       std::to_string(pos) + ")");
    }
  }
  std::uint8_t u8(const char* what) {
    need(1, what);
    return static_cast<std::uint8_t>(data[pos++]);
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
      v |= static_cast<std::uint32_t>(static_cast<std::uint8_t>(data[pos + i]))
           << (8 * i);
    }
    pos += 4;
    return v;
  }
  std::uint64_t u64(const char* what) {
    need(8, what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) {
      v |= static_cast<std::uint64_t>(static_cast<std::uint8_t>(data[pos + i]))
           << (8 * i);
    }
    pos += 8;
    return v;
  }
  double f32(const char* what) {
    const float f = std::bit_cast<float>(u32(what));
    if (!std::isfinite(f)) {
      throw ParseError(path + ": non-finite coordinate in binary frame");
    }
    return static_cast<double>(f);
  }
  double f64(const char* what) { return std::bit_cast<double>(u64(what)); }
};

}  // namespace detail

/// Serializes to the canonical text encoding; identical sequences produce
/// identical bytes.
inline std::string sequence_to_text(const Sequence& seq) {
  std::string out;
  out += kTextMagic;
  out += " version=1 source=";
  out += to_string(seq.source);
  out += " rate_hz=";
  detail::append_f64(out, seq.rate_hz);
  out += " units=m\n";
  if (seq.labeled()) {
    out += "joints";
    for (std::string_view name : kJointNames) {
      out += ' ';
      out += name;
    }
    out += '\n';
  }
  for (const Frame& f : seq.frames) {
    out += "frame ";
    out += std::to_string(f.t);
    out += ' ';
    out += std::to_string(f.cloud.size());
    for (const Vec3& p : f.cloud) {
      for (int a = 0; a < 3; ++a) {
        out += ' ';
        detail::append_f32(out, p[a]);
      }
    }
    if (f.skeleton) {
      out += " skel";
      for (const Vec3& j : *f.skeleton) {
        for (int a = 0; a < 3; ++a) {
          out += ' ';
          detail::append_f32(out, j[a]);
        }
      }
    }
    out += '\n';
  }
  return out;
}

/// Parses the text encoding; `path` is used only for error messages.
inline Sequence sequence_from_text(std::string_view text,
                                   const std::string& path) {
  Sequence seq;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  bool saw_header = false;
  bool labeled = false;
  bool saw_frame = false;
  std::int64_t prev_t = -1;

  while (pos <= text.size()) {
    if (pos == text.size()) break;
    std::size_t eol = text.find('\n', pos);
    if (eol == std::string_view::npos) eol = text.size();
    const std::string_view line = text.substr(pos, eol - pos);
    pos = eol + 1;
    ++line_no;
    const detail::LineError err{path, line_no};
    const auto tokens = detail::split_tokens(line);
    if (tokens.empty()) err.fail("empty line");

    if (!saw_header) {
      if (tokens[0] != kTextMagic) err.fail("missing sequence header");
      bool have_version = false, have_source = false, have_rate = false,
           have_units = false;
      for (std::size_t i = 1; i < tokens.size(); ++i) {
        const std::string_view tok = tokens[i];
        const std::size_t eq = tok.find('=');
        if (eq == std::string_view::npos) {
          err.fail("header fields must be key=value, got '" +
                   std::string(tok) + "'");
        }
        const std::string_view key = tok.substr(0, eq);
        const std::string_view val = tok.substr(eq + 1);
        if (key == "version") {
          if (have_version) err.fail("duplicate header key 'version'");
          have_version = true;
          if (val != "1") err.fail("unsupported version '" + std::string(val) + "'");
        } else if (key == "source") {
          if (have_source) err.fail("duplicate header key 'source'");
          have_source = true;
          const auto tag = source_tag_from_string(val);
          if (!tag) err.fail("unknown source tag '" + std::string(val) + "'");
          seq.source = *tag;
        } else if (key == "rate_hz") {
          if (have_rate) err.fail("duplicate header key 'rate_hz'");
          have_rate = true;
          double rate = 0.0;
          const auto r =
              std::from_chars(val.data(), val.data() + val.size(), rate);
          if (r.ec != std::errc{} || r.ptr != val.data() + val.size() ||
              !std::isfinite(rate) || rate <= 0.0) {
            err.fail("rate_hz must be a finite number > 0");
          }
          seq.rate_hz = rate;
        } else if (key == "units") {
          if (have_units) err.fail("duplicate header key 'units'");
          have_units = true;
          if (val != "m") {
            err.fail("unsupported units '" + std::string(val) +
                     "' (coordinates must be meters)");
          }
        } else {
          err.fail("unknown header key '" + std::string(key) + "'");
        }
      }
      if (!have_version || !have_source || !have_rate || !have_units) {
        err.fail("header requires version, source, rate_hz and units");
      }
      saw_header = true;
      continue;
    }

    if (tokens[0] == "joints") {
      if (saw_frame) err.fail("joints line must precede all frames");
      if (labeled) err.fail("duplicate joints line");
      if (tokens.size() != 1 + kJointCount) {
        err.fail("expected " + std::to_string(kJointCount) +
                 " joint names, got " + std::to_string(tokens.size() - 1));
      }
      for (int j = 0; j < kJointCount; ++j) {
        if (tokens[1 + j] != kJointNames[j]) {
          err.fail("joint " + std::to_string(j) + " must be '" +
                   std::string(kJointNames[j]) + "', got '" +
                   std::string(tokens[1 + j]) + "'");
        }
      }
      labeled = true;
      continue;
    }

    if (tokens[0] != "frame") {
      err.fail("unexpected record '" + std::string(tokens[0]) + "'");
    }
    if (tokens.size() < 3) err.fail("frame record needs a timestep and a count");
    const std::int64_t t = detail::parse_int<std::int64_t>(tokens[1], err, "timestep");
    if (t < 0) err.fail("timestep must be >= 0");
    if (t <= prev_t) {
      err.fail("timesteps must be strictly increasing (t=" +
               std::to_string(t) + " after t=" + std::to_string(prev_t) + ")");
    }
    const std::uint64_t m =
        detail::parse_int<std::uint64_t>(tokens[2], err, "point count");
    const std::size_t coords_end = 3 + 3 * static_cast<std::size_t>(m);
    if (tokens.size() < coords_end) {
      err.fail("frame t=" + std::to_string(t) + ": expected " +
               std::to_string(3 * m) + " point coordinates, got " +
               std::to_string(tokens.size() - 3));
    }
    Frame frame;
    frame.t = t;
    frame.cloud.reserve(m);
    for (std::size_t i = 3; i < coords_end; i += 3) {
      frame.cloud.emplace_back(detail::parse_coord(tokens[i], err),
                               detail::parse_coord(tokens[i + 1], err),
                               detail::parse_coord(tokens[i + 2], err));
    }
    if (labeled) {
      if (tokens.size() == coords_end || tokens[coords_end] != "skel") {
        err.fail("frame t=" + std::to_string(t) +
                 ": labeled sequence requires a skel record");
      }
      const std::size_t nvals = tokens.size() - coords_end - 1;
      if (nvals != 3 * kJointCount) {
        err.fail("frame t=" + std::to_string(t) + ": expected " +
                 std::to_string(3 * kJointCount) +
                 " skeleton coordinates, got " + std::to_string(nvals));
      }
      Skeleton skel;
      for (int j = 0; j < kJointCount; ++j) {
        const std::size_t base = coords_end + 1 + 3 * j;
        skel[j] = Vec3(detail::parse_coord(tokens[base], err),
                       detail::parse_coord(tokens[base + 1], err),
                       detail::parse_coord(tokens[base + 2], err));
      }
      frame.skeleton = skel;
    } else if (tokens.size() != coords_end) {
      if (tokens[coords_end] == "skel") {
        err.fail("frame t=" + std::to_string(t) +
                 ": skel record in a sequence without a joints line");
      }
      err.fail("frame t=" + std::to_string(t) + ": trailing tokens");
    }
    prev_t = t;
    saw_frame = true;
    seq.frames.push_back(std::move(frame));
  }

  if (!saw_header) throw ParseError(path + ": empty file");
  if (!saw_frame) throw ParseError(path + ": sequence has no frames");
  validate_sequence(seq, path);
  return seq;
}

/// Compact binary encoding (see FORMAT.md); round-trips through the text
/// form since both store binary32 coordinates.
inline std::string sequence_to_binary(const Sequence& seq) {
  std::string out;
  out += kBinaryMagic;
  out.push_back(static_cast<char>(seq.source));
  out.push_back(static_cast<char>(seq.labeled() ? 1 : 0));
  detail::put_f64(out, seq.rate_hz);
  detail::put_u64(out, seq.frames.size());
  for (const Frame& f : seq.frames) {
    detail::put_u64(out, static_cast<std::uint64_t>(f.t));
    detail::put_u32(out, static_cast<std::uint32_t>(f.cloud.size()));
    for (const Vec3& p : f.cloud) {
      for (int a = 0; a < 3; ++a) detail::put_f32(out, p[a]);
    }
    if (f.skeleton) {
      for (const Vec3& j : *f.skeleton) {
        for (int a = 0; a < 3; ++a) detail::put_f32(out, j[a]);
      }
    }
  }
  return out;
}

inline Sequence sequence_from_binary(std::string_view data,
                                     const std::string& path) {
  detail::BinCursor in{path, data};
  in.need(kBinaryMagic.size(), "magic");
  if (data.substr(0, kBinaryMagic.size()) != kBinaryMagic) {
    throw ParseError(path + ": bad binary magic");
  }
  in.pos = kBinaryMagic.size();
  Sequence seq;
  const std::uint8_t source = in.u8("source");
  if (source > 2) throw ParseError(path + ": unknown source tag");
  seq.source = static_cast<SourceTag>(source);
  const std::uint8_t labeled = in.u8("labeled flag");
  if (labeled > 1) throw ParseError(path + ": bad labeled flag");
  seq.rate_hz = in.f64("rate_hz");
  if (!std::isfinite(seq.rate_hz) || seq.rate_hz <= 0.0) {
    throw ParseError(path + ": rate_hz must be a finite number > 0");
  }
  const std::uint64_t frame_count = in.u64("frame count");
  if (frame_count == 0) throw ParseError(path + ": sequence has no frames");
  seq.frames.reserve(frame_count);
  std::int64_t prev_t = -1;
  for (std::uint64_t i = 0; i < frame_count; ++i) {
    Frame f;
    f.t = static_cast<std::int64_t>(in.u64("timestep"));
    if (f.t < 0 || f.t <= prev_t) {
      throw ParseError(path + ": timesteps must be strictly increasing");
    }
    const std::uint32_t m = in.u32("point count");
    f.cloud.reserve(m);
    for (std::uint32_t p = 0; p < m; ++p) {
      const double x = in.f32("point");
      const double y = in.f32("point");
      const double z = in.f32("point");
      f.cloud.emplace_back(x, y, z);
    }
    if (labeled) {
      Skeleton skel;
      for (int j = 0; j < kJointCount; ++j) {
        const double x = in.f32("joint");
        const double y = in.f32("joint");
        const double z = in.f32("joint");
        skel[j] = Vec3(x, y, z);
      }
      f.skeleton = skel;
    }
    prev_t = f.t;
    seq.frames.push_back(std::move(f));
  }
  if (in.pos != data.size()) {
    throw ParseError(path + ": trailing bytes after last frame");
  }
  validate_sequence(seq, path);
  return seq;
}

inline std::string read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError(path.string() + ": cannot open file");
  std::ostringstream buf;
  buf << in.rdbuf();
  if (!in.good() && !in.eof()) {
    throw ParseError(path.string() + ": read failure");
  }
  return std::move(buf).str();
}

inline void write_file_bytes(const std::filesystem::path& path,
                             std::string_view bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error(path.string() + ": cannot open for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  out.flush();
  if (!out.good()) throw std::runtime_error(path.string() + ": write failure");
}

/// Loads a sequence file, auto-detecting text vs binary from the magic.
inline Sequence read_sequence(const std::filesystem::path& path) {
  const std::string bytes = read_file_bytes(path);
  if (bytes.size() >= kBinaryMagic.size() &&
      std::string_view(bytes).substr(0, kBinaryMagic.size()) == kBinaryMagic) {
    return sequence_from_binary(bytes, path.string());
  }
  if (bytes.size() >= kTextMagic.size() &&
      std::string_view(bytes).substr(0, kTextMagic.size()) == kTextMagic) {
    return sequence_from_text(bytes, path.string());
  }
  throw ParseError(path.string() + ": unrecognized file header");
}

/// Writes a sequence with deterministic bytes; empty sequences are rejected.
inline void write_sequence(const Sequence& seq,
                           const std::filesystem::path& path,
                           FileFormat format = FileFormat::kText) {
  if (seq.frames.empty()) {
    throw ContractError("sequence must contain at least one frame");
  }
  validate_sequence(seq);
  write_file_bytes(path, format == FileFormat::kText ? sequence_to_text(seq)
                                                     : sequence_to_binary(seq));
}

// ---------------------------------------------------------------------------
// Config files: one JSON object with optional "seed", "preprocess",
// "conversion" and "utcl" sections. Unknown keys are rejected. Length-valued
// keys accept a *_cm variant that is converted to meters on load.
// ---------------------------------------------------------------------------

struct LoadedConfig {
  PreprocessConfig preprocess;
  ConversionConfig conversion;
  UtclConfig utcl;
  std::optional<std::uint64_t> seed;
};

namespace detail {

class SectionReader {
 public:
  SectionReader(const nlohmann::json& obj, std::string section)
      : section_(std::move(section)) {
    for (const auto& item : obj.items()) pending_[item.key()] = &item.value();
  }

  void number(const char* key, double& out) {
    if (const nlohmann::json* v = take(key)) out = as_number(key, *v);
  }

  // meters, or <key>_cm in centimeters
  void length(const char* key, double& out) {
    const nlohmann::json* v = take(key);
    const std::string cm_key = std::string(key) + "_cm";
    const nlohmann::json* v_cm = take(cm_key.c_str());
    if (v && v_cm) {
      throw ParseError("config: both '" + qualified(key) + "' and '" +
                       qualified(cm_key.c_str()) + "' given");
    }
    if (v) out = as_number(key, *v);
    if (v_cm) out = as_number(cm_key.c_str(), *v_cm) / 100.0;
  }

  void integer(const char* key, int& out) {
    if (const nlohmann::json* v = take(key)) {
      if (!v->is_number_integer()) {
        throw ParseError("config: '" + qualified(key) + "' must be an integer");
      }
      out = v->get<int>();
    }
  }

  void finish() const {
    if (!pending_.empty()) {
      throw ParseError("config: unknown key '" +
                       qualified(pending_.begin()->first.c_str()) + "'");
    }
  }

 private:
  const nlohmann::json* take(const char* key) {
    const auto it = pending_.find(key);
    if (it == pending_.end()) return nullptr;
    const nlohmann::json* v = it->second;
    pending_.erase(it);
    return v;
  }

  double as_number(const char* key, const nlohmann::json& v) const {
    if (!v.is_number()) {
      throw ParseError("config: '" + qualified(key) + "' must be a number");
    }
    return v.get<double>();
  }

  std::string qualified(const char* key) const {
    return section_.empty() ? std::string(key) : section_ + "." + key;
  }

  std::string section_;
  std::map<std::string, const nlohmann::json*> pending_;
};

}  // namespace detail

/// Parses a config document. Missing keys keep their defaults; an empty
/// document means all defaults. Range invariants are checked after loading
/// and violations name the offending key.
inline LoadedConfig parse_config(std::string_view text,
                                 const std::string& context) {
  LoadedConfig out;
  std::string_view trimmed = text;
  while (!trimmed.empty() && std::isspace(static_cast<unsigned char>(trimmed.front()))) {
    trimmed.remove_prefix(1);
  }
  if (trimmed.empty()) return out;

  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(context + ": " + e.what());
  }
  if (!j.is_object()) throw ParseError(context + ": config must be a JSON object");

  for (const auto& item : j.items()) {
    const std::string& key = item.key();
    if (key != "seed" && key != "preprocess" && key != "conversion" &&
        key != "utcl") {
      throw ParseError("config: unknown key '" + key + "'");
    }
    if (key != "seed" && !item.value().is_object()) {
      throw ParseError("config: '" + key + "' must be an object");
    }
  }

  if (j.contains("seed")) {
    const nlohmann::json& s = j["seed"];
    if (!s.is_number_integer() ||
        (s.is_number_integer() && !s.is_number_unsigned() &&
         s.get<std::int64_t>() < 0)) {
      throw ParseError("config: 'seed' must be a non-negative integer");
    }
    out.seed = s.get<std::uint64_t>();
  }

  if (j.contains("preprocess")) {
    detail::SectionReader r(j["preprocess"], "preprocess");
    r.length("box_xy_half", out.preprocess.box_xy_half);
    r.length("box_z_min", out.preprocess.box_z_min);
    r.length("box_z_max", out.preprocess.box_z_max);
    r.number("rot_max_deg", out.preprocess.rot_max_deg);
    r.number("scale_min", out.preprocess.scale_min);
    r.number("scale_max", out.preprocess.scale_max);
    r.length("trans_max", out.preprocess.trans_max);
    r.integer("target_points", out.preprocess.target_points);
    r.finish();
  }
  if (j.contains("conversion")) {
    detail::SectionReader r(j["conversion"], "conversion");
    r.length("npa_sigma", out.conversion.npa_sigma);
    r.number("npa_prob", out.conversion.npa_prob);
    r.integer("npa_count", out.conversion.npa_count);
    r.length("fpf_gamma", out.conversion.fpf_gamma);
    r.length("fpf_delta", out.conversion.fpf_delta);
    r.number("rs_rmin", out.conversion.rs_rmin);
    r.number("rs_rmax", out.conversion.rs_rmax);
    r.integer("rs_min_points", out.conversion.rs_min_points);
    r.length("ni_sigma", out.conversion.ni_sigma);
    r.number("idw_epsilon", out.conversion.idw_epsilon);
    r.finish();
  }
  if (j.contains("utcl")) {
    detail::SectionReader r(j["utcl"], "utcl");
    r.length("mu", out.utcl.mu);
    r.length("eta", out.utcl.eta);
    r.length("rho", out.utcl.rho);
    r.number("lambda_con", out.utcl.lambda_con);
    r.finish();
  }

  out.preprocess.validate();
  out.conversion.validate();
  out.utcl.validate();
  return out;
}

inline LoadedConfig load_config(const std::filesystem::path& path) {
  return parse_config(read_file_bytes(path), path.string());
}

}  // namespace lidar2mm
