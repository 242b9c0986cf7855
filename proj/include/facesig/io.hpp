#pragma once

// On-disk formats: the binary signature file, text manifests, accuracy
// tables, key/value configs, split lists, and ranked-list CSV.
//
// Signature file, all integers and reals little-endian:
//
//   offset  size  field
//   0       4     magic "SIGM"
//   4       2     version, major << 8 | minor (currently 0x0100)
//   6       2     flags; bit 0 = derived probabilities/binary flags stored
//   8       4     patch_count m
//   12      4     feature_dim n
//   16      4     attribute dim d
//   20      4nm   features, float32, patch-major (patch j's n values together)
//   ...     ceil(m/8)  occlusion bits, bit j%8 of byte j/8 (LSB first), 1 = visible
//   ...     4d    attribute logits, float32
//   [flag 0] 4d   probabilities, float32
//   [flag 0] ceil(d/8) binary flags, packed like occlusion bits
//   ...     metadata: subject_id, image_id, scheme_name, each u32 length + UTF-8
//
// Unused high bits of the packed bytes must be zero. Readers accept any
// minor version of major 1; minor 0 files must end exactly after the
// metadata, higher minors may append trailing data which is ignored.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "facesig/error.hpp"
#include "facesig/evaluation.hpp"
#include "facesig/identification.hpp"
#include "facesig/signature.hpp"
#include "facesig/synth.hpp"
#include "facesig/weighting.hpp"

namespace facesig {

inline constexpr std::string_view kSignatureMagic = "SIGM";
inline constexpr std::uint16_t kFormatMajor = 1;
inline constexpr std::uint16_t kFormatMinor = 0;
inline constexpr std::uint16_t kFormatVersion = kFormatMajor << 8 | kFormatMinor;
inline constexpr std::uint16_t kFlagDerivedStored = 0x1;
inline constexpr double kDerivedTolerance = 1e-6;

namespace detail {

class ByteWriter {
 public:
  void u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }
  void u16(std::uint16_t v) {
    for (int i = 0; i < 2; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f32(double v) { u32(std::bit_cast<std::uint32_t>(static_cast<float>(v))); }
  void bytes(std::string_view s) { buf_.append(s); }
  void str(std::string_view s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(s);
  }
  void bits(const std::vector<std::uint8_t>& flags) {
    std::vector<std::uint8_t> packed((flags.size() + 7) / 8, 0);
    for (std::size_t i = 0; i < flags.size(); ++i)
      if (flags[i]) packed[i / 8] |= static_cast<std::uint8_t>(1u << (i % 8));
    for (auto b : packed) u8(b);
  }
  std::string take() { return std::move(buf_); }

 private:
  std::string buf_;
};

class ByteReader {
 public:
  explicit ByteReader(std::string_view data) : data_(data) {}

  std::size_t remaining() const { return data_.size() - pos_; }

  void need_elems(std::uint64_t count, std::uint64_t size, const char* what) const {
    if (count > remaining() / size)
      throw Error(ErrorCode::truncated, std::string("truncated signature file while reading ") + what);
  }
  void need(std::uint64_t n, const char* what) const {
    if (n > remaining())
      throw Error(ErrorCode::truncated, std::string("truncated signature file while reading ") + what);
  }
  std::uint8_t u8() {
    need(1, "byte");
    return static_cast<std::uint8_t>(data_[pos_++]);
  }
  std::uint16_t u16() {
    need(2, "u16");
    std::uint16_t v = 0;
    for (int i = 0; i < 2; ++i) v |= static_cast<std::uint16_t>(u8()) << (8 * i);
    return v;
  }
  std::uint32_t u32() {
    need(4, "u32");
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(u8()) << (8 * i);
    return v;
  }
  double f32() { return static_cast<double>(std::bit_cast<float>(u32())); }
  std::string_view bytes(std::size_t n, const char* what) {
    need(n, what);
    auto s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::string str(const char* what) {
    const auto len = u32();
    return std::string(bytes(len, what));
  }
  std::vector<std::uint8_t> bits(std::size_t count, const char* what) {
    const std::size_t nbytes = (count + 7) / 8;
    need(nbytes, what);
    std::vector<std::uint8_t> out(count);
    for (std::size_t b = 0; b < nbytes; ++b) {
      const std::uint8_t byte = u8();
      for (std::size_t i = 0; i < 8; ++i) {
        const std::size_t idx = b * 8 + i;
        const bool set = (byte >> i) & 1u;
        if (idx < count) out[idx] = set ? 1 : 0;
        else if (set)
          throw Error(ErrorCode::parse_error, std::string("nonzero padding bits in ") + what);
      }
    }
    return out;
  }

 private:
  std::string_view data_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline std::string encode_signature(const Signature& sig, bool store_derived = true) {
  require_valid(sig);
  const auto& L = sig.patch.layout;
  detail::ByteWriter w;
  w.bytes(kSignatureMagic);
  w.u16(kFormatVersion);
  w.u16(store_derived ? kFlagDerivedStored : 0);
  w.u32(static_cast<std::uint32_t>(L.patch_count));
  w.u32(static_cast<std::uint32_t>(L.feature_dim));
  w.u32(static_cast<std::uint32_t>(sig.attributes.size()));
  for (double x : sig.patch.features) w.f32(x);
  w.bits(sig.patch.occlusion);
  for (double a : sig.attributes.logits) w.f32(a);
  if (store_derived) {
    for (double p : sig.attributes.probabilities) w.f32(p);
    w.bits(sig.attributes.binary);
  }
  w.str(sig.subject_id);
  w.str(sig.image_id);
  w.str(L.scheme_name);
  return w.take();
}

/// Parses a signature file image. Probabilities and binary flags are always
/// recomputed from the logits; stored copies must agree within 1e-6.
inline Signature decode_signature(std::string_view data) {
  detail::ByteReader r(data);
  if (r.bytes(4, "magic") != kSignatureMagic)
    throw Error(ErrorCode::bad_magic, "not a signature file (bad magic)");
  const std::uint16_t version = r.u16();
  const std::uint16_t major = version >> 8, minor = version & 0xFF;
  if (major != kFormatMajor)
    throw Error(ErrorCode::unsupported_version,
                "unsupported signature format version " + std::to_string(major) + "." +
                    std::to_string(minor));
  const std::uint16_t flags = r.u16();
  if (minor == 0 && (flags & ~kFlagDerivedStored))
    throw Error(ErrorCode::unsupported_version, "unknown flags for format 1.0");
  const std::uint64_t m = r.u32(), n = r.u32(), d = r.u32();

  Signature sig;
  r.need_elems(m * n, 4, "features");
  sig.patch.features.resize(m * n);
  for (auto& x : sig.patch.features) x = r.f32();
  sig.patch.occlusion = r.bits(m, "occlusion bits");
  r.need_elems(d, 4, "logits");
  std::vector<double> logits(d);
  for (auto& a : logits) a = r.f32();
  std::vector<double> stored_p;
  std::vector<std::uint8_t> stored_b;
  const bool has_derived = flags & kFlagDerivedStored;
  if (has_derived) {
    r.need_elems(d, 4, "probabilities");
    stored_p.resize(d);
    for (auto& p : stored_p) p = r.f32();
    stored_b = r.bits(d, "binary flags");
  }
  sig.subject_id = r.str("subject_id");
  sig.image_id = r.str("image_id");
  sig.patch.layout = {m, n, r.str("scheme_name")};
  if (minor == 0 && r.remaining() != 0)
    throw Error(ErrorCode::parse_error, "trailing bytes after signature metadata");

  for (double a : logits)
    if (!std::isfinite(a)) throw Error(ErrorCode::invariant_violation, "non-finite logit in file");
  sig.attributes = make_attribute_component(std::move(logits));
  if (has_derived) {
    for (std::size_t i = 0; i < d; ++i) {
      if (!(std::abs(stored_p[i] - sig.attributes.probabilities[i]) <= kDerivedTolerance))
        throw Error(ErrorCode::derived_mismatch,
                    "stored probability " + std::to_string(i) + " disagrees with its logit");
      if (stored_b[i] != sig.attributes.binary[i])
        throw Error(ErrorCode::derived_mismatch,
                    "stored binary flag " + std::to_string(i) + " disagrees with its logit");
    }
  }
  require_valid(sig);
  return sig;
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::io_error, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Writes to a sibling temporary file, then renames over `path`.
inline void write_file_atomic(const std::filesystem::path& path, std::string_view bytes) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::io_error, "cannot create " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(ErrorCode::io_error, "write failed for " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw Error(ErrorCode::io_error, "cannot rename onto " + path.string() + ": " + ec.message());
}

inline void write_signature(const std::filesystem::path& path, const Signature& sig) {
  write_file_atomic(path, encode_signature(sig));
}

inline Signature read_signature(const std::filesystem::path& path) {
  try {
    return decode_signature(read_file(path));
  } catch (const Error& e) {
    rethrow_with_context(e, path.string());
  }
}

// ---- text formats ---------------------------------------------------------

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

inline std::vector<std::string> split_csv(std::string_view line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    out.push_back(trim(line.substr(start, pos == std::string_view::npos ? pos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

// Nonblank, non-comment lines with their 1-based line numbers.
inline std::vector<std::pair<std::size_t, std::string>> content_lines(std::string_view text) {
  std::vector<std::pair<std::size_t, std::string>> out;
  std::size_t lineno = 0, start = 0;
  while (start <= text.size()) {
    const auto end = text.find('\n', start);
    const auto raw = text.substr(start, end == std::string_view::npos ? end : end - start);
    ++lineno;
    auto line = trim(raw);
    if (!line.empty() && line.front() != '#') out.emplace_back(lineno, std::move(line));
    if (end == std::string_view::npos) break;
    start = end + 1;
  }
  return out;
}

inline double parse_real(const std::string& s, const std::string& where) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos == s.size()) return v;
  } catch (const std::exception&) {
  }
  throw Error(ErrorCode::parse_error, where + ": expected a number, got '" + s + "'");
}

inline std::uint64_t parse_count(const std::string& s, const std::string& where) {
  try {
    std::size_t pos = 0;
    if (!s.empty() && s.front() != '-') {
      const auto v = std::stoull(s, &pos);
      if (pos == s.size()) return v;
    }
  } catch (const std::exception&) {
  }
  throw Error(ErrorCode::parse_error, where + ": expected a nonnegative integer, got '" + s + "'");
}

}  // namespace detail

struct ManifestEntry {
  std::string subject_id;
  std::string template_id;
  std::filesystem::path path;  // resolved against the manifest's directory
  std::string cell_label;      // may be empty
};

inline std::vector<ManifestEntry> parse_manifest(std::string_view text,
                                                 const std::filesystem::path& base_dir) {
  std::vector<ManifestEntry> out;
  for (const auto& [lineno, line] : detail::content_lines(text)) {
    const auto f = detail::split_csv(line);
    const std::string where = "manifest line " + std::to_string(lineno);
    if (f.size() < 3 || f.size() > 4)
      throw Error(ErrorCode::parse_error, where + ": expected subject_id,template_id,path[,cell_label]");
    if (f[0].empty() || f[1].empty() || f[2].empty())
      throw Error(ErrorCode::parse_error, where + ": empty field");
    std::filesystem::path p(f[2]);
    if (p.is_relative()) p = base_dir / p;
    out.push_back({f[0], f[1], p, f.size() == 4 ? f[3] : std::string()});
  }
  return out;
}

inline std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path) {
  return parse_manifest(read_file(path), path.parent_path());
}

namespace detail {

inline Signature load_entry(const ManifestEntry& e) {
  auto sig = read_signature(e.path);
  if (sig.subject_id != e.subject_id)
    throw Error(ErrorCode::invariant_violation, e.path.string() + ": file subject " +
                                                    sig.subject_id + " != manifest subject " +
                                                    e.subject_id);
  return sig;
}

}  // namespace detail

/// Gallery templates group every manifest line of one subject, in order of
/// first appearance.
inline Gallery load_gallery(const std::filesystem::path& manifest) {
  std::vector<std::string> order;
  std::map<std::string, std::vector<Signature>> members;
  for (const auto& e : read_manifest(manifest)) {
    if (!members.count(e.subject_id)) order.push_back(e.subject_id);
    members[e.subject_id].push_back(detail::load_entry(e));
  }
  if (order.empty()) throw Error(ErrorCode::empty_input, manifest.string() + ": empty gallery");
  std::vector<Template> templates;
  for (const auto& s : order) templates.emplace_back(s, std::move(members[s]));
  return Gallery(std::move(templates));
}

struct ProbeSet {
  std::vector<Template> templates;
  Truth truth;
  CellLabels cells;
};

/// Probe templates group lines by template_id; the manifest subject is the
/// ground truth.
inline ProbeSet load_probes(const std::filesystem::path& manifest) {
  std::vector<std::string> order;
  std::map<std::string, std::vector<Signature>> members;
  ProbeSet out;
  for (const auto& e : read_manifest(manifest)) {
    auto [it, inserted] = out.truth.emplace(e.template_id, e.subject_id);
    if (inserted) {
      order.push_back(e.template_id);
      if (!e.cell_label.empty()) out.cells[e.template_id] = e.cell_label;
    } else if (it->second != e.subject_id) {
      throw Error(ErrorCode::parse_error, "probe template " + e.template_id + " spans subjects");
    } else if (!e.cell_label.empty() && out.cells[e.template_id] != e.cell_label) {
      throw Error(ErrorCode::parse_error, "probe template " + e.template_id + " has mixed cells");
    }
    members[e.template_id].push_back(detail::load_entry(e));
  }
  for (const auto& id : order) out.templates.emplace_back(id, std::move(members[id]));
  return out;
}

inline void write_manifest(std::ostream& os, const std::vector<ManifestEntry>& entries) {
  for (const auto& e : entries) {
    os << e.subject_id << ',' << e.template_id << ',' << e.path.generic_string();
    if (!e.cell_label.empty()) os << ',' << e.cell_label;
    os << '\n';
  }
}

/// Rows "attribute_name,accuracy"; an optional header row is skipped.
inline AttributeAccuracyTable parse_accuracy_table(std::string_view text) {
  AttributeAccuracyTable t;
  bool first = true;
  for (const auto& [lineno, line] : detail::content_lines(text)) {
    const auto comma = line.rfind(',');
    const std::string where = "accuracy table line " + std::to_string(lineno);
    if (comma == std::string::npos) throw Error(ErrorCode::parse_error, where + ": missing comma");
    const auto name = detail::trim(std::string_view(line).substr(0, comma));
    const auto value = detail::trim(std::string_view(line).substr(comma + 1));
    if (first && name == "attribute_name" && value == "accuracy") {
      first = false;
      continue;
    }
    first = false;
    if (name.empty()) throw Error(ErrorCode::parse_error, where + ": empty attribute name");
    if (!t.accuracy.emplace(name, detail::parse_real(value, where)).second)
      throw Error(ErrorCode::parse_error, where + ": duplicate attribute '" + name + "'");
  }
  return t;
}

inline AttributeAccuracyTable read_accuracy_table(const std::filesystem::path& path) {
  return parse_accuracy_table(read_file(path));
}

/// "key = value" lines; '#' starts a comment line; values may be quoted.
inline std::map<std::string, std::string> parse_key_values(std::string_view text) {
  std::map<std::string, std::string> out;
  for (const auto& [lineno, line] : detail::content_lines(text)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw Error(ErrorCode::parse_error, "config line " + std::to_string(lineno) + ": expected key = value");
    auto key = detail::trim(std::string_view(line).substr(0, eq));
    auto value = detail::trim(std::string_view(line).substr(eq + 1));
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"')
      value = value.substr(1, value.size() - 2);
    if (!out.emplace(key, value).second)
      throw Error(ErrorCode::parse_error, "config line " + std::to_string(lineno) + ": duplicate key " + key);
  }
  return out;
}

inline SynthConfig parse_synth_config(std::string_view text) {
  SynthConfig c;
  for (const auto& [key, value] : parse_key_values(text)) {
    using detail::parse_count;
    using detail::parse_real;
    if (key == "seed") c.seed = parse_count(value, key);
    else if (key == "subjects") c.subjects = parse_count(value, key);
    else if (key == "images_per_subject") c.images_per_subject = parse_count(value, key);
    else if (key == "patch_count") c.layout.patch_count = parse_count(value, key);
    else if (key == "feature_dim") c.layout.feature_dim = parse_count(value, key);
    else if (key == "scheme") {
      if (value == "PRFS") c.layout = PatchLayout::prfs();
      else if (value == "DPRFS") c.layout = PatchLayout::dprfs();
      else c.layout.scheme_name = value;
    }
    else if (key == "attribute_dim") c.attribute_dim = parse_count(value, key);
    else if (key == "patch_noise_sigma") c.patch_noise_sigma = parse_real(value, key);
    else if (key == "attribute_noise_sigma") c.attribute_noise_sigma = parse_real(value, key);
    else if (key == "latent_logit_scale") c.latent_logit_scale = parse_real(value, key);
    else if (key == "corrupt_fraction") c.corrupt_fraction = parse_real(value, key);
    else if (key == "occlusion_rate") c.occlusion_rate = parse_real(value, key);
    else if (key == "attribute_flip_rate") c.attribute_flip_rate = parse_real(value, key);
    else throw Error(ErrorCode::parse_error, "unknown synth config key '" + key + "'");
  }
  return c;
}

/// Writes signatures plus gallery.csv, probes.csv and splits.csv into `dir`.
inline void write_benchmark(const std::filesystem::path& dir, const SynthBenchmark& bench) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir / "gallery", ec);
  fs::create_directories(dir / "probes", ec);
  if (ec) throw Error(ErrorCode::io_error, "cannot create " + dir.string() + ": " + ec.message());
  std::vector<ManifestEntry> gallery, probes;
  for (const auto& s : bench.gallery) {
    const fs::path rel = fs::path("gallery") / (s.image_id + ".sig");
    write_signature(dir / rel, s);
    gallery.push_back({s.subject_id, s.subject_id, rel, {}});
  }
  for (const auto& s : bench.probes) {
    const fs::path rel = fs::path("probes") / (s.image_id + ".sig");
    write_signature(dir / rel, s);
    probes.push_back({s.subject_id, s.image_id, rel, {}});
  }
  std::ostringstream g, p;
  write_manifest(g, gallery);
  write_manifest(p, probes);
  write_file_atomic(dir / "gallery.csv", g.str());
  write_file_atomic(dir / "probes.csv", p.str());
  write_file_atomic(dir / "splits.csv", "synth,gallery.csv,probes.csv\n");
}

/// Lines "name,gallery_manifest,probe_manifest" relative to the list file.
inline std::vector<EvaluationSplit> load_splits(const std::filesystem::path& path) {
  std::vector<EvaluationSplit> out;
  for (const auto& [lineno, line] : detail::content_lines(read_file(path))) {
    const auto f = detail::split_csv(line);
    if (f.size() != 3 || f[0].empty())
      throw Error(ErrorCode::parse_error,
                  "splits line " + std::to_string(lineno) + ": expected name,gallery,probes");
    auto resolve = [&](const std::string& s) {
      std::filesystem::path p(s);
      return p.is_relative() ? path.parent_path() / p : p;
    };
    auto probes = load_probes(resolve(f[2]));
    out.push_back({f[0], load_gallery(resolve(f[1])), std::move(probes.templates),
                   std::move(probes.truth), std::move(probes.cells)});
  }
  if (out.empty()) throw Error(ErrorCode::empty_input, path.string() + ": no splits");
  return out;
}

// ---- CSV outputs ----------------------------------------------------------

inline std::string format_score(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

/// One row per ranked entry, skipped subject, or failed probe:
/// probe_id,status,rank,subject_id,fused_score,patch_score,attribute_score,non_occluded_pairs,detail
inline void write_ranked_csv(std::ostream& os, std::span<const IdentifyOutcome> outcomes) {
  auto clean = [](std::string s) {
    for (auto& c : s)
      if (c == ',' || c == '\n') c = ';';
    return s;
  };
  os << "probe_id,status,rank,subject_id,fused_score,patch_score,attribute_score,"
        "non_occluded_pairs,detail\n";
  for (const auto& o : outcomes) {
    if (!o.ranked) {
      os << o.probe_id << ",error,,,,,,," << clean(o.error) << '\n';
      continue;
    }
    std::size_t rank = 0;
    for (const auto& e : o.ranked->entries) {
      const auto& b = e.breakdown;
      os << o.probe_id << ",ranked," << ++rank << ',' << e.subject_id << ','
         << format_score(e.score) << ',' << format_score(b.patch_score) << ','
         << format_score(b.attribute_score) << ',' << b.non_occluded_pairs << ",\n";
    }
    for (const auto& s : o.ranked->skipped)
      os << o.probe_id << ",skipped,," << s.subject_id << ",,,,," << clean(s.reason) << '\n';
  }
}

/// Reads a "split,<method...>" matrix written by write_matrix_csv.
inline AccuracyMatrix parse_matrix_csv(std::string_view text) {
  const auto lines = detail::content_lines(text);
  if (lines.empty()) throw Error(ErrorCode::empty_input, "empty accuracy matrix");
  AccuracyMatrix m;
  auto header = detail::split_csv(lines.front().second);
  if (header.size() < 2) throw Error(ErrorCode::parse_error, "matrix header needs split + methods");
  m.methods.assign(header.begin() + 1, header.end());
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto f = detail::split_csv(lines[i].second);
    const std::string where = "matrix line " + std::to_string(lines[i].first);
    if (f.size() != header.size()) throw Error(ErrorCode::parse_error, where + ": wrong column count");
    m.splits.push_back(f[0]);
    auto& row = m.values.emplace_back();
    for (std::size_t j = 1; j < f.size(); ++j) row.push_back(detail::parse_real(f[j], where));
  }
  return m;
}

}  // namespace facesig
