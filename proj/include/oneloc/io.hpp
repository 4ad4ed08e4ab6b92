#pragma once

// File formats. All binary integers and floats are little-endian.
//
// Descriptor map (.odmp):
//   0  "ODMP"           4 bytes
//   4  version  u16     = 1
//   6  flags    u16     bit 0: score map present
//   8  height   u32
//  12  width    u32
//  16  dim      u32
//  20  height*width*dim f32, row-major (row, column, channel)
//      [height*width f32 scores, if flagged]
//
// Weights (.olwt):
//   0  "OLWT"           4 bytes
//   4  version  u16     = 1
//   6  dim      u32
//  10  hidden   u32
//  14  blocks   u32
//  18  parameters as f32, in the Mlp buffer order (see mlp.hpp)
//
// Annotations / predictions (text): one frame per line,
//   <frame_id> cx cy w h [cx cy w h ...]            (annotations)
//   <frame_id> cx cy w h score [cx cy w h score ...] (predictions)
// Blank lines and lines starting with '#' are ignored.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <span>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "oneloc/descriptor_map.hpp"
#include "oneloc/error.hpp"
#include "oneloc/eval.hpp"
#include "oneloc/mlp.hpp"
#include "oneloc/types.hpp"
#include "oneloc/voting.hpp"

namespace oneloc {

inline constexpr char kMapMagic[4] = {'O', 'D', 'M', 'P'};
inline constexpr char kWeightsMagic[4] = {'O', 'L', 'W', 'T'};
inline constexpr std::uint16_t kFormatVersion = 1;
inline constexpr std::uint16_t kFlagScores = 1;
inline constexpr std::size_t kMapHeaderSize = 20;
inline constexpr std::size_t kWeightsHeaderSize = 18;

namespace detail {

class ByteWriter {
 public:
  void bytes(const char* p, std::size_t n) { buf_.insert(buf_.end(), p, p + n); }
  void u16(std::uint16_t v) {
    buf_.push_back(static_cast<char>(v & 0xff));
    buf_.push_back(static_cast<char>((v >> 8) & 0xff));
  }
  void u32(std::uint32_t v) {
    for (int s = 0; s < 32; s += 8) buf_.push_back(static_cast<char>((v >> s) & 0xff));
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void f32s(std::span<const float> vs) {
    const std::size_t start = buf_.size();
    buf_.resize(start + 4 * vs.size());
    char* out = buf_.data() + start;
    if constexpr (std::endian::native == std::endian::little) {
      std::memcpy(out, vs.data(), 4 * vs.size());
    } else {
      for (std::size_t i = 0; i < vs.size(); ++i) {
        const std::uint32_t u = std::bit_cast<std::uint32_t>(vs[i]);
        for (int b = 0; b < 4; ++b) out[4 * i + b] = static_cast<char>((u >> (8 * b)) & 0xff);
      }
    }
  }
  const std::vector<char>& buffer() const noexcept { return buf_; }

 private:
  std::vector<char> buf_;
};

class ByteReader {
 public:
  explicit ByteReader(std::span<const char> data) : data_(data) {}

  std::size_t offset() const noexcept { return pos_; }
  std::size_t remaining() const noexcept { return data_.size() - pos_; }

  void need(std::size_t n, std::string_view what) const {
    if (remaining() < n) {
      fail(ErrorCode::format_error, "truncated " + std::string(what) + " at offset " + std::to_string(pos_));
    }
  }
  void expect_magic(const char (&magic)[4]) {
    need(4, "magic");
    if (std::memcmp(data_.data() + pos_, magic, 4) != 0) {
      fail(ErrorCode::format_error, "bad magic at offset " + std::to_string(pos_) + ", expected '" +
                                        std::string(magic, 4) + "'");
    }
    pos_ += 4;
  }
  std::uint16_t u16(std::string_view what) {
    need(2, what);
    const auto* p = reinterpret_cast<const unsigned char*>(data_.data() + pos_);
    pos_ += 2;
    return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
  }
  std::uint32_t u32(std::string_view what) {
    need(4, what);
    const auto* p = reinterpret_cast<const unsigned char*>(data_.data() + pos_);
    pos_ += 4;
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
  }
  /// Reads `out.size()` finite floats.
  void f32s(std::span<float> out, std::string_view what) {
    need(4 * out.size(), what);
    const char* src = data_.data() + pos_;
    if constexpr (std::endian::native == std::endian::little) {
      std::memcpy(out.data(), src, 4 * out.size());
    } else {
      for (std::size_t i = 0; i < out.size(); ++i) {
        const auto* p = reinterpret_cast<const unsigned char*>(src + 4 * i);
        const std::uint32_t u = static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
                                (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
        out[i] = std::bit_cast<float>(u);
      }
    }
    for (std::size_t i = 0; i < out.size(); ++i) {
      if (!std::isfinite(out[i])) {
        fail(ErrorCode::format_error, "non-finite " + std::string(what) + " value at offset " +
                                          std::to_string(pos_ + 4 * i));
      }
    }
    pos_ += 4 * out.size();
  }

 private:
  std::span<const char> data_;
  std::size_t pos_ = 0;
};

inline std::vector<char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::io_error, "cannot open '" + path.string() + "'");
  in.seekg(0, std::ios::end);
  const auto size = static_cast<std::size_t>(in.tellg());
  in.seekg(0, std::ios::beg);
  std::vector<char> buf(size);
  if (size && !in.read(buf.data(), static_cast<std::streamsize>(size))) {
    fail(ErrorCode::io_error, "failed reading '" + path.string() + "'");
  }
  return buf;
}

inline void write_file(const std::filesystem::path& path, std::span<const char> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::io_error, "cannot create '" + path.string() + "'");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(ErrorCode::io_error, "failed writing '" + path.string() + "'");
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  write_file(path, std::span<const char>(text.data(), text.size()));
}

inline std::string read_text(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  return {bytes.begin(), bytes.end()};
}

}  // namespace detail

// --- descriptor maps --------------------------------------------------------

inline std::vector<char> encode_descriptor_map(const DescriptorMap& map) {
  detail::ByteWriter w;
  w.bytes(kMapMagic, 4);
  w.u16(kFormatVersion);
  w.u16(map.has_scores() ? kFlagScores : 0);
  w.u32(static_cast<std::uint32_t>(map.height()));
  w.u32(static_cast<std::uint32_t>(map.width()));
  w.u32(static_cast<std::uint32_t>(map.dim()));
  w.f32s(map.data());
  if (map.has_scores()) w.f32s(map.scores());
  return w.buffer();
}

/// Parses and validates a descriptor map; the byte count must match the
/// header exactly.
inline DescriptorMap decode_descriptor_map(std::span<const char> bytes) {
  detail::ByteReader r(bytes);
  r.expect_magic(kMapMagic);
  const std::size_t version_at = r.offset();
  const std::uint16_t version = r.u16("version");
  if (version != kFormatVersion) {
    fail(ErrorCode::format_error, "unsupported version " + std::to_string(version) + " at offset " +
                                      std::to_string(version_at));
  }
  const std::size_t flags_at = r.offset();
  const std::uint16_t flags = r.u16("flags");
  if (flags & ~kFlagScores) {
    fail(ErrorCode::format_error, "unknown flag bits at offset " + std::to_string(flags_at));
  }
  const std::size_t dims_at = r.offset();
  const std::uint32_t height = r.u32("height");
  const std::uint32_t width = r.u32("width");
  const std::uint32_t dim = r.u32("dim");
  if (height == 0 || width == 0 || dim == 0 || height > (1u << 20) || width > (1u << 20) || dim > (1u << 16)) {
    fail(ErrorCode::format_error, "invalid dimensions at offset " + std::to_string(dims_at));
  }
  const std::size_t pixels = static_cast<std::size_t>(height) * width;
  const std::size_t expected = kMapHeaderSize + 4 * pixels * dim + ((flags & kFlagScores) ? 4 * pixels : 0);
  if (bytes.size() < expected) {
    fail(ErrorCode::format_error, "truncated payload at offset " + std::to_string(bytes.size()) + ", expected " +
                                      std::to_string(expected) + " bytes");
  }
  if (bytes.size() > expected) {
    fail(ErrorCode::format_error, "trailing bytes at offset " + std::to_string(expected));
  }
  std::vector<float> data(pixels * dim);
  r.f32s(data, "descriptor");
  std::optional<std::vector<float>> scores;
  if (flags & kFlagScores) {
    scores.emplace(pixels);
    const std::size_t scores_at = r.offset();
    r.f32s(*scores, "score");
    for (std::size_t i = 0; i < pixels; ++i) {
      if ((*scores)[i] < 0.0f || (*scores)[i] > 1.0f) {
        fail(ErrorCode::format_error, "score outside [0, 1] at offset " + std::to_string(scores_at + 4 * i));
      }
    }
  }
  return DescriptorMap(static_cast<int>(height), static_cast<int>(width), static_cast<int>(dim), std::move(data),
                       std::move(scores));
}

inline void write_descriptor_map(const std::filesystem::path& path, const DescriptorMap& map) {
  detail::write_file(path, encode_descriptor_map(map));
}

inline DescriptorMap read_descriptor_map(const std::filesystem::path& path) {
  const auto bytes = detail::read_file(path);
  try {
    return decode_descriptor_map(bytes);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::format_error) throw;
    fail(ErrorCode::format_error, path.string() + ": " + e.what());
  }
}

// --- weights ----------------------------------------------------------------

inline std::vector<char> encode_weights(const Mlp<float>& net) {
  detail::ByteWriter w;
  w.bytes(kWeightsMagic, 4);
  w.u16(kFormatVersion);
  w.u32(static_cast<std::uint32_t>(net.arch().dim));
  w.u32(static_cast<std::uint32_t>(net.arch().hidden));
  w.u32(static_cast<std::uint32_t>(net.arch().blocks));
  w.f32s(net.parameters());
  return w.buffer();
}

inline Mlp<float> decode_weights(std::span<const char> bytes) {
  detail::ByteReader r(bytes);
  r.expect_magic(kWeightsMagic);
  const std::size_t version_at = r.offset();
  const std::uint16_t version = r.u16("version");
  if (version != kFormatVersion) {
    fail(ErrorCode::format_error, "unsupported version " + std::to_string(version) + " at offset " +
                                      std::to_string(version_at));
  }
  const std::size_t dims_at = r.offset();
  const std::uint32_t dim = r.u32("dim");
  const std::uint32_t hidden = r.u32("hidden");
  const std::uint32_t blocks = r.u32("blocks");
  if (dim == 0 || hidden == 0 || dim > (1u << 16) || hidden > (1u << 14) || blocks > 4096) {
    fail(ErrorCode::format_error, "invalid architecture at offset " + std::to_string(dims_at));
  }
  const Architecture arch{static_cast<int>(dim), static_cast<int>(hidden), static_cast<int>(blocks)};
  const std::size_t expected = kWeightsHeaderSize + 4 * arch.parameter_count();
  if (bytes.size() < expected) {
    fail(ErrorCode::format_error, "truncated parameters at offset " + std::to_string(bytes.size()) + ", expected " +
                                      std::to_string(expected) + " bytes");
  }
  if (bytes.size() > expected) fail(ErrorCode::format_error, "trailing bytes at offset " + std::to_string(expected));
  std::vector<float> params(arch.parameter_count());
  r.f32s(params, "parameter");
  return Mlp<float>(arch, std::move(params));
}

inline void write_weights(const std::filesystem::path& path, const Mlp<float>& net) {
  detail::write_file(path, encode_weights(net));
}

inline Mlp<float> read_weights(const std::filesystem::path& path) {
  const auto bytes = detail::read_file(path);
  try {
    return decode_weights(bytes);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::format_error) throw;
    fail(ErrorCode::format_error, path.string() + ": " + e.what());
  }
}

// --- annotations and predictions ---------------------------------------------

struct FrameBoxes {
  std::string frame_id;
  std::vector<BBox> boxes;
};

struct FrameDetections {
  std::string frame_id;
  std::vector<Detection> detections;
};

namespace detail {

template <typename Fn>
void for_each_record(const std::string& text, Fn&& fn) {
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream fields(line);
    std::string id;
    fields >> id;
    std::vector<double> values;
    std::string tok;
    while (fields >> tok) {
      try {
        std::size_t used = 0;
        const double v = std::stod(tok, &used);
        if (used != tok.size() || !std::isfinite(v)) throw std::invalid_argument(tok);
        values.push_back(v);
      } catch (const std::exception&) {
        fail(ErrorCode::format_error, "line " + std::to_string(line_no) + ": bad number '" + tok + "'");
      }
    }
    fn(line_no, id, values);
  }
}

inline std::string fmt_double(double v) {
  std::ostringstream s;
  s << std::setprecision(17) << v;
  return s.str();
}

}  // namespace detail

inline std::vector<FrameBoxes> parse_annotations(const std::string& text) {
  std::vector<FrameBoxes> out;
  std::set<std::string> seen;
  detail::for_each_record(text, [&](int line_no, const std::string& id, const std::vector<double>& v) {
    const std::string where = "line " + std::to_string(line_no);
    if (v.empty() || v.size() % 4 != 0) fail(ErrorCode::format_error, where + ": expected groups of cx cy w h");
    if (!seen.insert(id).second) fail(ErrorCode::format_error, where + ": duplicate frame id '" + id + "'");
    FrameBoxes fb{id, {}};
    for (std::size_t i = 0; i < v.size(); i += 4) {
      const BBox b{v[i], v[i + 1], v[i + 2], v[i + 3]};
      if (!b.valid()) fail(ErrorCode::format_error, where + ": box size must be positive");
      fb.boxes.push_back(b);
    }
    out.push_back(std::move(fb));
  });
  return out;
}

inline std::string format_annotations(std::span<const FrameBoxes> frames) {
  std::string out;
  for (const FrameBoxes& f : frames) {
    out += f.frame_id;
    for (const BBox& b : f.boxes) {
      out += ' ' + detail::fmt_double(b.cx) + ' ' + detail::fmt_double(b.cy) + ' ' + detail::fmt_double(b.w) + ' ' +
             detail::fmt_double(b.h);
    }
    out += '\n';
  }
  return out;
}

inline std::vector<FrameDetections> parse_predictions(const std::string& text) {
  std::vector<FrameDetections> out;
  std::set<std::string> seen;
  detail::for_each_record(text, [&](int line_no, const std::string& id, const std::vector<double>& v) {
    const std::string where = "line " + std::to_string(line_no);
    if (v.size() % 5 != 0) fail(ErrorCode::format_error, where + ": expected groups of cx cy w h score");
    if (!seen.insert(id).second) fail(ErrorCode::format_error, where + ": duplicate frame id '" + id + "'");
    FrameDetections fd{id, {}};
    for (std::size_t i = 0; i < v.size(); i += 5) {
      const BBox b{v[i], v[i + 1], v[i + 2], v[i + 3]};
      if (!b.valid()) fail(ErrorCode::format_error, where + ": box size must be positive");
      fd.detections.push_back({b, v[i + 4]});
    }
    out.push_back(std::move(fd));
  });
  return out;
}

inline std::string format_predictions(std::span<const FrameDetections> frames) {
  std::string out;
  for (const FrameDetections& f : frames) {
    out += f.frame_id;
    for (const Detection& d : f.detections) {
      out += ' ' + detail::fmt_double(d.box.cx) + ' ' + detail::fmt_double(d.box.cy) + ' ' +
             detail::fmt_double(d.box.w) + ' ' + detail::fmt_double(d.box.h) + ' ' + detail::fmt_double(d.score);
    }
    out += '\n';
  }
  return out;
}

inline std::vector<FrameBoxes> read_annotations(const std::filesystem::path& path) {
  return parse_annotations(detail::read_text(path));
}

/// Object id of a frame id "object/frame"; frames without '/' belong to a
/// single unnamed object.
inline std::string object_of(const std::string& frame_id) {
  const auto slash = frame_id.rfind('/');
  return slash == std::string::npos ? std::string() : frame_id.substr(0, slash);
}

/// Joins predictions with annotations by frame id. Every annotated frame
/// gets a record; frames without predictions keep an empty prediction list.
inline std::vector<EvalRecord> join_records(std::span<const FrameBoxes> truth,
                                            std::span<const FrameDetections> predicted) {
  std::map<std::string, const FrameDetections*> by_id;
  for (const FrameDetections& f : predicted) by_id[f.frame_id] = &f;
  std::vector<EvalRecord> out;
  for (const FrameBoxes& t : truth) {
    EvalRecord r{t.frame_id, object_of(t.frame_id), {}, t.boxes};
    if (const auto it = by_id.find(t.frame_id); it != by_id.end()) r.predictions = it->second->detections;
    out.push_back(std::move(r));
  }
  return out;
}

// --- heatmap ----------------------------------------------------------------

/// Binary PGM (P5), one byte per grid cell, linearly scaled so the busiest
/// cell is 255.
inline std::vector<char> encode_heatmap_pgm(const AccumulatorGrid& grid) {
  std::string header = "P5\n" + std::to_string(grid.cols()) + " " + std::to_string(grid.rows()) + "\n255\n";
  std::vector<char> out(header.begin(), header.end());
  const double peak = grid.max_votes();
  for (double v : grid.votes()) {
    const double scaled = peak > 0.0 ? std::round(255.0 * v / peak) : 0.0;
    out.push_back(static_cast<char>(static_cast<unsigned char>(std::clamp(scaled, 0.0, 255.0))));
  }
  return out;
}

inline void write_heatmap_pgm(const std::filesystem::path& path, const AccumulatorGrid& grid) {
  detail::write_file(path, encode_heatmap_pgm(grid));
}

}  // namespace oneloc
