#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cctype>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "tcd/error.hpp"

namespace tcd {

using FeatureVector = std::vector<float>;

struct FileRef {
  std::filesystem::path path;
  friend bool operator==(const FileRef&, const FileRef&) = default;
};

struct Frame {
  std::size_t index = 0;  // position in the source video
  std::variant<FeatureVector, FileRef> payload;

  bool has_features() const { return std::holds_alternative<FeatureVector>(payload); }
  const FeatureVector& features() const { return std::get<FeatureVector>(payload); }

  friend bool operator==(const Frame&, const Frame&) = default;
};

/// Ordered frames of one video. Indices are non-decreasing and feature
/// payloads share one dimension.
struct FrameSequence {
  std::vector<Frame> frames;
  std::string source_id;

  std::size_t size() const noexcept { return frames.size(); }
  bool empty() const noexcept { return frames.empty(); }

  std::vector<std::size_t> indices() const {
    std::vector<std::size_t> out;
    out.reserve(frames.size());
    for (const auto& f : frames) out.push_back(f.index);
    return out;
  }

  /// Feature dimension, or nullopt when the sequence is empty or holds file refs.
  std::optional<std::size_t> feature_dim() const {
    if (frames.empty() || !frames.front().has_features()) return std::nullopt;
    return frames.front().features().size();
  }

  void validate() const {
    for (std::size_t i = 1; i < frames.size(); ++i) {
      require(frames[i - 1].index <= frames[i].index,
              "FrameSequence '" + source_id + "': frame indices must be non-decreasing");
    }
    if (auto dim = feature_dim()) {
      for (const auto& f : frames) {
        require(f.has_features() && f.features().size() == *dim,
                "FrameSequence '" + source_id + "': mixed payload kinds or feature dimensions");
      }
    }
  }

  friend bool operator==(const FrameSequence&, const FrameSequence&) = default;
};

// Feature files: little-endian u32 frame_count, u32 feature_dim, then
// frame_count * feature_dim little-endian f32 values, frame-major.
namespace detail {

inline void put_u32(std::ostream& out, std::uint32_t v) {
  const std::array<char, 4> b{static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                              static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
  out.write(b.data(), 4);
}

inline std::uint32_t get_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

}  // namespace detail

inline void write_feature_file(const std::filesystem::path& path,
                               const std::vector<FeatureVector>& frames) {
  const std::uint32_t dim = frames.empty() ? 0 : static_cast<std::uint32_t>(frames.front().size());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw SchemaError("cannot write feature file " + path.string());
  detail::put_u32(out, static_cast<std::uint32_t>(frames.size()));
  detail::put_u32(out, dim);
  for (const auto& f : frames) {
    require(f.size() == dim, "write_feature_file: frames differ in feature dimension");
    for (float v : f) detail::put_u32(out, std::bit_cast<std::uint32_t>(v));
  }
  if (!out) throw SchemaError("failed writing feature file " + path.string());
}

inline FrameSequence read_feature_file(const std::filesystem::path& path, std::string source_id) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw SchemaError("cannot open feature file " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() < 8) throw SchemaError("feature file " + path.string() + ": truncated header");
  const std::uint32_t count = detail::get_u32(bytes.data());
  const std::uint32_t dim = detail::get_u32(bytes.data() + 4);
  const std::size_t expected = 8 + std::size_t{count} * dim * 4;
  if (bytes.size() != expected) {
    throw SchemaError("feature file " + path.string() + ": expected " + std::to_string(expected) +
                      " bytes for " + std::to_string(count) + "x" + std::to_string(dim) + ", found " +
                      std::to_string(bytes.size()));
  }
  FrameSequence seq;
  seq.source_id = std::move(source_id);
  seq.frames.reserve(count);
  const unsigned char* p = bytes.data() + 8;
  for (std::uint32_t i = 0; i < count; ++i) {
    FeatureVector v(dim);
    for (std::uint32_t d = 0; d < dim; ++d, p += 4) v[d] = std::bit_cast<float>(detail::get_u32(p));
    seq.frames.push_back(Frame{i, std::move(v)});
  }
  return seq;
}

/// Frame directories hold one file per frame named by its zero-padded index
/// ("000012.jpg"). Files whose stem is not all digits are ignored.
inline FrameSequence read_frame_directory(const std::filesystem::path& dir, std::string source_id) {
  if (!std::filesystem::is_directory(dir)) {
    throw SchemaError("frame directory " + dir.string() + " does not exist");
  }
  FrameSequence seq;
  seq.source_id = std::move(source_id);
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const std::string stem = entry.path().stem().string();
    if (stem.empty() || !std::all_of(stem.begin(), stem.end(),
                                     [](unsigned char c) { return std::isdigit(c) != 0; })) {
      continue;
    }
    seq.frames.push_back(Frame{static_cast<std::size_t>(std::stoull(stem)), FileRef{entry.path()}});
  }
  std::sort(seq.frames.begin(), seq.frames.end(),
            [](const Frame& a, const Frame& b) { return a.index < b.index; });
  return seq;
}

}  // namespace tcd
