#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "tcd/error.hpp"
#include "tcd/frames.hpp"

namespace tcd {

struct CounterpartSpec {
  std::size_t original_frame_count = 32;
  std::size_t counterpart_frame_count = 8;
  double noise_sigma = 0.0;  // 0 disables noise
  std::uint64_t rng_seed = 0;

  void validate() const {
    require(original_frame_count >= 1, "CounterpartSpec: original_frame_count must be >= 1");
    require(counterpart_frame_count >= 1, "CounterpartSpec: counterpart_frame_count must be >= 1");
    require(counterpart_frame_count <= original_frame_count,
            "CounterpartSpec: counterpart_frame_count (" + std::to_string(counterpart_frame_count) +
                ") exceeds original_frame_count (" + std::to_string(original_frame_count) + ")");
    require(std::isfinite(noise_sigma) && noise_sigma >= 0.0, "CounterpartSpec: noise_sigma must be >= 0");
  }
};

/// Centered uniform sampling: position i of N maps to floor((i + 0.5) * M / N).
/// Strictly increasing for 1 <= N <= M.
inline std::vector<std::size_t> sample_frame_indices(std::size_t total, std::size_t want) {
  require(want >= 1, "sample_frame_indices: want must be >= 1");
  require(want <= total, "sample_frame_indices: want (" + std::to_string(want) + ") exceeds total (" +
                             std::to_string(total) + ")");
  std::vector<std::size_t> out(want);
  // Integer form of floor((i + 0.5) * M / N) = floor((2i + 1) * M / 2N).
  for (std::size_t i = 0; i < want; ++i) out[i] = ((2 * i + 1) * total) / (2 * want);
  return out;
}

/// Picks `want` frames from `seq` by position using sample_frame_indices.
inline FrameSequence select_frames(const FrameSequence& seq, std::size_t want) {
  FrameSequence out;
  out.source_id = seq.source_id;
  for (auto pos : sample_frame_indices(seq.size(), want)) out.frames.push_back(seq.frames[pos]);
  return out;
}

/// Temporally downsampled copy of the original context's frames, optionally
/// with i.i.d. Gaussian noise added to every feature element. `original` is
/// the already-sampled original context; the counterpart is a subset of it.
inline FrameSequence build_counterpart(const FrameSequence& original, const CounterpartSpec& spec) {
  require(spec.counterpart_frame_count >= 1, "build_counterpart: counterpart_frame_count must be >= 1");
  require(std::isfinite(spec.noise_sigma) && spec.noise_sigma >= 0.0, "build_counterpart: noise_sigma must be >= 0");
  if (original.size() < spec.counterpart_frame_count) {
    throw ContractViolation("build_counterpart: original '" + original.source_id + "' has " +
                            std::to_string(original.size()) + " frames, counterpart needs " +
                            std::to_string(spec.counterpart_frame_count));
  }
  FrameSequence out = select_frames(original, spec.counterpart_frame_count);
  if (spec.noise_sigma > 0.0) {
    std::mt19937_64 rng(spec.rng_seed);
    std::normal_distribution<double> noise(0.0, spec.noise_sigma);
    for (auto& f : out.frames) {
      if (!f.has_features()) {
        throw ContractViolation("build_counterpart: noise applies to feature payloads only, frame " +
                                std::to_string(f.index) + " of '" + original.source_id +
                                "' is a file reference");
      }
      for (float& v : std::get<FeatureVector>(f.payload)) v = static_cast<float>(v + noise(rng));
    }
  }
  return out;
}

}  // namespace tcd
