#pragma once

#include <cmath>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "tcd/backend.hpp"

namespace tcd {

/// Row key used for the empty prefix in the bigram prior.
inline constexpr std::string_view kBosKey = "<bos>";

/// Linear prior-plus-evidence model:
///
///   logits = prior[last prefix token] + gain * mean(frame features) * evidence_map
///
/// `evidence_map` is feature_dim x vocab_size. With no frames the evidence
/// term vanishes and the model is a pure bigram language model, so shrinking
/// or diluting the visual evidence moves the output toward the prior.
class SyntheticBiasBackend final : public Backend {
 public:
  using PriorTable = std::map<std::string, std::vector<double>>;

  SyntheticBiasBackend(Vocabulary vocab, PriorTable prior, std::vector<std::vector<double>> evidence_map,
                       double evidence_gain)
      : vocab_(std::move(vocab)),
        prior_(std::move(prior)),
        evidence_map_(std::move(evidence_map)),
        gain_(evidence_gain) {
    if (!std::isfinite(gain_)) throw SchemaError("synthetic backend: evidence gain must be finite");
    auto check_row = [&](const std::string& key) {
      auto it = prior_.find(key);
      if (it == prior_.end()) throw SchemaError("synthetic backend: prior has no row for '" + key + "'");
      if (it->second.size() != vocab_.size()) {
        throw SchemaError("synthetic backend: prior row '" + key + "' has " +
                          std::to_string(it->second.size()) + " entries, vocabulary has " +
                          std::to_string(vocab_.size()));
      }
      for (double v : it->second) {
        if (!std::isfinite(v)) throw SchemaError("synthetic backend: prior row '" + key + "' is not finite");
      }
    };
    check_row(std::string(kBosKey));
    for (const auto& t : vocab_.tokens()) check_row(t);
    for (std::size_t d = 0; d < evidence_map_.size(); ++d) {
      if (evidence_map_[d].size() != vocab_.size()) {
        throw SchemaError("synthetic backend: evidence_map row " + std::to_string(d) + " has " +
                          std::to_string(evidence_map_[d].size()) + " entries, vocabulary has " +
                          std::to_string(vocab_.size()));
      }
    }
  }

  const Vocabulary& vocab() const override { return vocab_; }
  std::string kind() const override { return "synthetic_bias"; }
  std::size_t feature_dim() const noexcept { return evidence_map_.size(); }
  double evidence_gain() const noexcept { return gain_; }

  const std::vector<double>& prior_row(const TokenList& prefix) const {
    const std::string key = prefix.empty() ? std::string(kBosKey) : prefix.back();
    auto it = prior_.find(key);
    if (it == prior_.end()) {
      throw BackendError(BackendErrorKind::invalid_input, "synthetic backend: no prior row for '" + key + "'");
    }
    return it->second;
  }

  /// Mean feature vector of the frames; empty when there are no frames.
  std::vector<double> mean_evidence(const FrameSequence& frames) const {
    if (frames.empty()) return {};
    std::vector<double> mean(feature_dim(), 0.0);
    for (const auto& f : frames.frames) {
      if (!f.has_features()) {
        throw BackendError(BackendErrorKind::invalid_input,
                           "synthetic backend needs feature payloads, frame " + std::to_string(f.index) +
                               " of '" + frames.source_id + "' is a file reference");
      }
      const auto& v = f.features();
      if (v.size() != feature_dim()) {
        throw BackendError(BackendErrorKind::invalid_input,
                           "synthetic backend: frame feature dimension " + std::to_string(v.size()) +
                               " does not match evidence_map dimension " + std::to_string(feature_dim()));
      }
      for (std::size_t d = 0; d < v.size(); ++d) mean[d] += v[d];
    }
    for (double& m : mean) m /= static_cast<double>(frames.size());
    return mean;
  }

  LogitVector next_logits(const MultimodalContext& ctx) const override {
    std::vector<double> out = prior_row(ctx.prefix);
    const auto mean = mean_evidence(ctx.frames);
    for (std::size_t d = 0; d < mean.size(); ++d) {
      const double w = gain_ * mean[d];
      if (w == 0.0) continue;
      for (std::size_t k = 0; k < out.size(); ++k) out[k] += w * evidence_map_[d][k];
    }
    return LogitVector(std::move(out));
  }

  static SyntheticBiasBackend from_json(const nlohmann::json& j) {
    try {
      Vocabulary vocab(j.at("vocab").get<TokenList>(), j.value("eos", std::string(kDefaultEos)));
      return SyntheticBiasBackend(std::move(vocab), j.at("prior").get<PriorTable>(),
                                  j.at("evidence_map").get<std::vector<std::vector<double>>>(),
                                  j.value("evidence_gain", 1.0));
    } catch (const nlohmann::json::exception& ex) {
      throw SchemaError(std::string("synthetic backend config: ") + ex.what());
    }
  }

  nlohmann::json to_json() const {
    return {{"kind", kind()},
            {"vocab", vocab_.tokens()},
            {"eos", vocab_.eos()},
            {"prior", prior_},
            {"evidence_map", evidence_map_},
            {"evidence_gain", gain_}};
  }

 private:
  Vocabulary vocab_;
  PriorTable prior_;
  std::vector<std::vector<double>> evidence_map_;
  double gain_;
};

}  // namespace tcd
