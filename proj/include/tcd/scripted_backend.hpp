#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <utility>

#include <nlohmann/json.hpp>

#include "tcd/backend.hpp"

namespace tcd {

/// Table-driven backend: (context signature, prefix) -> logit row.
///
/// Scenario file layout:
///
///   {
///     "vocab": ["yes", "no", "<eos>"],
///     "eos": "<eos>",                        // optional, defaults to "<eos>"
///     "entries": [
///       {"signature": {"source_id": "v1", "frame_indices": [0, 4],
///                      "instruction": ["Did", "it", "happen?"]},
///        "prefix": [], "logits": [3.0, 0.1, 0.1]}
///     ]
///   }
///
/// "instruction" may also be a plain string, which is split on whitespace.
class ScriptedBackend final : public Backend {
 public:
  using Key = std::pair<ContextSignature, TokenList>;

  explicit ScriptedBackend(Vocabulary vocab) : vocab_(std::move(vocab)) {}

  void add(ContextSignature sig, TokenList prefix, LogitVector logits) {
    std::sort(sig.frame_indices.begin(), sig.frame_indices.end());
    Key key{std::move(sig), std::move(prefix)};
    if (logits.vocab_size() != vocab_.size()) {
      throw SchemaError("scripted scenario: entry " + describe(key) + " has " +
                        std::to_string(logits.vocab_size()) + " logits but the vocabulary has " +
                        std::to_string(vocab_.size()) + " tokens");
    }
    if (table_.count(key) != 0) {
      throw SchemaError("scripted scenario: duplicate entry " + describe(key));
    }
    table_.emplace(std::move(key), std::move(logits));
  }

  const Vocabulary& vocab() const override { return vocab_; }
  std::string kind() const override { return "scripted"; }
  std::size_t entry_count() const noexcept { return table_.size(); }

  LogitVector next_logits(const MultimodalContext& ctx) const override {
    Key key{ContextSignature::of(ctx), ctx.prefix};
    auto it = table_.find(key);
    if (it == table_.end()) {
      throw BackendError(BackendErrorKind::unmatched_signature, "no scripted entry for " + describe(key));
    }
    return it->second;
  }

  static std::string describe(const Key& key) {
    std::ostringstream os;
    os << "{source_id=" << key.first.source_id << ", signature=" << hex64(signature_hash(key.first))
       << ", frames=[";
    for (std::size_t i = 0; i < key.first.frame_indices.size(); ++i) {
      os << (i ? "," : "") << key.first.frame_indices[i];
    }
    os << "], instruction=\"";
    for (std::size_t i = 0; i < key.first.instruction.size(); ++i) {
      os << (i ? " " : "") << key.first.instruction[i];
    }
    os << "\", prefix=[";
    for (std::size_t i = 0; i < key.second.size(); ++i) os << (i ? "," : "") << key.second[i];
    os << "]}";
    return os.str();
  }

  static ScriptedBackend from_json(const nlohmann::json& j) {
    try {
      Vocabulary vocab(j.at("vocab").get<TokenList>(), j.value("eos", std::string(kDefaultEos)));
      ScriptedBackend backend(std::move(vocab));
      for (const auto& e : j.value("entries", nlohmann::json::array())) {
        const auto& s = e.at("signature");
        ContextSignature sig;
        sig.source_id = s.at("source_id").get<std::string>();
        sig.frame_indices = s.at("frame_indices").get<std::vector<std::size_t>>();
        const auto& instr = s.at("instruction");
        sig.instruction = instr.is_string() ? split_words(instr.get<std::string>()) : instr.get<TokenList>();
        auto prefix = e.value("prefix", TokenList{});
        backend.add(std::move(sig), std::move(prefix),
                    LogitVector(e.at("logits").get<std::vector<double>>()));
      }
      return backend;
    } catch (const nlohmann::json::exception& ex) {
      throw SchemaError(std::string("scripted scenario: ") + ex.what());
    } catch (const ContractViolation& ex) {
      throw SchemaError(std::string("scripted scenario: ") + ex.what());
    }
  }

  static ScriptedBackend load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw SchemaError("cannot open scripted scenario " + path.string());
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& ex) {
      throw SchemaError("scripted scenario " + path.string() + ": " + ex.what());
    }
    return from_json(j);
  }

 private:
  Vocabulary vocab_;
  std::map<Key, LogitVector> table_;
};

}  // namespace tcd
