#pragma once

#include <algorithm>
#include <cstdint>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "tcd/error.hpp"
#include "tcd/frames.hpp"
#include "tcd/logit_core.hpp"

namespace tcd {

using TokenList = std::vector<std::string>;

inline constexpr std::string_view kDefaultEos = "<eos>";

/// Ordered, duplicate-free token list. Must contain "yes", "no" and the
/// end-of-sequence token.
class Vocabulary {
 public:
  Vocabulary() = default;

  explicit Vocabulary(TokenList tokens, std::string eos = std::string(kDefaultEos))
      : tokens_(std::move(tokens)), eos_(std::move(eos)) {
    for (std::size_t i = 0; i < tokens_.size(); ++i) {
      if (!index_.emplace(tokens_[i], i).second) {
        throw SchemaError("vocabulary: duplicate token '" + tokens_[i] + "'");
      }
    }
    for (const std::string& needed : {std::string("yes"), std::string("no"), eos_}) {
      if (!contains(needed)) throw SchemaError("vocabulary: missing required token '" + needed + "'");
    }
  }

  std::size_t size() const noexcept { return tokens_.size(); }
  const TokenList& tokens() const noexcept { return tokens_; }
  const std::string& eos() const noexcept { return eos_; }
  const std::string& token(std::size_t i) const { return tokens_.at(i); }
  bool contains(const std::string& t) const { return index_.count(t) != 0; }

  std::size_t index_of(const std::string& t) const {
    auto it = index_.find(t);
    if (it == index_.end()) throw ContractViolation("token '" + t + "' is not in the vocabulary");
    return it->second;
  }

 private:
  TokenList tokens_;
  std::string eos_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Everything a backend conditions on at one step: video frames, the text
/// instruction, and the tokens generated so far.
struct MultimodalContext {
  FrameSequence frames;
  TokenList instruction;
  TokenList prefix;
};

/// Key identifying the (video, instruction) half of a context. Frame indices
/// are a multiset, so their order does not matter.
struct ContextSignature {
  std::string source_id;
  std::vector<std::size_t> frame_indices;  // sorted
  TokenList instruction;

  static ContextSignature of(const MultimodalContext& ctx) {
    ContextSignature sig{ctx.frames.source_id, ctx.frames.indices(), ctx.instruction};
    std::sort(sig.frame_indices.begin(), sig.frame_indices.end());
    return sig;
  }

  auto operator<=>(const ContextSignature&) const = default;
};

/// 64-bit FNV-1a. Used for stable identifiers in files (recorded judge
/// replies, signature display), never for equality on its own.
inline std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed = 0xcbf29ce484222325ULL) {
  std::uint64_t h = seed;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  static constexpr char digits[] = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i, v >>= 4) out[static_cast<std::size_t>(i)] = digits[v & 0xf];
  return out;
}

inline std::uint64_t signature_hash(const ContextSignature& sig) {
  // Unit separators keep token boundaries unambiguous.
  std::string buf = sig.source_id;
  buf += '\x1e';
  for (auto i : sig.frame_indices) {
    buf += std::to_string(i);
    buf += '\x1f';
  }
  buf += '\x1e';
  for (const auto& t : sig.instruction) {
    buf += t;
    buf += '\x1f';
  }
  return fnv1a64(buf);
}

/// Autoregressive model boundary: one full logit vector per call.
/// Implementations are immutable after construction and safe to call
/// concurrently.
class Backend {
 public:
  virtual ~Backend() = default;

  virtual const Vocabulary& vocab() const = 0;
  virtual LogitVector next_logits(const MultimodalContext& ctx) const = 0;
  virtual std::string kind() const = 0;
};

/// Whitespace tokenization used to turn question text into instruction tokens.
inline TokenList split_words(std::string_view text) {
  TokenList out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    std::size_t j = i;
    while (j < text.size() && !std::isspace(static_cast<unsigned char>(text[j]))) ++j;
    if (j > i) out.emplace_back(text.substr(i, j - i));
    i = j;
  }
  return out;
}

}  // namespace tcd
