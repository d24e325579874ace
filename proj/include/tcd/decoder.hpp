#pragma once

#include <future>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "tcd/backend.hpp"
#include "tcd/counterpart.hpp"
#include "tcd/logit_core.hpp"

namespace tcd {

struct DecodeRequest {
  TokenList instruction;
  FrameSequence frames;  // original context
  std::optional<CounterpartSpec> counterpart;  // absent: standard decoding
  ContrastParams params{};
  std::size_t max_tokens = 16;
  std::set<std::string> stop_tokens;  // the backend's EOS is always added
  bool concurrent_queries = false;    // query original and counterpart in parallel
};

enum class StopReason { stop_token, max_tokens };

inline const char* to_string(StopReason r) { return r == StopReason::stop_token ? "stop_token" : "max_tokens"; }

/// One generation episode. `tokens` excludes a terminating stop token; its
/// diagnostics are kept in `stop_step`.
struct DecodeResult {
  TokenList tokens;
  std::vector<StepDiagnostics> steps;
  StopReason stop_reason = StopReason::max_tokens;
  std::optional<std::string> stop_token;
  std::optional<StepDiagnostics> stop_step;

  std::string text() const {
    std::string out;
    for (const auto& t : tokens) {
      if (!out.empty()) out += ' ';
      out += t;
    }
    return out;
  }
};

enum class QuerySide { original, counterpart };

inline const char* to_string(QuerySide s) { return s == QuerySide::original ? "original" : "counterpart"; }

/// Backend failure during decoding, tagged with the step and the context
/// that was being queried.
class DecodeError : public std::runtime_error {
 public:
  DecodeError(QuerySide side, std::size_t step, const std::string& what)
      : std::runtime_error(std::string(to_string(side)) + " context, step " + std::to_string(step) + ": " + what),
        side_(side),
        step_(step) {}

  QuerySide side() const noexcept { return side_; }
  std::size_t step() const noexcept { return step_; }

 private:
  QuerySide side_;
  std::size_t step_;
};

namespace detail {

inline LogitVector query(const Backend& backend, const MultimodalContext& ctx, QuerySide side, std::size_t step) {
  LogitVector z;
  try {
    z = backend.next_logits(ctx);
  } catch (const std::exception& ex) {
    throw DecodeError(side, step, ex.what());
  }
  if (z.vocab_size() != backend.vocab().size()) {
    throw DecodeError(side, step,
                      "backend returned " + std::to_string(z.vocab_size()) + " logits for a vocabulary of " +
                          std::to_string(backend.vocab().size()));
  }
  return z;
}

inline void validate_request(const DecodeRequest& req, const Backend& backend) {
  require(req.max_tokens >= 1, "DecodeRequest: max_tokens must be >= 1");
  req.params.validate();
  for (const auto& t : req.stop_tokens) {
    require(backend.vocab().contains(t), "DecodeRequest: stop token '" + t + "' is not in the vocabulary");
  }
  req.frames.validate();
}

/// Shared loop. `step_fn(prefix, step)` returns the diagnostics whose
/// argmax_final is the token to emit.
template <typename StepFn>
DecodeResult run_loop(const DecodeRequest& req, const Backend& backend, StepFn&& step_fn) {
  std::set<std::string> stops = req.stop_tokens;
  stops.insert(backend.vocab().eos());

  DecodeResult result;
  TokenList prefix;
  for (std::size_t step = 0; step < req.max_tokens; ++step) {
    const StepDiagnostics diag = step_fn(prefix, step);
    const std::string& token = backend.vocab().token(diag.argmax_final);
    if (stops.count(token) != 0) {
      result.stop_reason = StopReason::stop_token;
      result.stop_token = token;
      result.stop_step = diag;
      return result;
    }
    result.tokens.push_back(token);
    result.steps.push_back(diag);
    prefix.push_back(token);
  }
  result.stop_reason = StopReason::max_tokens;
  return result;
}

}  // namespace detail

/// Greedy decoding on the original context only.
inline DecodeResult decode_standard(const DecodeRequest& req, const Backend& backend) {
  detail::validate_request(req, backend);
  MultimodalContext ctx{req.frames, req.instruction, {}};
  return detail::run_loop(req, backend, [&](const TokenList& prefix, std::size_t step) {
    ctx.prefix = prefix;
    const auto z = detail::query(backend, ctx, QuerySide::original, step);
    StepDiagnostics d;
    d.plausible_count = z.vocab_size();
    d.argmax_ori = argmax(z.values());
    d.argmax_final = d.argmax_ori;
    d.contrast_flipped = false;
    return d;
  });
}

/// Greedy decoding on the contrast-modulated distribution. The counterpart
/// frames are built once; both contexts advance with the same emitted token.
inline DecodeResult decode_tcd(const DecodeRequest& req, const Backend& backend) {
  detail::validate_request(req, backend);
  require(req.counterpart.has_value(), "decode_tcd: request has no counterpart spec");

  MultimodalContext original{req.frames, req.instruction, {}};
  MultimodalContext counterpart{build_counterpart(req.frames, *req.counterpart), req.instruction, {}};

  return detail::run_loop(req, backend, [&](const TokenList& prefix, std::size_t step) {
    original.prefix = prefix;
    counterpart.prefix = prefix;
    LogitVector z_ori;
    LogitVector z_con;
    if (req.concurrent_queries) {
      auto con = std::async(std::launch::async,
                            [&] { return detail::query(backend, counterpart, QuerySide::counterpart, step); });
      std::exception_ptr first_error;
      try {
        z_ori = detail::query(backend, original, QuerySide::original, step);
      } catch (...) {
        first_error = std::current_exception();
      }
      try {
        z_con = con.get();
      } catch (...) {
        if (!first_error) first_error = std::current_exception();
      }
      if (first_error) std::rethrow_exception(first_error);
    } else {
      z_ori = detail::query(backend, original, QuerySide::original, step);
      z_con = detail::query(backend, counterpart, QuerySide::counterpart, step);
    }
    return modulated_step(z_ori, z_con, req.params).diagnostics;
  });
}

/// Dispatches on whether the request carries a counterpart spec.
inline DecodeResult decode(const DecodeRequest& req, const Backend& backend) {
  return req.counterpart ? decode_tcd(req, backend) : decode_standard(req, backend);
}

}  // namespace tcd
