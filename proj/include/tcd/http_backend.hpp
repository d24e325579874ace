#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <semaphore>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "tcd/backend.hpp"
#include "tcd/http_util.hpp"
#include "tcd/retry.hpp"

namespace tcd {

struct HttpBackendConfig {
  std::string url;
  std::string api_key_env;  // bearer token is read from this variable, if set
  int timeout_ms = 30'000;
  RetryPolicy retry{};
  int max_in_flight = 4;
  /// Tokens missing from the returned top-K get (min returned value - floor_offset).
  double floor_offset = 10.0;

  static HttpBackendConfig from_json(const nlohmann::json& j) {
    HttpBackendConfig c;
    c.url = j.at("url").get<std::string>();
    c.api_key_env = j.value("api_key_env", std::string{});
    c.timeout_ms = j.value("timeout_ms", c.timeout_ms);
    c.retry.max_retries = j.value("retries", c.retry.max_retries);
    c.retry.initial_delay = std::chrono::milliseconds(j.value("retry_delay_ms", 500));
    c.max_in_flight = j.value("max_in_flight", c.max_in_flight);
    c.floor_offset = j.value("floor_offset", c.floor_offset);
    if (c.max_in_flight < 1) throw SchemaError("http backend: max_in_flight must be >= 1");
    if (c.timeout_ms < 1) throw SchemaError("http backend: timeout_ms must be >= 1");
    if (c.retry.max_retries < 0) throw SchemaError("http backend: retries must be >= 0");
    if (!std::isfinite(c.floor_offset) || c.floor_offset < 0) {
      throw SchemaError("http backend: floor_offset must be a non-negative number");
    }
    return c;
  }
};

/// Remote backend speaking a minimal logprobs protocol.
///
/// Request:  POST {url}  {"source_id", "instruction": [...], "frames": [{"index", "ref"|"features"}],
///                        "prefix": [...]}
/// Response: {"logprobs": [{"token": "yes", "value": -0.1}, ...]}
///
/// Only vocabulary tokens are read from the reply. Vocabulary tokens the
/// server did not return are set to an explicit floor below the smallest
/// returned value.
class HttpBackend final : public Backend {
 public:
  HttpBackend(Vocabulary vocab, HttpBackendConfig config)
      : vocab_(std::move(vocab)),
        config_(std::move(config)),
        endpoint_(SplitUrl::parse(config_.url)),
        in_flight_(std::make_unique<std::counting_semaphore<>>(config_.max_in_flight)) {}

  const Vocabulary& vocab() const override { return vocab_; }
  std::string kind() const override { return "http"; }
  const HttpBackendConfig& config() const noexcept { return config_; }

  static nlohmann::json request_body(const MultimodalContext& ctx) {
    nlohmann::json frames = nlohmann::json::array();
    for (const auto& f : ctx.frames.frames) {
      nlohmann::json jf{{"index", f.index}};
      if (f.has_features()) {
        jf["features"] = f.features();
      } else {
        jf["ref"] = std::get<FileRef>(f.payload).path.string();
      }
      frames.push_back(std::move(jf));
    }
    return {{"source_id", ctx.frames.source_id},
            {"instruction", ctx.instruction},
            {"frames", std::move(frames)},
            {"prefix", ctx.prefix}};
  }

  /// Maps a reply body onto the vocabulary. Throws BackendError on malformed
  /// or missing logprobs; never substitutes defaults for absent data.
  LogitVector parse_response(const std::string& body) const {
    auto j = nlohmann::json::parse(body, nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
      throw BackendError(BackendErrorKind::malformed_response, "reply is not a JSON object");
    }
    if (!j.contains("logprobs")) {
      throw BackendError(BackendErrorKind::missing_logprobs, "reply has no 'logprobs' field");
    }
    const auto& lp = j["logprobs"];
    if (!lp.is_array()) throw BackendError(BackendErrorKind::malformed_response, "'logprobs' is not an array");

    std::unordered_map<std::string, double> returned;
    double lowest = std::numeric_limits<double>::infinity();
    for (const auto& e : lp) {
      if (!e.is_object() || !e.contains("token") || !e["token"].is_string() || !e.contains("value") ||
          !e["value"].is_number()) {
        throw BackendError(BackendErrorKind::malformed_response, "logprobs entry is not {token, value}");
      }
      const double v = e["value"].get<double>();
      if (!std::isfinite(v)) {
        throw BackendError(BackendErrorKind::malformed_response, "logprobs entry has a non-finite value");
      }
      returned.emplace(e["token"].get<std::string>(), v);  // first occurrence wins
      lowest = std::min(lowest, v);
    }
    const bool any_known = std::any_of(vocab_.tokens().begin(), vocab_.tokens().end(),
                                       [&](const std::string& t) { return returned.count(t) != 0; });
    if (!any_known) {
      throw BackendError(BackendErrorKind::missing_logprobs, "reply contains no vocabulary token");
    }
    const double floor = lowest - config_.floor_offset;
    std::vector<double> out(vocab_.size());
    for (std::size_t k = 0; k < out.size(); ++k) {
      auto it = returned.find(vocab_.token(k));
      out[k] = it == returned.end() ? floor : it->second;
    }
    return LogitVector(std::move(out));
  }

  LogitVector next_logits(const MultimodalContext& ctx) const override {
    const std::string body = request_body(ctx).dump();
    const auto token = env_secret(config_.api_key_env);

    in_flight_->acquire();
    struct Release {
      std::counting_semaphore<>* s;
      ~Release() { s->release(); }
    } release{in_flight_.get()};

    const std::string reply = with_retries(
        config_.retry,
        [&]() -> std::string {
          auto cli = make_http_client(endpoint_.origin, config_.timeout_ms);
          httplib::Headers headers;
          if (token) headers.emplace("Authorization", "Bearer " + *token);
          auto res = cli->Post(endpoint_.path, headers, body, "application/json");
          if (!res) {
            throw Transient("request to " + config_.url + " failed: " + httplib::to_string(res.error()));
          }
          if (res->status < 200 || res->status >= 300) {
            const std::string msg = config_.url + " returned HTTP " + std::to_string(res->status);
            if (retryable_status(res->status)) throw Transient(msg);
            throw BackendError(BackendErrorKind::transport, msg);
          }
          return res->body;
        },
        [](const std::exception& ex) { return dynamic_cast<const Transient*>(&ex) != nullptr; });
    return parse_response(reply);
  }

 private:
  struct Transient : BackendError {
    explicit Transient(const std::string& what) : BackendError(BackendErrorKind::transport, what) {}
  };

  Vocabulary vocab_;
  HttpBackendConfig config_;
  SplitUrl endpoint_;
  std::unique_ptr<std::counting_semaphore<>> in_flight_;
};

}  // namespace tcd
