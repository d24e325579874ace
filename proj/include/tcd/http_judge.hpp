#pragma once

#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <semaphore>
#include <string>

#include <nlohmann/json.hpp>

#include "tcd/http_util.hpp"
#include "tcd/judge.hpp"
#include "tcd/retry.hpp"

namespace tcd {

struct HttpJudgeConfig {
  std::string base_url = "https://api.openai.com";
  std::string model = "gpt-4o";
  double temperature = 0.0;
  std::string api_key_env = "OPENAI_API_KEY";
  int timeout_ms = 60'000;
  RetryPolicy retry{};
  int max_in_flight = 4;
  std::optional<std::filesystem::path> record_dir;  // save replies for later offline runs

  static HttpJudgeConfig from_json(const nlohmann::json& j) {
    HttpJudgeConfig c;
    c.base_url = j.value("url", c.base_url);
    c.model = j.value("model", c.model);
    c.temperature = j.value("temperature", c.temperature);
    c.api_key_env = j.value("api_key_env", c.api_key_env);
    c.timeout_ms = j.value("timeout_ms", c.timeout_ms);
    c.retry.max_retries = j.value("retries", c.retry.max_retries);
    c.retry.initial_delay = std::chrono::milliseconds(j.value("retry_delay_ms", 500));
    c.max_in_flight = j.value("max_in_flight", c.max_in_flight);
    if (j.contains("record_dir")) c.record_dir = j["record_dir"].get<std::string>();
    if (c.max_in_flight < 1) throw SchemaError("judge: max_in_flight must be >= 1");
    if (c.retry.max_retries < 0) throw SchemaError("judge: retries must be >= 0");
    return c;
  }
};

/// OpenAI-compatible chat-completions judge with bounded concurrency and
/// exponential-backoff retries.
class HttpJudge final : public JudgeClient {
 public:
  explicit HttpJudge(HttpJudgeConfig config)
      : config_(std::move(config)),
        endpoint_(SplitUrl::parse(config_.base_url)),
        in_flight_(std::make_unique<std::counting_semaphore<>>(config_.max_in_flight)) {
    if (config_.record_dir) std::filesystem::create_directories(*config_.record_dir);
  }

  std::string model() const override { return config_.model; }
  double temperature() const override { return config_.temperature; }

  std::string complete(const JudgeRequest& request) const override {
    const std::string body = request.to_json().dump();
    const auto key = env_secret(config_.api_key_env);
    const std::string path = chat_path(endpoint_.path);

    in_flight_->acquire();
    struct Release {
      std::counting_semaphore<>* s;
      ~Release() { s->release(); }
    } release{in_flight_.get()};

    std::string reply;
    try {
      reply = with_retries(
          config_.retry,
          [&]() -> std::string {
            auto cli = make_http_client(endpoint_.origin, config_.timeout_ms);
            httplib::Headers headers;
            if (key) headers.emplace("Authorization", "Bearer " + *key);
            auto res = cli->Post(path, headers, body, "application/json");
            if (!res) throw Transient("judge request failed: " + httplib::to_string(res.error()));
            if (res->status < 200 || res->status >= 300) {
              const std::string msg = "judge returned HTTP " + std::to_string(res->status);
              if (retryable_status(res->status)) throw Transient(msg);
              throw JudgeError(msg);
            }
            return extract_content(res->body);
          },
          [](const std::exception& ex) { return dynamic_cast<const Transient*>(&ex) != nullptr; });
    } catch (const Transient& ex) {
      throw JudgeError(std::string(ex.what()) + " (after " + std::to_string(config_.retry.max_retries) + " retries)");
    }

    if (config_.record_dir) {
      std::ofstream(*config_.record_dir / (request.hash() + ".txt"), std::ios::binary) << reply;
      std::ofstream(*config_.record_dir / (request.hash() + ".request.json")) << request.to_json().dump(2) << "\n";
    }
    return reply;
  }

  /// "/" -> "/v1/chat/completions"; a path already naming the endpoint is kept.
  static std::string chat_path(const std::string& base) {
    if (base.ends_with("/chat/completions")) return base;
    return (base.ends_with('/') ? base : base + "/") + "v1/chat/completions";
  }

  static std::string extract_content(const std::string& body) {
    auto j = nlohmann::json::parse(body, nullptr, false);
    if (j.is_discarded() || !j.contains("choices") || !j["choices"].is_array() || j["choices"].empty() ||
        !j["choices"][0].is_object() || !j["choices"][0].contains("message") ||
        !j["choices"][0]["message"].contains("content") || !j["choices"][0]["message"]["content"].is_string()) {
      throw JudgeError("judge reply is not a chat completion");
    }
    return j["choices"][0]["message"]["content"].get<std::string>();
  }

 private:
  struct Transient : JudgeError {
    using JudgeError::JudgeError;
  };

  HttpJudgeConfig config_;
  SplitUrl endpoint_;
  std::unique_ptr<std::counting_semaphore<>> in_flight_;
};

}  // namespace tcd
