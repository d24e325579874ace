#pragma once

#include <cstdlib>
#include <memory>
#include <optional>
#include <string>

#include <httplib.h>

#include "tcd/error.hpp"

namespace tcd {

/// "http://host:8080/v1/logits" -> {"http://host:8080", "/v1/logits"}.
struct SplitUrl {
  std::string origin;
  std::string path;

  static SplitUrl parse(const std::string& url) {
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) throw SchemaError("URL '" + url + "' has no scheme");
    const auto path_start = url.find('/', scheme_end + 3);
    if (path_start == std::string::npos) return {url, "/"};
    return {url.substr(0, path_start), url.substr(path_start)};
  }
};

inline std::optional<std::string> env_secret(const std::string& var) {
  if (var.empty()) return std::nullopt;
  const char* v = std::getenv(var.c_str());
  if (v == nullptr || *v == '\0') return std::nullopt;
  return std::string(v);
}

inline std::unique_ptr<httplib::Client> make_http_client(const std::string& origin, int timeout_ms) {
  auto cli = std::make_unique<httplib::Client>(origin);
  const auto sec = timeout_ms / 1000;
  const auto usec = (timeout_ms % 1000) * 1000;
  cli->set_connection_timeout(sec, usec);
  cli->set_read_timeout(sec, usec);
  cli->set_write_timeout(sec, usec);
  return cli;
}

inline bool retryable_status(int status) { return status == 408 || status == 429 || status >= 500; }

}  // namespace tcd
