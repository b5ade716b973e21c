#pragma once

#include <chrono>
#include <cstdlib>
#include <mutex>
#include <optional>
#include <string>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "detext/error.hpp"
#include "detext/rephrase.hpp"

namespace detext {

inline constexpr const char* kApiKeyEnvVar = "DETEXT_API_KEY";

inline std::string api_key_from_env() {
  const char* v = std::getenv(kApiKeyEnvVar);
  if (v == nullptr || *v == '\0') {
    throw ConfigError(std::string(kApiKeyEnvVar) + " is not set");
  }
  return v;
}

struct HttpBackendConfig {
  std::string base_url;                  // scheme://host[:port]
  std::string model = "gpt-3.5-turbo";
  std::string api_key;
  int min_interval_ms = 100;             // spacing between request starts
  std::optional<double> temperature;     // endpoint default when absent
  int timeout_s = 120;
};

// Chat-completions client: one POST per prompt, first choice consumed.
// Request starts are rate limited across all workers sharing the instance.
class HttpBackend : public ChatBackend {
 public:
  explicit HttpBackend(HttpBackendConfig config) : config_(std::move(config)) {
    if (config_.base_url.empty()) throw ConfigError("http backend: base url is empty");
    if (config_.base_url.back() == '/') config_.base_url.pop_back();
    if (config_.min_interval_ms < 0) {
      throw ConfigError("http backend: negative rate-limit interval");
    }
  }

  std::string complete(const std::string& prompt) override {
    throttle();

    nlohmann::ordered_json body;
    body["model"] = config_.model;
    body["messages"] = nlohmann::ordered_json::array(
        {nlohmann::ordered_json{{"role", "user"}, {"content", prompt}}});
    if (config_.temperature) body["temperature"] = *config_.temperature;

    httplib::Client client(config_.base_url);
    client.set_connection_timeout(config_.timeout_s, 0);
    client.set_read_timeout(config_.timeout_s, 0);
    client.set_write_timeout(config_.timeout_s, 0);
    if (!client.is_valid()) {
      throw ConfigError("http backend: invalid base url: " + config_.base_url);
    }
    httplib::Headers headers{{"Authorization", "Bearer " + config_.api_key}};
    auto res = client.Post("/v1/chat/completions", headers, body.dump(),
                           "application/json");
    if (!res) {
      throw TransportError("http backend: request failed: " +
                               httplib::to_string(res.error()),
                           0, true);
    }
    if (res->status != 200) {
      const bool transient = res->status == 429 || res->status >= 500;
      std::string detail = res->body.substr(0, 200);
      throw TransportError("http backend: status " + std::to_string(res->status) +
                               (detail.empty() ? "" : ": " + detail),
                           res->status, transient);
    }
    try {
      const auto j = nlohmann::ordered_json::parse(res->body);
      const auto& choices = j.at("choices");
      if (!choices.is_array() || choices.empty()) {
        throw DataError("http backend: response has no choices");
      }
      return choices.at(0).at("message").at("content").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      throw DataError(std::string("http backend: malformed response: ") + e.what());
    }
  }

  BackendKind kind() const override { return BackendKind::http; }

 private:
  void throttle() {
    using clock = std::chrono::steady_clock;
    std::unique_lock<std::mutex> lock(mutex_);
    const auto interval = std::chrono::milliseconds(config_.min_interval_ms);
    const auto now = clock::now();
    const auto earliest = last_start_ + interval;
    if (started_ && now < earliest) {
      std::this_thread::sleep_until(earliest);
      last_start_ = earliest;
    } else {
      last_start_ = now;
    }
    started_ = true;
  }

  HttpBackendConfig config_;
  std::mutex mutex_;
  std::chrono::steady_clock::time_point last_start_{};
  bool started_ = false;
};

}  // namespace detext
