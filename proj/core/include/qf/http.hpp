#pragma once

#include <memory>
#include <semaphore>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "qf/error.hpp"

namespace qf {

struct RetryPolicy {
  int max_retries = 3;
  int base_backoff_ms = 200;  // doubled after every failed attempt
  int timeout_ms = 60000;
};

// API key from QF_API_KEY, or empty.
std::string api_key_from_env();

struct HttpResult {
  int status = 0;
  nlohmann::json body;
  int attempts = 0;
};

// JSON-over-HTTP client for OpenAI-compatible inference servers. Network
// failures and 5xx responses are retried with exponential backoff; 4xx
// responses are returned to the caller immediately. At most `max_in_flight`
// requests run concurrently through one client.
class JsonHttpClient {
 public:
  JsonHttpClient(std::string base_url, RetryPolicy retry, int max_in_flight = 4,
                 std::string api_key = api_key_from_env());

  // Throws EndpointUnreachable once retries are exhausted.
  HttpResult post(const std::string& path, const nlohmann::json& body) const;

  const std::string& base_url() const noexcept { return base_url_; }

 private:
  std::string base_url_;
  std::string scheme_host_port_;
  std::string path_prefix_;
  RetryPolicy retry_;
  std::string api_key_;
  std::shared_ptr<std::counting_semaphore<1024>> in_flight_;
};

struct ChatMessage {
  std::string role;  // "system" | "user" | "assistant"
  std::string content;
};

struct ChatRequest {
  std::string model;
  std::vector<ChatMessage> messages;
  double temperature = 0.0;
  int max_tokens = 512;
};

struct ChatReply {
  std::string content;  // empty when the endpoint returned no choices
  int attempts = 0;
};

nlohmann::json to_wire(const ChatRequest& req);

// POST {url}/v1/chat/completions. 4xx raises `refused_code`.
class ChatClient {
 public:
  ChatClient(std::string base_url, RetryPolicy retry, int max_in_flight = 4,
             ErrorCode refused_code = ErrorCode::GenerationRefused);

  ChatReply complete(const ChatRequest& req) const;

 private:
  JsonHttpClient http_;
  ErrorCode refused_code_;
};

}  // namespace qf
