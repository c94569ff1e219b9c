#include "qf/http.hpp"

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <thread>

#include <httplib.h>

namespace qf {

std::string api_key_from_env() {
  const char* key = std::getenv("QF_API_KEY");
  return key != nullptr ? key : "";
}

namespace {

// Splits "http://host:port/prefix" into ("http://host:port", "/prefix").
std::pair<std::string, std::string> split_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) {
    throw Error(ErrorCode::InvalidArgument, "endpoint url needs a scheme: '" + url + "'");
  }
  const auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, ""};
  std::string prefix = url.substr(path_start);
  while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
  return {url.substr(0, path_start), prefix};
}

class SemaphoreGuard {
 public:
  explicit SemaphoreGuard(std::counting_semaphore<1024>& s) : s_(s) { s_.acquire(); }
  ~SemaphoreGuard() { s_.release(); }
  SemaphoreGuard(const SemaphoreGuard&) = delete;
  SemaphoreGuard& operator=(const SemaphoreGuard&) = delete;

 private:
  std::counting_semaphore<1024>& s_;
};

}  // namespace

JsonHttpClient::JsonHttpClient(std::string base_url, RetryPolicy retry, int max_in_flight,
                               std::string api_key)
    : base_url_(std::move(base_url)),
      retry_(retry),
      api_key_(std::move(api_key)),
      in_flight_(std::make_shared<std::counting_semaphore<1024>>(
          std::clamp(max_in_flight, 1, 1024))) {
  std::tie(scheme_host_port_, path_prefix_) = split_url(base_url_);
}

HttpResult JsonHttpClient::post(const std::string& path, const nlohmann::json& body) const {
  const std::string payload = body.dump();
  const std::string target = path_prefix_ + path;
  std::string last_error;
  HttpResult result;

  for (int attempt = 0; attempt <= retry_.max_retries; ++attempt) {
    if (attempt > 0) {
      std::this_thread::sleep_for(
          std::chrono::milliseconds(static_cast<long long>(retry_.base_backoff_ms) << (attempt - 1)));
    }
    result.attempts = attempt + 1;

    httplib::Result res;
    {
      SemaphoreGuard guard(*in_flight_);
      httplib::Client client(scheme_host_port_);
      const auto timeout = std::chrono::milliseconds(retry_.timeout_ms);
      client.set_connection_timeout(timeout);
      client.set_read_timeout(timeout);
      client.set_write_timeout(timeout);
      httplib::Headers headers;
      if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);
      res = client.Post(target, headers, payload, "application/json");
    }

    if (!res) {
      last_error = httplib::to_string(res.error());
      continue;
    }
    if (res->status >= 500) {
      last_error = "HTTP " + std::to_string(res->status);
      continue;
    }
    result.status = res->status;
    if (res->status >= 200 && res->status < 300) {
      try {
        result.body = nlohmann::json::parse(res->body);
      } catch (const nlohmann::json::exception&) {
        last_error = "malformed JSON response";
        continue;
      }
    } else {
      result.body = nlohmann::json::parse(res->body, nullptr, false);
      if (result.body.is_discarded()) result.body = res->body;
    }
    return result;
  }
  throw Error(ErrorCode::EndpointUnreachable,
              base_url_ + target + " failed after " + std::to_string(result.attempts) +
                  " attempt(s): " + last_error);
}

nlohmann::json to_wire(const ChatRequest& req) {
  nlohmann::json messages = nlohmann::json::array();
  for (const auto& m : req.messages) messages.push_back({{"role", m.role}, {"content", m.content}});
  return {{"model", req.model},
          {"messages", messages},
          {"temperature", req.temperature},
          {"max_tokens", req.max_tokens}};
}

ChatClient::ChatClient(std::string base_url, RetryPolicy retry, int max_in_flight,
                       ErrorCode refused_code)
    : http_(std::move(base_url), retry, max_in_flight), refused_code_(refused_code) {}

ChatReply ChatClient::complete(const ChatRequest& req) const {
  const HttpResult res = http_.post("/v1/chat/completions", to_wire(req));
  if (res.status >= 400) {
    throw Error(refused_code_, "chat endpoint returned HTTP " + std::to_string(res.status));
  }
  ChatReply reply;
  reply.attempts = res.attempts;
  const auto& choices = res.body.contains("choices") ? res.body["choices"] : nlohmann::json();
  if (choices.is_array() && !choices.empty()) {
    const auto& msg = choices[0].value("message", nlohmann::json::object());
    if (msg.contains("content") && msg["content"].is_string()) {
      reply.content = msg["content"].get<std::string>();
    }
  }
  return reply;
}

}  // namespace qf
