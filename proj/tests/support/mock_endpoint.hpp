#pragma once

#include <atomic>
#include <cstddef>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace qf::testing {

// A chat rule fires when the last user message contains every `contains`
// needle and `repeated` occurs at least `min_count` times.
struct ChatRule {
  std::vector<std::string> contains;
  std::string repeated;
  int min_count = 0;
  std::string response;
  int status = 200;
};

// Scripted OpenAI-compatible endpoint on 127.0.0.1 and a random port.
//   POST /v1/chat/completions: queued replies first, then rules, then the
//   default reply.
//   POST /v1/embeddings: hashed trigram vectors of `embedding_dim`.
// The first `fail_next` requests of any kind answer `fail_status`.
class MockEndpoint {
 public:
  // Queued status that answers 200 with an empty choices array.
  static constexpr int kEmptyChoices = -1;

  MockEndpoint();
  ~MockEndpoint();
  MockEndpoint(const MockEndpoint&) = delete;
  MockEndpoint& operator=(const MockEndpoint&) = delete;

  std::string url() const;
  int port() const noexcept { return port_; }

  void add_rule(ChatRule rule);
  void set_default_response(std::string text);
  void queue_response(std::string text, int status = 200);
  void set_failures(int count, int status = 503);
  void set_embedding_dim(std::size_t dim);
  // Loads {"default": "...", "rules": [{"contains": [...], "repeated": "...",
  // "min_count": n, "response": "...", "status": n}]}.
  void load_script(const nlohmann::json& script);

  std::size_t chat_requests() const noexcept { return chat_requests_; }
  std::size_t embedding_requests() const noexcept { return embedding_requests_; }
  std::vector<nlohmann::json> chat_log() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  int port_ = 0;
  std::atomic<std::size_t> chat_requests_{0};
  std::atomic<std::size_t> embedding_requests_{0};
};

}  // namespace qf::testing
