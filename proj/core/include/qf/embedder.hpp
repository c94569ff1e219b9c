#pragma once

#include <atomic>
#include <cstddef>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "qf/http.hpp"

namespace qf {

struct EmbeddingVector {
  std::vector<float> values;
  std::string model_tag;

  std::size_t dim() const noexcept { return values.size(); }
  bool is_zero() const noexcept;

  bool operator==(const EmbeddingVector&) const = default;
};

enum class EmbedderBackend { Remote, Hashed };

std::string_view to_string(EmbedderBackend b) noexcept;
EmbedderBackend embedder_backend_from_string(std::string_view s);

struct EmbedderConfig {
  EmbedderBackend backend = EmbedderBackend::Hashed;
  std::string endpoint_url;
  std::string model_name = "nomic-embed-text";
  std::size_t dim = 256;  // required for hashed; optional expectation for remote
  std::size_t batch_size = 32;
  int timeout_ms = 60000;
  int max_retries = 3;
  int backoff_ms = 200;
  int max_in_flight = 4;
};

// Character-trigram feature hashing: FNV-1a 64 over each trigram's UTF-8
// bytes, sign from the top bit, slot = hash mod dim, then L2-normalized.
EmbeddingVector hashed_embed(std::string_view text, std::size_t dim);

std::string hashed_model_tag(std::size_t dim);

// Scales to unit L2 norm in place; the zero vector is left untouched.
void l2_normalize(std::vector<float>& v);

class Embedder {
 public:
  explicit Embedder(EmbedderConfig cfg);

  // One unit-norm (or all-zero) vector per input, in input order.
  std::vector<EmbeddingVector> embed_batch(const std::vector<std::string>& texts) const;
  EmbeddingVector embed(std::string_view text) const;

  std::string model_tag() const;
  const EmbedderConfig& config() const noexcept { return cfg_; }

 private:
  std::vector<EmbeddingVector> embed_remote(const std::vector<std::string>& texts) const;

  EmbedderConfig cfg_;
  std::unique_ptr<JsonHttpClient> http_;
  mutable std::atomic<std::size_t> observed_dim_{0};
};

std::vector<EmbeddingVector> embed_batch(const std::vector<std::string>& texts,
                                         const EmbedderConfig& cfg);

}  // namespace qf
