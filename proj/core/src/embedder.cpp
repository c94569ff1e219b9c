#include "qf/embedder.hpp"

#include <algorithm>
#include <cmath>

#include "qf/text.hpp"

namespace qf {

bool EmbeddingVector::is_zero() const noexcept {
  return std::all_of(values.begin(), values.end(), [](float v) { return v == 0.0f; });
}

std::string_view to_string(EmbedderBackend b) noexcept {
  return b == EmbedderBackend::Remote ? "remote" : "hashed";
}

EmbedderBackend embedder_backend_from_string(std::string_view s) {
  if (s == "remote") return EmbedderBackend::Remote;
  if (s == "hashed") return EmbedderBackend::Hashed;
  throw Error(ErrorCode::InvalidArgument, "unknown embedder backend '" + std::string(s) + "'");
}

std::string hashed_model_tag(std::size_t dim) {
  return "hashed-trigram-fnv1a-" + std::to_string(dim);
}

void l2_normalize(std::vector<float>& v) {
  double sq = 0.0;
  for (const float x : v) sq += static_cast<double>(x) * static_cast<double>(x);
  if (sq == 0.0) return;
  const double norm = std::sqrt(sq);
  for (float& x : v) x = static_cast<float>(static_cast<double>(x) / norm);
}

EmbeddingVector hashed_embed(std::string_view text_in, std::size_t dim) {
  if (dim < 2) throw Error(ErrorCode::InvalidArgument, "hashed embedding needs dim >= 2");
  std::vector<double> acc(dim, 0.0);
  const auto cps = text::code_points(text::to_lower(text_in));
  for (std::size_t i = 0; i + 2 < cps.size(); ++i) {
    const std::string trigram = cps[i] + cps[i + 1] + cps[i + 2];
    const std::uint64_t h = text::fnv1a64(trigram);
    acc[h % dim] += (h >> 63) != 0 ? -1.0 : 1.0;
  }
  double sq = 0.0;
  for (const double x : acc) sq += x * x;
  EmbeddingVector out{std::vector<float>(dim, 0.0f), hashed_model_tag(dim)};
  if (sq == 0.0) return out;
  const double norm = std::sqrt(sq);
  for (std::size_t i = 0; i < dim; ++i) out.values[i] = static_cast<float>(acc[i] / norm);
  return out;
}

Embedder::Embedder(EmbedderConfig cfg) : cfg_(std::move(cfg)) {
  if (cfg_.batch_size < 1) throw Error(ErrorCode::InvalidArgument, "batch_size must be >= 1");
  if (cfg_.backend == EmbedderBackend::Hashed && cfg_.dim < 2) {
    throw Error(ErrorCode::InvalidArgument, "hashed backend requires dim >= 2");
  }
  if (cfg_.backend == EmbedderBackend::Remote) {
    if (cfg_.endpoint_url.empty()) {
      throw Error(ErrorCode::InvalidArgument, "remote embedder requires endpoint_url");
    }
    http_ = std::make_unique<JsonHttpClient>(
        cfg_.endpoint_url, RetryPolicy{cfg_.max_retries, cfg_.backoff_ms, cfg_.timeout_ms},
        cfg_.max_in_flight);
  }
}

std::string Embedder::model_tag() const {
  return cfg_.backend == EmbedderBackend::Hashed ? hashed_model_tag(cfg_.dim) : cfg_.model_name;
}

std::vector<EmbeddingVector> Embedder::embed_batch(const std::vector<std::string>& texts) const {
  if (cfg_.backend == EmbedderBackend::Hashed) {
    std::vector<EmbeddingVector> out;
    out.reserve(texts.size());
    for (const auto& t : texts) out.push_back(hashed_embed(t, cfg_.dim));
    return out;
  }
  return embed_remote(texts);
}

EmbeddingVector Embedder::embed(std::string_view text_in) const {
  return embed_batch({std::string(text_in)}).front();
}

std::vector<EmbeddingVector> Embedder::embed_remote(const std::vector<std::string>& texts) const {
  std::vector<EmbeddingVector> out(texts.size());
  std::vector<std::size_t> pending;  // indices with non-blank text
  for (std::size_t i = 0; i < texts.size(); ++i) {
    if (!text::trim(texts[i]).empty()) pending.push_back(i);
  }

  auto check_dim = [&](std::size_t dim) {
    std::size_t expected = observed_dim_.load();
    if (expected == 0 && cfg_.dim > 0) expected = cfg_.dim;
    if (expected != 0 && expected != dim) {
      throw Error(ErrorCode::DimensionMismatch, "endpoint returned dim " + std::to_string(dim) +
                                                    ", expected " + std::to_string(expected));
    }
    observed_dim_.store(dim);
  };

  for (std::size_t b = 0; b < pending.size(); b += cfg_.batch_size) {
    const std::size_t e = std::min(pending.size(), b + cfg_.batch_size);
    nlohmann::json input = nlohmann::json::array();
    for (std::size_t i = b; i < e; ++i) input.push_back(texts[pending[i]]);
    const HttpResult res =
        http_->post("/v1/embeddings", {{"model", cfg_.model_name}, {"input", input}});
    if (res.status >= 400) {
      throw Error(ErrorCode::EmbeddingRefused,
                  "embedding endpoint returned HTTP " + std::to_string(res.status));
    }
    const auto& data = res.body.contains("data") ? res.body["data"] : nlohmann::json();
    if (!data.is_array() || data.size() != e - b) {
      throw Error(ErrorCode::DimensionMismatch, "embedding response has wrong item count");
    }
    for (std::size_t pos = 0; pos < data.size(); ++pos) {
      const auto& item = data[pos];
      const std::size_t idx = item.value("index", pos);
      if (idx >= e - b) throw Error(ErrorCode::DimensionMismatch, "embedding index out of range");
      auto values = item.at("embedding").get<std::vector<float>>();
      if (values.empty()) throw Error(ErrorCode::DimensionMismatch, "empty embedding");
      if (!std::all_of(values.begin(), values.end(), [](float v) { return std::isfinite(v); })) {
        throw Error(ErrorCode::InvalidArgument, "endpoint returned a non-finite embedding");
      }
      check_dim(values.size());
      l2_normalize(values);
      out[pending[b + idx]] = EmbeddingVector{std::move(values), cfg_.model_name};
    }
  }

  std::size_t dim = observed_dim_.load();
  if (dim == 0) dim = cfg_.dim;
  if (dim == 0 && pending.size() != texts.size()) {
    throw Error(ErrorCode::DimensionMismatch, "cannot size zero vectors before the dim is known");
  }
  for (auto& v : out) {
    if (v.values.empty()) v = EmbeddingVector{std::vector<float>(dim, 0.0f), cfg_.model_name};
  }
  return out;
}

std::vector<EmbeddingVector> embed_batch(const std::vector<std::string>& texts,
                                         const EmbedderConfig& cfg) {
  return Embedder(cfg).embed_batch(texts);
}

}  // namespace qf
