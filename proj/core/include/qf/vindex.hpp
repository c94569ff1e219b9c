#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "qf/embedder.hpp"
#include "qf/splitter.hpp"

namespace qf {

enum class RetrievalTechnique { Similarity, Mmr };

std::string_view to_string(RetrievalTechnique t) noexcept;
RetrievalTechnique retrieval_technique_from_string(std::string_view s);

struct RetrievalConfig {
  RetrievalTechnique technique = RetrievalTechnique::Similarity;
  std::size_t k = 20;
  std::size_t fetch_k = 0;  // 0 selects 4k
  double lambda = 0.5;

  std::size_t effective_fetch_k() const noexcept { return fetch_k == 0 ? 4 * k : fetch_k; }
  void validate() const;
};

struct Hit {
  std::string chunk_id;
  double score = 0.0;
  std::string text;
  std::string doc_id;

  bool operator==(const Hit&) const = default;
};

struct RetrievalResult {
  std::vector<Hit> hits;
  std::string query_echo;
  RetrievalTechnique technique_used = RetrievalTechnique::Similarity;

  bool operator==(const RetrievalResult&) const = default;
};

// Dot product clamped to [-1, 1]. Products are exact in double and summed
// in eight interleaved lanes (lane j takes elements i with i % 8 == j), then
// combined as ((l0+l4)+(l2+l6))+((l1+l5)+(l3+l7)). The fixed order keeps
// scores bit-reproducible while letting the compiler vectorize.
double unit_dot(std::span<const float> a, std::span<const float> b) noexcept;

struct MmrPick {
  std::size_t index;  // into the candidate list
  double score;       // MMR value at selection time
};

// Greedy MMR over a candidate pool given as similarities. The first pick
// maximizes query similarity and scores lambda * sim; ties go to the
// smaller id.
std::vector<MmrPick> mmr_select(const std::vector<double>& query_sim,
                                const std::function<double(std::size_t, std::size_t)>& pair_sim,
                                const std::vector<std::string>& ids, std::size_t k, double lambda);

// Exact in-process vector store. Vectors live in one contiguous row-major
// float array; scores are dot products, which equal cosine similarity for
// the unit vectors the embedder produces. Any number of concurrent readers
// or a single writer.
class VectorIndex {
 public:
  VectorIndex(std::size_t dim, std::string model_tag);
  VectorIndex(VectorIndex&&) noexcept = default;
  VectorIndex& operator=(VectorIndex&&) noexcept = default;

  // Throws DimensionMismatch or DuplicateChunkId; nothing is added on error.
  std::size_t add(const std::vector<std::pair<Chunk, EmbeddingVector>>& entries);

  RetrievalResult search_similarity(const EmbeddingVector& query, const RetrievalConfig& cfg) const;
  RetrievalResult search_mmr(const EmbeddingVector& query, const RetrievalConfig& cfg) const;
  RetrievalResult search(const EmbeddingVector& query, const RetrievalConfig& cfg) const;

  void persist(const std::filesystem::path& path) const;
  // Throws CorruptIndex on checksum or structure failure, DimensionMismatch
  // when `expected_model_tag` is given and differs.
  static VectorIndex load(const std::filesystem::path& path,
                          const std::optional<std::string>& expected_model_tag = std::nullopt);

  std::size_t size() const;
  std::size_t dim() const noexcept { return dim_; }
  const std::string& model_tag() const noexcept { return model_tag_; }
  Chunk chunk(std::size_t i) const;
  std::vector<float> vector(std::size_t i) const;

  // Entry ranges scanned in parallel above this many entries.
  void set_search_threads(unsigned threads) noexcept { threads_ = threads == 0 ? 1 : threads; }

 private:
  double dot(std::span<const float> a, std::size_t row) const noexcept;
  std::vector<std::pair<double, std::size_t>> top_k(std::span<const float> q, std::size_t k) const;
  void check_query(const EmbeddingVector& query) const;
  Hit make_hit(std::size_t row, double score) const;

  std::size_t dim_;
  std::string model_tag_;
  std::vector<float> data_;
  std::vector<Chunk> chunks_;
  std::unordered_map<std::string, std::size_t> ids_;
  unsigned threads_ = 1;
  std::unique_ptr<std::shared_mutex> mu_ = std::make_unique<std::shared_mutex>();
};

}  // namespace qf
