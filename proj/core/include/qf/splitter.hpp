#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "qf/corpus.hpp"

namespace qf {

enum class SplitStrategy { Flat, Recursive };

std::string_view to_string(SplitStrategy s) noexcept;
SplitStrategy split_strategy_from_string(std::string_view s);

// Budgets are in Unicode code points.
struct SplitConfig {
  std::size_t chunk_size = 150;
  std::size_t overlap = 0;
  SplitStrategy strategy = SplitStrategy::Recursive;
  std::vector<std::string> separators = {"\n\n", "\n", " ", ""};

  // Throws InvalidArgument unless overlap < chunk_size <= 100000 and the
  // separator list ends with "".
  void validate() const;
};

struct Chunk {
  std::string chunk_id;
  std::string doc_id;
  std::string text;
  std::size_t char_start = 0;  // code point offsets into the parent text
  std::size_t char_end = 0;
  std::size_t seq = 0;

  bool operator==(const Chunk&) const = default;
};

std::string make_chunk_id(std::string_view doc_id, std::size_t seq);

std::vector<Chunk> split_flat(const SourceDocument& doc, const SplitConfig& cfg);
std::vector<Chunk> split_recursive(const SourceDocument& doc, const SplitConfig& cfg);

// Dispatches on cfg.strategy.
std::vector<Chunk> split(const SourceDocument& doc, const SplitConfig& cfg);
std::vector<Chunk> split_all(const std::vector<SourceDocument>& docs, const SplitConfig& cfg);

void to_json(nlohmann::json& j, const Chunk& c);
void from_json(const nlohmann::json& j, Chunk& c);

std::string chunks_to_jsonl(const std::vector<Chunk>& chunks);
std::vector<Chunk> chunks_from_jsonl(std::string_view jsonl);

}  // namespace qf
