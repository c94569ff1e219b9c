#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "qf/corpus.hpp"
#include "qf/embedder.hpp"
#include "qf/evalkit.hpp"
#include "qf/ragcore.hpp"
#include "qf/splitter.hpp"
#include "qf/vindex.hpp"

namespace qf {

enum class ModelRole { LlamaLike, MistralLike };

std::string_view to_string(ModelRole r) noexcept;
ModelRole model_role_from_string(std::string_view s);

struct PipelineConfig {
  std::string code;
  RetrievalTechnique retrieval = RetrievalTechnique::Similarity;
  ModelRole model_role = ModelRole::LlamaLike;
  PromptPlacement placement = PromptPlacement::OStart;
  std::size_t chunk_size = 150;
  std::size_t overlap = 0;
  SpreadsheetMode spreadsheet_mode = SpreadsheetMode::Standard;
  std::size_t k = 20;
  double lambda = 0.5;
  std::size_t fetch_k = 0;
  SplitStrategy strategy = SplitStrategy::Recursive;

  RetrievalConfig retrieval_config() const;
  SplitConfig split_config() const;
  void validate() const;

  bool operator==(const PipelineConfig&) const = default;
};

// Five-letter scheme: retrieval S|M, model L|M, placement O|N, chunk size
// B=150|C=512, optional E for one document per spreadsheet row.
PipelineConfig parse_config_code(std::string_view code);

// Throws UnknownCode when a field has no letter (e.g. chunk size 300).
std::string format_config_code(const PipelineConfig& cfg);

// The ten standard configurations, in canonical order.
const std::vector<std::string>& standard_config_codes();

void to_json(nlohmann::json& j, const PipelineConfig& c);
void from_json(const nlohmann::json& j, PipelineConfig& c);

// Applies the keys present in `overrides` (retrieval, k, lambda, fetch_k,
// placement, chunk_size, overlap, strategy, model_role, spreadsheet_mode).
PipelineConfig apply_overrides(PipelineConfig cfg, const nlohmann::json& overrides);

struct MatrixRuntime {
  EmbedderConfig embedder;
  GenerationConfig generation;  // model_name is replaced per role
  std::string llama_model = "llama3";
  std::string mistral_model = "mistral-instruct";
  std::optional<JudgeConfig> judge;
  std::size_t token_embedder_dim = 256;
  std::filesystem::path runs_dir = "runs";
  std::string timestamp;  // empty: current UTC time
  unsigned workers = 4;
  bool parallel_configs = false;
  std::size_t max_prompt_chars = 0;
  std::optional<std::filesystem::path> resource_dir;

  const std::string& model_for(ModelRole role) const {
    return role == ModelRole::LlamaLike ? llama_model : mistral_model;
  }
};

struct MatrixResult {
  std::filesystem::path run_dir;
  std::vector<MetricReport> reports;  // one per requested code, in order
};

// Resolves a corpus directory (manifest.json) or an index directory whose
// index.json names its corpus.
std::filesystem::path resolve_corpus_dir(const std::filesystem::path& dir);

// Runs every code end to end. Codes are parsed first (UnknownCode aborts the
// run); later failures become error reports and the run continues.
MatrixResult run_matrix(const std::filesystem::path& corpus_dir,
                        const std::filesystem::path& questionnaire_path,
                        const std::vector<std::string>& codes, const MatrixRuntime& runtime);

struct ComparisonTable {
  std::vector<MetricReport> rows;
  // Per row, the column names holding that column's best value.
  std::vector<std::vector<std::string>> best;

  std::string text() const;
  std::string csv() const;
  nlohmann::json json() const;
};

const std::vector<std::string>& comparison_columns();

ComparisonTable compare_reports(const std::vector<MetricReport>& reports);

// Metric values as published for the original system. Rendered next to
// local results for context only; they are not expected outputs.
struct PublishedRow {
  std::string code;
  double meteor;
  double bert_p;
  double bert_r;
  double bert_f1;
  std::optional<GevalScores> geval;
};

const std::vector<PublishedRow>& published_reference();
std::string published_reference_text();

}  // namespace qf
