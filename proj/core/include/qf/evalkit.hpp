#pragma once

#include <cstddef>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "qf/embedder.hpp"
#include "qf/http.hpp"
#include "qf/ragcore.hpp"

namespace qf {

// ---- METEOR ---------------------------------------------------------------

// Lowercase, strip punctuation, split on whitespace.
std::vector<std::string> meteor_tokens(std::string_view s);

struct MeteorResult {
  double score = 0.0;
  std::size_t matches = 0;
  std::size_t chunks = 0;
  double precision = 0.0;
  double recall = 0.0;
  double fmean = 0.0;
  double penalty = 0.0;
  bool empty_input = false;  // one side had no tokens; score is 0
};

// Unigram METEOR with an exact stage then a stem stage (Porter for English
// references, a light suffix stripper for German ones). Among alignments
// with the maximal match count per stage, the one with the fewest chunks is
// used. No synonym stage.
MeteorResult meteor(std::string_view candidate, std::string_view reference);

// Scalar formula: F_mean = 10PR/(R+9P), penalty = 0.5 (chunks/m)^3.
double meteor_from_counts(std::size_t matches, std::size_t candidate_len,
                          std::size_t reference_len, std::size_t chunks);

// ---- BERTScore ------------------------------------------------------------

struct BertScore {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

struct IdfWeights {
  std::vector<double> candidate;
  std::vector<double> reference;
};

// Cosine similarity; 0 when either vector is zero. Exactly 1 for identical
// non-zero vectors.
double cosine(const std::vector<float>& a, const std::vector<float>& b);

// Greedy matching: each token pairs with its most similar counterpart.
// Throws EmptyInput or DimensionMismatch.
BertScore bertscore(const std::vector<EmbeddingVector>& candidate,
                    const std::vector<EmbeddingVector>& reference,
                    const std::optional<IdfWeights>& idf = std::nullopt);

class TokenEmbedder {
 public:
  virtual ~TokenEmbedder() = default;
  virtual std::vector<EmbeddingVector> embed_tokens(const std::vector<std::string>& tokens) const = 0;
  virtual std::string model_tag() const = 0;
};

// Hashed trigram embedding of "<token>", so even one-letter tokens get a
// non-zero vector.
class HashedTokenEmbedder final : public TokenEmbedder {
 public:
  explicit HashedTokenEmbedder(std::size_t dim = 256) : dim_(dim) {}
  std::vector<EmbeddingVector> embed_tokens(const std::vector<std::string>& tokens) const override;
  std::string model_tag() const override;

 private:
  std::size_t dim_;
};

// Per-token vectors from an embeddings endpoint.
class RemoteTokenEmbedder final : public TokenEmbedder {
 public:
  explicit RemoteTokenEmbedder(EmbedderConfig cfg) : embedder_(std::move(cfg)) {}
  std::vector<EmbeddingVector> embed_tokens(const std::vector<std::string>& tokens) const override {
    return embedder_.embed_batch(tokens);
  }
  std::string model_tag() const override { return embedder_.model_tag(); }

 private:
  Embedder embedder_;
};

BertScore bertscore_text(std::string_view candidate, std::string_view reference,
                         const TokenEmbedder& embedder);

// ---- G-Eval ---------------------------------------------------------------

enum class GevalDimension { ContextPrecision, ContextRecall, Faithfulness, AnswerRelevancy };

std::string_view to_string(GevalDimension d) noexcept;
const std::vector<GevalDimension>& all_geval_dimensions();

struct JudgeConfig {
  std::string endpoint_url;
  std::string model_name = "em-german-mistral";
  std::string rubric_version;  // empty = shipped rubrics/VERSION
  int samples_per_item = 1;
  double temperature = 0.0;
  int max_tokens = 512;
  int timeout_ms = 120000;
  int max_retries = 3;
  int backoff_ms = 200;
  int max_in_flight = 4;
  std::optional<std::filesystem::path> resource_dir;
};

std::string render_rubric(GevalDimension dim, std::string_view question, std::string_view answer,
                          std::string_view context, std::string_view reference,
                          const std::optional<std::filesystem::path>& resource_dir = std::nullopt);

// Last "SCORE: x" in the reply; nullopt when absent or outside [1, 5].
std::optional<double> parse_judge_score(std::string_view reply);

class Judge {
 public:
  explicit Judge(JudgeConfig cfg);

  // Mean over samples; an unparseable sample is re-asked once and then
  // dropped. JudgeUnparseable when every sample fails.
  double score(std::string_view question, std::string_view answer, std::string_view context,
               std::string_view reference, GevalDimension dim) const;

  const JudgeConfig& config() const noexcept { return cfg_; }
  std::string rubric_version() const;

 private:
  JudgeConfig cfg_;
  ChatClient client_;
};

double geval_score(std::string_view question, std::string_view answer,
                   std::string_view retrieved_context, std::string_view reference,
                   GevalDimension dim, const JudgeConfig& cfg);

// ---- Reports --------------------------------------------------------------

struct GevalScores {
  double context_precision = 0.0;
  double context_recall = 0.0;
  double faithfulness = 0.0;
  double answer_relevancy = 0.0;
};

struct MetricScores {
  double meteor = 0.0;
  double bert_precision = 0.0;
  double bert_recall = 0.0;
  double bert_f1 = 0.0;
  std::optional<GevalScores> geval;
};

struct RecordReport {
  std::string question_id;
  bool valid = false;
  std::optional<InvalidReason> invalid_reason;
  std::optional<MetricScores> scores;  // absent without a reference
  std::vector<std::string> warnings;
};

struct MetricReport {
  std::string config_code;
  std::size_t n = 0;
  std::size_t valid_count = 0;
  double valid_rate = 0.0;
  std::size_t scored = 0;  // records contributing to the metric means
  double meteor_mean = 0.0;
  double bert_p_mean = 0.0;
  double bert_r_mean = 0.0;
  double bert_f1_mean = 0.0;
  std::optional<GevalScores> geval;
  std::vector<RecordReport> per_record;
  std::string token_embedder;
  std::string validity_predicate = std::string(kValidityPredicateVersion);
  std::optional<std::string> rubric_version;
  std::optional<std::string> error;  // set on a failed configuration
};

struct EvalOptions {
  const TokenEmbedder* token_embedder = nullptr;  // required
  const Judge* judge = nullptr;                   // G-Eval when set
  std::string config_code;                        // default: first record's code
};

// Metric failures become per-record warnings; the run is never aborted.
MetricReport evaluate_run(const std::vector<AnswerRecord>& answers, const EvalOptions& options);

MetricReport failed_report(std::string config_code, std::string error);

void to_json(nlohmann::json& j, const MetricReport& r);
void from_json(const nlohmann::json& j, MetricReport& r);

// METEOR, BertScore Precision, Recall, F1 with a config_code first column.
std::string report_to_csv(const MetricReport& r);

}  // namespace qf
