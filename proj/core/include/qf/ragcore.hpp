#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "qf/embedder.hpp"
#include "qf/http.hpp"
#include "qf/vindex.hpp"

namespace qf {

enum class PromptPlacement { OStart, NStartAndEnd };

std::string_view to_string(PromptPlacement p) noexcept;
PromptPlacement prompt_placement_from_string(std::string_view s);

struct PromptSpec {
  PromptPlacement placement = PromptPlacement::OStart;
  std::string instruction_text;
  std::optional<std::string> language_directive;
  std::string context_header = "Context:";
  std::string question_header = "Question:";
  std::size_t max_chars = 0;  // 0 = unlimited
  bool allow_no_context = false;
};

// Default instruction, directive and headers for "de" or "en" ("und" uses
// English without a directive). `resource_dir` overrides the compiled-in
// texts with prompts/instruction_<lang>.txt and prompts/directive_<lang>.txt
// found there.
PromptSpec default_prompt_spec(std::string_view language,
                               PromptPlacement placement = PromptPlacement::OStart,
                               const std::optional<std::filesystem::path>& resource_dir = std::nullopt);

struct BuiltPrompt {
  std::string text;
  std::size_t chunks_included = 0;
  std::size_t chunks_dropped = 0;
};

// O layout: instruction, directive, context header, "[i] chunk" lines,
// question header, question. N layout appends instruction and directive
// again after the question. Lowest-ranked chunks are dropped until the
// prompt fits max_chars; ContextOverflow if it cannot fit without context.
BuiltPrompt build_prompt(std::string_view question, const RetrievalResult& hits,
                         const PromptSpec& spec);

struct GenerationConfig {
  std::string endpoint_url;
  std::string model_name;
  double temperature = 0.0;
  int max_tokens = 512;
  int timeout_ms = 120000;
  int max_retries = 3;
  int backoff_ms = 200;
  int max_in_flight = 4;
};

struct Generation {
  std::string text;  // "" when the endpoint returned no completion
  int attempts = 0;
};

class Generator {
 public:
  explicit Generator(GenerationConfig cfg);
  // Throws EndpointUnreachable or GenerationRefused.
  Generation generate(std::string_view prompt) const;
  const GenerationConfig& config() const noexcept { return cfg_; }

 private:
  GenerationConfig cfg_;
  ChatClient client_;
};

Generation generate(std::string_view prompt, const GenerationConfig& cfg);

enum class InvalidReason { Empty, WrongLanguage, Refusal, DegenerateRepetition };

std::string_view to_string(InvalidReason r) noexcept;
InvalidReason invalid_reason_from_string(std::string_view s);

// Identifies the validity rules below in every report.
inline constexpr std::string_view kValidityPredicateVersion = "validity-v1";

struct PostprocessResult {
  std::string final_answer;
  bool valid = false;
  std::optional<InvalidReason> invalid_reason;

  bool operator==(const PostprocessResult&) const = default;
};

// Sentences end at '.', '!' or '?' followed by whitespace.
std::vector<std::string> split_sentences(std::string_view text);

const std::vector<std::string>& refusal_patterns();

// Drops repeated sentences and sentences in the other language, then judges
// validity: wrong_language (more than half the sentences dropped for
// language), degenerate_repetition (a sentence occurs 3+ times), empty, and
// refusal, checked in that order.
PostprocessResult postprocess(std::string_view raw, std::string_view question_language);

struct AnswerRecord {
  std::string question_id;
  std::string question_text;
  std::optional<std::string> reference_answer;
  std::string raw_answer;
  std::string final_answer;
  RetrievalResult retrieved;
  bool valid = false;
  std::optional<InvalidReason> invalid_reason;
  std::string config_code;
  long long latency_ms = 0;
  std::optional<std::string> error;  // pipeline failure for this question
};

struct Question {
  std::string question_id;
  std::string question_text;
  std::optional<std::string> reference_answer;
};

// CSV with question_id, question_text[, reference_answer] columns, or JSONL
// objects with the same keys. Throws InvalidArgument on malformed input.
std::vector<Question> parse_questionnaire(std::string_view content, bool jsonl);
std::vector<Question> load_questionnaire(const std::filesystem::path& path);

struct PipelineSettings {
  RetrievalConfig retrieval;
  PromptPlacement placement = PromptPlacement::OStart;
  std::size_t max_prompt_chars = 0;
  std::optional<std::filesystem::path> resource_dir;
};

// Response = Generate(Retrieve(q, E), q) for one question.
class RagPipeline {
 public:
  RagPipeline(const VectorIndex& index, const Embedder& embedder, const Generator& generator,
              PipelineSettings settings);

  // Endpoint failures are captured in AnswerRecord::error; the record is
  // then invalid with reason empty.
  AnswerRecord answer(const Question& q, std::string_view config_code) const;

  // Answers every question with a bounded worker pool; output order follows
  // input order.
  std::vector<AnswerRecord> answer_all(const std::vector<Question>& questions,
                                       std::string_view config_code, unsigned workers) const;

 private:
  const VectorIndex& index_;
  const Embedder& embedder_;
  const Generator& generator_;
  PipelineSettings settings_;
};

void to_json(nlohmann::json& j, const Hit& h);
void from_json(const nlohmann::json& j, Hit& h);
void to_json(nlohmann::json& j, const RetrievalResult& r);
void from_json(const nlohmann::json& j, RetrievalResult& r);
void to_json(nlohmann::json& j, const AnswerRecord& a);
void from_json(const nlohmann::json& j, AnswerRecord& a);

}  // namespace qf
