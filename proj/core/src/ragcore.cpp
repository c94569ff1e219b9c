#include "qf/ragcore.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <thread>

#include "qf/corpus.hpp"
#include "qf/error.hpp"
#include "qf/resources.hpp"
#include "qf/text.hpp"

namespace qf {

namespace {

std::string normalized_sentence(std::string_view s) {
  std::string lowered = text::to_lower(s);
  std::string out;
  for (const char c : lowered) {
    const bool space = c == ' ' || c == '\n' || c == '\t' || c == '\r';
    if (space) {
      if (!out.empty() && out.back() != ' ') out.push_back(' ');
    } else {
      out.push_back(c);
    }
  }
  while (!out.empty() && out.back() == ' ') out.pop_back();
  return out;
}

bool is_space(char c) { return c == ' ' || c == '\n' || c == '\t' || c == '\r' || c == '\f' || c == '\v'; }

}  // namespace

std::string_view to_string(PromptPlacement p) noexcept {
  return p == PromptPlacement::NStartAndEnd ? "N_start_and_end" : "O_start";
}

PromptPlacement prompt_placement_from_string(std::string_view s) {
  if (s == "O_start" || s == "O") return PromptPlacement::OStart;
  if (s == "N_start_and_end" || s == "N") return PromptPlacement::NStartAndEnd;
  throw Error(ErrorCode::InvalidArgument, "unknown prompt placement '" + std::string(s) + "'");
}

PromptSpec default_prompt_spec(std::string_view language, PromptPlacement placement,
                               const std::optional<std::filesystem::path>& resource_dir) {
  PromptSpec spec;
  spec.placement = placement;
  const bool german = language == "de";
  const std::string lang = german ? "de" : "en";
  spec.instruction_text = text::trim(load_resource("prompts/instruction_" + lang + ".txt", resource_dir));
  if (language == "de" || language == "en") {
    spec.language_directive =
        text::trim(load_resource("prompts/directive_" + lang + ".txt", resource_dir));
  }
  spec.context_header = german ? "Kontext:" : "Context:";
  spec.question_header = german ? "Frage:" : "Question:";
  return spec;
}

BuiltPrompt build_prompt(std::string_view question, const RetrievalResult& hits,
                         const PromptSpec& spec) {
  if (text::trim(spec.instruction_text).empty()) {
    throw Error(ErrorCode::InvalidArgument, "instruction_text must not be empty");
  }
  if (hits.hits.empty() && !spec.allow_no_context) {
    throw Error(ErrorCode::InvalidArgument, "no retrieved context and no-context mode is off");
  }

  std::string head = spec.instruction_text;
  if (spec.language_directive) head += "\n" + *spec.language_directive;
  std::string tail = "\n\n" + spec.question_header + "\n" + std::string(question);
  if (spec.placement == PromptPlacement::NStartAndEnd) tail += "\n\n" + head;

  auto assemble = [&](std::size_t n) {
    std::string out = head;
    if (n > 0) {
      out += "\n\n" + spec.context_header;
      for (std::size_t i = 0; i < n; ++i) {
        out += "\n[" + std::to_string(i + 1) + "] " + hits.hits[i].text;
      }
    }
    out += tail;
    return out;
  };

  std::size_t n = hits.hits.size();
  std::string prompt = assemble(n);
  if (spec.max_chars > 0) {
    while (text::char_count(prompt) > spec.max_chars) {
      if (n == 0) {
        throw Error(ErrorCode::ContextOverflow,
                    "instructions and question alone exceed " + std::to_string(spec.max_chars) +
                        " characters");
      }
      prompt = assemble(--n);
    }
  }
  return BuiltPrompt{std::move(prompt), n, hits.hits.size() - n};
}

Generator::Generator(GenerationConfig cfg)
    : cfg_(std::move(cfg)),
      client_(cfg_.endpoint_url, RetryPolicy{cfg_.max_retries, cfg_.backoff_ms, cfg_.timeout_ms},
              cfg_.max_in_flight, ErrorCode::GenerationRefused) {}

Generation Generator::generate(std::string_view prompt) const {
  ChatRequest req;
  req.model = cfg_.model_name;
  req.temperature = cfg_.temperature;
  req.max_tokens = cfg_.max_tokens;
  req.messages.push_back({"user", std::string(prompt)});
  const ChatReply reply = client_.complete(req);
  return Generation{reply.content, reply.attempts};
}

Generation generate(std::string_view prompt, const GenerationConfig& cfg) {
  return Generator(cfg).generate(prompt);
}

std::string_view to_string(InvalidReason r) noexcept {
  switch (r) {
    case InvalidReason::Empty: return "empty";
    case InvalidReason::WrongLanguage: return "wrong_language";
    case InvalidReason::Refusal: return "refusal";
    case InvalidReason::DegenerateRepetition: return "degenerate_repetition";
  }
  return "empty";
}

InvalidReason invalid_reason_from_string(std::string_view s) {
  if (s == "empty") return InvalidReason::Empty;
  if (s == "wrong_language") return InvalidReason::WrongLanguage;
  if (s == "refusal") return InvalidReason::Refusal;
  if (s == "degenerate_repetition") return InvalidReason::DegenerateRepetition;
  throw Error(ErrorCode::InvalidArgument, "unknown invalid reason '" + std::string(s) + "'");
}

std::vector<std::string> split_sentences(std::string_view s) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const char c = s[i];
    if ((c == '.' || c == '!' || c == '?') && i + 1 < s.size() && is_space(s[i + 1])) {
      std::string sentence = text::trim(s.substr(start, i + 1 - start));
      if (!sentence.empty()) out.push_back(std::move(sentence));
      start = i + 1;
    }
  }
  std::string last = text::trim(s.substr(std::min(start, s.size())));
  if (!last.empty()) out.push_back(std::move(last));
  return out;
}

const std::vector<std::string>& refusal_patterns() {
  static const std::vector<std::string> patterns = {
      "i cannot answer",
      "i can't answer",
      "i can not answer",
      "i am unable to answer",
      "i'm unable to answer",
      "i do not have enough information",
      "i don't have enough information",
      "as an ai",
      "ich kann diese frage nicht beantworten",
      "ich kann die frage nicht beantworten",
      "ich kann dazu keine",
      "ich habe nicht genügend informationen",
      "leider kann ich",
      "als ki",
  };
  return patterns;
}

PostprocessResult postprocess(std::string_view raw, std::string_view question_language) {
  const auto sentences = split_sentences(raw);
  std::map<std::string, std::size_t> occurrences;
  for (const auto& s : sentences) ++occurrences[normalized_sentence(s)];

  std::string opposite;
  if (question_language == "de") opposite = "en";
  if (question_language == "en") opposite = "de";

  std::set<std::string> seen;
  std::vector<std::string> kept;
  std::size_t wrong_language = 0;  // over all original sentences, repeats included
  for (const auto& s : sentences) {
    const bool foreign = !opposite.empty() && detect_language(s) == opposite;
    if (foreign) ++wrong_language;
    if (!seen.insert(normalized_sentence(s)).second || foreign) continue;
    kept.push_back(s);
  }

  PostprocessResult r;
  for (const auto& s : kept) {
    if (!r.final_answer.empty()) r.final_answer += ' ';
    r.final_answer += s;
  }
  r.final_answer = text::trim(r.final_answer);

  const bool degenerate = std::any_of(occurrences.begin(), occurrences.end(),
                                      [](const auto& kv) { return kv.second >= 3; });
  const std::string lowered = text::to_lower(r.final_answer);
  const bool refusal =
      std::any_of(refusal_patterns().begin(), refusal_patterns().end(),
                  [&](const std::string& p) { return lowered.rfind(p, 0) == 0; });

  if (!sentences.empty() && 2 * wrong_language > sentences.size()) {
    r.invalid_reason = InvalidReason::WrongLanguage;
  } else if (degenerate) {
    r.invalid_reason = InvalidReason::DegenerateRepetition;
  } else if (r.final_answer.empty()) {
    r.invalid_reason = InvalidReason::Empty;
  } else if (refusal) {
    r.invalid_reason = InvalidReason::Refusal;
  }
  r.valid = !r.invalid_reason.has_value();
  return r;
}

std::vector<Question> parse_questionnaire(std::string_view content, bool jsonl) {
  std::vector<Question> out;
  if (jsonl) {
    std::istringstream in{std::string(content)};
    std::size_t line_no = 0;
    for (std::string line; std::getline(in, line);) {
      ++line_no;
      if (text::trim(line).empty()) continue;
      try {
        const auto j = nlohmann::json::parse(line);
        Question q{j.at("question_id").get<std::string>(), j.at("question_text").get<std::string>(),
                   std::nullopt};
        if (j.contains("reference_answer") && j["reference_answer"].is_string()) {
          q.reference_answer = j["reference_answer"].get<std::string>();
        }
        out.push_back(std::move(q));
      } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::InvalidArgument,
                    "questionnaire line " + std::to_string(line_no) + ": " + e.what());
      }
    }
  } else {
    std::vector<std::vector<std::string>> rows;
    try {
      rows = parse_csv(content);
    } catch (const Error& e) {
      throw Error(ErrorCode::InvalidArgument, e.what());
    }
    if (rows.empty()) throw Error(ErrorCode::InvalidArgument, "questionnaire is empty");
    const auto& header = rows.front();
    auto column = [&](std::string_view name) -> std::optional<std::size_t> {
      for (std::size_t i = 0; i < header.size(); ++i) {
        if (text::trim(header[i]) == name) return i;
      }
      return std::nullopt;
    };
    const auto id_col = column("question_id");
    const auto text_col = column("question_text");
    const auto ref_col = column("reference_answer");
    if (!id_col || !text_col) {
      throw Error(ErrorCode::InvalidArgument,
                  "questionnaire CSV needs question_id and question_text columns");
    }
    for (std::size_t r = 1; r < rows.size(); ++r) {
      const auto& row = rows[r];
      if (row.size() <= std::max(*id_col, *text_col)) {
        throw Error(ErrorCode::InvalidArgument, "questionnaire row " + std::to_string(r) +
                                                    " has too few columns");
      }
      Question q{text::trim(row[*id_col]), text::trim(row[*text_col]), std::nullopt};
      if (ref_col && *ref_col < row.size() && !text::trim(row[*ref_col]).empty()) {
        q.reference_answer = text::trim(row[*ref_col]);
      }
      out.push_back(std::move(q));
    }
  }
  std::set<std::string> ids;
  for (const auto& q : out) {
    if (q.question_id.empty() || q.question_text.empty()) {
      throw Error(ErrorCode::InvalidArgument, "question with empty id or text");
    }
    if (!ids.insert(q.question_id).second) {
      throw Error(ErrorCode::InvalidArgument, "duplicate question_id " + q.question_id);
    }
  }
  return out;
}

std::vector<Question> load_questionnaire(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open questionnaire " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  const auto ext = path.extension().string();
  return parse_questionnaire(ss.str(), ext == ".jsonl" || ext == ".json");
}

RagPipeline::RagPipeline(const VectorIndex& index, const Embedder& embedder,
                         const Generator& generator, PipelineSettings settings)
    : index_(index), embedder_(embedder), generator_(generator), settings_(std::move(settings)) {
  settings_.retrieval.validate();
}

AnswerRecord RagPipeline::answer(const Question& q, std::string_view config_code) const {
  const auto started = std::chrono::steady_clock::now();
  AnswerRecord rec;
  rec.question_id = q.question_id;
  rec.question_text = q.question_text;
  rec.reference_answer = q.reference_answer;
  rec.config_code = std::string(config_code);
  rec.retrieved.technique_used = settings_.retrieval.technique;
  rec.retrieved.query_echo = q.question_text;

  const std::string language = detect_language(q.question_text);
  try {
    const EmbeddingVector query = embedder_.embed(q.question_text);
    rec.retrieved = index_.search(query, settings_.retrieval);
    rec.retrieved.query_echo = q.question_text;

    PromptSpec spec = default_prompt_spec(language, settings_.placement, settings_.resource_dir);
    spec.max_chars = settings_.max_prompt_chars;
    const BuiltPrompt prompt = build_prompt(q.question_text, rec.retrieved, spec);
    rec.retrieved.hits.resize(prompt.chunks_included);
    rec.raw_answer = generator_.generate(prompt.text).text;
  } catch (const Error& e) {
    rec.error = e.what();
    rec.raw_answer.clear();
  }

  const PostprocessResult post = postprocess(rec.raw_answer, language);
  rec.final_answer = post.final_answer;
  rec.valid = post.valid;
  rec.invalid_reason = post.invalid_reason;
  rec.latency_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                       std::chrono::steady_clock::now() - started)
                       .count();
  return rec;
}

std::vector<AnswerRecord> RagPipeline::answer_all(const std::vector<Question>& questions,
                                                  std::string_view config_code,
                                                  unsigned workers) const {
  std::vector<AnswerRecord> out(questions.size());
  workers = std::clamp<unsigned>(workers, 1, static_cast<unsigned>(std::max<std::size_t>(1, questions.size())));
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < questions.size(); i = next++) {
      out[i] = answer(questions[i], config_code);
    }
  };
  if (workers == 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(work);
  }
  return out;
}

void to_json(nlohmann::json& j, const Hit& h) {
  j = {{"chunk_id", h.chunk_id}, {"score", h.score}, {"text", h.text}, {"doc_id", h.doc_id}};
}

void from_json(const nlohmann::json& j, Hit& h) {
  h.chunk_id = j.at("chunk_id").get<std::string>();
  h.score = j.at("score").get<double>();
  h.text = j.value("text", "");
  h.doc_id = j.value("doc_id", "");
}

void to_json(nlohmann::json& j, const RetrievalResult& r) {
  j = {{"hits", r.hits}, {"query_echo", r.query_echo}, {"technique_used", to_string(r.technique_used)}};
}

void from_json(const nlohmann::json& j, RetrievalResult& r) {
  r.hits = j.value("hits", std::vector<Hit>{});
  r.query_echo = j.value("query_echo", "");
  r.technique_used = retrieval_technique_from_string(j.value("technique_used", "similarity"));
}

void to_json(nlohmann::json& j, const AnswerRecord& a) {
  j = {{"question_id", a.question_id},
       {"question_text", a.question_text},
       {"raw_answer", a.raw_answer},
       {"final_answer", a.final_answer},
       {"retrieved", a.retrieved},
       {"valid", a.valid},
       {"invalid_reason", a.invalid_reason ? nlohmann::json(to_string(*a.invalid_reason))
                                           : nlohmann::json(nullptr)},
       {"config_code", a.config_code},
       {"latency_ms", a.latency_ms}};
  if (a.reference_answer) j["reference_answer"] = *a.reference_answer;
  if (a.error) j["error"] = *a.error;
}

void from_json(const nlohmann::json& j, AnswerRecord& a) {
  a = AnswerRecord{};
  a.question_id = j.at("question_id").get<std::string>();
  a.question_text = j.value("question_text", "");
  a.raw_answer = j.value("raw_answer", "");
  a.final_answer = j.value("final_answer", "");
  if (j.contains("retrieved")) a.retrieved = j["retrieved"].get<RetrievalResult>();
  a.valid = j.value("valid", false);
  if (j.contains("invalid_reason") && j["invalid_reason"].is_string()) {
    a.invalid_reason = invalid_reason_from_string(j["invalid_reason"].get<std::string>());
  }
  a.config_code = j.value("config_code", "");
  a.latency_ms = j.value("latency_ms", 0LL);
  if (j.contains("reference_answer") && j["reference_answer"].is_string()) {
    a.reference_answer = j["reference_answer"].get<std::string>();
  }
  if (j.contains("error") && j["error"].is_string()) a.error = j["error"].get<std::string>();
}

}  // namespace qf
