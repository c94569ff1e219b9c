#include "qf/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <regex>
#include <sstream>

#include <unicode/uchar.h>
#include <unicode/utf8.h>

#include "qf/corpus.hpp"
#include "qf/error.hpp"
#include "qf/resources.hpp"
#include "qf/stemmer.hpp"
#include "qf/text.hpp"

namespace qf {

// ---- METEOR ---------------------------------------------------------------

std::vector<std::string> meteor_tokens(std::string_view s) {
  std::vector<std::string> out;
  std::string current;
  const auto* p = reinterpret_cast<const uint8_t*>(s.data());
  const auto n = static_cast<int32_t>(s.size());
  int32_t i = 0;
  while (i < n) {
    const int32_t start = i;
    UChar32 c = 0;
    U8_NEXT(p, i, n, c);
    if (c < 0 || u_isUWhiteSpace(c)) {
      if (!current.empty()) out.push_back(text::to_lower(current));
      current.clear();
    } else if (!u_ispunct(c)) {
      current.append(s.substr(static_cast<std::size_t>(start), static_cast<std::size_t>(i - start)));
    }
  }
  if (!current.empty()) out.push_back(text::to_lower(current));
  return out;
}

double meteor_from_counts(std::size_t matches, std::size_t candidate_len,
                          std::size_t reference_len, std::size_t chunks) {
  if (matches == 0 || candidate_len == 0 || reference_len == 0) return 0.0;
  const double m = static_cast<double>(matches);
  const double p = m / static_cast<double>(candidate_len);
  const double r = m / static_cast<double>(reference_len);
  const double fmean = 10.0 * p * r / (r + 9.0 * p);
  const double frag = static_cast<double>(chunks) / m;
  return fmean * (1.0 - 0.5 * frag * frag * frag);
}

namespace {

std::size_t count_chunks(const std::vector<int>& align) {
  std::size_t chunks = 0;
  for (std::size_t i = 0; i < align.size(); ++i) {
    if (align[i] < 0) continue;
    const bool continues = i > 0 && align[i - 1] >= 0 && align[i - 1] + 1 == align[i];
    if (!continues) ++chunks;
  }
  return chunks;
}

// Finds the alignment with the fewest chunks among those realising the
// maximal exact-stage and stem-stage match counts. Branch and bound with a
// node cap; the stage-wise greedy alignment is the starting incumbent.
class Aligner {
 public:
  Aligner(const std::vector<std::string>& cand, const std::vector<std::string>& ref,
          bool german) {
    auto stem = [german](const std::string& w) { return german ? german_stem(w) : porter_stem(w); };
    std::map<std::string, int> word_ids;
    std::map<std::string, int> stem_ids;
    auto id_of = [](std::map<std::string, int>& m, const std::string& key) {
      return m.emplace(key, static_cast<int>(m.size())).first->second;
    };
    for (const auto& w : cand) {
      cw_.push_back(id_of(word_ids, w));
      cs_.push_back(id_of(stem_ids, stem(w)));
    }
    for (const auto& w : ref) {
      rw_.push_back(id_of(word_ids, w));
      rs_.push_back(id_of(stem_ids, stem(w)));
    }
    const std::size_t nw = word_ids.size();
    const std::size_t ns = stem_ids.size();

    std::vector<int> cnt_cw(nw, 0), cnt_rw(nw, 0), cnt_cs(ns, 0), cnt_rs(ns, 0);
    for (const int w : cw_) ++cnt_cw[static_cast<std::size_t>(w)];
    for (const int w : rw_) ++cnt_rw[static_cast<std::size_t>(w)];
    budget_w_.assign(nw, 0);
    std::vector<int> exact_by_stem(ns, 0);
    std::vector<int> stem_of_word(nw, -1);
    for (std::size_t i = 0; i < cw_.size(); ++i) stem_of_word[static_cast<std::size_t>(cw_[i])] = cs_[i];
    for (std::size_t j = 0; j < rw_.size(); ++j) stem_of_word[static_cast<std::size_t>(rw_[j])] = rs_[j];
    for (std::size_t w = 0; w < nw; ++w) {
      budget_w_[w] = std::min(cnt_cw[w], cnt_rw[w]);
      if (budget_w_[w] > 0) exact_by_stem[static_cast<std::size_t>(stem_of_word[w])] += budget_w_[w];
    }
    for (const int s : cs_) ++cnt_cs[static_cast<std::size_t>(s)];
    for (const int s : rs_) ++cnt_rs[static_cast<std::size_t>(s)];
    budget_s_.assign(ns, 0);
    need_s_.assign(ns, 0);
    for (std::size_t s = 0; s < ns; ++s) {
      budget_s_[s] = std::min(cnt_cs[s] - exact_by_stem[s], cnt_rs[s] - exact_by_stem[s]);
      need_s_[s] = budget_s_[s] + exact_by_stem[s];
    }
    remaining_ = 0;
    for (const int b : budget_w_) remaining_ += b;
    for (const int b : budget_s_) remaining_ += b;
    matches_ = static_cast<std::size_t>(remaining_);

    rem_w_after_.assign(cw_.size(), 0);
    rem_s_after_.assign(cw_.size(), 0);
    std::vector<int> seen_w(nw, 0), seen_s(ns, 0);
    for (std::size_t i = cw_.size(); i-- > 0;) {
      rem_w_after_[i] = seen_w[static_cast<std::size_t>(cw_[i])]++;
      rem_s_after_[i] = seen_s[static_cast<std::size_t>(cs_[i])]++;
    }
    ref_avail_w_ = cnt_rw;
    used_.assign(rw_.size(), false);
  }

  std::size_t matches() const { return matches_; }

  std::size_t min_chunks() {
    if (matches_ == 0) return 0;
    best_ = greedy();
    best_chunks_ = count_chunks(best_);
    std::vector<int> align(cw_.size(), -1);
    search(0, align, 0);
    return best_chunks_;
  }

 private:
  std::vector<int> greedy() const {
    std::vector<int> align(cw_.size(), -1);
    std::vector<bool> used(rw_.size(), false);
    auto stage = [&](bool exact) {
      std::vector<int> budget = exact ? budget_w_ : budget_s_;
      for (std::size_t i = 0; i < cw_.size(); ++i) {
        if (align[i] >= 0) continue;
        const int cls = exact ? cw_[i] : cs_[i];
        if (budget[static_cast<std::size_t>(cls)] == 0) continue;
        auto ok = [&](std::size_t j) {
          return !used[j] && (exact ? rw_[j] == cls : (rs_[j] == cls && rw_[j] != cw_[i]));
        };
        std::size_t pick = rw_.size();
        if (i > 0 && align[i - 1] >= 0 && static_cast<std::size_t>(align[i - 1] + 1) < rw_.size() &&
            ok(static_cast<std::size_t>(align[i - 1] + 1))) {
          pick = static_cast<std::size_t>(align[i - 1] + 1);
        } else {
          for (std::size_t j = 0; j < rw_.size(); ++j) {
            if (ok(j)) {
              pick = j;
              break;
            }
          }
        }
        if (pick == rw_.size()) continue;
        align[i] = static_cast<int>(pick);
        used[pick] = true;
        --budget[static_cast<std::size_t>(cls)];
      }
    };
    stage(true);
    stage(false);
    return align;
  }

  void search(std::size_t i, std::vector<int>& align, std::size_t chunks) {
    if (++nodes_ > kNodeLimit) return;
    if (chunks >= best_chunks_) return;
    if (remaining_ > static_cast<int>(cw_.size() - i)) return;
    if (i == cw_.size()) {
      if (remaining_ == 0) {
        best_chunks_ = chunks;
        best_ = align;
      }
      return;
    }
    const auto w = static_cast<std::size_t>(cw_[i]);
    const auto s = static_cast<std::size_t>(cs_[i]);
    const int prev = i > 0 ? align[i - 1] : -1;

    auto try_match = [&](std::size_t j) {
      const bool exact = rw_[j] == cw_[i];
      if (used_[j]) return;
      if (exact) {
        if (budget_w_[w] == 0) return;
      } else {
        if (rs_[j] != cs_[i] || budget_s_[s] == 0) return;
        // Candidate i and reference j must not be needed for exact matches.
        if (budget_w_[w] > rem_w_after_[i]) return;
        const auto v = static_cast<std::size_t>(rw_[j]);
        if (ref_avail_w_[v] - 1 < budget_w_[v]) return;
      }
      const auto v = static_cast<std::size_t>(rw_[j]);
      int& budget = exact ? budget_w_[w] : budget_s_[s];
      --budget;
      --need_s_[s];
      --remaining_;
      --ref_avail_w_[v];
      used_[j] = true;
      align[i] = static_cast<int>(j);
      const bool continues = prev >= 0 && static_cast<std::size_t>(prev + 1) == j;
      search(i + 1, align, chunks + (continues ? 0 : 1));
      align[i] = -1;
      used_[j] = false;
      ++ref_avail_w_[v];
      ++remaining_;
      ++need_s_[s];
      ++budget;
    };

    if (prev >= 0 && static_cast<std::size_t>(prev + 1) < rw_.size()) {
      try_match(static_cast<std::size_t>(prev + 1));
    }
    for (std::size_t j = 0; j < rw_.size(); ++j) {
      if (prev >= 0 && static_cast<std::size_t>(prev + 1) == j) continue;
      if (rs_[j] != cs_[i]) continue;
      try_match(j);
    }
    if (budget_w_[w] <= rem_w_after_[i] && need_s_[s] <= rem_s_after_[i]) {
      search(i + 1, align, chunks);
    }
  }

  static constexpr std::size_t kNodeLimit = 200000;

  std::vector<int> cw_, cs_, rw_, rs_;
  std::vector<int> budget_w_, budget_s_, need_s_;
  std::vector<int> rem_w_after_, rem_s_after_;
  std::vector<int> ref_avail_w_;
  std::vector<bool> used_;
  int remaining_ = 0;
  std::size_t matches_ = 0;
  std::vector<int> best_;
  std::size_t best_chunks_ = 0;
  std::size_t nodes_ = 0;
};

}  // namespace

MeteorResult meteor(std::string_view candidate, std::string_view reference) {
  MeteorResult r;
  const auto cand = meteor_tokens(candidate);
  const auto ref = meteor_tokens(reference);
  if (cand.empty() || ref.empty()) {
    r.empty_input = true;
    return r;
  }
  Aligner aligner(cand, ref, detect_language(reference) == "de");
  r.matches = aligner.matches();
  if (r.matches == 0) return r;
  r.chunks = aligner.min_chunks();
  const double m = static_cast<double>(r.matches);
  r.precision = m / static_cast<double>(cand.size());
  r.recall = m / static_cast<double>(ref.size());
  r.fmean = 10.0 * r.precision * r.recall / (r.recall + 9.0 * r.precision);
  const double frag = static_cast<double>(r.chunks) / m;
  r.penalty = 0.5 * frag * frag * frag;
  r.score = r.fmean * (1.0 - r.penalty);
  return r;
}

// ---- BERTScore ------------------------------------------------------------

double cosine(const std::vector<float>& a, const std::vector<float>& b) {
  if (a.size() != b.size()) throw Error(ErrorCode::DimensionMismatch, "cosine of unequal dims");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double x = a[i];
    const double y = b[i];
    dot += x * y;
    na += x * x;
    nb += y * y;
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  // sqrt(na * nb) == na exactly when a == b, so self-similarity is exactly 1.
  return std::clamp(dot / std::sqrt(na * nb), -1.0, 1.0);
}

BertScore bertscore(const std::vector<EmbeddingVector>& candidate,
                    const std::vector<EmbeddingVector>& reference,
                    const std::optional<IdfWeights>& idf) {
  if (candidate.empty() || reference.empty()) {
    throw Error(ErrorCode::EmptyInput, "BERTScore needs tokens on both sides");
  }
  const std::size_t dim = candidate.front().dim();
  for (const auto* side : {&candidate, &reference}) {
    for (const auto& v : *side) {
      if (v.dim() != dim) throw Error(ErrorCode::DimensionMismatch, "token embeddings differ in dim");
    }
  }
  if (idf && (idf->candidate.size() != candidate.size() || idf->reference.size() != reference.size())) {
    throw Error(ErrorCode::InvalidArgument, "idf weight count does not match token count");
  }

  std::vector<double> best_c(candidate.size(), -1.0);
  std::vector<double> best_r(reference.size(), -1.0);
  for (std::size_t i = 0; i < candidate.size(); ++i) {
    for (std::size_t j = 0; j < reference.size(); ++j) {
      const double s = cosine(candidate[i].values, reference[j].values);
      best_c[i] = std::max(best_c[i], s);
      best_r[j] = std::max(best_r[j], s);
    }
  }
  auto weighted_mean = [](const std::vector<double>& v, const std::vector<double>* w) {
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
      const double wi = w != nullptr ? (*w)[i] : 1.0;
      num += wi * v[i];
      den += wi;
    }
    return den == 0.0 ? 0.0 : num / den;
  };
  BertScore out;
  out.precision = weighted_mean(best_c, idf ? &idf->candidate : nullptr);
  out.recall = weighted_mean(best_r, idf ? &idf->reference : nullptr);
  const double sum = out.precision + out.recall;
  out.f1 = sum == 0.0 ? 0.0 : 2.0 * out.precision * out.recall / sum;
  return out;
}

std::vector<EmbeddingVector> HashedTokenEmbedder::embed_tokens(
    const std::vector<std::string>& tokens) const {
  std::vector<EmbeddingVector> out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) {
    auto v = hashed_embed("<" + t + ">", dim_);
    v.model_tag = model_tag();
    out.push_back(std::move(v));
  }
  return out;
}

std::string HashedTokenEmbedder::model_tag() const {
  return "hashed-token-trigram-fnv1a-" + std::to_string(dim_);
}

BertScore bertscore_text(std::string_view candidate, std::string_view reference,
                         const TokenEmbedder& embedder) {
  const auto c = meteor_tokens(candidate);
  const auto r = meteor_tokens(reference);
  if (c.empty() || r.empty()) throw Error(ErrorCode::EmptyInput, "BERTScore needs tokens on both sides");
  return bertscore(embedder.embed_tokens(c), embedder.embed_tokens(r));
}

// ---- G-Eval ---------------------------------------------------------------

std::string_view to_string(GevalDimension d) noexcept {
  switch (d) {
    case GevalDimension::ContextPrecision: return "context_precision";
    case GevalDimension::ContextRecall: return "context_recall";
    case GevalDimension::Faithfulness: return "faithfulness";
    case GevalDimension::AnswerRelevancy: return "answer_relevancy";
  }
  return "context_precision";
}

const std::vector<GevalDimension>& all_geval_dimensions() {
  static const std::vector<GevalDimension> dims = {
      GevalDimension::ContextPrecision, GevalDimension::ContextRecall,
      GevalDimension::Faithfulness, GevalDimension::AnswerRelevancy};
  return dims;
}

std::string render_rubric(GevalDimension dim, std::string_view question, std::string_view answer,
                          std::string_view context, std::string_view reference,
                          const std::optional<std::filesystem::path>& resource_dir) {
  std::string tpl =
      load_resource("rubrics/" + std::string(to_string(dim)) + ".txt", resource_dir);
  const std::pair<std::string_view, std::string_view> fields[] = {
      {"{{question}}", question}, {"{{answer}}", answer},
      {"{{context}}", context},   {"{{reference}}", reference}};
  // Single left-to-right pass so substituted text is never re-expanded.
  std::string out;
  out.reserve(tpl.size() + question.size() + answer.size() + context.size() + reference.size());
  for (std::size_t pos = 0; pos < tpl.size();) {
    bool replaced = false;
    for (const auto& [key, value] : fields) {
      if (tpl.compare(pos, key.size(), key) == 0) {
        out += value;
        pos += key.size();
        replaced = true;
        break;
      }
    }
    if (!replaced) out += tpl[pos++];
  }
  return out;
}

std::optional<double> parse_judge_score(std::string_view reply) {
  static const std::regex kScore(R"(SCORE:\s*([1-5](\.\d+)?)(?!\d))");
  const std::string s(reply);
  std::optional<double> last;
  for (auto it = std::sregex_iterator(s.begin(), s.end(), kScore); it != std::sregex_iterator(); ++it) {
    last = std::stod((*it)[1].str());
  }
  if (last && (*last < 1.0 || *last > 5.0)) return std::nullopt;
  return last;
}

Judge::Judge(JudgeConfig cfg)
    : cfg_(std::move(cfg)),
      client_(cfg_.endpoint_url, RetryPolicy{cfg_.max_retries, cfg_.backoff_ms, cfg_.timeout_ms},
              cfg_.max_in_flight, ErrorCode::GenerationRefused) {
  if (cfg_.samples_per_item < 1) throw Error(ErrorCode::InvalidArgument, "samples_per_item must be >= 1");
}

std::string Judge::rubric_version() const {
  if (!cfg_.rubric_version.empty()) return cfg_.rubric_version;
  return text::trim(load_resource("rubrics/VERSION", cfg_.resource_dir));
}

double Judge::score(std::string_view question, std::string_view answer, std::string_view context,
                    std::string_view reference, GevalDimension dim) const {
  const std::string prompt = render_rubric(dim, question, answer, context, reference, cfg_.resource_dir);
  ChatRequest req;
  req.model = cfg_.model_name;
  req.temperature = cfg_.temperature;
  req.max_tokens = cfg_.max_tokens;

  double sum = 0.0;
  int parsed = 0;
  for (int sample = 0; sample < cfg_.samples_per_item; ++sample) {
    req.messages = {{"user", prompt}};
    const ChatReply first = client_.complete(req);
    std::optional<double> value = parse_judge_score(first.content);
    if (!value) {
      req.messages.push_back({"assistant", first.content});
      req.messages.push_back(
          {"user", "Your reply did not end with a valid score. Reply with the final line exactly "
                   "as \"SCORE: <number 1-5>\"."});
      value = parse_judge_score(client_.complete(req).content);
    }
    if (value) {
      sum += *value;
      ++parsed;
    }
  }
  if (parsed == 0) {
    throw Error(ErrorCode::JudgeUnparseable,
                "no parseable score for " + std::string(to_string(dim)));
  }
  return sum / parsed;
}

double geval_score(std::string_view question, std::string_view answer,
                   std::string_view retrieved_context, std::string_view reference,
                   GevalDimension dim, const JudgeConfig& cfg) {
  return Judge(cfg).score(question, answer, retrieved_context, reference, dim);
}

// ---- Reports --------------------------------------------------------------

namespace {

std::string context_text(const RetrievalResult& r) {
  std::string out;
  for (std::size_t i = 0; i < r.hits.size(); ++i) {
    if (i > 0) out += "\n";
    out += "[" + std::to_string(i + 1) + "] " + r.hits[i].text;
  }
  return out;
}

nlohmann::json geval_json(const GevalScores& g) {
  return {{"context_precision", g.context_precision},
          {"context_recall", g.context_recall},
          {"faithfulness", g.faithfulness},
          {"answer_relevancy", g.answer_relevancy}};
}

GevalScores geval_from_json(const nlohmann::json& j) {
  return {j.at("context_precision").get<double>(), j.at("context_recall").get<double>(),
          j.at("faithfulness").get<double>(), j.at("answer_relevancy").get<double>()};
}

}  // namespace

MetricReport evaluate_run(const std::vector<AnswerRecord>& answers, const EvalOptions& options) {
  if (options.token_embedder == nullptr) {
    throw Error(ErrorCode::InvalidArgument, "evaluate_run needs a token embedder");
  }
  MetricReport rep;
  rep.config_code = !options.config_code.empty() ? options.config_code
                    : answers.empty()             ? std::string()
                                                  : answers.front().config_code;
  rep.n = answers.size();
  rep.token_embedder = options.token_embedder->model_tag();
  if (options.judge != nullptr) rep.rubric_version = options.judge->rubric_version();

  GevalScores geval_sum;
  std::size_t geval_count = 0;
  for (const auto& a : answers) {
    RecordReport rr;
    rr.question_id = a.question_id;
    rr.valid = a.valid;
    rr.invalid_reason = a.invalid_reason;
    if (a.valid) ++rep.valid_count;
    if (a.error) rr.warnings.push_back("pipeline: " + *a.error);

    if (!a.reference_answer) {
      rr.warnings.push_back("no reference answer; metrics skipped");
      rep.per_record.push_back(std::move(rr));
      continue;
    }
    MetricScores ms;
    const MeteorResult m = meteor(a.final_answer, *a.reference_answer);
    ms.meteor = m.score;
    if (m.empty_input) rr.warnings.push_back("meteor: EmptyInput");
    try {
      const BertScore b = bertscore_text(a.final_answer, *a.reference_answer, *options.token_embedder);
      ms.bert_precision = b.precision;
      ms.bert_recall = b.recall;
      ms.bert_f1 = b.f1;
    } catch (const Error& e) {
      rr.warnings.push_back(std::string("bertscore: ") + e.what());
    }
    if (options.judge != nullptr) {
      try {
        const std::string ctx = context_text(a.retrieved);
        GevalScores g;
        double* slots[] = {&g.context_precision, &g.context_recall, &g.faithfulness,
                           &g.answer_relevancy};
        for (std::size_t d = 0; d < all_geval_dimensions().size(); ++d) {
          *slots[d] = options.judge->score(a.question_text, a.final_answer, ctx, *a.reference_answer,
                                           all_geval_dimensions()[d]);
        }
        ms.geval = g;
        geval_sum.context_precision += g.context_precision;
        geval_sum.context_recall += g.context_recall;
        geval_sum.faithfulness += g.faithfulness;
        geval_sum.answer_relevancy += g.answer_relevancy;
        ++geval_count;
      } catch (const Error& e) {
        rr.warnings.push_back(std::string("geval: ") + e.what());
      }
    }
    rep.meteor_mean += ms.meteor;
    rep.bert_p_mean += ms.bert_precision;
    rep.bert_r_mean += ms.bert_recall;
    rep.bert_f1_mean += ms.bert_f1;
    ++rep.scored;
    rr.scores = ms;
    rep.per_record.push_back(std::move(rr));
  }

  rep.valid_rate = rep.n == 0 ? 0.0 : static_cast<double>(rep.valid_count) / static_cast<double>(rep.n);
  if (rep.scored > 0) {
    const double k = static_cast<double>(rep.scored);
    rep.meteor_mean /= k;
    rep.bert_p_mean /= k;
    rep.bert_r_mean /= k;
    rep.bert_f1_mean /= k;
  }
  if (geval_count > 0) {
    const double k = static_cast<double>(geval_count);
    rep.geval = GevalScores{geval_sum.context_precision / k, geval_sum.context_recall / k,
                            geval_sum.faithfulness / k, geval_sum.answer_relevancy / k};
  }
  return rep;
}

MetricReport failed_report(std::string config_code, std::string error) {
  MetricReport rep;
  rep.config_code = std::move(config_code);
  rep.error = std::move(error);
  return rep;
}

void to_json(nlohmann::json& j, const MetricReport& r) {
  nlohmann::json records = nlohmann::json::array();
  for (const auto& rr : r.per_record) {
    nlohmann::json x = {{"question_id", rr.question_id},
                        {"valid", rr.valid},
                        {"invalid_reason", rr.invalid_reason
                                               ? nlohmann::json(to_string(*rr.invalid_reason))
                                               : nlohmann::json(nullptr)},
                        {"warnings", rr.warnings}};
    if (rr.scores) {
      x["meteor"] = rr.scores->meteor;
      x["bert_p"] = rr.scores->bert_precision;
      x["bert_r"] = rr.scores->bert_recall;
      x["bert_f1"] = rr.scores->bert_f1;
      if (rr.scores->geval) x["geval"] = geval_json(*rr.scores->geval);
    }
    records.push_back(std::move(x));
  }
  j = {{"config_code", r.config_code},
       {"n", r.n},
       {"valid_count", r.valid_count},
       {"valid_rate", r.valid_rate},
       {"scored", r.scored},
       {"meteor_mean", r.meteor_mean},
       {"bert_p_mean", r.bert_p_mean},
       {"bert_r_mean", r.bert_r_mean},
       {"bert_f1_mean", r.bert_f1_mean},
       {"per_record", records},
       {"token_embedder", r.token_embedder},
       {"validity_predicate", r.validity_predicate},
       {"meteor_variant", "exact+stem"}};
  if (r.geval) j["geval"] = geval_json(*r.geval);
  if (r.rubric_version) j["rubric_version"] = *r.rubric_version;
  if (r.error) j["error"] = *r.error;
}

void from_json(const nlohmann::json& j, MetricReport& r) {
  r = MetricReport{};
  r.config_code = j.at("config_code").get<std::string>();
  r.n = j.value("n", std::size_t{0});
  r.valid_count = j.value("valid_count", std::size_t{0});
  r.valid_rate = j.value("valid_rate", 0.0);
  r.scored = j.value("scored", std::size_t{0});
  r.meteor_mean = j.value("meteor_mean", 0.0);
  r.bert_p_mean = j.value("bert_p_mean", 0.0);
  r.bert_r_mean = j.value("bert_r_mean", 0.0);
  r.bert_f1_mean = j.value("bert_f1_mean", 0.0);
  r.token_embedder = j.value("token_embedder", "");
  r.validity_predicate = j.value("validity_predicate", std::string(kValidityPredicateVersion));
  if (j.contains("geval")) r.geval = geval_from_json(j["geval"]);
  if (j.contains("rubric_version")) r.rubric_version = j["rubric_version"].get<std::string>();
  if (j.contains("error")) r.error = j["error"].get<std::string>();
  for (const auto& x : j.value("per_record", nlohmann::json::array())) {
    RecordReport rr;
    rr.question_id = x.at("question_id").get<std::string>();
    rr.valid = x.value("valid", false);
    if (x.contains("invalid_reason") && x["invalid_reason"].is_string()) {
      rr.invalid_reason = invalid_reason_from_string(x["invalid_reason"].get<std::string>());
    }
    rr.warnings = x.value("warnings", std::vector<std::string>{});
    if (x.contains("meteor")) {
      MetricScores ms;
      ms.meteor = x["meteor"].get<double>();
      ms.bert_precision = x.value("bert_p", 0.0);
      ms.bert_recall = x.value("bert_r", 0.0);
      ms.bert_f1 = x.value("bert_f1", 0.0);
      if (x.contains("geval")) ms.geval = geval_from_json(x["geval"]);
      rr.scores = ms;
    }
    r.per_record.push_back(std::move(rr));
  }
}

std::string report_to_csv(const MetricReport& r) {
  char row[256];
  std::snprintf(row, sizeof row, "%s,%.6f,%.6f,%.6f,%.6f\n", r.config_code.c_str(), r.meteor_mean,
                r.bert_p_mean, r.bert_r_mean, r.bert_f1_mean);
  return std::string("config_code,METEOR,BertScore Precision,BertScore Recall,BertScore F1\n") + row;
}

}  // namespace qf
