#include "qf/expmatrix.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <regex>
#include <thread>

#include "qf/error.hpp"

namespace qf {

namespace fs = std::filesystem;

std::string_view to_string(ModelRole r) noexcept {
  return r == ModelRole::LlamaLike ? "llama_like" : "mistral_like";
}

ModelRole model_role_from_string(std::string_view s) {
  if (s == "llama_like" || s == "llama" || s == "L") return ModelRole::LlamaLike;
  if (s == "mistral_like" || s == "mistral" || s == "M") return ModelRole::MistralLike;
  throw Error(ErrorCode::InvalidArgument, "unknown model role: " + std::string(s));
}

RetrievalConfig PipelineConfig::retrieval_config() const {
  RetrievalConfig r;
  r.technique = retrieval;
  r.k = k;
  r.fetch_k = fetch_k;
  r.lambda = lambda;
  return r;
}

SplitConfig PipelineConfig::split_config() const {
  SplitConfig s;
  s.chunk_size = chunk_size;
  s.overlap = overlap;
  s.strategy = strategy;
  return s;
}

void PipelineConfig::validate() const {
  split_config().validate();
  retrieval_config().validate();
}

PipelineConfig parse_config_code(std::string_view code) {
  static const std::regex kCode("^[SM][LM][ON][BC]E?$");
  const std::string s(code);
  if (!std::regex_match(s, kCode)) throw Error(ErrorCode::UnknownCode, "unknown configuration code: " + s);
  PipelineConfig c;
  c.code = s;
  c.retrieval = s[0] == 'S' ? RetrievalTechnique::Similarity : RetrievalTechnique::Mmr;
  c.model_role = s[1] == 'L' ? ModelRole::LlamaLike : ModelRole::MistralLike;
  c.placement = s[2] == 'O' ? PromptPlacement::OStart : PromptPlacement::NStartAndEnd;
  c.chunk_size = s[3] == 'B' ? 150 : 512;
  c.spreadsheet_mode = s.size() == 5 ? SpreadsheetMode::Separate : SpreadsheetMode::Standard;
  return c;
}

std::string format_config_code(const PipelineConfig& cfg) {
  std::string s;
  s += cfg.retrieval == RetrievalTechnique::Similarity ? 'S' : 'M';
  s += cfg.model_role == ModelRole::LlamaLike ? 'L' : 'M';
  s += cfg.placement == PromptPlacement::OStart ? 'O' : 'N';
  if (cfg.chunk_size == 150) {
    s += 'B';
  } else if (cfg.chunk_size == 512) {
    s += 'C';
  } else {
    throw Error(ErrorCode::UnknownCode,
                "chunk size " + std::to_string(cfg.chunk_size) + " has no code letter");
  }
  if (cfg.spreadsheet_mode == SpreadsheetMode::Separate) s += 'E';
  return s;
}

const std::vector<std::string>& standard_config_codes() {
  static const std::vector<std::string> codes = {"SLOBE", "SLOB", "SLNC", "SMNC", "MLNC",
                                                 "MMNC",  "SLOC", "SMOC", "MLOC", "MMOC"};
  return codes;
}

void to_json(nlohmann::json& j, const PipelineConfig& c) {
  j = {{"code", c.code},
       {"retrieval", to_string(c.retrieval)},
       {"model_role", to_string(c.model_role)},
       {"placement", to_string(c.placement)},
       {"chunk_size", c.chunk_size},
       {"overlap", c.overlap},
       {"spreadsheet_mode", to_string(c.spreadsheet_mode)},
       {"k", c.k},
       {"lambda", c.lambda},
       {"fetch_k", c.fetch_k},
       {"strategy", to_string(c.strategy)}};
}

void from_json(const nlohmann::json& j, PipelineConfig& c) {
  c = PipelineConfig{};
  if (j.contains("code")) c = parse_config_code(j["code"].get<std::string>());
  c = apply_overrides(std::move(c), j);
}

PipelineConfig apply_overrides(PipelineConfig cfg, const nlohmann::json& o) {
  if (!o.is_object()) throw Error(ErrorCode::InvalidArgument, "config overrides must be an object");
  try {
    if (o.contains("retrieval")) cfg.retrieval = retrieval_technique_from_string(o["retrieval"].get<std::string>());
    if (o.contains("model_role")) cfg.model_role = model_role_from_string(o["model_role"].get<std::string>());
    if (o.contains("placement")) cfg.placement = prompt_placement_from_string(o["placement"].get<std::string>());
    if (o.contains("chunk_size")) cfg.chunk_size = o["chunk_size"].get<std::size_t>();
    if (o.contains("overlap")) cfg.overlap = o["overlap"].get<std::size_t>();
    if (o.contains("spreadsheet_mode")) {
      cfg.spreadsheet_mode = spreadsheet_mode_from_string(o["spreadsheet_mode"].get<std::string>());
    }
    if (o.contains("k")) cfg.k = o["k"].get<std::size_t>();
    if (o.contains("lambda")) cfg.lambda = o["lambda"].get<double>();
    if (o.contains("fetch_k")) cfg.fetch_k = o["fetch_k"].get<std::size_t>();
    if (o.contains("strategy")) cfg.strategy = split_strategy_from_string(o["strategy"].get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidArgument, std::string("bad config override: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

fs::path resolve_corpus_dir(const fs::path& dir) {
  if (fs::exists(dir / "manifest.json")) return dir;
  const fs::path meta = dir / "index.json";
  if (fs::exists(meta)) {
    std::ifstream in(meta);
    nlohmann::json j;
    try {
      in >> j;
      return fs::path(j.at("corpus_dir").get<std::string>());
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::CorruptIndex, "unreadable " + meta.string() + ": " + e.what());
    }
  }
  throw Error(ErrorCode::NotFound, "no corpus manifest or index metadata in " + dir.string());
}

namespace {

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y%m%dT%H%M%SZ", &tm);
  return buf;
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out << content;
  if (!out) throw Error(ErrorCode::IoError, "write failed: " + path.string());
}

class IndexCache {
 public:
  IndexCache(const Corpus& base, const Embedder& embedder) : base_(base), embedder_(embedder) {}

  std::shared_ptr<const VectorIndex> get(const PipelineConfig& cfg) {
    const std::string key = std::string(to_string(cfg.spreadsheet_mode)) + "/" +
                            std::to_string(cfg.chunk_size) + "/" + std::to_string(cfg.overlap) +
                            "/" + std::string(to_string(cfg.strategy));
    std::lock_guard lock(mu_);
    if (auto it = indexes_.find(key); it != indexes_.end()) return it->second;

    const auto& docs = documents(cfg.spreadsheet_mode);
    const auto chunks = split_all(docs, cfg.split_config());
    if (chunks.empty()) throw Error(ErrorCode::EmptyIndex, "corpus produced no chunks");
    std::vector<std::string> texts;
    texts.reserve(chunks.size());
    for (const auto& c : chunks) texts.push_back(c.text);
    auto vectors = embedder_.embed_batch(texts);
    auto index = std::make_shared<VectorIndex>(vectors.front().dim(), embedder_.model_tag());
    std::vector<std::pair<Chunk, EmbeddingVector>> entries;
    entries.reserve(chunks.size());
    for (std::size_t i = 0; i < chunks.size(); ++i) entries.emplace_back(chunks[i], std::move(vectors[i]));
    index->add(entries);
    indexes_.emplace(key, index);
    return index;
  }

 private:
  const std::vector<SourceDocument>& documents(SpreadsheetMode mode) {
    if (mode == base_.manifest.ingest_options.spreadsheet_mode) return base_.documents;
    if (auto it = reingested_.find(mode); it != reingested_.end()) return it->second;
    if (base_.manifest.source_root.empty() || !fs::exists(base_.manifest.source_root)) {
      throw Error(ErrorCode::NotFound, "spreadsheet mode " + std::string(to_string(mode)) +
                                           " needs the source directory, which is unavailable");
    }
    IngestOptions opts = base_.manifest.ingest_options;
    opts.spreadsheet_mode = mode;
    auto docs = ingest_directory(base_.manifest.source_root, opts).documents;
    return reingested_.emplace(mode, std::move(docs)).first->second;
  }

  const Corpus& base_;
  const Embedder& embedder_;
  std::mutex mu_;
  std::map<std::string, std::shared_ptr<const VectorIndex>> indexes_;
  std::map<SpreadsheetMode, std::vector<SourceDocument>> reingested_;
};

}  // namespace

MatrixResult run_matrix(const fs::path& corpus_dir, const fs::path& questionnaire_path,
                        const std::vector<std::string>& codes, const MatrixRuntime& runtime) {
  std::vector<PipelineConfig> configs;
  configs.reserve(codes.size());
  for (const auto& c : codes) configs.push_back(parse_config_code(c));
  if (configs.empty()) throw Error(ErrorCode::InvalidArgument, "no configuration codes given");

  const Corpus corpus = read_corpus(resolve_corpus_dir(corpus_dir));
  const auto questions = load_questionnaire(questionnaire_path);

  MatrixResult result;
  result.run_dir = runtime.runs_dir / (runtime.timestamp.empty() ? utc_timestamp() : runtime.timestamp);
  fs::create_directories(result.run_dir);

  const Embedder embedder(runtime.embedder);
  const HashedTokenEmbedder token_embedder(runtime.token_embedder_dim);
  std::optional<Judge> judge;
  if (runtime.judge) judge.emplace(*runtime.judge);
  IndexCache cache(corpus, embedder);

  result.reports.resize(configs.size());
  auto run_one = [&](std::size_t i) {
    const PipelineConfig& cfg = configs[i];
    MetricReport report;
    try {
      const fs::path dir = result.run_dir / cfg.code;
      fs::create_directories(dir);
      write_file(dir / "config.json", nlohmann::json(cfg).dump(2) + "\n");

      const auto index = cache.get(cfg);
      GenerationConfig gen_cfg = runtime.generation;
      gen_cfg.model_name = runtime.model_for(cfg.model_role);
      const Generator generator(gen_cfg);
      PipelineSettings settings;
      settings.retrieval = cfg.retrieval_config();
      settings.placement = cfg.placement;
      settings.max_prompt_chars = runtime.max_prompt_chars;
      settings.resource_dir = runtime.resource_dir;
      const RagPipeline pipeline(*index, embedder, generator, settings);
      const auto records = pipeline.answer_all(questions, cfg.code, runtime.workers);

      std::string lines;
      for (const auto& r : records) lines += nlohmann::json(r).dump() + "\n";
      write_file(dir / "answers.jsonl", lines);

      EvalOptions opts;
      opts.token_embedder = &token_embedder;
      opts.judge = judge ? &*judge : nullptr;
      opts.config_code = cfg.code;
      report = evaluate_run(records, opts);
    } catch (const std::exception& e) {
      report = failed_report(cfg.code, e.what());
    }
    write_file(result.run_dir / (cfg.code + ".json"), nlohmann::json(report).dump(2) + "\n");
    result.reports[i] = std::move(report);
  };

  if (runtime.parallel_configs) {
    std::vector<std::jthread> threads;
    for (std::size_t i = 0; i < configs.size(); ++i) threads.emplace_back(run_one, i);
  } else {
    for (std::size_t i = 0; i < configs.size(); ++i) run_one(i);
  }

  const auto table = compare_reports(result.reports);
  write_file(result.run_dir / "comparison.csv", table.csv());
  write_file(result.run_dir / "comparison.txt", table.text());
  return result;
}

// ---- Comparison -----------------------------------------------------------

const std::vector<std::string>& comparison_columns() {
  static const std::vector<std::string> cols = {"valid_rate", "meteor",   "bert_p",      "bert_r",
                                                "bert_f1",    "geval_cp", "geval_cr",    "geval_faith",
                                                "geval_rel"};
  return cols;
}

namespace {

std::vector<std::optional<double>> row_values(const MetricReport& r) {
  if (r.error) return std::vector<std::optional<double>>(comparison_columns().size());
  std::vector<std::optional<double>> v = {r.valid_rate, r.meteor_mean, r.bert_p_mean, r.bert_r_mean,
                                          r.bert_f1_mean};
  if (r.geval) {
    v.insert(v.end(), {r.geval->context_precision, r.geval->context_recall, r.geval->faithfulness,
                       r.geval->answer_relevancy});
  } else {
    v.resize(comparison_columns().size());
  }
  return v;
}

std::string fmt(double x, const char* spec) {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, x);
  return buf;
}

}  // namespace

ComparisonTable compare_reports(const std::vector<MetricReport>& reports) {
  ComparisonTable t;
  t.rows = reports;
  t.best.assign(reports.size(), {});
  const auto& cols = comparison_columns();
  std::vector<std::vector<std::optional<double>>> values;
  for (const auto& r : reports) values.push_back(row_values(r));
  for (std::size_t c = 0; c < cols.size(); ++c) {
    std::optional<double> best;
    for (const auto& v : values) {
      if (v[c] && (!best || *v[c] > *best)) best = v[c];
    }
    if (!best) continue;
    for (std::size_t r = 0; r < values.size(); ++r) {
      if (values[r][c] && *values[r][c] == *best) t.best[r].push_back(cols[c]);
    }
  }
  return t;
}

std::string ComparisonTable::csv() const {
  std::string out = "code";
  for (const auto& c : comparison_columns()) out += "," + c;
  out += "\n";
  for (const auto& r : rows) {
    out += r.config_code;
    for (const auto& v : row_values(r)) out += "," + (v ? fmt(*v, "%.6f") : std::string());
    out += "\n";
  }
  return out;
}

std::string ComparisonTable::text() const {
  std::string out = "code    ";
  for (const auto& c : comparison_columns()) {
    char buf[32];
    std::snprintf(buf, sizeof buf, " %12s", c.c_str());
    out += buf;
  }
  out += "\n";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    char code[32];
    std::snprintf(code, sizeof code, "%-8s", rows[i].config_code.c_str());
    out += code;
    const auto values = row_values(rows[i]);
    for (std::size_t c = 0; c < values.size(); ++c) {
      std::string cell = "-";
      if (values[c]) {
        cell = fmt(*values[c], "%.4f");
        const auto& b = best[i];
        if (std::find(b.begin(), b.end(), comparison_columns()[c]) != b.end()) cell += "*";
      }
      char buf[32];
      std::snprintf(buf, sizeof buf, " %12s", cell.c_str());
      out += buf;
    }
    if (rows[i].error) out += "  error: " + *rows[i].error;
    out += "\n";
  }
  out += "* best value in column\n";
  return out;
}

nlohmann::json ComparisonTable::json() const {
  nlohmann::json rows_json = nlohmann::json::array();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    nlohmann::json row = {{"code", rows[i].config_code}, {"best", best[i]}};
    const auto values = row_values(rows[i]);
    for (std::size_t c = 0; c < values.size(); ++c) {
      row[comparison_columns()[c]] = values[c] ? nlohmann::json(*values[c]) : nlohmann::json(nullptr);
    }
    if (rows[i].error) row["error"] = *rows[i].error;
    rows_json.push_back(std::move(row));
  }
  return {{"columns", comparison_columns()}, {"rows", rows_json}};
}

const std::vector<PublishedRow>& published_reference() {
  static const std::vector<PublishedRow> rows = {
      {"SLOBE", 0.114, 0.634, 0.655, 0.643, std::nullopt},
      {"SLOB", 0.139, 0.693, 0.692, 0.692, GevalScores{4.0535, 3.689, 3.5, 4.5}},
      {"SLNC", 0.128, 0.694, 0.689, 0.691, GevalScores{3.568, 3.281, 2.35, 3.0}},
      {"SMNC", 0.093, 0.699, 0.675, 0.686, std::nullopt},
      {"MLNC", 0.133, 0.694, 0.689, 0.691, std::nullopt},
      {"MMNC", 0.111, 0.698, 0.682, 0.689, std::nullopt},
      {"SLOC", 0.138, 0.683, 0.691, 0.687, GevalScores{3.6206, 3.339, 2.078, 3.68}},
      {"SMOC", 0.101, 0.683, 0.6708, 0.676, std::nullopt},
      {"MLOC", 0.149, 0.688, 0.694, 0.691, std::nullopt},
      {"MMOC", 0.108, 0.681, 0.6702, 0.674, std::nullopt},
  };
  return rows;
}

std::string published_reference_text() {
  std::string out =
      "Published values from the original study (different models and corpus; for context "
      "only)\ncode        meteor   bert_p   bert_r  bert_f1  geval_cp geval_cr geval_fa geval_re\n";
  for (const auto& r : published_reference()) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "%-8s %9.4f %8.4f %8.4f %8.4f", r.code.c_str(), r.meteor, r.bert_p,
                  r.bert_r, r.bert_f1);
    out += buf;
    if (r.geval) {
      std::snprintf(buf, sizeof buf, " %8.4f %8.4f %8.4f %8.4f", r.geval->context_precision,
                    r.geval->context_recall, r.geval->faithfulness, r.geval->answer_relevancy);
      out += buf;
    }
    out += "\n";
  }
  return out;
}

}  // namespace qf
