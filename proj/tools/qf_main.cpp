// qf: command-line entry points for ingest, indexing, answering, experiment
// runs, evaluation, comparison and the HTTP service.
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "qf/config.hpp"
#include "qf/corpus.hpp"
#include "qf/embedder.hpp"
#include "qf/error.hpp"
#include "qf/evalkit.hpp"
#include "qf/expmatrix.hpp"
#include "qf/ragcore.hpp"
#include "qf/service.hpp"
#include "qf/splitter.hpp"
#include "qf/vindex.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Common {
  std::string config_file;
  std::string llm_url;
  std::string embed_url;
  std::string embedder;  // hashed | remote
  std::size_t dim = 0;
  unsigned workers = 0;
};

qf::AppConfig load_settings(const Common& c) {
  qf::AppConfig cfg = c.config_file.empty() ? qf::AppConfig{} : qf::load_config(c.config_file);
  qf::apply_env_overrides(cfg);
  if (!c.llm_url.empty()) cfg.generation.endpoint_url = c.llm_url;
  if (!c.embed_url.empty()) {
    cfg.embedder.endpoint_url = c.embed_url;
    cfg.embedder.backend = qf::EmbedderBackend::Remote;
  }
  if (!c.embedder.empty()) cfg.embedder.backend = qf::embedder_backend_from_string(c.embedder);
  if (c.dim != 0) {
    cfg.embedder.dim = c.dim;
    cfg.embedder_dim_set = true;
  }
  if (c.workers != 0) cfg.workers = c.workers;
  return cfg;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
  if (!out) throw qf::Error(qf::ErrorCode::IoError, "cannot write " + path.string());
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw qf::Error(qf::ErrorCode::IoError, "cannot read " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw qf::Error(qf::ErrorCode::InvalidArgument, path.string() + ": " + e.what());
  }
}

std::vector<std::string> split_codes(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  for (std::string item; std::getline(ss, item, ',');) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

// ---- index directories ----------------------------------------------------

json embedder_json(const qf::EmbedderConfig& e) {
  return {{"backend", qf::to_string(e.backend)},
          {"dim", e.dim},
          {"model_name", e.model_name},
          {"endpoint_url", e.endpoint_url}};
}

qf::VectorIndex build_index(const std::vector<qf::SourceDocument>& docs, const qf::SplitConfig& split,
                            const qf::Embedder& embedder) {
  const auto chunks = qf::split_all(docs, split);
  if (chunks.empty()) throw qf::Error(qf::ErrorCode::EmptyIndex, "corpus produced no chunks");
  std::vector<std::string> texts;
  texts.reserve(chunks.size());
  for (const auto& c : chunks) texts.push_back(c.text);
  auto vectors = embedder.embed_batch(texts);
  qf::VectorIndex index(vectors.front().dim(), embedder.model_tag());
  std::vector<std::pair<qf::Chunk, qf::EmbeddingVector>> entries;
  entries.reserve(chunks.size());
  for (std::size_t i = 0; i < chunks.size(); ++i) entries.emplace_back(chunks[i], std::move(vectors[i]));
  index.add(entries);
  return index;
}

// ---- subcommands ----------------------------------------------------------

int cmd_ingest(const std::string& dir, const std::string& out, bool separate, const std::string& lang) {
  qf::IngestOptions opts;
  opts.spreadsheet_mode = separate ? qf::SpreadsheetMode::Separate : qf::SpreadsheetMode::Standard;
  if (!lang.empty()) opts.language_hint = lang;
  const qf::Corpus corpus = qf::ingest_directory(dir, opts);
  qf::write_corpus(corpus, out);
  for (const auto& w : corpus.manifest.warnings) std::cerr << "warning: " << w << "\n";
  std::cout << json{{"corpus_dir", out},
                    {"documents", corpus.documents.size()},
                    {"files_ingested", corpus.manifest.files_ingested},
                    {"warnings", corpus.manifest.warnings.size()}}
                   .dump()
            << "\n";
  return 0;
}

int cmd_index(const Common& common, const std::string& corpus_dir, const std::string& out,
              const qf::SplitConfig& split) {
  const qf::AppConfig cfg = load_settings(common);
  split.validate();
  const qf::Corpus corpus = qf::read_corpus(corpus_dir);
  const qf::Embedder embedder(cfg.resolved_embedder());
  const qf::VectorIndex index = build_index(corpus.documents, split, embedder);
  fs::create_directories(out);
  index.persist(fs::path(out) / "index.qfix");
  json meta = {{"corpus_dir", fs::absolute(corpus_dir).lexically_normal().generic_string()},
                     {"chunk_size", split.chunk_size},
                     {"overlap", split.overlap},
                     {"strategy", qf::to_string(split.strategy)},
                     {"spreadsheet_mode", qf::to_string(corpus.manifest.ingest_options.spreadsheet_mode)},
                     {"embedder", embedder_json(embedder.config())},
                     {"model_tag", index.model_tag()},
                     {"chunks", index.size()}};
  meta["embedder"]["dim"] = index.dim();
  write_text(fs::path(out) / "index.json", meta.dump(2) + "\n");
  std::cout << json{{"index_dir", out}, {"chunks", index.size()}, {"model_tag", index.model_tag()}}.dump()
            << "\n";
  return 0;
}

// Index metadata overrides the embedder settings so queries are embedded
// the same way as the stored chunks.
void adopt_index_embedder(const fs::path& dir, qf::AppConfig& cfg, const Common& common) {
  const fs::path meta_path = dir / "index.json";
  if (!fs::exists(meta_path)) return;
  const json meta = read_json(meta_path);
  const json& e = meta.at("embedder");
  if (common.embedder.empty() && common.embed_url.empty()) {
    cfg.embedder.backend = qf::embedder_backend_from_string(e.at("backend").get<std::string>());
    cfg.embedder.model_name = e.value("model_name", cfg.embedder.model_name);
    if (cfg.embedder.endpoint_url.empty()) cfg.embedder.endpoint_url = e.value("endpoint_url", "");
  }
  if (common.dim == 0) {
    cfg.embedder.dim = e.value("dim", cfg.embedder.dim);
    cfg.embedder_dim_set = true;
  }
}

int cmd_ask(const Common& common, const std::string& dir, const std::string& question,
            const std::string& code, std::optional<std::size_t> k, std::optional<double> lambda, bool as_json) {
  qf::AppConfig cfg = load_settings(common);
  adopt_index_embedder(dir, cfg, common);
  qf::PipelineConfig pc = cfg.pipeline_config(code);
  if (k) pc.k = *k;
  if (lambda) pc.lambda = *lambda;
  pc.validate();

  const qf::Embedder embedder(cfg.resolved_embedder());
  std::optional<qf::VectorIndex> index;
  const fs::path meta_path = fs::path(dir) / "index.json";
  if (fs::exists(meta_path)) {
    const json meta = read_json(meta_path);
    if (meta.value("chunk_size", std::size_t{0}) == pc.chunk_size &&
        meta.value("overlap", std::size_t{0}) == pc.overlap &&
        meta.value("strategy", "") == qf::to_string(pc.strategy) &&
        meta.value("spreadsheet_mode", "") == qf::to_string(pc.spreadsheet_mode)) {
      index = qf::VectorIndex::load(fs::path(dir) / "index.qfix", embedder.model_tag());
    } else {
      std::cerr << "note: stored index does not match " << pc.code << "; rebuilding in memory\n";
    }
  }
  if (!index) {
    qf::Corpus corpus = qf::read_corpus(qf::resolve_corpus_dir(dir));
    if (corpus.manifest.ingest_options.spreadsheet_mode != pc.spreadsheet_mode) {
      qf::IngestOptions opts = corpus.manifest.ingest_options;
      opts.spreadsheet_mode = pc.spreadsheet_mode;
      corpus = qf::ingest_directory(corpus.manifest.source_root, opts);
    }
    index = build_index(corpus.documents, pc.split_config(), embedder);
  }

  qf::GenerationConfig gen = cfg.generation;
  gen.model_name = pc.model_role == qf::ModelRole::LlamaLike ? cfg.llama_model : cfg.mistral_model;
  const qf::Generator generator(gen);
  qf::PipelineSettings settings;
  settings.retrieval = pc.retrieval_config();
  settings.placement = pc.placement;
  settings.max_prompt_chars = cfg.max_prompt_chars;
  settings.resource_dir = cfg.resource_dir;
  const qf::RagPipeline pipeline(*index, embedder, generator, settings);
  const qf::AnswerRecord rec = pipeline.answer({"q1", question, std::nullopt}, pc.code);
  if (rec.error) throw qf::Error(qf::ErrorCode::EndpointUnreachable, *rec.error);

  if (as_json) {
    json j = rec;
    j.erase("latency_ms");
    std::cout << j.dump(2) << "\n";
  } else {
    std::cout << rec.final_answer << "\n";
    if (!rec.valid) std::cout << "[invalid: " << qf::to_string(*rec.invalid_reason) << "]\n";
    std::cout << "sources:";
    for (const auto& h : rec.retrieved.hits) std::cout << " " << h.chunk_id;
    std::cout << "\n";
  }
  return 0;
}

int cmd_run_matrix(const Common& common, const std::string& dir, const std::string& questionnaire,
                   const std::string& codes, const std::string& out, const std::string& timestamp,
                   bool parallel, bool geval, const std::string& judge_url) {
  qf::AppConfig cfg = load_settings(common);
  adopt_index_embedder(dir, cfg, common);
  const auto code_list = split_codes(codes);
  for (const auto& c : code_list) qf::parse_config_code(c);  // UnknownCode before any work

  qf::MatrixRuntime rt = cfg.matrix_runtime();
  rt.runs_dir = out;
  rt.timestamp = timestamp;
  rt.parallel_configs = parallel;
  if (!judge_url.empty()) cfg.judge.endpoint_url = judge_url;
  if (geval) {
    if (cfg.judge.endpoint_url.empty()) cfg.judge.endpoint_url = cfg.generation.endpoint_url;
    rt.judge = cfg.judge;
  } else {
    rt.judge.reset();
  }
  const qf::MatrixResult result = qf::run_matrix(dir, questionnaire, code_list, rt);
  for (const auto& r : result.reports) {
    if (r.error) std::cerr << r.config_code << " failed: " << *r.error << "\n";
  }
  std::cerr << "run directory: " << result.run_dir.string() << "\n";
  std::cout << qf::compare_reports(result.reports).text();
  return 0;
}

int cmd_evaluate(const Common& common, const std::string& target, bool geval, const std::string& judge_url,
                 bool as_json) {
  qf::AppConfig cfg = load_settings(common);
  std::vector<fs::path> answer_files;
  if (fs::is_directory(target)) {
    for (const auto& entry : fs::directory_iterator(target)) {
      if (entry.is_directory() && fs::exists(entry.path() / "answers.jsonl")) {
        answer_files.push_back(entry.path() / "answers.jsonl");
      }
    }
    if (answer_files.empty() && fs::exists(fs::path(target) / "answers.jsonl")) {
      answer_files.push_back(fs::path(target) / "answers.jsonl");
    }
  } else {
    answer_files.push_back(target);
  }
  if (answer_files.empty()) throw qf::Error(qf::ErrorCode::NotFound, "no answers.jsonl under " + target);
  std::sort(answer_files.begin(), answer_files.end());

  const qf::HashedTokenEmbedder tokens;
  std::optional<qf::Judge> judge;
  if (geval) {
    if (!judge_url.empty()) cfg.judge.endpoint_url = judge_url;
    if (cfg.judge.endpoint_url.empty()) cfg.judge.endpoint_url = cfg.generation.endpoint_url;
    judge.emplace(cfg.judge);
  }

  std::vector<qf::MetricReport> reports;
  for (const auto& file : answer_files) {
    std::ifstream in(file);
    std::vector<qf::AnswerRecord> records;
    for (std::string line; std::getline(in, line);) {
      if (!line.empty()) records.push_back(json::parse(line).get<qf::AnswerRecord>());
    }
    qf::EvalOptions opts;
    opts.token_embedder = &tokens;
    opts.judge = judge ? &*judge : nullptr;
    opts.config_code = file.parent_path().filename().string();
    if (!records.empty()) opts.config_code = records.front().config_code;
    qf::MetricReport rep = qf::evaluate_run(records, opts);
    const fs::path report_path = file.parent_path().parent_path() / (rep.config_code + ".json");
    write_text(report_path, json(rep).dump(2) + "\n");
    reports.push_back(std::move(rep));
  }
  if (as_json) {
    std::cout << json(reports).dump(2) << "\n";
  } else {
    std::cout << qf::compare_reports(reports).text();
  }
  return 0;
}

int cmd_compare(const std::vector<std::string>& files, const std::string& out, const std::string& format,
                bool published) {
  std::vector<qf::MetricReport> reports;
  for (const auto& f : files) reports.push_back(read_json(f).get<qf::MetricReport>());
  const auto table = qf::compare_reports(reports);
  if (!out.empty()) write_text(out, table.csv());
  if (format == "csv") {
    std::cout << table.csv();
  } else if (format == "json") {
    std::cout << table.json().dump(2) << "\n";
  } else {
    std::cout << table.text();
    if (published) std::cout << "\n" << qf::published_reference_text();
  }
  return 0;
}

int cmd_serve(const Common& common, const std::string& host, int port) {
  qf::AppConfig cfg = load_settings(common);
  if (!host.empty()) cfg.host = host;
  if (port >= 0) cfg.port = port;
  qf::HttpService service(cfg);
  const int bound = service.start();
  std::cerr << "listening on http://" << cfg.host << ":" << bound << "\n";
  service.run();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"qf: retrieval-augmented answering for security questionnaires"};
  app.require_subcommand(1);
  Common common;
  auto add_common = [&common](CLI::App* sub) {
    sub->add_option("--config-file", common.config_file, "INI settings file")->check(CLI::ExistingFile);
    sub->add_option("--llm-url", common.llm_url, "OpenAI-compatible chat endpoint base URL");
    sub->add_option("--embed-url", common.embed_url, "OpenAI-compatible embeddings endpoint base URL");
    sub->add_option("--embedder", common.embedder, "hashed or remote")
        ->check(CLI::IsMember({"hashed", "remote"}));
    sub->add_option("--dim", common.dim, "hashed embedding dimension");
    sub->add_option("--workers", common.workers, "parallel questions per run");
  };

  // ingest
  auto* ingest = app.add_subcommand("ingest", "Ingest .txt/.md/.csv sources into a corpus directory");
  std::string ingest_dir, ingest_out = "corpus", lang_hint;
  bool excel_separate = false;
  ingest->add_option("dir", ingest_dir, "source directory")->required()->check(CLI::ExistingDirectory);
  ingest->add_option("--out", ingest_out, "corpus output directory");
  ingest->add_flag("--excel-separate", excel_separate, "one document per spreadsheet row");
  ingest->add_option("--language-hint", lang_hint, "de or en when detection is inconclusive");

  // index
  auto* index = app.add_subcommand("index", "Split, embed and persist a corpus index");
  std::string index_corpus, index_out = "index", strategy = "recursive";
  qf::SplitConfig split;
  index->add_option("corpus", index_corpus, "corpus directory")->required()->check(CLI::ExistingDirectory);
  index->add_option("--out", index_out, "index output directory");
  index->add_option("--chunk-size", split.chunk_size, "chunk size in characters");
  index->add_option("--overlap", split.overlap, "overlap in characters");
  index->add_option("--strategy", strategy, "recursive or flat")->check(CLI::IsMember({"recursive", "flat"}));
  add_common(index);

  // ask
  auto* ask = app.add_subcommand("ask", "Answer one question");
  std::string ask_dir, question, ask_code = "SLOC";
  std::optional<std::size_t> ask_k;
  std::optional<double> ask_lambda;
  bool ask_json = false;
  ask->add_option("index", ask_dir, "index or corpus directory")->required()->check(CLI::ExistingDirectory);
  ask->add_option("--question,-q", question, "question text")->required();
  ask->add_option("--config", ask_code, "configuration code, e.g. SLOC");
  ask->add_option("--k", ask_k, "chunks to retrieve");
  ask->add_option("--lambda", ask_lambda, "MMR trade-off");
  ask->add_flag("--json", ask_json, "print the full answer record as JSON");
  add_common(ask);

  // run-matrix
  auto* matrix = app.add_subcommand("run-matrix", "Run configurations over a questionnaire");
  std::string matrix_dir, questionnaire, codes, runs_out = "runs", timestamp, judge_url;
  bool parallel = false, matrix_geval = false;
  matrix->add_option("index", matrix_dir, "index or corpus directory")->required()->check(CLI::ExistingDirectory);
  matrix->add_option("questionnaire", questionnaire, "CSV or JSONL questionnaire")
      ->required()
      ->check(CLI::ExistingFile);
  matrix->add_option("--codes", codes, "comma-separated configuration codes")->required();
  matrix->add_option("--out", runs_out, "runs directory");
  matrix->add_option("--timestamp", timestamp, "run directory name (default: current UTC time)");
  matrix->add_flag("--parallel-configs", parallel, "run configurations concurrently");
  matrix->add_flag("--geval", matrix_geval, "score with the LLM judge");
  matrix->add_option("--judge-url", judge_url, "judge endpoint (default: LLM endpoint)");
  add_common(matrix);

  // evaluate
  auto* evaluate = app.add_subcommand("evaluate", "Recompute metric reports for a run");
  std::string eval_target;
  bool eval_geval = false, eval_json = false;
  evaluate->add_option("run", eval_target, "run directory or answers.jsonl")->required()->check(CLI::ExistingPath);
  evaluate->add_flag("--geval", eval_geval, "score with the LLM judge");
  evaluate->add_option("--judge-url", judge_url, "judge endpoint (default: LLM endpoint)");
  evaluate->add_flag("--json", eval_json, "print reports as JSON");
  add_common(evaluate);

  // compare
  auto* compare = app.add_subcommand("compare", "Tabulate metric reports");
  std::vector<std::string> report_files;
  std::string compare_out, compare_format = "text";
  bool published = false;
  compare->add_option("reports", report_files, "report JSON files")->required()->check(CLI::ExistingFile);
  compare->add_option("--out", compare_out, "write the CSV table here");
  compare->add_option("--format", compare_format, "stdout format")->check(CLI::IsMember({"text", "csv", "json"}));
  compare->add_flag("--published", published, "also print the published reference values");

  // serve
  auto* serve = app.add_subcommand("serve", "Run the HTTP API");
  std::string host;
  int port = -1;
  serve->add_option("--config", common.config_file, "INI settings file")->check(CLI::ExistingFile);
  serve->add_option("--host", host, "bind address");
  serve->add_option("--port", port, "port (0 picks a free one)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*ingest) return cmd_ingest(ingest_dir, ingest_out, excel_separate, lang_hint);
    if (*index) {
      split.strategy = qf::split_strategy_from_string(strategy);
      return cmd_index(common, index_corpus, index_out, split);
    }
    if (*ask) return cmd_ask(common, ask_dir, question, ask_code, ask_k, ask_lambda, ask_json);
    if (*matrix) {
      return cmd_run_matrix(common, matrix_dir, questionnaire, codes, runs_out, timestamp, parallel,
                            matrix_geval, judge_url);
    }
    if (*evaluate) return cmd_evaluate(common, eval_target, eval_geval, judge_url, eval_json);
    if (*compare) return cmd_compare(report_files, compare_out, compare_format, published);
    if (*serve) return cmd_serve(common, host, port);
  } catch (const qf::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.code() == qf::ErrorCode::UnknownCode ? 2 : 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
