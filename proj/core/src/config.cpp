#include "qf/config.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "qf/error.hpp"

namespace qf {

namespace pt = boost::property_tree;

EmbedderConfig AppConfig::resolved_embedder() const {
  EmbedderConfig e = embedder;
  if (e.backend == EmbedderBackend::Remote && !embedder_dim_set) e.dim = 0;
  return e;
}

MatrixRuntime AppConfig::matrix_runtime() const {
  MatrixRuntime rt;
  rt.embedder = resolved_embedder();
  rt.generation = generation;
  rt.llama_model = llama_model;
  rt.mistral_model = mistral_model;
  if (!judge.endpoint_url.empty()) rt.judge = judge;
  rt.runs_dir = runs_dir;
  rt.workers = workers;
  rt.max_prompt_chars = max_prompt_chars;
  rt.resource_dir = resource_dir;
  return rt;
}

PipelineConfig AppConfig::pipeline_config(std::string_view code) const {
  PipelineConfig c = parse_config_code(code);
  c.k = k;
  c.lambda = lambda;
  c.fetch_k = fetch_k;
  c.overlap = overlap;
  c.strategy = strategy;
  c.validate();
  return c;
}

namespace {

template <typename T>
void read(const pt::ptree& tree, const char* key, T& target) {
  if (tree.get_child_optional(key)) target = tree.get<T>(key);
}

void read_path(const pt::ptree& tree, const char* key, std::optional<std::filesystem::path>& target) {
  if (auto v = tree.get_optional<std::string>(key); v && !v->empty()) target = *v;
}

// Drops "; ..." and "# ..." trailing comments, which read_ini keeps as part
// of the value. A marker counts only after whitespace, so URLs keep theirs.
std::string strip_inline_comments(std::string_view text) {
  std::string out;
  std::istringstream in{std::string(text)};
  for (std::string line; std::getline(in, line);) {
    for (std::size_t i = 1; i < line.size(); ++i) {
      if ((line[i] == ';' || line[i] == '#') && (line[i - 1] == ' ' || line[i - 1] == '\t')) {
        line.resize(i);
        break;
      }
    }
    while (!line.empty() && (line.back() == ' ' || line.back() == '\t' || line.back() == '\r')) line.pop_back();
    out += line;
    out += '\n';
  }
  return out;
}

}  // namespace

AppConfig parse_config(std::string_view ini_text) {
  pt::ptree tree;
  try {
    std::istringstream in{strip_inline_comments(ini_text)};
    pt::read_ini(in, tree);
  } catch (const pt::ptree_error& e) {
    throw Error(ErrorCode::InvalidArgument, std::string("bad config file: ") + e.what());
  }

  AppConfig c;
  try {
    read(tree, "service.host", c.host);
    read(tree, "service.port", c.port);
    if (auto v = tree.get_optional<std::string>("service.data_dir")) c.data_dir = *v;
    read_path(tree, "service.ui_dir", c.ui_dir);
    read(tree, "service.auth_token", c.auth_token);
    read(tree, "service.snapshot_every", c.snapshot_every);

    read(tree, "llm.url", c.generation.endpoint_url);
    read(tree, "llm.llama_model", c.llama_model);
    read(tree, "llm.mistral_model", c.mistral_model);
    read(tree, "llm.temperature", c.generation.temperature);
    read(tree, "llm.max_tokens", c.generation.max_tokens);
    read(tree, "llm.timeout_ms", c.generation.timeout_ms);
    read(tree, "llm.max_retries", c.generation.max_retries);
    read(tree, "llm.backoff_ms", c.generation.backoff_ms);
    read(tree, "llm.max_in_flight", c.generation.max_in_flight);

    if (auto v = tree.get_optional<std::string>("embedder.backend")) {
      c.embedder.backend = embedder_backend_from_string(*v);
    }
    read(tree, "embedder.url", c.embedder.endpoint_url);
    read(tree, "embedder.model", c.embedder.model_name);
    if (tree.get_child_optional("embedder.dim")) {
      c.embedder.dim = tree.get<std::size_t>("embedder.dim");
      c.embedder_dim_set = true;
    }
    read(tree, "embedder.batch_size", c.embedder.batch_size);
    read(tree, "embedder.timeout_ms", c.embedder.timeout_ms);
    read(tree, "embedder.max_retries", c.embedder.max_retries);
    read(tree, "embedder.backoff_ms", c.embedder.backoff_ms);
    read(tree, "embedder.max_in_flight", c.embedder.max_in_flight);

    read(tree, "retrieval.k", c.k);
    read(tree, "retrieval.lambda", c.lambda);
    read(tree, "retrieval.fetch_k", c.fetch_k);
    read(tree, "retrieval.overlap", c.overlap);
    if (auto v = tree.get_optional<std::string>("retrieval.strategy")) {
      c.strategy = split_strategy_from_string(*v);
    }
    read(tree, "retrieval.workers", c.workers);
    read(tree, "retrieval.max_prompt_chars", c.max_prompt_chars);

    read(tree, "judge.url", c.judge.endpoint_url);
    read(tree, "judge.model", c.judge.model_name);
    read(tree, "judge.samples", c.judge.samples_per_item);
    read(tree, "judge.temperature", c.judge.temperature);
    read(tree, "judge.rubric_version", c.judge.rubric_version);

    read_path(tree, "paths.resource_dir", c.resource_dir);
    if (auto v = tree.get_optional<std::string>("paths.runs_dir")) c.runs_dir = *v;
  } catch (const pt::ptree_error& e) {
    throw Error(ErrorCode::InvalidArgument, std::string("bad config value: ") + e.what());
  }
  c.judge.resource_dir = c.resource_dir;
  if (c.port < 0 || c.port > 65535) throw Error(ErrorCode::InvalidArgument, "service.port out of range");
  return c;
}

AppConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot read config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

void apply_env_overrides(AppConfig& cfg) {
  if (const char* v = std::getenv("QF_PORT"); v != nullptr && *v != '\0') {
    try {
      cfg.port = std::stoi(v);
    } catch (const std::exception&) {
      throw Error(ErrorCode::InvalidArgument, std::string("QF_PORT is not a number: ") + v);
    }
  }
  if (const char* v = std::getenv("QF_LLM_URL"); v != nullptr && *v != '\0') {
    cfg.generation.endpoint_url = v;
  }
  if (const char* v = std::getenv("QF_EMBED_URL"); v != nullptr && *v != '\0') {
    cfg.embedder.endpoint_url = v;
    cfg.embedder.backend = EmbedderBackend::Remote;
  }
}

}  // namespace qf
