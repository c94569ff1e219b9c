#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>

#include "qf/embedder.hpp"
#include "qf/evalkit.hpp"
#include "qf/expmatrix.hpp"
#include "qf/ragcore.hpp"

namespace qf {

// Runtime settings shared by the CLI and the service. Read from an INI-style
// file with [service], [llm], [embedder], [retrieval], [judge] and [paths]
// sections; QF_PORT, QF_LLM_URL and QF_EMBED_URL override the file.
struct AppConfig {
  // [service]
  std::string host = "127.0.0.1";
  int port = 8080;
  std::filesystem::path data_dir = "qf-data";
  std::optional<std::filesystem::path> ui_dir;
  std::string auth_token;  // empty: no auth
  int snapshot_every = 50;  // events between store snapshots

  // [llm]
  GenerationConfig generation;
  std::string llama_model = "llama3";
  std::string mistral_model = "mistral-instruct";

  // [embedder]
  EmbedderConfig embedder;
  bool embedder_dim_set = false;  // dim given explicitly (file or flag)

  // [retrieval]
  std::size_t k = 20;
  double lambda = 0.5;
  std::size_t fetch_k = 0;
  std::size_t overlap = 0;
  SplitStrategy strategy = SplitStrategy::Recursive;
  unsigned workers = 4;
  std::size_t max_prompt_chars = 0;

  // [judge]; G-Eval runs only when url is set.
  JudgeConfig judge;

  // [paths]
  std::optional<std::filesystem::path> resource_dir;
  std::filesystem::path runs_dir = "runs";

  // The remote backend accepts whatever dim the endpoint returns unless a
  // dim was given explicitly.
  EmbedderConfig resolved_embedder() const;
  MatrixRuntime matrix_runtime() const;
  // Code defaults merged with the [retrieval] section.
  PipelineConfig pipeline_config(std::string_view code) const;
};

AppConfig parse_config(std::string_view ini_text);
AppConfig load_config(const std::filesystem::path& path);

// Applies QF_PORT, QF_LLM_URL and QF_EMBED_URL when set.
void apply_env_overrides(AppConfig& cfg);

}  // namespace qf
