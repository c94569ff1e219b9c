#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace qf {

enum class DocumentKind { Prose, Tabular };
enum class SpreadsheetMode { Standard, Separate };

std::string_view to_string(DocumentKind kind) noexcept;
std::string_view to_string(SpreadsheetMode mode) noexcept;
SpreadsheetMode spreadsheet_mode_from_string(std::string_view s);

struct SourceDocument {
  std::string doc_id;
  std::string source_path;
  std::string text;
  std::string language = "und";
  DocumentKind kind = DocumentKind::Prose;
  std::map<std::string, std::string> metadata;

  bool operator==(const SourceDocument&) const = default;
};

struct IngestOptions {
  SpreadsheetMode spreadsheet_mode = SpreadsheetMode::Standard;
  std::optional<std::string> language_hint;
  bool pdf_text_only = true;
};

struct DocumentSummary {
  std::string doc_id;
  std::string source_path;
  std::string language;
  DocumentKind kind = DocumentKind::Prose;
  std::size_t chars = 0;
  std::map<std::string, std::string> metadata;
};

struct CorpusManifest {
  std::vector<DocumentSummary> documents;
  std::string created_at;
  IngestOptions ingest_options;
  std::string source_root;
  std::size_t files_ingested = 0;
  std::vector<std::string> warnings;
};

// Cleaning rules, in order: CRLF/CR to LF, tab to space, drop other control
// characters, NFC, collapse space runs, strip spaces around newlines,
// collapse 3+ newlines to 2, trim.
std::string normalize_text(std::string_view raw);

// "de", "en" or "und" from stopword hit ratios.
std::string detect_language(std::string_view text);

const std::vector<std::string>& german_stopwords();
const std::vector<std::string>& english_stopwords();

// One parsed CSV record per row, header included (RFC 4180).
std::vector<std::vector<std::string>> parse_csv(std::string_view content);

bool is_supported_source(const std::filesystem::path& path);

// `display_path` is recorded as source_path and feeds doc_id; it defaults to
// the path as given.
std::vector<SourceDocument> ingest_file(const std::filesystem::path& path,
                                        const IngestOptions& options,
                                        std::optional<std::string> display_path = std::nullopt);

struct Corpus {
  CorpusManifest manifest;
  std::vector<SourceDocument> documents;  // sorted by doc_id
};

// Ingests every supported file below `dir` (sorted traversal). EmptyDocument
// failures become manifest warnings.
Corpus ingest_directory(const std::filesystem::path& dir, const IngestOptions& options);

// Writes manifest.json and documents.jsonl.
void write_corpus(const Corpus& corpus, const std::filesystem::path& out_dir);
Corpus read_corpus(const std::filesystem::path& corpus_dir);

void to_json(nlohmann::json& j, const SourceDocument& d);
void from_json(const nlohmann::json& j, SourceDocument& d);
void to_json(nlohmann::json& j, const CorpusManifest& m);
void from_json(const nlohmann::json& j, CorpusManifest& m);

}  // namespace qf
