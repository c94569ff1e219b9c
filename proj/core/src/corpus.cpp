#include "qf/corpus.hpp"

#include <algorithm>
#include <chrono>
#include <ctime>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_set>

#include "qf/error.hpp"
#include "qf/text.hpp"

namespace fs = std::filesystem;

namespace qf {

std::string_view to_string(DocumentKind kind) noexcept {
  return kind == DocumentKind::Tabular ? "tabular" : "prose";
}

std::string_view to_string(SpreadsheetMode mode) noexcept {
  return mode == SpreadsheetMode::Separate ? "separate" : "standard";
}

SpreadsheetMode spreadsheet_mode_from_string(std::string_view s) {
  if (s == "standard") return SpreadsheetMode::Standard;
  if (s == "separate") return SpreadsheetMode::Separate;
  throw Error(ErrorCode::InvalidArgument, "unknown spreadsheet mode '" + std::string(s) + "'");
}

namespace {

// Removes CR (CRLF becomes LF), maps tabs to spaces and drops C0/C1 control
// characters other than LF. Input must be valid UTF-8.
std::string strip_controls(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    const auto c = static_cast<unsigned char>(s[i]);
    if (c == '\r') {
      if (i + 1 < s.size() && s[i + 1] == '\n') continue;
      out.push_back('\n');
    } else if (c == '\t') {
      out.push_back(' ');
    } else if (c == '\n') {
      out.push_back('\n');
    } else if (c < 0x20 || c == 0x7F) {
      continue;
    } else if (c == 0xC2 && i + 1 < s.size() &&
               static_cast<unsigned char>(s[i + 1]) >= 0x80 &&
               static_cast<unsigned char>(s[i + 1]) <= 0x9F) {
      ++i;  // C1 control
    } else {
      out.push_back(static_cast<char>(c));
    }
  }
  return out;
}

std::string collapse_whitespace(std::string_view s) {
  // Spaces: collapse runs and drop those touching a newline.
  std::string spaced;
  spaced.reserve(s.size());
  for (const char c : s) {
    if (c == ' ') {
      if (!spaced.empty() && (spaced.back() == ' ' || spaced.back() == '\n')) continue;
      spaced.push_back(' ');
    } else if (c == '\n') {
      while (!spaced.empty() && spaced.back() == ' ') spaced.pop_back();
      spaced.push_back('\n');
    } else {
      spaced.push_back(c);
    }
  }
  std::string out;
  out.reserve(spaced.size());
  std::size_t newline_run = 0;
  for (const char c : spaced) {
    if (c == '\n') {
      if (++newline_run > 2) continue;
    } else {
      newline_run = 0;
    }
    out.push_back(c);
  }
  const auto b = out.find_first_not_of(" \n");
  if (b == std::string::npos) return {};
  const auto e = out.find_last_not_of(" \n");
  return out.substr(b, e - b + 1);
}

std::string lowercase_ext(const fs::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return ext;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw Error(ErrorCode::IoError, "read failed for " + path.string());
  return ss.str();
}

std::string decode(std::string_view bytes, const std::string& where) {
  if (bytes.substr(0, 3) == "\xEF\xBB\xBF") bytes.remove_prefix(3);
  std::size_t bad = 0;
  std::string decoded = text::lossy_utf8(bytes, &bad);
  // More than 10% malformed sequences means the file is not text.
  if (bad > 0 && bad * 10 > text::char_count(decoded)) {
    throw Error(ErrorCode::DecodeError, where + " is not decodable as UTF-8");
  }
  return decoded;
}

std::string make_doc_id(std::string_view path, std::string_view row_key, std::string_view body) {
  std::string key;
  key.reserve(path.size() + row_key.size() + body.size() + 2);
  key.append(path).push_back('\0');
  key.append(row_key).push_back('\0');
  key.append(body);
  return text::hex64(text::fnv1a64(key));
}

std::string row_text(const std::vector<std::string>& header, const std::vector<std::string>& row) {
  std::string out;
  for (std::size_t c = 0; c < row.size(); ++c) {
    if (!out.empty()) out += "; ";
    const std::string name = c < header.size() && !text::trim(header[c]).empty()
                                 ? text::trim(header[c])
                                 : "column_" + std::to_string(c + 1);
    out += name;
    out += ": ";
    out += text::trim(row[c]);
  }
  return out;
}

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace

std::string normalize_text(std::string_view raw) {
  const std::string decoded = text::lossy_utf8(raw);
  return collapse_whitespace(text::to_nfc(strip_controls(decoded)));
}

const std::vector<std::string>& german_stopwords() {
  static const std::vector<std::string> words = {
      "aber", "alle", "allem", "allen", "aller", "alles", "als", "also", "am", "an",
      "andere", "anderen", "auch", "auf", "aus", "bei", "beim", "bin", "bis", "bist",
      "da", "damit", "dann", "das", "dass", "dem", "den", "denn", "der", "des",
      "dich", "die", "dies", "diese", "diesem", "diesen", "dieser", "dieses", "dir", "doch",
      "dort", "du", "durch", "ein", "eine", "einem", "einen", "einer", "eines", "er",
      "es", "etwas", "euch", "für", "gegen", "habe", "haben", "hat", "hatte", "ich",
      "ihm", "ihn", "ihr", "ihre", "im", "in", "ist", "jede", "jeder", "jedes",
      "kann", "kein", "keine", "können", "man", "mich", "mir", "mit", "muss", "müssen",
      "nach", "nicht", "noch", "nur", "ob", "oder", "ohne", "sehr", "sein", "seine",
      "sich", "sie", "sind", "so", "soll", "sollen", "sowie", "über", "um", "und",
      "uns", "unter", "vom", "von", "vor", "war", "waren", "was", "weil", "wenn",
      "werden", "wie", "wir", "wird", "wo", "zu", "zum", "zur", "zwischen",
  };
  return words;
}

const std::vector<std::string>& english_stopwords() {
  static const std::vector<std::string> words = {
      "a", "about", "above", "after", "again", "all", "also", "am", "an", "and",
      "any", "are", "as", "at", "be", "because", "been", "before", "being", "below",
      "between", "both", "but", "by", "can", "cannot", "could", "did", "do", "does",
      "doing", "down", "during", "each", "few", "for", "from", "further", "had", "has",
      "have", "having", "he", "her", "here", "him", "his", "how", "i", "if",
      "in", "into", "is", "it", "its", "itself", "just", "me", "more", "most",
      "must", "my", "no", "nor", "not", "now", "of", "off", "on", "once",
      "only", "or", "other", "our", "out", "over", "own", "same", "she", "should",
      "so", "some", "such", "than", "that", "the", "their", "them", "then", "there",
      "these", "they", "this", "those", "through", "to", "too", "under", "until", "up",
      "very", "was", "we", "were", "what", "when", "where", "which", "while", "who",
      "why", "will", "with", "would", "you", "your",
  };
  return words;
}

std::string detect_language(std::string_view text_in) {
  const auto tokens = text::words(text_in);
  if (tokens.empty()) return "und";
  static const std::unordered_set<std::string> de(german_stopwords().begin(),
                                                  german_stopwords().end());
  static const std::unordered_set<std::string> en(english_stopwords().begin(),
                                                  english_stopwords().end());
  std::size_t de_hits = 0;
  std::size_t en_hits = 0;
  for (const auto& t : tokens) {
    de_hits += de.count(t);
    en_hits += en.count(t);
  }
  const double total = static_cast<double>(tokens.size());
  const double de_ratio = static_cast<double>(de_hits) / total;
  const double en_ratio = static_cast<double>(en_hits) / total;
  if (de_ratio >= 0.05 && de_ratio >= 1.5 * en_ratio && de_ratio > en_ratio) return "de";
  if (en_ratio >= 0.05 && en_ratio >= 1.5 * de_ratio && en_ratio > de_ratio) return "en";
  return "und";
}

std::vector<std::vector<std::string>> parse_csv(std::string_view content) {
  if (content.substr(0, 3) == "\xEF\xBB\xBF") content.remove_prefix(3);
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool in_quotes = false;
  bool field_started = false;

  auto end_field = [&] {
    row.push_back(std::move(field));
    field.clear();
    field_started = false;
  };
  auto end_row = [&] {
    end_field();
    // A line with nothing on it is not a record.
    if (!(row.size() == 1 && row.front().empty())) rows.push_back(std::move(row));
    row.clear();
  };

  for (std::size_t i = 0; i < content.size(); ++i) {
    const char c = content[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < content.size() && content[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        field.push_back(c);
      }
      continue;
    }
    switch (c) {
      case '"':
        if (!field_started) {
          in_quotes = true;
          field_started = true;
        } else {
          field.push_back(c);
        }
        break;
      case ',':
        end_field();
        break;
      case '\r':
        if (i + 1 < content.size() && content[i + 1] == '\n') ++i;
        end_row();
        break;
      case '\n':
        end_row();
        break;
      default:
        field.push_back(c);
        field_started = true;
    }
  }
  if (in_quotes) throw Error(ErrorCode::DecodeError, "unterminated quoted CSV field");
  if (field_started || !row.empty()) end_row();
  return rows;
}

bool is_supported_source(const fs::path& path) {
  const auto ext = lowercase_ext(path);
  return ext == ".txt" || ext == ".md" || ext == ".csv";
}

std::vector<SourceDocument> ingest_file(const fs::path& path, const IngestOptions& options,
                                        std::optional<std::string> display_path) {
  const std::string ext = lowercase_ext(path);
  if (!is_supported_source(path)) {
    throw Error(ErrorCode::UnsupportedFormat, path.string() + " (extension '" + ext + "')");
  }
  const std::string shown = display_path.value_or(path.generic_string());
  const std::string decoded = decode(read_file(path), shown);

  std::map<std::string, std::string> meta;
  fs::path stem = path.stem();
  const std::string inner = lowercase_ext(stem);
  if (ext == ".txt" && inner == ".pdf") {
    meta["format"] = "pdf-extracted";
    stem = stem.stem();
  } else if (ext == ".csv" && (inner == ".xlsx" || inner == ".xls")) {
    meta["format"] = "spreadsheet-export";
    stem = stem.stem();
  } else {
    meta["format"] = ext.substr(1);
  }
  meta["title"] = stem.string();

  auto finish = [&](std::string body, std::string row_key,
                    std::map<std::string, std::string> md, DocumentKind kind) {
    SourceDocument doc;
    doc.text = normalize_text(body);
    if (doc.text.empty()) throw Error(ErrorCode::EmptyDocument, shown + " normalizes to empty text");
    doc.source_path = shown;
    doc.doc_id = make_doc_id(shown, row_key, doc.text);
    doc.language = options.language_hint ? *options.language_hint : detect_language(doc.text);
    doc.kind = kind;
    doc.metadata = std::move(md);
    return doc;
  };

  std::vector<SourceDocument> out;
  if (ext != ".csv") {
    out.push_back(finish(decoded, "", meta, DocumentKind::Prose));
    return out;
  }

  const auto records = parse_csv(decoded);
  if (records.size() < 2) throw Error(ErrorCode::EmptyDocument, shown + " has no data rows");
  const auto& header = records.front();
  meta["sheet"] = meta["title"];
  if (options.spreadsheet_mode == SpreadsheetMode::Separate) {
    for (std::size_t r = 1; r < records.size(); ++r) {
      auto md = meta;
      md["row"] = std::to_string(r);
      out.push_back(finish(row_text(header, records[r]), "row" + std::to_string(r), std::move(md),
                           DocumentKind::Tabular));
    }
  } else {
    std::string body;
    for (std::size_t r = 1; r < records.size(); ++r) {
      if (r > 1) body += '\n';
      body += row_text(header, records[r]);
    }
    auto md = meta;
    md["rows"] = std::to_string(records.size() - 1);
    out.push_back(finish(std::move(body), "", std::move(md), DocumentKind::Tabular));
  }
  return out;
}

Corpus ingest_directory(const fs::path& dir, const IngestOptions& options) {
  if (!fs::is_directory(dir)) throw Error(ErrorCode::IoError, dir.string() + " is not a directory");

  std::vector<fs::path> files;
  std::vector<std::string> warnings;
  for (const auto& entry : fs::recursive_directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    if (is_supported_source(entry.path())) {
      files.push_back(entry.path());
    } else {
      warnings.push_back("skipped unsupported file " +
                         fs::relative(entry.path(), dir).generic_string());
    }
  }
  std::sort(files.begin(), files.end());

  Corpus corpus;
  corpus.manifest.ingest_options = options;
  corpus.manifest.source_root = fs::absolute(dir).lexically_normal().generic_string();
  corpus.manifest.created_at = utc_timestamp();
  for (const auto& file : files) {
    const std::string rel = fs::relative(file, dir).generic_string();
    try {
      auto docs = ingest_file(file, options, rel);
      for (auto& d : docs) corpus.documents.push_back(std::move(d));
      ++corpus.manifest.files_ingested;
    } catch (const Error& e) {
      if (e.code() != ErrorCode::EmptyDocument) throw;
      warnings.push_back(e.what());
    }
  }
  std::sort(corpus.documents.begin(), corpus.documents.end(),
            [](const SourceDocument& a, const SourceDocument& b) { return a.doc_id < b.doc_id; });
  for (std::size_t i = 1; i < corpus.documents.size(); ++i) {
    if (corpus.documents[i].doc_id == corpus.documents[i - 1].doc_id) {
      throw Error(ErrorCode::InvalidArgument, "duplicate doc_id " + corpus.documents[i].doc_id);
    }
  }
  for (const auto& d : corpus.documents) {
    corpus.manifest.documents.push_back(
        {d.doc_id, d.source_path, d.language, d.kind, text::char_count(d.text), d.metadata});
  }
  corpus.manifest.warnings = std::move(warnings);
  return corpus;
}

void to_json(nlohmann::json& j, const SourceDocument& d) {
  j = {{"doc_id", d.doc_id},     {"source_path", d.source_path},
       {"text", d.text},         {"language", d.language},
       {"kind", to_string(d.kind)}, {"metadata", d.metadata}};
}

void from_json(const nlohmann::json& j, SourceDocument& d) {
  d.doc_id = j.at("doc_id").get<std::string>();
  d.source_path = j.at("source_path").get<std::string>();
  d.text = j.at("text").get<std::string>();
  d.language = j.value("language", "und");
  d.kind = j.value("kind", "prose") == "tabular" ? DocumentKind::Tabular : DocumentKind::Prose;
  d.metadata = j.value("metadata", std::map<std::string, std::string>{});
}

void to_json(nlohmann::json& j, const CorpusManifest& m) {
  nlohmann::json docs = nlohmann::json::array();
  for (const auto& d : m.documents) {
    docs.push_back({{"doc_id", d.doc_id},
                    {"source_path", d.source_path},
                    {"language", d.language},
                    {"kind", to_string(d.kind)},
                    {"chars", d.chars},
                    {"metadata", d.metadata}});
  }
  nlohmann::json opts = {{"spreadsheet_mode", to_string(m.ingest_options.spreadsheet_mode)},
                         {"pdf_text_only", m.ingest_options.pdf_text_only}};
  if (m.ingest_options.language_hint) opts["language_hint"] = *m.ingest_options.language_hint;
  j = {{"documents", docs},
       {"count", m.documents.size()},
       {"files_ingested", m.files_ingested},
       {"created_at", m.created_at},
       {"source_root", m.source_root},
       {"ingest_options", opts},
       {"warnings", m.warnings}};
}

void from_json(const nlohmann::json& j, CorpusManifest& m) {
  m = CorpusManifest{};
  for (const auto& d : j.at("documents")) {
    m.documents.push_back({d.at("doc_id").get<std::string>(), d.at("source_path").get<std::string>(),
                           d.value("language", "und"),
                           d.value("kind", "prose") == "tabular" ? DocumentKind::Tabular
                                                                 : DocumentKind::Prose,
                           d.value("chars", std::size_t{0}),
                           d.value("metadata", std::map<std::string, std::string>{})});
  }
  m.created_at = j.value("created_at", "");
  m.source_root = j.value("source_root", "");
  m.files_ingested = j.value("files_ingested", m.documents.size());
  m.warnings = j.value("warnings", std::vector<std::string>{});
  const auto& opts = j.at("ingest_options");
  m.ingest_options.spreadsheet_mode =
      spreadsheet_mode_from_string(opts.value("spreadsheet_mode", "standard"));
  m.ingest_options.pdf_text_only = opts.value("pdf_text_only", true);
  if (opts.contains("language_hint")) {
    m.ingest_options.language_hint = opts["language_hint"].get<std::string>();
  }
}

void write_corpus(const Corpus& corpus, const fs::path& out_dir) {
  fs::create_directories(out_dir);
  {
    std::ofstream out(out_dir / "manifest.json");
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + (out_dir / "manifest.json").string());
    out << nlohmann::json(corpus.manifest).dump(2) << '\n';
  }
  std::ofstream out(out_dir / "documents.jsonl");
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + (out_dir / "documents.jsonl").string());
  for (const auto& d : corpus.documents) out << nlohmann::json(d).dump() << '\n';
}

Corpus read_corpus(const fs::path& corpus_dir) {
  Corpus corpus;
  try {
    corpus.manifest = nlohmann::json::parse(read_file(corpus_dir / "manifest.json"))
                          .get<CorpusManifest>();
    std::istringstream lines(read_file(corpus_dir / "documents.jsonl"));
    for (std::string line; std::getline(lines, line);) {
      if (text::trim(line).empty()) continue;
      corpus.documents.push_back(nlohmann::json::parse(line).get<SourceDocument>());
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::IoError, "malformed corpus in " + corpus_dir.string() + ": " + e.what());
  }
  return corpus;
}

}  // namespace qf
