#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "qf/config.hpp"
#include "qf/error.hpp"
#include "qf/expmatrix.hpp"
#include "qf/ragcore.hpp"

namespace qf {

enum class ReviewState { Pending, Accepted, Edited, Rejected };

std::string_view to_string(ReviewState s) noexcept;
ReviewState review_state_from_string(std::string_view s);

struct Review {
  ReviewState state = ReviewState::Pending;
  std::optional<std::size_t> revision;  // index into the answer history
  std::optional<std::string> edited_text;
};

struct Session {
  std::string session_id;
  std::string corpus_id;
  std::vector<Question> questions;
  std::map<std::string, std::vector<AnswerRecord>> answers;  // newest last
  std::map<std::string, Review> reviews;
  PipelineConfig active_config;
  std::string created_at;
};

struct CorpusInfo {
  std::string corpus_id;
  std::string name;
  std::filesystem::path corpus_dir;
  std::size_t documents = 0;
  std::size_t chunks = 0;  // under the default configuration
  std::vector<std::string> warnings;
  std::string created_at;
};

struct UploadedFile {
  std::string filename;
  std::string content;
};

nlohmann::json session_to_json(const Session& s);
Session session_from_json(const nlohmann::json& j);
nlohmann::json corpus_info_to_json(const CorpusInfo& c);
CorpusInfo corpus_info_from_json(const nlohmann::json& j);

// Session and corpus state behind the HTTP API. State lives in memory and
// is persisted to data_dir as a JSON-lines event log plus periodic
// snapshots, so a restart restores every session. Operations on one
// session are serialized; different sessions proceed concurrently.
class SessionService {
 public:
  explicit SessionService(AppConfig cfg);
  ~SessionService();
  SessionService(const SessionService&) = delete;
  SessionService& operator=(const SessionService&) = delete;

  // Ingests uploaded files (or a server-side directory) and builds the
  // default index.
  CorpusInfo create_corpus(const std::string& name, const std::vector<UploadedFile>& files,
                           SpreadsheetMode mode = SpreadsheetMode::Standard);
  CorpusInfo create_corpus_from_dir(const std::string& name, const std::filesystem::path& dir,
                                    SpreadsheetMode mode = SpreadsheetMode::Standard);
  std::vector<CorpusInfo> corpora() const;
  CorpusInfo corpus(const std::string& corpus_id) const;

  Session create_session(const std::string& corpus_id, std::vector<Question> questions,
                         const std::string& config_code);
  std::vector<Session> sessions() const;
  Session session(const std::string& session_id) const;

  // Appends a new revision. Pipeline failures throw qf::Error with the
  // pipeline's code and leave the history unchanged.
  AnswerRecord generate(const std::string& session_id, const std::string& question_id,
                        const nlohmann::json& config_overrides = nlohmann::json::object());

  // Conflict when the question has no answer yet.
  Review review(const std::string& session_id, const std::string& question_id, ReviewState state,
                std::optional<std::string> edited_text, std::optional<std::size_t> revision);

  // "csv" or "json".
  std::string export_session(const std::string& session_id, std::string_view format) const;

  static nlohmann::json schema();

  // Writes a snapshot and truncates the event log.
  void snapshot();

  const AppConfig& config() const noexcept;

 private:
  struct State;
  std::unique_ptr<State> state_;
};

// HTTP front end over SessionService.
class HttpService {
 public:
  explicit HttpService(AppConfig cfg);
  ~HttpService();
  HttpService(const HttpService&) = delete;
  HttpService& operator=(const HttpService&) = delete;

  SessionService& sessions() noexcept;

  // Binds (port 0 picks a free one), serves on a background thread and
  // returns the bound port.
  int start();
  // Blocks until stop() is called.
  void run();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

// Maps error codes onto HTTP statuses: 404, 409, 422 or 502.
int http_status_for(ErrorCode code) noexcept;

}  // namespace qf
