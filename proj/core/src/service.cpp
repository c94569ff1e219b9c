#include "qf/service.hpp"

#include <atomic>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <mutex>
#include <shared_mutex>
#include <sstream>
#include <thread>

#include <httplib.h>

#include "qf/corpus.hpp"
#include "qf/error.hpp"
#include "qf/splitter.hpp"
#include "qf/vindex.hpp"

namespace qf {

namespace fs = std::filesystem;
using nlohmann::json;

std::string_view to_string(ReviewState s) noexcept {
  switch (s) {
    case ReviewState::Pending: return "pending";
    case ReviewState::Accepted: return "accepted";
    case ReviewState::Edited: return "edited";
    case ReviewState::Rejected: return "rejected";
  }
  return "pending";
}

ReviewState review_state_from_string(std::string_view s) {
  if (s == "pending") return ReviewState::Pending;
  if (s == "accepted") return ReviewState::Accepted;
  if (s == "edited") return ReviewState::Edited;
  if (s == "rejected") return ReviewState::Rejected;
  throw Error(ErrorCode::InvalidArgument, "unknown review state: " + std::string(s));
}

int http_status_for(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::NotFound: return 404;
    case ErrorCode::Conflict: return 409;
    case ErrorCode::InvalidArgument:
    case ErrorCode::UnsupportedFormat:
    case ErrorCode::DecodeError:
    case ErrorCode::EmptyDocument:
    case ErrorCode::UnknownCode:
    case ErrorCode::EmptyInput:
    case ErrorCode::DuplicateChunkId: return 422;
    case ErrorCode::IoError: return 500;
    default: return 502;
  }
}

// ---- JSON -----------------------------------------------------------------

namespace {

std::string utc_now() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

json question_to_json(const Question& q) {
  return {{"question_id", q.question_id},
          {"question_text", q.question_text},
          {"reference_answer", q.reference_answer ? json(*q.reference_answer) : json(nullptr)}};
}

Question question_from_json(const json& j) {
  Question q;
  q.question_id = j.at("question_id").get<std::string>();
  q.question_text = j.at("question_text").get<std::string>();
  if (j.contains("reference_answer") && j["reference_answer"].is_string()) {
    q.reference_answer = j["reference_answer"].get<std::string>();
  }
  return q;
}

json review_to_json(const Review& r) {
  return {{"state", to_string(r.state)},
          {"revision", r.revision ? json(*r.revision) : json(nullptr)},
          {"edited_text", r.edited_text ? json(*r.edited_text) : json(nullptr)}};
}

Review review_from_json(const json& j) {
  Review r;
  r.state = review_state_from_string(j.at("state").get<std::string>());
  if (j.contains("revision") && j["revision"].is_number()) r.revision = j["revision"].get<std::size_t>();
  if (j.contains("edited_text") && j["edited_text"].is_string()) r.edited_text = j["edited_text"].get<std::string>();
  return r;
}

}  // namespace

json session_to_json(const Session& s) {
  json questions = json::array();
  for (const auto& q : s.questions) questions.push_back(question_to_json(q));
  json answers = json::object();
  for (const auto& [qid, history] : s.answers) answers[qid] = history;
  json reviews = json::object();
  json states = json::object();
  for (const auto& [qid, r] : s.reviews) {
    reviews[qid] = review_to_json(r);
    states[qid] = to_string(r.state);
  }
  return {{"session_id", s.session_id}, {"corpus_id", s.corpus_id},
          {"questions", questions},     {"answers", answers},
          {"reviews", reviews},         {"review_state", states},
          {"active_config", s.active_config}, {"created_at", s.created_at}};
}

Session session_from_json(const json& j) {
  Session s;
  s.session_id = j.at("session_id").get<std::string>();
  s.corpus_id = j.at("corpus_id").get<std::string>();
  for (const auto& q : j.at("questions")) s.questions.push_back(question_from_json(q));
  for (const auto& [qid, history] : j.at("answers").items()) {
    s.answers[qid] = history.get<std::vector<AnswerRecord>>();
  }
  for (const auto& [qid, r] : j.at("reviews").items()) s.reviews[qid] = review_from_json(r);
  s.active_config = j.at("active_config").get<PipelineConfig>();
  s.created_at = j.value("created_at", "");
  return s;
}

json corpus_info_to_json(const CorpusInfo& c) {
  return {{"corpus_id", c.corpus_id},   {"name", c.name},
          {"corpus_dir", c.corpus_dir.generic_string()},
          {"documents", c.documents},   {"chunks", c.chunks},
          {"warnings", c.warnings},     {"created_at", c.created_at}};
}

CorpusInfo corpus_info_from_json(const json& j) {
  CorpusInfo c;
  c.corpus_id = j.at("corpus_id").get<std::string>();
  c.name = j.value("name", "");
  c.corpus_dir = j.at("corpus_dir").get<std::string>();
  c.documents = j.value("documents", std::size_t{0});
  c.chunks = j.value("chunks", std::size_t{0});
  c.warnings = j.value("warnings", std::vector<std::string>{});
  c.created_at = j.value("created_at", "");
  return c;
}

// ---- Persistent store -----------------------------------------------------

namespace {

// Event log plus snapshot. The store keeps its own materialized JSON view,
// updated by the same function that replays the log, so snapshots never
// need to lock live sessions.
class Store {
 public:
  Store(fs::path dir, int snapshot_every) : dir_(std::move(dir)), snapshot_every_(snapshot_every) {
    fs::create_directories(dir_);
    state_ = {{"seq", 0}, {"corpora", json::object()}, {"sessions", json::object()}};
    if (std::ifstream in(dir_ / "snapshot.json"); in) {
      try {
        in >> state_;
      } catch (const json::exception& e) {
        throw Error(ErrorCode::IoError, std::string("unreadable snapshot: ") + e.what());
      }
    }
    if (std::ifstream in(dir_ / "events.jsonl"); in) {
      std::string line;
      while (std::getline(in, line)) {
        if (line.empty()) continue;
        json ev;
        try {
          ev = json::parse(line);
        } catch (const json::exception&) {
          break;  // torn final write
        }
        if (ev.at("seq").get<std::uint64_t>() > state_["seq"].get<std::uint64_t>()) apply(ev);
      }
    }
    log_.open(dir_ / "events.jsonl", std::ios::app | std::ios::binary);
    if (!log_) throw Error(ErrorCode::IoError, "cannot open event log in " + dir_.string());
  }

  const json& state() const { return state_; }

  void append(json ev) {
    std::lock_guard lock(mu_);
    ev["seq"] = state_["seq"].get<std::uint64_t>() + 1;
    log_ << ev.dump() << '\n';
    log_.flush();
    if (!log_) throw Error(ErrorCode::IoError, "event log write failed");
    apply(ev);
    if (snapshot_every_ > 0 && ++since_snapshot_ >= snapshot_every_) snapshot_locked();
  }

  void snapshot() {
    std::lock_guard lock(mu_);
    snapshot_locked();
  }

 private:
  void apply(const json& ev) {
    const std::string type = ev.at("type").get<std::string>();
    if (type == "corpus") {
      state_["corpora"][ev["corpus"]["corpus_id"].get<std::string>()] = ev["corpus"];
    } else if (type == "session") {
      state_["sessions"][ev["session"]["session_id"].get<std::string>()] = ev["session"];
    } else if (type == "answer") {
      auto& s = state_["sessions"][ev["session_id"].get<std::string>()];
      s["answers"][ev["question_id"].get<std::string>()].push_back(ev["record"]);
    } else if (type == "review") {
      auto& s = state_["sessions"][ev["session_id"].get<std::string>()];
      const std::string qid = ev["question_id"].get<std::string>();
      s["reviews"][qid] = ev["review"];
      s["review_state"][qid] = ev["review"]["state"];
    }
    state_["seq"] = ev.at("seq");
  }

  void snapshot_locked() {
    const fs::path tmp = dir_ / "snapshot.json.tmp";
    {
      std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
      out << state_.dump();
      if (!out) throw Error(ErrorCode::IoError, "snapshot write failed");
    }
    fs::rename(tmp, dir_ / "snapshot.json");
    log_.close();
    log_.open(dir_ / "events.jsonl", std::ios::trunc | std::ios::binary);
    log_.close();
    log_.open(dir_ / "events.jsonl", std::ios::app | std::ios::binary);
    since_snapshot_ = 0;
  }

  fs::path dir_;
  int snapshot_every_;
  std::mutex mu_;
  std::ofstream log_;
  json state_;
  int since_snapshot_ = 0;
};

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string out = "\"";
  for (const char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string make_id(const char* prefix, std::size_t n) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s-%04zu", prefix, n);
  return buf;
}

}  // namespace

// ---- SessionService -------------------------------------------------------

struct SessionService::State {
  struct Slot {
    std::mutex mu;
    Session session;
  };

  explicit State(AppConfig c)
      : cfg(std::move(c)), embedder(cfg.resolved_embedder()), store(cfg.data_dir, cfg.snapshot_every) {}

  AppConfig cfg;
  Embedder embedder;
  Store store;

  mutable std::shared_mutex mu;
  std::map<std::string, CorpusInfo> corpora;
  std::map<std::string, std::shared_ptr<Slot>> sessions;
  std::size_t next_corpus = 1;
  std::size_t next_session = 1;

  std::mutex index_mu;
  std::map<std::string, std::shared_ptr<const VectorIndex>> indexes;
  std::map<std::string, std::shared_ptr<const std::vector<SourceDocument>>> documents;

  std::shared_ptr<Slot> slot(const std::string& id) const {
    std::shared_lock lock(mu);
    const auto it = sessions.find(id);
    if (it == sessions.end()) throw Error(ErrorCode::NotFound, "unknown session " + id);
    return it->second;
  }

  CorpusInfo corpus(const std::string& id) const {
    std::shared_lock lock(mu);
    const auto it = corpora.find(id);
    if (it == corpora.end()) throw Error(ErrorCode::NotFound, "unknown corpus " + id);
    return it->second;
  }

  std::shared_ptr<const std::vector<SourceDocument>> docs_for(const CorpusInfo& info,
                                                              SpreadsheetMode mode) {
    const std::string key = info.corpus_id + "/" + std::string(to_string(mode));
    if (auto it = documents.find(key); it != documents.end()) return it->second;
    Corpus c = read_corpus(info.corpus_dir);
    if (c.manifest.ingest_options.spreadsheet_mode != mode) {
      IngestOptions opts = c.manifest.ingest_options;
      opts.spreadsheet_mode = mode;
      c = ingest_directory(c.manifest.source_root, opts);
    }
    auto docs = std::make_shared<const std::vector<SourceDocument>>(std::move(c.documents));
    documents.emplace(key, docs);
    return docs;
  }

  std::shared_ptr<const VectorIndex> index_for(const CorpusInfo& info, const PipelineConfig& cfg) {
    const std::string key = info.corpus_id + "/" + std::string(to_string(cfg.spreadsheet_mode)) + "/" +
                            std::to_string(cfg.chunk_size) + "/" + std::to_string(cfg.overlap) + "/" +
                            std::string(to_string(cfg.strategy));
    std::lock_guard lock(index_mu);
    if (auto it = indexes.find(key); it != indexes.end()) return it->second;
    const auto docs = docs_for(info, cfg.spreadsheet_mode);
    const auto chunks = split_all(*docs, cfg.split_config());
    if (chunks.empty()) throw Error(ErrorCode::EmptyIndex, "corpus " + info.corpus_id + " has no chunks");
    std::vector<std::string> texts;
    texts.reserve(chunks.size());
    for (const auto& c : chunks) texts.push_back(c.text);
    auto vectors = embedder.embed_batch(texts);
    auto index = std::make_shared<VectorIndex>(vectors.front().dim(), embedder.model_tag());
    std::vector<std::pair<Chunk, EmbeddingVector>> entries;
    entries.reserve(chunks.size());
    for (std::size_t i = 0; i < chunks.size(); ++i) entries.emplace_back(chunks[i], std::move(vectors[i]));
    index->add(entries);
    indexes.emplace(key, index);
    return index;
  }

  PipelineConfig default_config() const {
    PipelineConfig c;
    c.k = cfg.k;
    c.lambda = cfg.lambda;
    c.fetch_k = cfg.fetch_k;
    c.overlap = cfg.overlap;
    c.strategy = cfg.strategy;
    return c;
  }

  CorpusInfo register_corpus(const std::string& id, const std::string& name, const fs::path& corpus_dir,
                             const Corpus& corpus) {
    CorpusInfo info;
    info.corpus_id = id;
    info.name = name;
    info.corpus_dir = corpus_dir;
    info.documents = corpus.documents.size();
    info.warnings = corpus.manifest.warnings;
    info.created_at = utc_now();
    PipelineConfig def = default_config();
    def.spreadsheet_mode = corpus.manifest.ingest_options.spreadsheet_mode;
    info.chunks = index_for(info, def)->size();
    store.append({{"type", "corpus"}, {"corpus", corpus_info_to_json(info)}});
    std::unique_lock lock(mu);
    corpora[id] = info;
    return info;
  }
};

SessionService::SessionService(AppConfig cfg) : state_(std::make_unique<State>(std::move(cfg))) {
  auto& st = *state_;
  for (const auto& [id, c] : st.store.state()["corpora"].items()) {
    st.corpora[id] = corpus_info_from_json(c);
  }
  for (const auto& [id, s] : st.store.state()["sessions"].items()) {
    auto slot = std::make_shared<State::Slot>();
    slot->session = session_from_json(s);
    st.sessions[id] = std::move(slot);
  }
  st.next_corpus = st.corpora.size() + 1;
  st.next_session = st.sessions.size() + 1;
}

SessionService::~SessionService() = default;

const AppConfig& SessionService::config() const noexcept { return state_->cfg; }

CorpusInfo SessionService::create_corpus(const std::string& name, const std::vector<UploadedFile>& files,
                                         SpreadsheetMode mode) {
  if (files.empty()) throw Error(ErrorCode::InvalidArgument, "no files uploaded");
  auto& st = *state_;
  std::string id;
  {
    std::unique_lock lock(st.mu);
    id = make_id("corpus", st.next_corpus++);
  }
  const fs::path root = st.cfg.data_dir / "corpora" / id;
  const fs::path src = root / "src";
  fs::create_directories(src);
  for (const auto& f : files) {
    const fs::path leaf = fs::path(f.filename).filename();
    if (leaf.empty() || leaf == "." || leaf == "..") {
      throw Error(ErrorCode::InvalidArgument, "bad upload filename: " + f.filename);
    }
    std::ofstream out(src / leaf, std::ios::binary | std::ios::trunc);
    out << f.content;
    if (!out) throw Error(ErrorCode::IoError, "cannot store upload " + leaf.string());
  }
  IngestOptions opts;
  opts.spreadsheet_mode = mode;
  Corpus corpus = ingest_directory(src, opts);
  if (corpus.documents.empty()) throw Error(ErrorCode::EmptyDocument, "no ingestible documents uploaded");
  write_corpus(corpus, root / "corpus");
  return st.register_corpus(id, name, root / "corpus", corpus);
}

CorpusInfo SessionService::create_corpus_from_dir(const std::string& name, const fs::path& dir,
                                                  SpreadsheetMode mode) {
  auto& st = *state_;
  if (!fs::is_directory(dir)) throw Error(ErrorCode::NotFound, "no such directory " + dir.string());
  std::string id;
  {
    std::unique_lock lock(st.mu);
    id = make_id("corpus", st.next_corpus++);
  }
  IngestOptions opts;
  opts.spreadsheet_mode = mode;
  Corpus corpus = ingest_directory(dir, opts);
  if (corpus.documents.empty()) throw Error(ErrorCode::EmptyDocument, "no ingestible documents in " + dir.string());
  const fs::path out = st.cfg.data_dir / "corpora" / id / "corpus";
  write_corpus(corpus, out);
  return st.register_corpus(id, name, out, corpus);
}

std::vector<CorpusInfo> SessionService::corpora() const {
  std::shared_lock lock(state_->mu);
  std::vector<CorpusInfo> out;
  for (const auto& [id, c] : state_->corpora) out.push_back(c);
  return out;
}

CorpusInfo SessionService::corpus(const std::string& corpus_id) const { return state_->corpus(corpus_id); }

Session SessionService::create_session(const std::string& corpus_id, std::vector<Question> questions,
                                       const std::string& config_code) {
  auto& st = *state_;
  st.corpus(corpus_id);
  if (questions.empty()) throw Error(ErrorCode::InvalidArgument, "questionnaire has no questions");
  PipelineConfig cfg = st.default_config();
  const PipelineConfig parsed = parse_config_code(config_code);
  cfg.code = parsed.code;
  cfg.retrieval = parsed.retrieval;
  cfg.model_role = parsed.model_role;
  cfg.placement = parsed.placement;
  cfg.chunk_size = parsed.chunk_size;
  cfg.spreadsheet_mode = parsed.spreadsheet_mode;
  cfg.validate();

  auto slot = std::make_shared<State::Slot>();
  Session& s = slot->session;
  s.corpus_id = corpus_id;
  s.questions = std::move(questions);
  for (const auto& q : s.questions) s.reviews[q.question_id] = Review{};
  s.active_config = cfg;
  s.created_at = utc_now();
  {
    std::unique_lock lock(st.mu);
    s.session_id = make_id("session", st.next_session++);
    st.store.append({{"type", "session"}, {"session", session_to_json(s)}});
    st.sessions[s.session_id] = slot;
  }
  return s;
}

std::vector<Session> SessionService::sessions() const {
  std::vector<std::shared_ptr<State::Slot>> slots;
  {
    std::shared_lock lock(state_->mu);
    for (const auto& [id, slot] : state_->sessions) slots.push_back(slot);
  }
  std::vector<Session> out;
  for (const auto& slot : slots) {
    std::lock_guard lock(slot->mu);
    out.push_back(slot->session);
  }
  return out;
}

Session SessionService::session(const std::string& session_id) const {
  const auto slot = state_->slot(session_id);
  std::lock_guard lock(slot->mu);
  return slot->session;
}

AnswerRecord SessionService::generate(const std::string& session_id, const std::string& question_id,
                                      const json& config_overrides) {
  auto& st = *state_;
  const auto slot = st.slot(session_id);
  std::lock_guard lock(slot->mu);
  Session& s = slot->session;
  const auto q = std::find_if(s.questions.begin(), s.questions.end(),
                              [&](const Question& x) { return x.question_id == question_id; });
  if (q == s.questions.end()) throw Error(ErrorCode::NotFound, "unknown question " + question_id);

  PipelineConfig cfg =
      apply_overrides(s.active_config, config_overrides.is_null() ? json::object() : config_overrides);
  try {
    cfg.code = format_config_code(cfg);
  } catch (const Error&) {
    cfg.code = "custom";
  }
  const auto index = st.index_for(st.corpus(s.corpus_id), cfg);
  GenerationConfig gen_cfg = st.cfg.generation;
  gen_cfg.model_name = cfg.model_role == ModelRole::LlamaLike ? st.cfg.llama_model : st.cfg.mistral_model;
  const Generator generator(gen_cfg);
  PipelineSettings settings;
  settings.retrieval = cfg.retrieval_config();
  settings.placement = cfg.placement;
  settings.max_prompt_chars = st.cfg.max_prompt_chars;
  settings.resource_dir = st.cfg.resource_dir;
  const RagPipeline pipeline(*index, st.embedder, generator, settings);
  AnswerRecord rec = pipeline.answer(*q, cfg.code);
  if (rec.error) {
    const std::string& msg = *rec.error;
    const auto colon = msg.find(':');
    const auto code = error_code_from_string(msg.substr(0, colon));
    throw Error(code.value_or(ErrorCode::EndpointUnreachable),
                colon == std::string::npos ? msg : msg.substr(colon + 2));
  }
  st.store.append({{"type", "answer"},
                   {"session_id", session_id},
                   {"question_id", question_id},
                   {"record", rec}});
  s.answers[question_id].push_back(rec);
  return rec;
}

Review SessionService::review(const std::string& session_id, const std::string& question_id,
                              ReviewState state, std::optional<std::string> edited_text,
                              std::optional<std::size_t> revision) {
  auto& st = *state_;
  const auto slot = st.slot(session_id);
  std::lock_guard lock(slot->mu);
  Session& s = slot->session;
  if (!s.reviews.count(question_id)) throw Error(ErrorCode::NotFound, "unknown question " + question_id);
  const auto it = s.answers.find(question_id);
  if (it == s.answers.end() || it->second.empty()) {
    throw Error(ErrorCode::Conflict, "question " + question_id + " has no answer to review");
  }
  if (state == ReviewState::Edited && !edited_text) {
    throw Error(ErrorCode::InvalidArgument, "edited review needs edited_text");
  }
  Review r;
  r.state = state;
  r.revision = revision.value_or(it->second.size() - 1);
  if (*r.revision >= it->second.size()) {
    throw Error(ErrorCode::Conflict, "revision " + std::to_string(*r.revision) + " does not exist");
  }
  if (state == ReviewState::Edited) r.edited_text = std::move(edited_text);
  st.store.append({{"type", "review"},
                   {"session_id", session_id},
                   {"question_id", question_id},
                   {"review", review_to_json(r)}});
  s.reviews[question_id] = r;
  return r;
}

std::string SessionService::export_session(const std::string& session_id, std::string_view format) const {
  const Session s = session(session_id);
  auto final_text = [&](const Question& q) -> std::optional<std::string> {
    const auto it = s.reviews.find(q.question_id);
    if (it == s.reviews.end()) return std::nullopt;
    const Review& r = it->second;
    if (r.state == ReviewState::Edited) return r.edited_text;
    if (r.state == ReviewState::Accepted) return s.answers.at(q.question_id).at(*r.revision).final_answer;
    return std::nullopt;
  };
  if (format == "csv") {
    std::string out = "question_id,question_text,answer,review_state\n";
    for (const auto& q : s.questions) {
      out += csv_field(q.question_id) + "," + csv_field(q.question_text) + "," +
             csv_field(final_text(q).value_or("")) + "," +
             std::string(to_string(s.reviews.at(q.question_id).state)) + "\n";
    }
    return out;
  }
  if (format == "json") {
    json rows = json::array();
    for (const auto& q : s.questions) {
      const auto text = final_text(q);
      const Review& r = s.reviews.at(q.question_id);
      rows.push_back({{"question_id", q.question_id},
                      {"question_text", q.question_text},
                      {"answer", text ? json(*text) : json(nullptr)},
                      {"review_state", to_string(r.state)},
                      {"revision", text && r.revision ? json(*r.revision) : json(nullptr)}});
    }
    return json{{"session_id", s.session_id}, {"questions", rows}}.dump(2);
  }
  throw Error(ErrorCode::InvalidArgument, "export format must be csv or json");
}

json SessionService::schema() {
  return {
      {"config_overrides",
       {{"retrieval", {{"type", "enum"}, {"values", {"similarity", "mmr"}}, {"default", "similarity"}}},
        {"k", {{"type", "integer"}, {"minimum", 1}, {"default", 20}}},
        {"lambda", {{"type", "number"}, {"minimum", 0.0}, {"maximum", 1.0}, {"default", 0.5}}},
        {"fetch_k", {{"type", "integer"}, {"minimum", 0}, {"default", 0}}},
        {"placement", {{"type", "enum"}, {"values", {"O_start", "N_start_and_end"}}}},
        {"model_role", {{"type", "enum"}, {"values", {"llama_like", "mistral_like"}}}},
        {"chunk_size", {{"type", "integer"}, {"minimum", 1}, {"examples", {150, 512}}}},
        {"overlap", {{"type", "integer"}, {"minimum", 0}, {"default", 0}}},
        {"strategy", {{"type", "enum"}, {"values", {"recursive", "flat"}}}},
        {"spreadsheet_mode", {{"type", "enum"}, {"values", {"standard", "separate"}}}}}},
      {"config_codes", standard_config_codes()},
      {"review_states", {"pending", "accepted", "edited", "rejected"}},
      {"export_formats", {"csv", "json"}}};
}

void SessionService::snapshot() { state_->store.snapshot(); }

// ---- HTTP -----------------------------------------------------------------

struct HttpService::Impl {
  explicit Impl(AppConfig cfg) : service(cfg), cfg(std::move(cfg)) {}

  SessionService service;
  AppConfig cfg;
  httplib::Server server;
  std::thread thread;
  int port = 0;
};

namespace {

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, std::string_view code, std::string_view message) {
  send_json(res, status, {{"error", code}, {"message", message}});
}

template <typename F>
httplib::Server::Handler guarded(F f) {
  return [f](const httplib::Request& req, httplib::Response& res) {
    try {
      f(req, res);
    } catch (const Error& e) {
      send_error(res, http_status_for(e.code()), to_string(e.code()), e.what());
    } catch (const json::exception& e) {
      send_error(res, 400, "BadRequest", e.what());
    } catch (const std::exception& e) {
      send_error(res, 500, "InternalError", e.what());
    }
  };
}

json body_json(const httplib::Request& req) {
  if (req.body.empty()) return json::object();
  json j = json::parse(req.body);
  if (!j.is_object()) throw Error(ErrorCode::InvalidArgument, "request body must be a JSON object");
  return j;
}

std::string form_field(const httplib::Request& req, const std::string& key) {
  return req.has_file(key) ? req.get_file_value(key).content : std::string();
}

std::vector<Question> questions_from(const json& q, const std::string& format) {
  if (q.is_string()) return parse_questionnaire(q.get<std::string>(), format == "jsonl");
  if (q.is_array()) {
    std::string lines;
    for (const auto& item : q) lines += item.dump() + "\n";
    return parse_questionnaire(lines, true);
  }
  throw Error(ErrorCode::InvalidArgument, "questionnaire must be CSV text or an array of questions");
}

bool is_jsonl_name(const std::string& name) {
  const std::string ext = fs::path(name).extension().string();
  return ext == ".jsonl" || ext == ".json";
}

}  // namespace

HttpService::HttpService(AppConfig cfg) : impl_(std::make_unique<Impl>(std::move(cfg))) {
  auto& srv = impl_->server;
  auto& svc = impl_->service;

  if (!impl_->cfg.auth_token.empty()) {
    const std::string expected = "Bearer " + impl_->cfg.auth_token;
    srv.set_pre_routing_handler([expected](const httplib::Request& req, httplib::Response& res) {
      if (req.path.rfind("/api/", 0) == 0 && req.get_header_value("Authorization") != expected) {
        send_error(res, 401, "Unauthorized", "missing or wrong bearer token");
        return httplib::Server::HandlerResponse::Handled;
      }
      return httplib::Server::HandlerResponse::Unhandled;
    });
  }

  srv.Get("/api/health", guarded([](const httplib::Request&, httplib::Response& res) {
            send_json(res, 200, {{"status", "ok"}});
          }));
  srv.Get("/api/schema", guarded([](const httplib::Request&, httplib::Response& res) {
            send_json(res, 200, SessionService::schema());
          }));

  srv.Get("/api/corpora", guarded([&svc](const httplib::Request&, httplib::Response& res) {
            json out = json::array();
            for (const auto& c : svc.corpora()) out.push_back(corpus_info_to_json(c));
            send_json(res, 200, out);
          }));
  srv.Get(R"(/api/corpora/([^/]+))", guarded([&svc](const httplib::Request& req, httplib::Response& res) {
            send_json(res, 200, corpus_info_to_json(svc.corpus(req.matches[1])));
          }));
  srv.Post("/api/corpora", guarded([&svc](const httplib::Request& req, httplib::Response& res) {
             CorpusInfo info;
             if (req.is_multipart_form_data()) {
               std::vector<UploadedFile> files;
               for (const auto& [key, f] : req.files) {
                 if (!f.filename.empty()) files.push_back({f.filename, f.content});
               }
               const std::string mode = form_field(req, "spreadsheet_mode");
               info = svc.create_corpus(form_field(req, "name"), files,
                                        mode.empty() ? SpreadsheetMode::Standard
                                                     : spreadsheet_mode_from_string(mode));
             } else {
               const json body = body_json(req);
               const std::string name = body.value("name", "");
               const SpreadsheetMode mode =
                   spreadsheet_mode_from_string(body.value("spreadsheet_mode", "standard"));
               if (body.contains("path")) {
                 info = svc.create_corpus_from_dir(name, body["path"].get<std::string>(), mode);
               } else {
                 std::vector<UploadedFile> files;
                 for (const auto& f : body.value("files", json::array())) {
                   files.push_back({f.at("filename").get<std::string>(), f.at("content").get<std::string>()});
                 }
                 info = svc.create_corpus(name, files, mode);
               }
             }
             send_json(res, 201, corpus_info_to_json(info));
           }));

  srv.Get("/api/sessions", guarded([&svc](const httplib::Request&, httplib::Response& res) {
            json out = json::array();
            for (const auto& s : svc.sessions()) {
              std::size_t done = 0;
              for (const auto& [qid, r] : s.reviews) done += r.state != ReviewState::Pending ? 1 : 0;
              out.push_back({{"session_id", s.session_id},
                             {"corpus_id", s.corpus_id},
                             {"config_code", s.active_config.code},
                             {"questions", s.questions.size()},
                             {"reviewed", done},
                             {"created_at", s.created_at}});
            }
            send_json(res, 200, out);
          }));
  srv.Get(R"(/api/sessions/([^/]+))", guarded([&svc](const httplib::Request& req, httplib::Response& res) {
            send_json(res, 200, session_to_json(svc.session(req.matches[1])));
          }));
  srv.Post("/api/sessions", guarded([&svc](const httplib::Request& req, httplib::Response& res) {
             std::string corpus_id, code;
             std::vector<Question> questions;
             if (req.is_multipart_form_data()) {
               corpus_id = form_field(req, "corpus_id");
               code = form_field(req, "config_code");
               if (!req.has_file("questionnaire")) {
                 throw Error(ErrorCode::InvalidArgument, "missing questionnaire upload");
               }
               const auto f = req.get_file_value("questionnaire");
               questions = parse_questionnaire(f.content, is_jsonl_name(f.filename));
             } else {
               const json body = body_json(req);
               corpus_id = body.value("corpus_id", "");
               code = body.value("config_code", "");
               questions = questions_from(body.value("questionnaire", json()),
                                          body.value("questionnaire_format", "csv"));
             }
             if (code.empty()) code = "SLOB";
             send_json(res, 201, session_to_json(svc.create_session(corpus_id, std::move(questions), code)));
           }));
  srv.Post(R"(/api/sessions/([^/]+)/questions/([^/]+)/generate)",
           guarded([&svc](const httplib::Request& req, httplib::Response& res) {
             const json body = body_json(req);
             const AnswerRecord rec =
                 svc.generate(req.matches[1], req.matches[2], body.value("config_overrides", json::object()));
             send_json(res, 200, rec);
           }));
  srv.Post(R"(/api/sessions/([^/]+)/questions/([^/]+)/review)",
           guarded([&svc](const httplib::Request& req, httplib::Response& res) {
             const json body = body_json(req);
             std::optional<std::string> edited;
             if (body.contains("edited_text") && body["edited_text"].is_string()) {
               edited = body["edited_text"].get<std::string>();
             }
             std::optional<std::size_t> revision;
             if (body.contains("revision") && body["revision"].is_number_unsigned()) {
               revision = body["revision"].get<std::size_t>();
             }
             const Review r = svc.review(req.matches[1], req.matches[2],
                                         review_state_from_string(body.value("state", "")), edited, revision);
             json out = review_to_json(r);
             out["question_id"] = req.matches[2];
             send_json(res, 200, out);
           }));
  srv.Get(R"(/api/sessions/([^/]+)/export)", guarded([&svc](const httplib::Request& req, httplib::Response& res) {
            const std::string format = req.has_param("format") ? req.get_param_value("format") : "csv";
            const std::string body = svc.export_session(req.matches[1], format);
            res.status = 200;
            res.set_content(body, format == "csv" ? "text/csv; charset=utf-8" : "application/json");
          }));

  if (impl_->cfg.ui_dir && fs::is_directory(*impl_->cfg.ui_dir)) {
    srv.set_mount_point("/", impl_->cfg.ui_dir->string());
  }
}

HttpService::~HttpService() { stop(); }

SessionService& HttpService::sessions() noexcept { return impl_->service; }

int HttpService::start() {
  auto& srv = impl_->server;
  impl_->port = impl_->cfg.port == 0 ? srv.bind_to_any_port(impl_->cfg.host)
                                     : (srv.bind_to_port(impl_->cfg.host, impl_->cfg.port) ? impl_->cfg.port : -1);
  if (impl_->port < 0) {
    throw Error(ErrorCode::IoError, "cannot bind " + impl_->cfg.host + ":" + std::to_string(impl_->cfg.port));
  }
  impl_->thread = std::thread([&srv] { srv.listen_after_bind(); });
  srv.wait_until_ready();
  return impl_->port;
}

void HttpService::run() {
  start();
  if (impl_->thread.joinable()) impl_->thread.join();
}

void HttpService::stop() {
  if (!impl_) return;
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

}  // namespace qf
