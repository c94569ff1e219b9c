// Acceptance suite: one PASS/FAIL line per criterion. Exit status is the
// number of failed criteria.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "mock_endpoint.hpp"
#include "qf/corpus.hpp"
#include "qf/error.hpp"
#include "qf/evalkit.hpp"
#include "qf/expmatrix.hpp"
#include "qf/splitter.hpp"
#include "qf/text.hpp"
#include "qf/vindex.hpp"
#include "test_paths.hpp"

namespace {

using namespace qf;
namespace fs = std::filesystem;

constexpr double kExactTol = 1e-9;
constexpr double kMeteorTol = 1e-6;

struct Outcome {
  bool pass = true;
  std::string detail;

  void check(bool ok, const std::string& what) {
    if (!ok && pass) detail = what;
    pass = pass && ok;
  }
};

// ---- 1 ----------------------------------------------------------------------

std::vector<std::pair<std::size_t, std::size_t>> windows(std::size_t len, std::size_t size, std::size_t overlap) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  if (len == 0) return out;
  for (std::size_t s = 0;; s += size - overlap) {
    const std::size_t e = std::min(s + size, len);
    out.emplace_back(s, e);
    if (e == len) return out;
  }
}

Outcome splitter_oracle() {
  Outcome o;
  std::size_t cases = 0;
  for (std::size_t len = 0; len <= 200; ++len) {
    SourceDocument doc;
    doc.doc_id = "d";
    std::vector<std::string> cps;
    for (std::size_t i = 0; i < len; ++i) {
      cps.push_back(i % 7 == 3 ? "\xC3\xA4" : i % 11 == 5 ? " " : std::string(1, static_cast<char>('a' + i % 26)));
      doc.text += cps.back();
    }
    for (std::size_t size = 1; size <= 20; ++size) {
      for (std::size_t overlap = 0; overlap < size; ++overlap) {
        SplitConfig cfg;
        cfg.strategy = SplitStrategy::Flat;
        cfg.chunk_size = size;
        cfg.overlap = overlap;
        const auto chunks = split_flat(doc, cfg);
        const auto want = windows(len, size, overlap);
        bool same = chunks.size() == want.size();
        for (std::size_t i = 0; same && i < want.size(); ++i) {
          std::string t;
          for (std::size_t p = want[i].first; p < want[i].second; ++p) t += cps[p];
          same = chunks[i].char_start == want[i].first && chunks[i].char_end == want[i].second && chunks[i].text == t;
        }
        std::ostringstream where;
        where << "len " << len << " size " << size << " overlap " << overlap;
        o.check(same, "window mismatch at " + where.str());
        if (overlap == 0) {
          std::string joined;
          for (const auto& c : chunks) joined += c.text;
          o.check(joined == doc.text, "not lossless at " + where.str());
        }
        ++cases;
      }
    }
  }
  if (o.pass) o.detail = std::to_string(cases) + " cases";
  return o;
}

// ---- 2, 3 -------------------------------------------------------------------

struct Instance {
  VectorIndex index{1, "t"};
  std::vector<std::vector<float>> vectors;
  std::vector<std::string> ids;
  std::vector<float> query;
};

Instance make_instance(std::mt19937& rng, std::size_t max_n, std::size_t max_dim, bool normalize) {
  Instance in;
  const std::size_t n = 1 + rng() % max_n;
  const std::size_t dim = 2 + rng() % (max_dim - 1);
  auto draw = [&] {
    std::vector<float> v(dim);
    for (auto& x : v) x = static_cast<float>(static_cast<int>(rng() % 5) - 2) * 0.25f;
    if (normalize) l2_normalize(v);
    return v;
  };
  in.index = VectorIndex(dim, "t");
  std::vector<std::pair<Chunk, EmbeddingVector>> entries;
  for (std::size_t i = 0; i < n; ++i) {
    in.vectors.push_back(draw());
    in.ids.push_back("c" + std::to_string(rng() % 100000) + "-" + std::to_string(i));
    Chunk c;
    c.chunk_id = in.ids.back();
    c.doc_id = "d";
    c.text = c.chunk_id;
    entries.emplace_back(c, EmbeddingVector{in.vectors.back(), "t"});
  }
  in.index.add(entries);
  in.query = draw();
  return in;
}

// Scoring arithmetic of the index: exact products summed in eight
// interleaved lanes combined in a fixed tree.
double dot(const std::vector<float>& a, const std::vector<float>& b) {
  double lane[8] = {};
  for (std::size_t i = 0; i < a.size(); ++i) lane[i % 8] += static_cast<double>(a[i]) * b[i];
  const double s = ((lane[0] + lane[4]) + (lane[2] + lane[6])) + ((lane[1] + lane[5]) + (lane[3] + lane[7]));
  return std::clamp(s, -1.0, 1.0);
}

std::vector<std::string> ids_of(const RetrievalResult& r) {
  std::vector<std::string> out;
  for (const auto& h : r.hits) out.push_back(h.chunk_id);
  return out;
}

Outcome similarity_exactness() {
  Outcome o;
  std::mt19937 rng(2024);
  std::size_t ties = 0;
  for (int round = 0; round < 200; ++round) {
    auto in = make_instance(rng, 1000, 64, false);
    const std::size_t k = 1 + rng() % 40;
    std::vector<std::pair<double, std::string>> all;
    for (std::size_t i = 0; i < in.vectors.size(); ++i) all.emplace_back(dot(in.query, in.vectors[i]), in.ids[i]);
    std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) {
      return a.first != b.first ? a.first > b.first : a.second < b.second;
    });
    for (std::size_t i = 1; i < all.size(); ++i) ties += all[i].first == all[i - 1].first ? 1 : 0;
    all.resize(std::min(k, all.size()));
    RetrievalConfig cfg;
    cfg.k = k;
    in.index.set_search_threads(round % 2 == 0 ? 1 : 4);
    const auto got = in.index.search_similarity(EmbeddingVector{in.query, "t"}, cfg);
    bool same = got.hits.size() == all.size();
    for (std::size_t i = 0; same && i < all.size(); ++i) {
      same = got.hits[i].chunk_id == all[i].second && got.hits[i].score == all[i].first;
    }
    o.check(same, "instance " + std::to_string(round) + " differs from scan");
    o.check(got == in.index.search_similarity(EmbeddingVector{in.query, "t"}, cfg),
            "instance " + std::to_string(round) + " not repeatable");
  }
  if (o.pass) o.detail = "200 instances, " + std::to_string(ties) + " tied neighbours";
  return o;
}

std::vector<std::size_t> greedy_oracle(const std::vector<double>& q, const std::vector<std::vector<double>>& s,
                                       const std::vector<std::string>& ids, std::size_t k, double lambda) {
  std::vector<std::size_t> chosen;
  while (chosen.size() < std::min(k, q.size())) {
    std::optional<std::size_t> best;
    double best_v = 0;
    for (std::size_t c = 0; c < q.size(); ++c) {
      if (std::find(chosen.begin(), chosen.end(), c) != chosen.end()) continue;
      double v = q[c];
      if (!chosen.empty()) {
        double red = -1e300;
        for (const auto x : chosen) red = std::max(red, s[x][c]);
        v = lambda * q[c] - (1 - lambda) * red;
      }
      if (!best || v > best_v || (v == best_v && ids[c] < ids[*best])) {
        best = c;
        best_v = v;
      }
    }
    chosen.push_back(*best);
  }
  return chosen;
}

Outcome mmr_correctness() {
  Outcome o;
  std::mt19937 rng(7);
  for (int round = 0; round < 200; ++round) {
    auto in = make_instance(rng, 300, 32, true);
    RetrievalConfig cfg;
    cfg.technique = RetrievalTechnique::Mmr;
    cfg.k = 1 + rng() % 20;
    cfg.lambda = 1.0;
    RetrievalConfig sim = cfg;
    sim.technique = RetrievalTechnique::Similarity;
    const EmbeddingVector qv{in.query, "t"};
    o.check(ids_of(in.index.search_mmr(qv, cfg)) == ids_of(in.index.search_similarity(qv, sim)),
            "lambda=1 differs from top-k on instance " + std::to_string(round));
  }
  std::size_t oracle_cases = 0;
  for (int round = 0; round < 300; ++round) {
    auto in = make_instance(rng, 8, 6, true);
    const std::size_t n = in.vectors.size();
    const EmbeddingVector qv{in.query, "t"};
    RetrievalConfig all;
    all.k = n;
    const auto pool = in.index.search_similarity(qv, all);
    std::vector<double> q;
    std::vector<std::string> ids;
    std::vector<std::vector<float>> vecs;
    for (const auto& h : pool.hits) {
      q.push_back(h.score);
      ids.push_back(h.chunk_id);
      vecs.push_back(in.vectors[static_cast<std::size_t>(std::find(in.ids.begin(), in.ids.end(), h.chunk_id) - in.ids.begin())]);
    }
    std::vector<std::vector<double>> s(n, std::vector<double>(n));
    for (std::size_t a = 0; a < n; ++a)
      for (std::size_t b = 0; b < n; ++b) s[a][b] = dot(vecs[a], vecs[b]);
    for (std::size_t k = 1; k <= 4; ++k) {
      for (int l = 0; l <= 10; ++l) {
        RetrievalConfig cfg;
        cfg.technique = RetrievalTechnique::Mmr;
        cfg.k = k;
        cfg.fetch_k = std::max(n, k);
        cfg.lambda = l / 10.0;
        std::vector<std::string> want;
        for (const auto i : greedy_oracle(q, s, ids, k, cfg.lambda)) want.push_back(ids[i]);
        o.check(ids_of(in.index.search_mmr(qv, cfg)) == want,
                "greedy oracle mismatch, pool " + std::to_string(round) + " k " + std::to_string(k));
        ++oracle_cases;
      }
    }
  }
  const std::vector<double> qs = {0.9, 0.8, 0.5};
  const double pair[3][3] = {{1, 0.95, 0.1}, {0.95, 1, 0.1}, {0.1, 0.1, 1}};
  const auto picks =
      mmr_select(qs, [&](std::size_t a, std::size_t b) { return pair[a][b]; }, {"d1", "d2", "d3"}, 2, 0.5);
  const double d2 = 0.5 * qs[1] - 0.5 * pair[0][1];
  o.check(picks.size() == 2 && picks[0].index == 0 && picks[1].index == 2, "hand example picks wrong documents");
  o.check(picks.size() == 2 && std::abs(picks[1].score - 0.2) <= kExactTol, "hand example d3 score");
  o.check(std::abs(d2 - -0.075) <= kExactTol && d2 < picks[1].score, "hand example d2 score");
  if (o.pass) o.detail = "200 lambda=1 instances, " + std::to_string(oracle_cases) + " oracle cases, d1/d3 example";
  return o;
}

// ---- 4, 5 -------------------------------------------------------------------

Outcome meteor_cases() {
  Outcome o;
  const double same = meteor("the cat sat", "the cat sat").score;
  const double reordered = meteor("the cat sat", "sat the cat").score;
  const double disjoint = meteor("aaa", "bbb").score;
  o.check(std::abs(same - meteor_from_counts(3, 3, 3, 1)) <= kMeteorTol && std::abs(same - 0.981481) <= kMeteorTol,
          "identical case");
  o.check(std::abs(reordered - meteor_from_counts(3, 3, 3, 2)) <= kMeteorTol &&
              std::abs(reordered - 0.851852) <= kMeteorTol,
          "reordered case");
  o.check(disjoint == 0.0, "disjoint case");
  char buf[96];
  std::snprintf(buf, sizeof buf, "%.6f / %.6f / %.1f", same, reordered, disjoint);
  o.detail = buf;
  return o;
}

Outcome bertscore_cases() {
  Outcome o;
  auto ev = [](std::vector<float> v) { return EmbeddingVector{std::move(v), "t"}; };
  std::mt19937 rng(31);
  std::normal_distribution<float> g;
  auto list = [&](std::size_t n) {
    std::vector<EmbeddingVector> out;
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<float> v(5);
      for (auto& x : v) x = g(rng);
      out.push_back(ev(v));
    }
    return out;
  };
  for (std::size_t n = 1; n <= 10; ++n) {
    const auto a = list(n);
    const auto id = bertscore(a, a);
    o.check(id.precision == 1.0 && id.recall == 1.0 && id.f1 == 1.0, "identity not exactly 1");
  }
  const auto h = bertscore({ev({1, 0})}, {ev({1, 0}), ev({0, 1})});
  o.check(std::abs(h.precision - 1.0) <= kExactTol && std::abs(h.recall - 0.5) <= kExactTol &&
              std::abs(h.f1 - 2.0 / 3.0) <= kExactTol,
          "hand case");
  auto cos = [](const EmbeddingVector& a, const EmbeddingVector& b) {
    double d = 0, na = 0, nb = 0;
    for (std::size_t i = 0; i < a.values.size(); ++i) {
      d += static_cast<double>(a.values[i]) * b.values[i];
      na += static_cast<double>(a.values[i]) * a.values[i];
      nb += static_cast<double>(b.values[i]) * b.values[i];
    }
    return d / std::sqrt(na * nb);
  };
  std::size_t pairs = 0;
  for (std::size_t nc = 1; nc <= 10; ++nc) {
    for (std::size_t nr = 1; nr <= 10; ++nr) {
      const auto c = list(nc);
      const auto r = list(nr);
      double p = 0, rc = 0;
      for (const auto& x : c) {
        double best = -2;
        for (const auto& y : r) best = std::max(best, cos(x, y));
        p += best / static_cast<double>(nc);
      }
      for (const auto& y : r) {
        double best = -2;
        for (const auto& x : c) best = std::max(best, cos(x, y));
        rc += best / static_cast<double>(nr);
      }
      const auto got = bertscore(c, r);
      o.check(std::abs(got.precision - p) <= kExactTol && std::abs(got.recall - rc) <= kExactTol,
              "brute-force mismatch at " + std::to_string(nc) + "x" + std::to_string(nr));
      ++pairs;
    }
  }
  if (o.pass) o.detail = "hand case F1 " + std::to_string(h.f1) + ", " + std::to_string(pairs) + " oracle pairs";
  return o;
}

// ---- 6 ----------------------------------------------------------------------

Outcome config_codes() {
  Outcome o;
  using T = std::tuple<RetrievalTechnique, ModelRole, PromptPlacement, std::size_t, SpreadsheetMode>;
  const auto S = RetrievalTechnique::Similarity, M = RetrievalTechnique::Mmr;
  const auto L = ModelRole::LlamaLike, Mi = ModelRole::MistralLike;
  const auto O = PromptPlacement::OStart, N = PromptPlacement::NStartAndEnd;
  const auto Std = SpreadsheetMode::Standard, Sep = SpreadsheetMode::Separate;
  const std::vector<std::pair<std::string, T>> rows = {
      {"SLOBE", {S, L, O, 150, Sep}}, {"SLOB", {S, L, O, 150, Std}}, {"SLNC", {S, L, N, 512, Std}},
      {"SMNC", {S, Mi, N, 512, Std}}, {"MLNC", {M, L, N, 512, Std}}, {"MMNC", {M, Mi, N, 512, Std}},
      {"SLOC", {S, L, O, 512, Std}},  {"SMOC", {S, Mi, O, 512, Std}}, {"MLOC", {M, L, O, 512, Std}},
      {"MMOC", {M, Mi, O, 512, Std}},
  };
  o.check(standard_config_codes().size() == rows.size(), "code list size");
  for (const auto& [code, want] : rows) {
    const auto c = parse_config_code(code);
    o.check(T{c.retrieval, c.model_role, c.placement, c.chunk_size, c.spreadsheet_mode} == want, code + " attributes");
    o.check(format_config_code(c) == code, code + " round trip");
  }
  bool rejected = false;
  try {
    parse_config_code("BOGUS");
  } catch (const Error& e) {
    rejected = e.code() == ErrorCode::UnknownCode;
  }
  o.check(rejected, "BOGUS accepted");
  if (o.pass) o.detail = "10 codes";
  return o;
}

// ---- 7, 8, 9 ----------------------------------------------------------------

struct Fixture {
  testing::TempDir dir;
  fs::path corpus;

  Fixture() : corpus(dir.path() / "corpus") {
    write_corpus(ingest_directory(testing::fixtures_dir() / "corpus", {}), corpus);
  }

  std::vector<MetricReport> run(testing::MockEndpoint& mock, const std::vector<std::string>& codes,
                                const std::string& name) const {
    MatrixRuntime rt;
    rt.generation.endpoint_url = mock.url();
    rt.generation.backoff_ms = 1;
    rt.runs_dir = dir.path() / name;
    rt.timestamp = "run";
    return run_matrix(corpus, testing::fixtures_dir() / "questionnaire.csv", codes, rt).reports;
  }

  std::string report_bytes(const std::string& name, const std::string& code) const {
    return testing::read_text(dir.path() / name / "run" / (code + ".json"));
  }
};

nlohmann::json script() {
  return nlohmann::json::parse(testing::read_text(testing::fixtures_dir() / "mock_llm_script.json"));
}

Outcome end_to_end_determinism(const Fixture& fx, double& seconds) {
  Outcome o;
  testing::MockEndpoint mock;
  mock.load_script(script());
  const auto t0 = std::chrono::steady_clock::now();
  const auto a = fx.run(mock, standard_config_codes(), "det-a");
  const auto b = fx.run(mock, standard_config_codes(), "det-b");
  seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  o.check(a.size() == 10 && b.size() == 10, "expected 10 reports");
  for (const auto& r : a) {
    o.check(!r.error.has_value(), r.config_code + " failed: " + r.error.value_or(""));
    o.check(r.n == 20, r.config_code + " n != 20");
  }
  for (const auto& code : standard_config_codes()) {
    o.check(fx.report_bytes("det-a", code) == fx.report_bytes("det-b", code), code + " report bytes differ");
  }
  o.check(testing::read_text(fx.dir.path() / "det-a" / "run" / "comparison.csv") ==
              testing::read_text(fx.dir.path() / "det-b" / "run" / "comparison.csv"),
          "comparison bytes differ");
  return o;
}

Outcome validity_predicate(const Fixture& fx) {
  Outcome o;
  testing::MockEndpoint mock;
  mock.load_script(script());
  const auto base = fx.run(mock, {"SLOB"}, "valid-base");
  o.check(std::abs(base[0].valid_rate - 17.0 / 20.0) <= kExactTol, "SLOB valid_rate " + std::to_string(base[0].valid_rate));

  // Same fixture plus a planted wrong-language answer.
  testing::MockEndpoint lang;
  lang.add_rule({{"Sind die Festplatten der Laptops"}, "", 0,
                 "All laptop hard disks are fully encrypted with the standard tool.", 200});
  lang.load_script(script());
  const auto planted = fx.run(lang, {"SLOB"}, "valid-lang");
  o.check(std::abs(planted[0].valid_rate - 16.0 / 20.0) <= kExactTol,
          "planted valid_rate " + std::to_string(planted[0].valid_rate));
  std::map<std::string, int> reasons;
  for (const auto& rec : planted[0].per_record) {
    if (rec.invalid_reason) ++reasons[std::string(to_string(*rec.invalid_reason))];
  }
  o.check(reasons["empty"] == 1 && reasons["refusal"] == 1 && reasons["degenerate_repetition"] == 1 &&
              reasons["wrong_language"] == 1,
          "planted reasons not one of each");
  char buf[96];
  std::snprintf(buf, sizeof buf, "%.2f (17/20), with wrong-language plant %.2f (16/20)", base[0].valid_rate,
                planted[0].valid_rate);
  o.detail = buf;
  return o;
}

Outcome placement_ordering(const Fixture& fx) {
  Outcome o;
  testing::MockEndpoint mock;
  mock.load_script(script());
  const std::vector<std::pair<std::string, std::string>> pairs = {
      {"SLOB", "SLNB"}, {"SLOC", "SLNC"}, {"SMOC", "SMNC"}, {"MLOC", "MLNC"}, {"MMOC", "MMNC"}};
  std::vector<std::string> codes;
  for (const auto& [a, b] : pairs) {
    codes.push_back(a);
    codes.push_back(b);
  }
  const auto reports = fx.run(mock, codes, "order");
  std::string detail;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto& on = reports[2 * i];
    const auto& nn = reports[2 * i + 1];
    o.check(on.valid_rate > nn.valid_rate, pairs[i].first + " not above " + pairs[i].second);
    char buf[64];
    std::snprintf(buf, sizeof buf, "%s%s %.2f>%.2f", detail.empty() ? "" : ", ", on.config_code.c_str(),
                  on.valid_rate, nn.valid_rate);
    detail += buf;
  }
  if (o.pass) o.detail = "scripted mock sanity check, not a reproduction: " + detail;
  return o;
}

// ---- 10 ---------------------------------------------------------------------

Outcome geval_parsing() {
  Outcome o;
  const auto fx = nlohmann::json::parse(testing::read_text(testing::fixtures_dir() / "judge_transcripts.json"));
  std::string detail;
  for (const char* name : {"clean", "noisy", "reask", "unparseable"}) {
    const auto& t = fx.at(name);
    testing::MockEndpoint mock;
    for (const auto& r : t["replies"]) mock.queue_response(r.get<std::string>());
    JudgeConfig cfg;
    cfg.endpoint_url = mock.url();
    cfg.backoff_ms = 1;
    std::string got;
    try {
      const double s = Judge(cfg).score("q", "a", "c", "r", GevalDimension::Faithfulness);
      o.check(!t["expected"].is_null() && s == t["expected"].get<double>() && s >= 1.0 && s <= 5.0,
              std::string(name) + " scored " + std::to_string(s));
      char buf[16];
      std::snprintf(buf, sizeof buf, "%.1f", s);
      got = buf;
    } catch (const Error& e) {
      o.check(t["expected"].is_null() && e.code() == ErrorCode::JudgeUnparseable, std::string(name) + ": " + e.what());
      got = std::string(to_string(e.code()));
    }
    detail += (detail.empty() ? "" : " / ") + got;
  }
  o.detail = detail;
  return o;
}

// ---- 11 ---------------------------------------------------------------------

Outcome index_persistence() {
  Outcome o;
  testing::TempDir dir;
  VectorIndex idx(48, hashed_model_tag(48));
  std::vector<std::pair<Chunk, EmbeddingVector>> entries;
  for (int i = 0; i < 1000; ++i) {
    Chunk c;
    c.doc_id = "doc" + std::to_string(i / 10);
    c.seq = static_cast<std::size_t>(i % 10);
    c.chunk_id = make_chunk_id(c.doc_id, c.seq);
    c.text = "entry " + std::to_string(i) + " über Sicherheit " + std::to_string(i * 7919 % 1000);
    c.char_end = text::char_count(c.text);
    entries.emplace_back(c, hashed_embed(c.text, 48));
  }
  idx.add(entries);
  const fs::path path = dir / "index.qfix";
  idx.persist(path);
  const auto back = VectorIndex::load(path, hashed_model_tag(48));
  std::mt19937 rng(99);
  for (int i = 0; i < 50; ++i) {
    const auto q = hashed_embed("query " + std::to_string(rng()) + " Sicherheit", 48);
    RetrievalConfig cfg;
    cfg.k = 1 + rng() % 30;
    cfg.technique = i % 2 == 0 ? RetrievalTechnique::Similarity : RetrievalTechnique::Mmr;
    o.check(idx.search(q, cfg) == back.search(q, cfg), "query " + std::to_string(i) + " differs after reload");
  }
  const std::string bytes = testing::read_text(path);
  std::size_t corrupt_detected = 0;
  const std::vector<std::size_t> offsets = {0, 7, bytes.size() / 3, bytes.size() / 2, bytes.size() - 1};
  for (const auto off : offsets) {
    std::string bad = bytes;
    bad[off] = static_cast<char>(bad[off] ^ 0x5a);
    testing::write_text(dir / "bad.qfix", bad);
    try {
      VectorIndex::load(dir / "bad.qfix");
    } catch (const Error& e) {
      corrupt_detected += e.code() == ErrorCode::CorruptIndex ? 1 : 0;
    }
  }
  testing::write_text(dir / "bad.qfix", bytes.substr(0, bytes.size() - 9));
  try {
    VectorIndex::load(dir / "bad.qfix");
  } catch (const Error& e) {
    corrupt_detected += e.code() == ErrorCode::CorruptIndex ? 1 : 0;
  }
  o.check(corrupt_detected == offsets.size() + 1, "corruption not reported as CorruptIndex");
  if (o.pass) o.detail = "1000 entries, 50 queries, " + std::to_string(corrupt_detected) + " corruptions detected";
  return o;
}

}  // namespace

int main() {
  int failed = 0;
  auto report = [&](int id, const std::string& name, double limit_s, const std::function<Outcome()>& f) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = f();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("exception: ") + e.what();
    }
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (limit_s > 0 && s >= limit_s) {
      o.pass = false;
      o.detail += " (exceeded " + std::to_string(static_cast<int>(limit_s)) + " s)";
    }
    failed += o.pass ? 0 : 1;
    std::printf("%s %2d %-34s %7.2fs  %s\n", o.pass ? "PASS" : "FAIL", id, name.c_str(), s, o.detail.c_str());
    std::fflush(stdout);
  };

  report(1, "splitter oracle equivalence", 5, splitter_oracle);
  report(2, "similarity search exactness", 10, similarity_exactness);
  report(3, "mmr correctness", 0, mmr_correctness);
  report(4, "meteor hand cases", 0, meteor_cases);
  report(5, "bertscore", 0, bertscore_cases);
  report(6, "config codes", 0, config_codes);
  std::optional<Fixture> fx;
  try {
    fx.emplace();
  } catch (const std::exception& e) {
    std::printf("fixture corpus failed to load: %s\n", e.what());
    return 1 + failed;
  }
  report(7, "end-to-end determinism", 60, [&] {
    double seconds = 0;
    auto o = end_to_end_determinism(*fx, seconds);
    if (o.pass) o.detail = "10 codes x 20 questions, two runs byte-identical";
    return o;
  });
  report(8, "validity predicate", 0, [&] { return validity_predicate(*fx); });
  report(9, "placement O vs N ordering (mock)", 0, [&] { return placement_ordering(*fx); });
  report(10, "g-eval parsing", 0, geval_parsing);
  report(11, "index persistence", 0, index_persistence);
  std::printf("%d of 11 criteria failed\n", failed);
  return failed;
}
