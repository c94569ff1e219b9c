#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

#include "qf/embedder.hpp"
#include "qf/error.hpp"
#include "qf/vindex.hpp"
#include "test_paths.hpp"

namespace qf {
namespace {

constexpr double kInvSqrt2 = 0.70710678118654752;

Chunk chunk(const std::string& id) {
  Chunk c;
  c.chunk_id = id;
  c.doc_id = "doc";
  c.text = "text of " + id;
  c.char_end = 1;
  return c;
}

EmbeddingVector vec(std::vector<float> v, const std::string& tag = "t") { return {std::move(v), tag}; }

VectorIndex make_index(const std::vector<std::vector<float>>& vectors, const std::vector<std::string>& ids) {
  VectorIndex idx(vectors.front().size(), "t");
  std::vector<std::pair<Chunk, EmbeddingVector>> entries;
  for (std::size_t i = 0; i < vectors.size(); ++i) entries.emplace_back(chunk(ids[i]), vec(vectors[i]));
  idx.add(entries);
  return idx;
}

RetrievalConfig sim(std::size_t k) {
  RetrievalConfig c;
  c.k = k;
  return c;
}

std::vector<std::string> ids_of(const RetrievalResult& r) {
  std::vector<std::string> out;
  for (const auto& h : r.hits) out.push_back(h.chunk_id);
  return out;
}

TEST(VectorIndex, HandExamples) {
  const auto idx = make_index({{1, 0}, {0, 1}, {-1, 0}}, {"a", "b", "c"});
  const auto r1 = idx.search_similarity(vec({1, 0}), sim(2));
  ASSERT_EQ(r1.hits.size(), 2u);
  EXPECT_EQ(r1.hits[0].chunk_id, "a");
  EXPECT_DOUBLE_EQ(r1.hits[0].score, 1.0);
  EXPECT_DOUBLE_EQ(r1.hits[1].score, 0.0);

  const float h = static_cast<float>(kInvSqrt2);
  const auto r2 = idx.search_similarity(vec({h, h}), sim(3));
  EXPECT_EQ(ids_of(r2), (std::vector<std::string>{"a", "b", "c"}));
  EXPECT_NEAR(r2.hits[0].score, kInvSqrt2, 1e-6);
  EXPECT_NEAR(r2.hits[1].score, kInvSqrt2, 1e-6);
  EXPECT_NEAR(r2.hits[2].score, -kInvSqrt2, 1e-6);
}

TEST(VectorIndex, AddErrors) {
  auto idx = make_index({{1, 0}}, {"a"});
  EXPECT_EQ(idx.size(), 1u);
  try {
    idx.add({{chunk("a"), vec({0, 1})}});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DuplicateChunkId);
  }
  try {
    idx.add({{chunk("b"), vec({0, 1, 0})}});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DimensionMismatch);
  }
  // Atomic: a batch with one bad entry adds nothing.
  EXPECT_THROW(idx.add({{chunk("c"), vec({0, 1})}, {chunk("c"), vec({1, 0})}}), Error);
  EXPECT_EQ(idx.size(), 1u);
}

TEST(VectorIndex, EmptyIndexAndQueryDim) {
  const VectorIndex idx(2, "t");
  try {
    idx.search_similarity(vec({1, 0}), sim(1));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::EmptyIndex);
  }
  const auto full = make_index({{1, 0}}, {"a"});
  EXPECT_THROW(full.search_similarity(vec({1, 0, 0}), sim(1)), Error);
}

struct Instance {
  std::vector<std::vector<float>> vectors;
  std::vector<std::string> ids;
  std::vector<float> query;
};

// Entries drawn from a small value grid so exact ties are common.
Instance random_instance(std::mt19937& rng, std::size_t max_n, std::size_t max_dim) {
  Instance in;
  const std::size_t n = 1 + rng() % max_n;
  const std::size_t dim = 2 + rng() % (max_dim - 1);
  auto draw = [&] {
    std::vector<float> v(dim);
    for (auto& x : v) x = static_cast<float>(static_cast<int>(rng() % 5) - 2) * 0.25f;
    return v;
  };
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::shuffle(order.begin(), order.end(), rng);
  for (std::size_t i = 0; i < n; ++i) {
    in.vectors.push_back(draw());
    in.ids.push_back("c" + std::to_string(order[i]));
  }
  in.query = draw();
  return in;
}

// Scoring arithmetic of the index: exact products summed in eight
// interleaved lanes combined in a fixed tree.
double lane_dot(const std::vector<float>& a, const std::vector<float>& b) {
  double lane[8] = {};
  for (std::size_t i = 0; i < a.size(); ++i) lane[i % 8] += static_cast<double>(a[i]) * b[i];
  const double s = ((lane[0] + lane[4]) + (lane[2] + lane[6])) + ((lane[1] + lane[5]) + (lane[3] + lane[7]));
  return std::clamp(s, -1.0, 1.0);
}

std::vector<std::pair<double, std::string>> brute_force(const Instance& in, std::size_t k) {
  std::vector<std::pair<double, std::string>> all;
  for (std::size_t i = 0; i < in.vectors.size(); ++i) {
    all.emplace_back(lane_dot(in.query, in.vectors[i]), in.ids[i]);
  }
  std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) {
    return a.first != b.first ? a.first > b.first : a.second < b.second;
  });
  all.resize(std::min(k, all.size()));
  return all;
}

TEST(VectorIndex, SimilarityEqualsBruteForce) {
  std::mt19937 rng(101);
  for (int round = 0; round < 100; ++round) {
    const auto in = random_instance(rng, 300, 16);
    const auto idx = make_index(in.vectors, in.ids);
    const std::size_t k = 1 + rng() % 30;
    const auto got = idx.search_similarity(vec(in.query), sim(k));
    const auto want = brute_force(in, k);
    ASSERT_EQ(got.hits.size(), want.size());
    for (std::size_t i = 0; i < want.size(); ++i) {
      EXPECT_EQ(got.hits[i].chunk_id, want[i].second);
      EXPECT_EQ(got.hits[i].score, want[i].first);
    }
  }
}

TEST(VectorIndex, TopKIsPrefixOfTopKPlusOne) {
  std::mt19937 rng(5);
  for (int round = 0; round < 50; ++round) {
    const auto in = random_instance(rng, 100, 8);
    const auto idx = make_index(in.vectors, in.ids);
    const std::size_t k = 1 + rng() % 10;
    auto a = ids_of(idx.search_similarity(vec(in.query), sim(k)));
    auto b = ids_of(idx.search_similarity(vec(in.query), sim(k + 1)));
    b.resize(a.size());
    EXPECT_EQ(a, b);
  }
}

TEST(VectorIndex, ParallelScanMatchesSerial) {
  std::mt19937 rng(77);
  std::vector<std::vector<float>> vectors;
  std::vector<std::string> ids;
  for (int i = 0; i < 20000; ++i) {
    std::vector<float> v(8);
    for (auto& x : v) x = static_cast<float>(static_cast<int>(rng() % 3) - 1);
    vectors.push_back(v);
    ids.push_back("c" + std::to_string(i));
  }
  auto idx = make_index(vectors, ids);
  const std::vector<float> q = {1, 0, -1, 0, 1, 0, 0, 1};
  const auto serial = idx.search_similarity(vec(q), sim(50));
  idx.set_search_threads(4);
  EXPECT_EQ(idx.search_similarity(vec(q), sim(50)), serial);
}

TEST(Mmr, HandExampleFromSimilarities) {
  // sim(q,d1)=0.9, sim(q,d2)=0.8, sim(q,d3)=0.5; sim(d1,d2)=0.95, others 0.1.
  const std::vector<double> q = {0.9, 0.8, 0.5};
  const double pair[3][3] = {{1, 0.95, 0.1}, {0.95, 1, 0.1}, {0.1, 0.1, 1}};
  const auto picks = mmr_select(q, [&](std::size_t a, std::size_t b) { return pair[a][b]; }, {"d1", "d2", "d3"}, 2, 0.5);
  ASSERT_EQ(picks.size(), 2u);
  EXPECT_EQ(picks[0].index, 0u);
  EXPECT_EQ(picks[1].index, 2u);
  EXPECT_NEAR(picks[1].score, 0.2, 1e-9);
  // The rejected candidate's value at step two.
  EXPECT_NEAR(0.5 * 0.8 - 0.5 * 0.95, -0.075, 1e-9);
}

// Greedy recurrence evaluated from scratch at every step.
std::vector<std::size_t> mmr_oracle(const std::vector<double>& q, const std::vector<std::vector<double>>& s,
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

TEST(Mmr, MatchesOracleOnSmallPools) {
  std::mt19937 rng(3);
  for (int round = 0; round < 300; ++round) {
    const std::size_t n = 1 + rng() % 8;
    std::vector<std::vector<float>> vectors;
    std::vector<std::string> ids;
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<float> v(4);
      for (auto& x : v) x = static_cast<float>(static_cast<int>(rng() % 5) - 2);
      l2_normalize(v);
      vectors.push_back(v);
      ids.push_back("c" + std::to_string(rng() % 1000) + "_" + std::to_string(i));
    }
    std::vector<float> query = {1, 0.5f, -0.25f, 0};
    l2_normalize(query);
    const auto idx = make_index(vectors, ids);
    for (int l = 0; l <= 10; ++l) {
      const double lambda = l / 10.0;
      RetrievalConfig cfg;
      cfg.technique = RetrievalTechnique::Mmr;
      cfg.k = 1 + rng() % 4;
      cfg.fetch_k = std::max<std::size_t>(cfg.k, n);
      cfg.lambda = lambda;
      const auto got = idx.search_mmr(vec(query), cfg);

      // Pool = everything, in similarity order, with the index's exact sims.
      const auto pool = idx.search_similarity(vec(query), sim(n));
      std::vector<double> q;
      std::vector<std::string> pool_ids;
      std::vector<std::vector<float>> pool_vecs;
      for (const auto& h : pool.hits) {
        q.push_back(h.score);
        pool_ids.push_back(h.chunk_id);
        const auto pos = std::find(ids.begin(), ids.end(), h.chunk_id) - ids.begin();
        pool_vecs.push_back(vectors[static_cast<std::size_t>(pos)]);
      }
      std::vector<std::vector<double>> s(n, std::vector<double>(n));
      for (std::size_t a = 0; a < n; ++a) {
        for (std::size_t b = 0; b < n; ++b) {
          s[a][b] = lane_dot(pool_vecs[a], pool_vecs[b]);
        }
      }
      std::vector<std::string> want;
      for (const auto i : mmr_oracle(q, s, pool_ids, cfg.k, lambda)) want.push_back(pool_ids[i]);
      EXPECT_EQ(ids_of(got), want) << "round " << round << " lambda " << lambda;
    }
  }
}

TEST(Mmr, LambdaOneEqualsSimilarityOrder) {
  std::mt19937 rng(9);
  for (int round = 0; round < 100; ++round) {
    const auto in = random_instance(rng, 200, 12);
    const auto idx = make_index(in.vectors, in.ids);
    RetrievalConfig cfg;
    cfg.technique = RetrievalTechnique::Mmr;
    cfg.k = 1 + rng() % 20;
    cfg.lambda = 1.0;
    EXPECT_EQ(ids_of(idx.search_mmr(vec(in.query), cfg)), ids_of(idx.search_similarity(vec(in.query), sim(cfg.k))));
  }
}

TEST(RetrievalConfig, Validation) {
  RetrievalConfig c;
  c.k = 0;
  EXPECT_THROW(c.validate(), Error);
  c.k = 5;
  c.fetch_k = 3;
  EXPECT_THROW(c.validate(), Error);
  c.fetch_k = 0;
  c.lambda = 1.5;
  EXPECT_THROW(c.validate(), Error);
}

TEST(Persistence, RoundTripAndCorruption) {
  testing::TempDir dir;
  std::mt19937 rng(13);
  std::vector<std::vector<float>> vectors;
  std::vector<std::string> ids;
  for (int i = 0; i < 300; ++i) {
    auto v = hashed_embed("entry number " + std::to_string(i * 7919), 32).values;
    vectors.push_back(v);
    ids.push_back("doc#" + std::to_string(i));
  }
  const auto idx = make_index(vectors, ids);
  const auto path = dir / "idx.qfix";
  idx.persist(path);
  const auto back = VectorIndex::load(path);
  ASSERT_EQ(back.size(), idx.size());
  EXPECT_EQ(back.dim(), idx.dim());
  EXPECT_EQ(back.model_tag(), idx.model_tag());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    EXPECT_EQ(back.vector(i), idx.vector(i));
    EXPECT_EQ(back.chunk(i), idx.chunk(i));
  }
  try {
    VectorIndex::load(path, std::string("other-model"));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DimensionMismatch);
  }

  const std::string bytes = testing::read_text(path);
  testing::write_text(dir / "trunc.qfix", bytes.substr(0, bytes.size() / 2));
  std::string flipped = bytes;
  flipped[flipped.size() / 2] ^= 0x40;
  testing::write_text(dir / "flip.qfix", flipped);
  for (const char* name : {"trunc.qfix", "flip.qfix"}) {
    try {
      VectorIndex::load(dir / name);
      FAIL() << name;
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::CorruptIndex) << name;
    }
  }
}

TEST(Persistence, EmptyIndexRoundTrip) {
  testing::TempDir dir;
  const VectorIndex idx(16, "m");
  idx.persist(dir / "e.qfix");
  const auto back = VectorIndex::load(dir / "e.qfix");
  EXPECT_EQ(back.size(), 0u);
  EXPECT_EQ(back.dim(), 16u);
  EXPECT_EQ(back.model_tag(), "m");
}

}  // namespace
}  // namespace qf
