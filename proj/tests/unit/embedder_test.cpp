#include <gtest/gtest.h>

#include <bit>
#include <cmath>

#include "mock_endpoint.hpp"
#include "qf/embedder.hpp"
#include "qf/error.hpp"
#include "qf/evalkit.hpp"

namespace qf {
namespace {

std::vector<std::uint32_t> bits(const EmbeddingVector& v) {
  std::vector<std::uint32_t> out;
  for (const float f : v.values) out.push_back(std::bit_cast<std::uint32_t>(f));
  return out;
}

double norm(const EmbeddingVector& v) {
  double s = 0;
  for (const float f : v.values) s += static_cast<double>(f) * f;
  return std::sqrt(s);
}

// Golden values from tests/oracles/hashed_embed_oracle.py.
TEST(HashedEmbed, GoldenAbcDim8) {
  const auto v = hashed_embed("abc", 8);
  EXPECT_EQ(bits(v), (std::vector<std::uint32_t>{0, 0, 0, 0xbf800000u, 0, 0, 0, 0}));
}

TEST(HashedEmbed, GoldenUnicodeDim16) {
  const auto v = hashed_embed("Datensicherheit f\xC3\xBCr Systeme", 16);
  EXPECT_EQ(bits(v), (std::vector<std::uint32_t>{0x3e1c2896u, 0xbe1c2896u, 0, 0xbe1c2896u, 0, 0xbe1c2896u,
                                                 0xbf4332bbu, 0xbe1c2896u, 0xbe1c2896u, 0, 0xbe1c2896u,
                                                 0xbe1c2896u, 0xbe1c2896u, 0x3eea3ce1u, 0, 0}));
}

TEST(HashedEmbed, SimilarTextsCorrelate) {
  const auto p = hashed_embed("data security policy", 256);
  const auto ps = hashed_embed("data security policies", 256);
  const auto r = hashed_embed("quarterly revenue report", 256);
  EXPECT_NEAR(cosine(p.values, ps.values), 0.875, 1e-6);
  EXPECT_GT(cosine(p.values, ps.values), cosine(p.values, r.values));
}

TEST(HashedEmbed, ZeroInputAndDeterminism) {
  EXPECT_TRUE(hashed_embed("", 32).is_zero());
  EXPECT_EQ(hashed_embed("", 32).dim(), 32u);
  EXPECT_TRUE(hashed_embed("ab", 32).is_zero());
  EXPECT_EQ(hashed_embed("aaaa", 64), hashed_embed("aaaa", 64));
  EXPECT_THROW(hashed_embed("x", 1), Error);
}

TEST(HashedEmbed, UnitNormProperty) {
  for (const char* t : {"abc", "access control", "Die Sicherungen", "x y z w", "\xC3\xA4\xC3\xB6\xC3\xBC\xC3\x9F"}) {
    const auto v = hashed_embed(t, 64);
    if (!v.is_zero()) EXPECT_NEAR(norm(v), 1.0, 1e-6) << t;
  }
}

TEST(Embedder, BatchPreservesOrder) {
  const Embedder e(EmbedderConfig{});
  const std::vector<std::string> texts = {"sentinel one", "", "sentinel two", "sentinel three"};
  const auto out = e.embed_batch(texts);
  ASSERT_EQ(out.size(), texts.size());
  for (std::size_t i = 0; i < texts.size(); ++i) EXPECT_EQ(out[i].values, hashed_embed(texts[i], 256).values);
  EXPECT_EQ(out[0].model_tag, hashed_model_tag(256));
}

EmbedderConfig remote(const testing::MockEndpoint& mock) {
  EmbedderConfig c;
  c.backend = EmbedderBackend::Remote;
  c.endpoint_url = mock.url();
  c.dim = 0;
  c.batch_size = 2;
  c.backoff_ms = 1;
  return c;
}

TEST(RemoteEmbedder, BatchesNormalizesAndKeepsOrder) {
  testing::MockEndpoint mock;
  mock.set_embedding_dim(24);
  const Embedder e(remote(mock));
  const std::vector<std::string> texts = {"alpha beta", "gamma delta", " ", "epsilon zeta", "eta theta"};
  const auto out = e.embed_batch(texts);
  ASSERT_EQ(out.size(), 5u);
  EXPECT_EQ(mock.embedding_requests(), 2u);  // four non-blank texts, batch size 2
  EXPECT_TRUE(out[2].is_zero());
  EXPECT_EQ(out[2].dim(), 24u);
  for (const std::size_t i : {0u, 1u, 3u, 4u}) {
    EXPECT_NEAR(norm(out[i]), 1.0, 1e-6);
    EXPECT_EQ(out[i].values, hashed_embed(texts[i], 24).values);
  }
}

TEST(RemoteEmbedder, RetriesTransientFailures) {
  testing::MockEndpoint mock;
  mock.set_failures(2, 503);
  const Embedder e(remote(mock));
  EXPECT_EQ(e.embed("retry me").dim(), 64u);
  EXPECT_EQ(mock.embedding_requests(), 3u);
}

TEST(RemoteEmbedder, ClientErrorsAreNotRetried) {
  testing::MockEndpoint mock;
  mock.set_failures(1, 400);
  const Embedder e(remote(mock));
  try {
    e.embed("refused");
    FAIL();
  } catch (const Error& err) {
    EXPECT_EQ(err.code(), ErrorCode::EmbeddingRefused);
  }
  EXPECT_EQ(mock.embedding_requests(), 1u);
}

TEST(RemoteEmbedder, DimensionMismatchAgainstExpectation) {
  testing::MockEndpoint mock;
  auto cfg = remote(mock);
  cfg.dim = 32;
  try {
    Embedder(cfg).embed("x y z");
    FAIL();
  } catch (const Error& err) {
    EXPECT_EQ(err.code(), ErrorCode::DimensionMismatch);
  }
}

TEST(RemoteEmbedder, UnreachableAfterRetries) {
  int port = 0;
  {
    testing::MockEndpoint gone;
    port = gone.port();
  }
  EmbedderConfig c;
  c.backend = EmbedderBackend::Remote;
  c.endpoint_url = "http://127.0.0.1:" + std::to_string(port);
  c.max_retries = 1;
  c.backoff_ms = 1;
  c.timeout_ms = 500;
  try {
    Embedder(c).embed("nobody home");
    FAIL();
  } catch (const Error& err) {
    EXPECT_EQ(err.code(), ErrorCode::EndpointUnreachable);
  }
}

}  // namespace
}  // namespace qf
