#include <gtest/gtest.h>

#include <random>

#include "qf/error.hpp"
#include "qf/splitter.hpp"
#include "qf/text.hpp"

namespace qf {
namespace {

SourceDocument doc_of(std::string text) {
  SourceDocument d;
  d.doc_id = "d0";
  d.text = std::move(text);
  return d;
}

std::vector<std::string> texts(const std::vector<Chunk>& chunks) {
  std::vector<std::string> out;
  for (const auto& c : chunks) out.push_back(c.text);
  return out;
}

SplitConfig flat(std::size_t size, std::size_t overlap) {
  SplitConfig c;
  c.chunk_size = size;
  c.overlap = overlap;
  c.strategy = SplitStrategy::Flat;
  return c;
}

SplitConfig recursive(std::size_t size, std::size_t overlap) {
  SplitConfig c;
  c.chunk_size = size;
  c.overlap = overlap;
  return c;
}

// Independent windowing oracle over code points.
std::vector<std::pair<std::size_t, std::size_t>> brute_windows(std::size_t len, std::size_t size,
                                                               std::size_t overlap) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  if (len == 0) return out;
  std::size_t s = 0;
  while (true) {
    const std::size_t e = s + size < len ? s + size : len;
    out.emplace_back(s, e);
    if (e == len) return out;
    s += size - overlap;
  }
}

TEST(SplitFlat, Examples) {
  EXPECT_EQ(texts(split_flat(doc_of("abcdefghij"), flat(4, 0))),
            (std::vector<std::string>{"abcd", "efgh", "ij"}));
  EXPECT_EQ(texts(split_flat(doc_of("abcdefghij"), flat(4, 2))),
            (std::vector<std::string>{"abcd", "cdef", "efgh", "ghij"}));
  EXPECT_TRUE(split_flat(doc_of(""), flat(4, 0)).empty());
}

TEST(SplitFlat, MatchesBruteForceWindowing) {
  for (std::size_t len = 0; len <= 200; len += 7) {
    std::string text;
    for (std::size_t i = 0; i < len; ++i) text += i % 5 == 0 ? "\xC3\xA4" : std::string(1, char('a' + i % 26));
    const auto d = doc_of(text);
    const auto cps = text::code_points(text);
    for (std::size_t size = 1; size <= 20; ++size) {
      for (std::size_t overlap = 0; overlap < size; ++overlap) {
        const auto chunks = split_flat(d, flat(size, overlap));
        const auto oracle = brute_windows(len, size, overlap);
        ASSERT_EQ(chunks.size(), oracle.size()) << len << "/" << size << "/" << overlap;
        if (len > 0) {
          const std::size_t step = size - overlap;
          const std::size_t expected = len <= size ? 1 : 1 + (len - size + step - 1) / step;
          EXPECT_EQ(chunks.size(), expected);
        }
        for (std::size_t i = 0; i < chunks.size(); ++i) {
          EXPECT_EQ(chunks[i].char_start, oracle[i].first);
          EXPECT_EQ(chunks[i].char_end, oracle[i].second);
          std::string expect_text;
          for (std::size_t p = oracle[i].first; p < oracle[i].second; ++p) expect_text += cps[p];
          EXPECT_EQ(chunks[i].text, expect_text);
          EXPECT_EQ(chunks[i].seq, i);
        }
      }
    }
  }
}

TEST(SplitFlat, LosslessAtZeroOverlap) {
  std::mt19937 rng(11);
  for (int round = 0; round < 200; ++round) {
    std::string text;
    const int len = 1 + static_cast<int>(rng() % 300);
    for (int i = 0; i < len; ++i) text += "ab \n\xC3\xBC"[rng() % 4];
    std::string joined;
    for (const auto& c : split_flat(doc_of(text), flat(1 + rng() % 40, 0))) joined += c.text;
    EXPECT_EQ(joined, text);
  }
}

TEST(SplitFlat, NeighboursShareOverlapRegion) {
  const auto chunks = split_flat(doc_of("the quick brown fox jumps over the lazy dog"), flat(10, 3));
  for (std::size_t i = 0; i + 1 < chunks.size(); ++i) {
    if (chunks[i + 1].char_end == 43 && chunks[i + 1].text.size() < 10) continue;
    EXPECT_EQ(chunks[i].text.substr(chunks[i].text.size() - 3), chunks[i + 1].text.substr(0, 3));
  }
}

TEST(SplitRecursive, Examples) {
  EXPECT_EQ(texts(split_recursive(doc_of("aaa\n\nbbb"), recursive(4, 0))),
            (std::vector<std::string>{"aaa", "bbb"}));
  EXPECT_EQ(texts(split_recursive(doc_of("aaaa bbbb cccc"), recursive(9, 0))),
            (std::vector<std::string>{"aaaa bbbb", "cccc"}));
  EXPECT_EQ(texts(split_recursive(doc_of("short"), recursive(150, 0))), (std::vector<std::string>{"short"}));
}

TEST(SplitRecursive, OverlapPrefixesPredecessorSuffix) {
  const auto chunks = split_recursive(doc_of("aaaa bbbb cccc"), recursive(9, 2));
  ASSERT_EQ(chunks.size(), 2u);
  EXPECT_EQ(chunks[0].text, "aaaa bbbb");
  EXPECT_EQ(chunks[1].text, "bb cccc");
  EXPECT_EQ(chunks[1].char_start, 7u);
}

TEST(SplitRecursive, Invariants) {
  std::mt19937 rng(23);
  for (int round = 0; round < 400; ++round) {
    std::string text;
    const int len = 1 + static_cast<int>(rng() % 250);
    for (int i = 0; i < len; ++i) {
      const int r = static_cast<int>(rng() % 10);
      text += r < 6 ? std::string(1, char('a' + r)) : r < 8 ? " " : r < 9 ? "\n" : "\xC3\xA4";
    }
    const auto d = doc_of(text);
    const auto cps = text::code_points(text);
    const std::size_t size = 1 + rng() % 30;
    const std::size_t overlap = rng() % size;
    const auto chunks = split_recursive(d, recursive(size, overlap));
    std::vector<bool> covered(cps.size(), false);
    std::size_t prev_start = 0;
    for (const auto& c : chunks) {
      ASSERT_LT(c.char_start, c.char_end);
      ASSERT_LE(c.char_end, cps.size());
      EXPECT_LE(text::char_count(c.text), size);
      std::string sub;
      for (std::size_t p = c.char_start; p < c.char_end; ++p) {
        sub += cps[p];
        covered[p] = true;
      }
      EXPECT_EQ(c.text, sub);
      EXPECT_GE(c.char_start, prev_start);
      prev_start = c.char_start;
    }
    for (std::size_t p = 0; p < cps.size(); ++p) {
      if (cps[p] != " " && cps[p] != "\n") EXPECT_TRUE(covered[p]) << "round " << round << " pos " << p;
    }
  }
}

TEST(SplitConfig, Validation) {
  EXPECT_THROW(flat(4, 4).validate(), Error);
  EXPECT_THROW(flat(0, 0).validate(), Error);
  EXPECT_THROW(flat(100001, 0).validate(), Error);
  SplitConfig c = recursive(10, 0);
  c.separators = {"\n"};
  EXPECT_THROW(c.validate(), Error);
}

TEST(Chunks, JsonlRoundTrip) {
  const auto chunks = split_recursive(doc_of("alpha beta\n\ngamma delta epsilon"), recursive(12, 3));
  EXPECT_EQ(chunks_from_jsonl(chunks_to_jsonl(chunks)), chunks);
  EXPECT_EQ(chunks[0].chunk_id, "d0#00000");
}

}  // namespace
}  // namespace qf
