#include "qf/splitter.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

#include "qf/error.hpp"
#include "qf/text.hpp"

namespace qf {

std::string_view to_string(SplitStrategy s) noexcept {
  return s == SplitStrategy::Flat ? "flat" : "recursive";
}

SplitStrategy split_strategy_from_string(std::string_view s) {
  if (s == "flat") return SplitStrategy::Flat;
  if (s == "recursive") return SplitStrategy::Recursive;
  throw Error(ErrorCode::InvalidArgument, "unknown split strategy '" + std::string(s) + "'");
}

void SplitConfig::validate() const {
  if (chunk_size < 1 || chunk_size > 100000) {
    throw Error(ErrorCode::InvalidArgument, "chunk_size must be in [1, 100000]");
  }
  if (overlap >= chunk_size) throw Error(ErrorCode::InvalidArgument, "overlap must be < chunk_size");
  if (strategy == SplitStrategy::Recursive && (separators.empty() || !separators.back().empty())) {
    throw Error(ErrorCode::InvalidArgument, "separator list must end with the empty separator");
  }
}

std::string make_chunk_id(std::string_view doc_id, std::size_t seq) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%05zu", seq);
  return std::string(doc_id) + "#" + buf;
}

namespace {

Chunk make_chunk(const SourceDocument& doc, const text::Utf8Index& index, std::size_t begin,
                 std::size_t end, std::size_t seq) {
  return Chunk{make_chunk_id(doc.doc_id, seq), doc.doc_id,
               std::string(index.slice(doc.text, begin, end)), begin, end, seq};
}

struct Span {
  std::size_t begin;
  std::size_t end;
  std::size_t size() const { return end - begin; }
};

// Recursive splitting over code point spans of one document. Emits the core
// spans of the final chunks (before overlap is applied).
class RecursiveSplitter {
 public:
  RecursiveSplitter(const std::vector<std::string>& text_cps, const SplitConfig& cfg)
      : cps_(text_cps), cfg_(cfg) {
    for (const auto& sep : cfg.separators) separators_.push_back(text::code_points(sep));
  }

  std::vector<Span> run() {
    std::vector<Span> out;
    split({0, cps_.size()}, 0, out);
    return out;
  }

 private:
  bool matches_at(std::size_t pos, const std::vector<std::string>& sep, std::size_t end) const {
    if (pos + sep.size() > end) return false;
    for (std::size_t i = 0; i < sep.size(); ++i) {
      if (cps_[pos + i] != sep[i]) return false;
    }
    return true;
  }

  bool contains(Span span, const std::vector<std::string>& sep) const {
    if (sep.empty()) return true;
    for (std::size_t p = span.begin; p + sep.size() <= span.end; ++p) {
      if (matches_at(p, sep, span.end)) return true;
    }
    return false;
  }

  std::vector<Span> pieces(Span span, const std::vector<std::string>& sep) const {
    std::vector<Span> out;
    if (sep.empty()) {
      for (std::size_t p = span.begin; p < span.end; ++p) out.push_back({p, p + 1});
      return out;
    }
    std::size_t start = span.begin;
    std::size_t p = span.begin;
    while (p < span.end) {
      if (matches_at(p, sep, span.end)) {
        if (p > start) out.push_back({start, p});
        p += sep.size();
        start = p;
      } else {
        ++p;
      }
    }
    if (span.end > start) out.push_back({start, span.end});
    return out;
  }

  void split(Span span, std::size_t level, std::vector<Span>& out) const {
    std::size_t chosen = level;
    while (chosen + 1 < separators_.size() && !contains(span, separators_[chosen])) ++chosen;

    std::vector<Span> merged;
    auto flush = [&] {
      out.insert(out.end(), merged.begin(), merged.end());
      merged.clear();
    };
    for (const Span piece : pieces(span, separators_[chosen])) {
      if (piece.size() > cfg_.chunk_size) {
        flush();
        split(piece, chosen + 1, out);
        continue;
      }
      // Merged text is the parent substring, so it keeps interior separators.
      if (!merged.empty() && piece.end - merged.back().begin <= cfg_.chunk_size) {
        merged.back().end = piece.end;
      } else {
        if (!merged.empty()) flush();
        merged.push_back(piece);
      }
    }
    flush();
  }

  const std::vector<std::string>& cps_;
  const SplitConfig& cfg_;
  std::vector<std::vector<std::string>> separators_;
};

}  // namespace

std::vector<Chunk> split_flat(const SourceDocument& doc, const SplitConfig& cfg) {
  cfg.validate();
  const text::Utf8Index index(doc.text);
  const std::size_t len = index.size();
  std::vector<Chunk> out;
  if (len == 0) return out;
  const std::size_t step = cfg.chunk_size - cfg.overlap;
  for (std::size_t start = 0;; start += step) {
    const std::size_t end = std::min(start + cfg.chunk_size, len);
    out.push_back(make_chunk(doc, index, start, end, out.size()));
    if (end == len) break;
  }
  return out;
}

std::vector<Chunk> split_recursive(const SourceDocument& doc, const SplitConfig& cfg) {
  cfg.validate();
  const text::Utf8Index index(doc.text);
  std::vector<Chunk> out;
  if (index.size() == 0) return out;
  if (index.size() <= cfg.chunk_size) {
    out.push_back(make_chunk(doc, index, 0, index.size(), 0));
    return out;
  }
  const auto cps = text::code_points(doc.text);
  const auto cores = RecursiveSplitter(cps, cfg).run();

  for (std::size_t i = 0; i < cores.size(); ++i) {
    std::size_t begin = cores[i].begin;
    if (i > 0 && cfg.overlap > 0) {
      // Prefix with the predecessor's trailing characters, never reaching
      // past the predecessor's own start and never exceeding chunk_size.
      const Span prev = cores[i - 1];
      const std::size_t want = prev.end >= cfg.overlap ? prev.end - cfg.overlap : 0;
      const std::size_t budget_floor =
          cores[i].end >= cfg.chunk_size ? cores[i].end - cfg.chunk_size : 0;
      const std::size_t start = std::max({want, prev.begin, budget_floor});
      if (start < prev.end) begin = start;
    }
    out.push_back(make_chunk(doc, index, begin, cores[i].end, i));
  }
  return out;
}

std::vector<Chunk> split(const SourceDocument& doc, const SplitConfig& cfg) {
  return cfg.strategy == SplitStrategy::Flat ? split_flat(doc, cfg) : split_recursive(doc, cfg);
}

std::vector<Chunk> split_all(const std::vector<SourceDocument>& docs, const SplitConfig& cfg) {
  std::vector<Chunk> out;
  for (const auto& d : docs) {
    auto chunks = split(d, cfg);
    out.insert(out.end(), std::make_move_iterator(chunks.begin()),
               std::make_move_iterator(chunks.end()));
  }
  return out;
}

void to_json(nlohmann::json& j, const Chunk& c) {
  j = {{"chunk_id", c.chunk_id},     {"doc_id", c.doc_id},     {"seq", c.seq},
       {"char_start", c.char_start}, {"char_end", c.char_end}, {"text", c.text}};
}

void from_json(const nlohmann::json& j, Chunk& c) {
  c.chunk_id = j.at("chunk_id").get<std::string>();
  c.doc_id = j.value("doc_id", "");
  c.seq = j.value("seq", std::size_t{0});
  c.char_start = j.value("char_start", std::size_t{0});
  c.char_end = j.value("char_end", std::size_t{0});
  c.text = j.at("text").get<std::string>();
}

std::string chunks_to_jsonl(const std::vector<Chunk>& chunks) {
  std::string out;
  for (const auto& c : chunks) {
    out += nlohmann::json(c).dump();
    out += '\n';
  }
  return out;
}

std::vector<Chunk> chunks_from_jsonl(std::string_view jsonl) {
  std::vector<Chunk> out;
  std::istringstream in{std::string(jsonl)};
  for (std::string line; std::getline(in, line);) {
    if (text::trim(line).empty()) continue;
    out.push_back(nlohmann::json::parse(line).get<Chunk>());
  }
  return out;
}

}  // namespace qf
