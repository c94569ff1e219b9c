#include "qf/vindex.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <limits>
#include <mutex>
#include <sstream>
#include <thread>

#include <zlib.h>

#include "qf/error.hpp"

namespace qf {

namespace {

constexpr std::string_view kMagic = "QFIX1";
constexpr std::size_t kParallelThreshold = 16384;

double clamp_unit(double v) { return std::clamp(v, -1.0, 1.0); }

std::uint32_t crc32_of(std::string_view bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed large buffers in slices.
  constexpr std::size_t kSlice = 1u << 30;
  for (std::size_t off = 0; off < bytes.size(); off += kSlice) {
    const std::size_t n = std::min(kSlice, bytes.size() - off);
    crc = crc32(crc, reinterpret_cast<const Bytef*>(bytes.data() + off), static_cast<uInt>(n));
  }
  return static_cast<std::uint32_t>(crc);
}

void put_u32_le(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::uint32_t get_u32_le(std::string_view in) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[i])) << (8 * i);
  return v;
}

void put_float_le(std::string& out, float f) { put_u32_le(out, std::bit_cast<std::uint32_t>(f)); }

float get_float_le(std::string_view in) { return std::bit_cast<float>(get_u32_le(in)); }

}  // namespace

std::string_view to_string(RetrievalTechnique t) noexcept {
  return t == RetrievalTechnique::Mmr ? "mmr" : "similarity";
}

RetrievalTechnique retrieval_technique_from_string(std::string_view s) {
  if (s == "similarity") return RetrievalTechnique::Similarity;
  if (s == "mmr") return RetrievalTechnique::Mmr;
  throw Error(ErrorCode::InvalidArgument, "unknown retrieval technique '" + std::string(s) + "'");
}

void RetrievalConfig::validate() const {
  if (k < 1) throw Error(ErrorCode::InvalidArgument, "k must be >= 1");
  if (effective_fetch_k() < k) throw Error(ErrorCode::InvalidArgument, "fetch_k must be >= k");
  if (!(lambda >= 0.0 && lambda <= 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "lambda must lie in [0, 1]");
  }
}

VectorIndex::VectorIndex(std::size_t dim, std::string model_tag)
    : dim_(dim), model_tag_(std::move(model_tag)) {
  if (dim_ == 0) throw Error(ErrorCode::InvalidArgument, "index dim must be positive");
}

std::size_t VectorIndex::add(const std::vector<std::pair<Chunk, EmbeddingVector>>& entries) {
  std::unique_lock lock(*mu_);
  std::unordered_map<std::string, std::size_t> fresh;
  for (const auto& [chunk, vec] : entries) {
    if (vec.dim() != dim_) {
      throw Error(ErrorCode::DimensionMismatch, chunk.chunk_id + " has dim " +
                                                    std::to_string(vec.dim()) + ", index dim " +
                                                    std::to_string(dim_));
    }
    if (!vec.model_tag.empty() && !model_tag_.empty() && vec.model_tag != model_tag_) {
      throw Error(ErrorCode::DimensionMismatch,
                  "model tag '" + vec.model_tag + "' differs from index tag '" + model_tag_ + "'");
    }
    if (ids_.count(chunk.chunk_id) != 0 || !fresh.emplace(chunk.chunk_id, 0).second) {
      throw Error(ErrorCode::DuplicateChunkId, chunk.chunk_id);
    }
  }
  data_.reserve(data_.size() + entries.size() * dim_);
  for (const auto& [chunk, vec] : entries) {
    ids_.emplace(chunk.chunk_id, chunks_.size());
    chunks_.push_back(chunk);
    data_.insert(data_.end(), vec.values.begin(), vec.values.end());
  }
  return entries.size();
}

std::size_t VectorIndex::size() const {
  std::shared_lock lock(*mu_);
  return chunks_.size();
}

Chunk VectorIndex::chunk(std::size_t i) const {
  std::shared_lock lock(*mu_);
  return chunks_.at(i);
}

std::vector<float> VectorIndex::vector(std::size_t i) const {
  std::shared_lock lock(*mu_);
  if (i >= chunks_.size()) throw Error(ErrorCode::InvalidArgument, "entry out of range");
  return {data_.begin() + static_cast<std::ptrdiff_t>(i * dim_),
          data_.begin() + static_cast<std::ptrdiff_t>((i + 1) * dim_)};
}

double unit_dot(std::span<const float> a, std::span<const float> b) noexcept {
  const std::size_t n = std::min(a.size(), b.size());
  double lane[8] = {0, 0, 0, 0, 0, 0, 0, 0};
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    for (std::size_t j = 0; j < 8; ++j) lane[j] += static_cast<double>(a[i + j]) * static_cast<double>(b[i + j]);
  }
  for (std::size_t j = 0; i < n; ++i, ++j) lane[j] += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  const double s = ((lane[0] + lane[4]) + (lane[2] + lane[6])) + ((lane[1] + lane[5]) + (lane[3] + lane[7]));
  return clamp_unit(s);
}

double VectorIndex::dot(std::span<const float> a, std::size_t row) const noexcept {
  return unit_dot(a, std::span<const float>(data_.data() + row * dim_, dim_));
}

void VectorIndex::check_query(const EmbeddingVector& query) const {
  if (chunks_.empty()) throw Error(ErrorCode::EmptyIndex, "search on an empty index");
  if (query.dim() != dim_) {
    throw Error(ErrorCode::DimensionMismatch, "query dim " + std::to_string(query.dim()) +
                                                  ", index dim " + std::to_string(dim_));
  }
}

Hit VectorIndex::make_hit(std::size_t row, double score) const {
  const Chunk& c = chunks_[row];
  return Hit{c.chunk_id, score, c.text, c.doc_id};
}

// Highest scores first, ties by ascending chunk_id. Caller holds the lock.
std::vector<std::pair<double, std::size_t>> VectorIndex::top_k(std::span<const float> q,
                                                               std::size_t k) const {
  const std::size_t n = chunks_.size();
  k = std::min(k, n);
  auto better = [this](const std::pair<double, std::size_t>& a,
                       const std::pair<double, std::size_t>& b) {
    if (a.first != b.first) return a.first > b.first;
    return chunks_[a.second].chunk_id < chunks_[b.second].chunk_id;
  };
  auto scan = [&](std::size_t begin, std::size_t end) {
    std::vector<std::pair<double, std::size_t>> part;
    part.reserve(end - begin);
    for (std::size_t row = begin; row < end; ++row) part.emplace_back(dot(q, row), row);
    const std::size_t keep = std::min(k, part.size());
    std::partial_sort(part.begin(), part.begin() + static_cast<std::ptrdiff_t>(keep), part.end(), better);
    part.resize(keep);
    return part;
  };

  std::vector<std::pair<double, std::size_t>> merged;
  const unsigned threads = n >= kParallelThreshold ? threads_ : 1;
  if (threads <= 1) {
    merged = scan(0, n);
  } else {
    std::vector<std::vector<std::pair<double, std::size_t>>> parts(threads);
    {
      std::vector<std::jthread> workers;
      const std::size_t step = (n + threads - 1) / threads;
      for (unsigned t = 0; t < threads; ++t) {
        const std::size_t b = std::min(n, t * step);
        const std::size_t e = std::min(n, b + step);
        workers.emplace_back([&, t, b, e] { parts[t] = scan(b, e); });
      }
    }
    for (auto& p : parts) merged.insert(merged.end(), p.begin(), p.end());
    const std::size_t keep = std::min(k, merged.size());
    std::partial_sort(merged.begin(), merged.begin() + static_cast<std::ptrdiff_t>(keep), merged.end(),
                      better);
    merged.resize(keep);
  }
  return merged;
}

RetrievalResult VectorIndex::search_similarity(const EmbeddingVector& query,
                                               const RetrievalConfig& cfg) const {
  cfg.validate();
  std::shared_lock lock(*mu_);
  check_query(query);
  RetrievalResult result;
  result.technique_used = RetrievalTechnique::Similarity;
  for (const auto& [score, row] : top_k(query.values, cfg.k)) result.hits.push_back(make_hit(row, score));
  return result;
}

std::vector<MmrPick> mmr_select(const std::vector<double>& query_sim,
                                const std::function<double(std::size_t, std::size_t)>& pair_sim,
                                const std::vector<std::string>& ids, std::size_t k, double lambda) {
  const std::size_t n = query_sim.size();
  if (ids.size() != n) throw Error(ErrorCode::InvalidArgument, "mmr_select: ids and sims differ in length");
  k = std::min(k, n);
  std::vector<MmrPick> picks;
  std::vector<bool> taken(n, false);
  // max similarity of each candidate to anything selected so far
  std::vector<double> redundancy(n, -std::numeric_limits<double>::infinity());

  for (std::size_t step = 0; step < k; ++step) {
    std::size_t best = n;
    double best_value = 0.0;
    for (std::size_t c = 0; c < n; ++c) {
      if (taken[c]) continue;
      // The first pick maximizes query similarity alone.
      const double value = step == 0 ? query_sim[c] : lambda * query_sim[c] - (1.0 - lambda) * redundancy[c];
      if (best == n || value > best_value || (value == best_value && ids[c] < ids[best])) {
        best = c;
        best_value = value;
      }
    }
    taken[best] = true;
    // An empty selected set contributes no redundancy term.
    picks.push_back({best, step == 0 ? lambda * query_sim[best] : best_value});
    for (std::size_t c = 0; c < n; ++c) {
      if (!taken[c]) redundancy[c] = std::max(redundancy[c], pair_sim(best, c));
    }
  }
  return picks;
}

RetrievalResult VectorIndex::search_mmr(const EmbeddingVector& query,
                                        const RetrievalConfig& cfg) const {
  cfg.validate();
  std::shared_lock lock(*mu_);
  check_query(query);
  const auto pool = top_k(query.values, cfg.effective_fetch_k());
  std::vector<double> sims;
  std::vector<std::string> ids;
  for (const auto& [score, row] : pool) {
    sims.push_back(score);
    ids.push_back(chunks_[row].chunk_id);
  }
  const auto pair_sim = [&](std::size_t a, std::size_t b) {
    return dot(std::span<const float>(data_.data() + pool[a].second * dim_, dim_), pool[b].second);
  };

  RetrievalResult result;
  result.technique_used = RetrievalTechnique::Mmr;
  for (const auto& pick : mmr_select(sims, pair_sim, ids, cfg.k, cfg.lambda)) {
    result.hits.push_back(make_hit(pool[pick.index].second, pick.score));
  }
  return result;
}

RetrievalResult VectorIndex::search(const EmbeddingVector& query, const RetrievalConfig& cfg) const {
  return cfg.technique == RetrievalTechnique::Mmr ? search_mmr(query, cfg)
                                                  : search_similarity(query, cfg);
}

void VectorIndex::persist(const std::filesystem::path& path) const {
  std::string buf;
  {
    std::shared_lock lock(*mu_);
    buf.append(kMagic);
    const nlohmann::json header = {{"dim", dim_}, {"model_tag", model_tag_}, {"count", chunks_.size()}};
    buf += header.dump();
    buf.push_back('\n');
    buf.reserve(buf.size() + data_.size() * 4 + chunks_.size() * 256);
    for (const float f : data_) put_float_le(buf, f);
    for (const auto& c : chunks_) {
      buf += nlohmann::json(c).dump();
      buf.push_back('\n');
    }
  }
  put_u32_le(buf, crc32_of(buf));

  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + tmp.string());
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) throw Error(ErrorCode::IoError, "write failed for " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw Error(ErrorCode::IoError, "cannot move index into place: " + ec.message());
}

VectorIndex VectorIndex::load(const std::filesystem::path& path,
                              const std::optional<std::string>& expected_model_tag) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  const std::string buf = ss.str();

  if (buf.size() < kMagic.size() + 4) throw Error(ErrorCode::CorruptIndex, path.string() + " is truncated");
  const std::string_view body(buf.data(), buf.size() - 4);
  if (crc32_of(body) != get_u32_le(std::string_view(buf).substr(buf.size() - 4))) {
    throw Error(ErrorCode::CorruptIndex, path.string() + " checksum mismatch");
  }
  if (body.substr(0, kMagic.size()) != kMagic) {
    throw Error(ErrorCode::CorruptIndex, path.string() + " has bad magic bytes");
  }

  try {
    std::size_t pos = kMagic.size();
    const auto nl = body.find('\n', pos);
    if (nl == std::string_view::npos) throw Error(ErrorCode::CorruptIndex, "missing header");
    const auto header = nlohmann::json::parse(body.substr(pos, nl - pos));
    pos = nl + 1;
    const auto dim = header.at("dim").get<std::size_t>();
    const auto count = header.at("count").get<std::size_t>();
    auto tag = header.at("model_tag").get<std::string>();
    if (expected_model_tag && *expected_model_tag != tag) {
      throw Error(ErrorCode::DimensionMismatch,
                  "index model tag '" + tag + "' differs from expected '" + *expected_model_tag + "'");
    }
    if (dim == 0 || body.size() - pos < count * dim * 4) {
      throw Error(ErrorCode::CorruptIndex, "vector block is truncated");
    }

    VectorIndex idx(dim, std::move(tag));
    idx.data_.resize(count * dim);
    for (std::size_t i = 0; i < idx.data_.size(); ++i) {
      idx.data_[i] = get_float_le(body.substr(pos + 4 * i, 4));
    }
    pos += count * dim * 4;
    idx.chunks_.reserve(count);
    while (pos < body.size()) {
      auto end = body.find('\n', pos);
      if (end == std::string_view::npos) end = body.size();
      idx.chunks_.push_back(nlohmann::json::parse(body.substr(pos, end - pos)).get<Chunk>());
      pos = end + 1;
    }
    if (idx.chunks_.size() != count) throw Error(ErrorCode::CorruptIndex, "chunk record count mismatch");
    for (std::size_t i = 0; i < count; ++i) {
      if (!idx.ids_.emplace(idx.chunks_[i].chunk_id, i).second) {
        throw Error(ErrorCode::CorruptIndex, "duplicate chunk id " + idx.chunks_[i].chunk_id);
      }
    }
    return idx;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::CorruptIndex, path.string() + ": " + e.what());
  }
}

}  // namespace qf
