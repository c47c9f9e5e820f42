#include "titlerec/index.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <unordered_set>

#include "titlerec/error.hpp"
#include "titlerec/io.hpp"

namespace titlerec {
namespace {

constexpr char kIndexMagic[8] = {'T', 'R', 'E', 'C', 'I', 'N', 'D', 'X'};
constexpr std::uint32_t kIndexVersion = 1;
constexpr std::uint32_t kMetricCosine = 1;

bool ranks_before(const NeighborResult& a, const NeighborResult& b) {
  if (a.similarity != b.similarity) return a.similarity > b.similarity;
  return a.article_id < b.article_id;
}

}  // namespace

void normalize_or_throw(std::span<double> v, const std::string& what) {
  const double norm = l2_norm(v);
  if (!(norm >= kDegenerateNorm)) {
    fail(ErrorCode::DegenerateEmbedding, what + ": vector norm " + format_double(norm) +
                                             " is too small to normalize");
  }
  for (auto& x : v) x /= norm;
}

EmbeddingIndex::EmbeddingIndex(std::vector<std::string> article_ids, Matrix vectors)
    : article_ids_(std::move(article_ids)), vectors_(std::move(vectors)) {
  if (vectors_.rows != article_ids_.size()) {
    fail(ErrorCode::ShapeMismatch, "index has " + std::to_string(article_ids_.size()) + " ids but " +
                                       std::to_string(vectors_.rows) + " rows");
  }
  rows_.reserve(article_ids_.size());
  for (std::size_t i = 0; i < article_ids_.size(); ++i) {
    if (!rows_.emplace(article_ids_[i], i).second) {
      fail(ErrorCode::DuplicateArticleId, "article " + article_ids_[i] + " appears twice in the index");
    }
    const double norm = l2_norm(vectors_.row(i));
    if (!(std::abs(norm - 1.0) <= kUnitTolerance)) {
      fail(ErrorCode::DegenerateEmbedding,
           "row for article " + article_ids_[i] + " has norm " + format_double(norm));
    }
  }
}

std::optional<std::size_t> EmbeddingIndex::find(std::string_view article_id) const {
  auto it = rows_.find(std::string(article_id));
  if (it == rows_.end()) return std::nullopt;
  return it->second;
}

std::string EmbeddingIndex::serialize() const {
  BinaryWriter w;
  w.bytes(kIndexMagic, sizeof kIndexMagic);
  w.u32(kIndexVersion);
  w.u64(size());
  w.u32(static_cast<std::uint32_t>(dimension()));
  w.u32(kMetricCosine);
  for (const auto& id : article_ids_) w.str(id);
  w.bytes(vectors_.data.data(), vectors_.data.size() * sizeof(double));
  return w.buffer();
}

void EmbeddingIndex::save(const std::filesystem::path& path) const {
  write_file_atomic(path, serialize());
}

EmbeddingIndex EmbeddingIndex::load(const std::filesystem::path& path) {
  BinaryReader r(read_file(path), path.string());
  char magic[8];
  r.bytes(magic, sizeof magic);
  if (!std::equal(std::begin(magic), std::end(magic), std::begin(kIndexMagic))) {
    fail(ErrorCode::CorruptFile, path.string() + ": not an index file");
  }
  if (r.u32() != kIndexVersion) fail(ErrorCode::CorruptFile, path.string() + ": unsupported version");
  const std::uint64_t count = r.u64();
  const std::uint32_t dim = r.u32();
  if (r.u32() != kMetricCosine) fail(ErrorCode::CorruptFile, path.string() + ": unknown metric");
  std::vector<std::string> ids;
  ids.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) ids.push_back(r.str());
  Matrix vectors(count, dim);
  r.bytes(vectors.data.data(), vectors.data.size() * sizeof(double));
  if (!r.at_end()) fail(ErrorCode::CorruptFile, path.string() + ": trailing bytes");
  return EmbeddingIndex(std::move(ids), std::move(vectors));
}

std::vector<double> embed_article(const EncoderParams& params, const PreparedArticle& article,
                                  const Vocabulary& vocab, Pooling pooling) {
  const auto seq = encode_single(article.text, vocab, params.config.max_len);
  const auto trace = forward(params, seq, {.record = false});
  std::vector<double> v(params.config.d_model, 0.0);
  if (pooling == Pooling::Cls) {
    v = trace.pooled_cls;
  } else {
    std::size_t count = 0;
    for (std::size_t t = 0; t < seq.length(); ++t) {
      if (!seq.attn_mask[t]) continue;
      ++count;
      const auto h = trace.hidden_states.row(t);
      for (std::size_t c = 0; c < v.size(); ++c) v[c] += h[c];
    }
    for (auto& x : v) x /= static_cast<double>(count);
  }
  normalize_or_throw(v, "article " + article.article_id);
  return v;
}

EmbeddingIndex build_index(std::span<const PreparedArticle> articles, const EncoderParams& params,
                           const Vocabulary& vocab, Pooling pooling) {
  if (articles.empty()) fail(ErrorCode::InvalidArgument, "cannot index an empty article list");
  std::vector<std::string> ids;
  ids.reserve(articles.size());
  Matrix vectors(articles.size(), params.config.d_model);
  for (std::size_t i = 0; i < articles.size(); ++i) {
    ids.push_back(articles[i].article_id);
    const auto v = embed_article(params, articles[i], vocab, pooling);
    std::copy(v.begin(), v.end(), vectors.row(i).begin());
  }
  return EmbeddingIndex(std::move(ids), std::move(vectors));
}

std::vector<NeighborResult> query_knn(const EmbeddingIndex& index, std::span<const double> query,
                                      std::size_t k) {
  if (k < 1) fail(ErrorCode::InvalidArgument, "k must be >= 1");
  if (k > index.size()) {
    fail(ErrorCode::KTooLarge, "k=" + std::to_string(k) + " exceeds index size " +
                                   std::to_string(index.size()));
  }
  if (query.size() != index.dimension()) fail(ErrorCode::ShapeMismatch, "query dimension mismatch");
  std::vector<NeighborResult> all;
  all.reserve(index.size());
  for (std::size_t i = 0; i < index.size(); ++i) {
    all.push_back({index.article_ids()[i], dot(query, index.vector(i))});
  }
  std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(k), all.end(),
                    ranks_before);
  all.resize(k);
  return all;
}

PurchaseHistories purchase_histories(std::span<const TransactionRecord> transactions) {
  PurchaseHistories out;
  for (const auto& t : transactions) out[t.customer_id].push_back(t.article_id);
  return out;
}

CustomerProfile customer_profile(const std::string& customer_id,
                                 std::span<const TransactionRecord> transactions,
                                 const EmbeddingIndex& index) {
  std::vector<std::string> purchased;
  for (const auto& t : transactions) {
    if (t.customer_id == customer_id) purchased.push_back(t.article_id);
  }
  return customer_profile_from_history(customer_id, purchased, index);
}

CustomerProfile customer_profile_from_history(const std::string& customer_id,
                                              std::span<const std::string> purchased,
                                              const EmbeddingIndex& index) {
  CustomerProfile profile;
  profile.customer_id = customer_id;
  const std::set<std::string> distinct(purchased.begin(), purchased.end());
  profile.purchased_article_ids.assign(distinct.begin(), distinct.end());

  std::vector<double> mean(index.dimension(), 0.0);
  std::size_t resolved = 0;
  for (const auto& id : profile.purchased_article_ids) {
    const auto row = index.find(id);
    if (!row) continue;
    ++resolved;
    const auto v = index.vector(*row);
    for (std::size_t c = 0; c < mean.size(); ++c) mean[c] += v[c];
  }
  if (resolved == 0) return profile;
  for (auto& x : mean) x /= static_cast<double>(resolved);
  if (!(l2_norm(mean) >= kDegenerateNorm)) {
    profile.degenerate = true;
    return profile;
  }
  normalize_or_throw(mean, "profile of " + customer_id);
  profile.profile_vector = std::move(mean);
  return profile;
}

std::vector<std::string> popularity_ranking(std::span<const TransactionRecord> transactions) {
  std::map<std::string, std::size_t> counts;
  for (const auto& t : transactions) ++counts[t.article_id];
  std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> out;
  out.reserve(ranked.size());
  for (auto& [id, n] : ranked) out.push_back(std::move(id));
  return out;
}

std::vector<Recommendation> recommend(const CustomerProfile& profile, const EmbeddingIndex& index,
                                      std::span<const std::string> popularity, std::size_t n) {
  std::vector<Recommendation> out;
  out.reserve(n);
  std::unordered_set<std::string> taken;
  const std::unordered_set<std::string> purchased(profile.purchased_article_ids.begin(),
                                                  profile.purchased_article_ids.end());
  const bool personalized = profile.profile_vector.has_value();

  if (personalized && index.size() > 0) {
    const std::size_t k = std::min(n + purchased.size(), index.size());
    for (auto& hit : query_knn(index, *profile.profile_vector, k)) {
      if (out.size() == n) break;
      if (purchased.count(hit.article_id)) continue;
      taken.insert(hit.article_id);
      out.push_back({std::move(hit.article_id), hit.similarity});
    }
  }
  // Popularity backfill; purchased items stay excluded on the profile path.
  for (const auto& id : popularity) {
    if (out.size() == n) break;
    if (taken.count(id) || (personalized && purchased.count(id))) continue;
    taken.insert(id);
    out.push_back({id, std::nullopt});
  }
  if (out.size() < n) {
    // Popularity list too short: fall back to catalog order.
    std::vector<std::string> rest(index.article_ids().begin(), index.article_ids().end());
    std::sort(rest.begin(), rest.end());
    for (auto& id : rest) {
      if (out.size() == n) break;
      if (taken.count(id) || (personalized && purchased.count(id))) continue;
      taken.insert(id);
      out.push_back({std::move(id), std::nullopt});
    }
  }
  if (out.size() < n) {
    fail(ErrorCode::InsufficientCandidates, "only " + std::to_string(out.size()) +
                                                " candidates available for customer " +
                                                profile.customer_id);
  }
  return out;
}

std::vector<std::string> recommendation_ids(std::span<const Recommendation> recs) {
  std::vector<std::string> ids;
  ids.reserve(recs.size());
  for (const auto& r : recs) ids.push_back(r.article_id);
  return ids;
}

}  // namespace titlerec
