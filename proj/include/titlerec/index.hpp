#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "titlerec/corpus.hpp"
#include "titlerec/encoder.hpp"
#include "titlerec/matrix.hpp"
#include "titlerec/tokenizer.hpp"

namespace titlerec {

enum class Pooling { Mean, Cls };

inline constexpr double kUnitTolerance = 1e-6;
inline constexpr double kDegenerateNorm = 1e-12;

// Scales v to unit length in place. Throws DegenerateEmbedding when the norm
// is below 1e-12.
void normalize_or_throw(std::span<double> v, const std::string& what);

// Exact nearest-neighbor index over unit-length article vectors.
class EmbeddingIndex {
 public:
  // Throws DuplicateArticleId, ShapeMismatch, or DegenerateEmbedding when
  // a row is not unit length.
  EmbeddingIndex(std::vector<std::string> article_ids, Matrix vectors);

  std::size_t size() const { return article_ids_.size(); }
  std::size_t dimension() const { return vectors_.cols; }
  const std::vector<std::string>& article_ids() const { return article_ids_; }
  const Matrix& vectors() const { return vectors_; }
  std::span<const double> vector(std::size_t row) const { return vectors_.row(row); }
  std::optional<std::size_t> find(std::string_view article_id) const;

  // Header, id table, row-major payload; see docs/formats.md.
  std::string serialize() const;
  void save(const std::filesystem::path& path) const;
  static EmbeddingIndex load(const std::filesystem::path& path);

  friend bool operator==(const EmbeddingIndex& a, const EmbeddingIndex& b) {
    return a.article_ids_ == b.article_ids_ && a.vectors_ == b.vectors_;
  }

 private:
  std::vector<std::string> article_ids_;
  Matrix vectors_;
  std::unordered_map<std::string, std::size_t> rows_;
};

struct NeighborResult {
  std::string article_id;
  double similarity = 0.0;
  friend bool operator==(const NeighborResult&, const NeighborResult&) = default;
};

std::vector<double> embed_article(const EncoderParams& params, const PreparedArticle& article,
                                  const Vocabulary& vocab, Pooling pooling = Pooling::Mean);

EmbeddingIndex build_index(std::span<const PreparedArticle> articles, const EncoderParams& params,
                           const Vocabulary& vocab, Pooling pooling = Pooling::Mean);

// Exact top-k by cosine, similarity descending then article_id ascending.
// Throws KTooLarge when k exceeds the index size.
std::vector<NeighborResult> query_knn(const EmbeddingIndex& index, std::span<const double> query,
                                      std::size_t k);

struct CustomerProfile {
  std::string customer_id;
  std::vector<std::string> purchased_article_ids;  // distinct, ascending
  std::optional<std::vector<double>> profile_vector;
  // Purchases resolved but their mean vector had (near) zero length.
  bool degenerate = false;
};

// customer -> purchased article ids in transaction order (duplicates kept).
using PurchaseHistories = std::map<std::string, std::vector<std::string>>;
PurchaseHistories purchase_histories(std::span<const TransactionRecord> transactions);

CustomerProfile customer_profile(const std::string& customer_id,
                                 std::span<const TransactionRecord> transactions,
                                 const EmbeddingIndex& index);
CustomerProfile customer_profile_from_history(const std::string& customer_id,
                                              std::span<const std::string> purchased,
                                              const EmbeddingIndex& index);

// Transaction count descending, article_id ascending.
std::vector<std::string> popularity_ranking(std::span<const TransactionRecord> transactions);

struct Recommendation {
  std::string article_id;
  std::optional<double> similarity;  // absent for popularity backfill
};

inline constexpr std::size_t kRecommendationCount = 12;

// Nearest neighbours of the profile with purchased items removed, backfilled
// from popularity; cold-start and degenerate profiles get the popularity
// head. Always n distinct ids or InsufficientCandidates.
std::vector<Recommendation> recommend(const CustomerProfile& profile, const EmbeddingIndex& index,
                                      std::span<const std::string> popularity,
                                      std::size_t n = kRecommendationCount);

std::vector<std::string> recommendation_ids(std::span<const Recommendation> recs);

}  // namespace titlerec
