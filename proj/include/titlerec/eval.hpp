#pragma once

#include <filesystem>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "titlerec/corpus.hpp"
#include "titlerec/index.hpp"

namespace titlerec {

inline constexpr std::size_t kMapCutoff = 12;

// customer -> articles bought in the held-out window; never empty.
using GroundTruth = std::map<std::string, std::set<std::string>>;

struct TemporalSplit {
  std::vector<TransactionRecord> train;
  std::vector<TransactionRecord> holdout;
};

// Holds out the final holdout_days calendar days (relative to the latest
// t_dat); 0 keeps everything in train.
TemporalSplit temporal_split(std::span<const TransactionRecord> transactions, int holdout_days);

GroundTruth build_ground_truth(std::span<const TransactionRecord> holdout);

// AP@k = (1 / min(|truth|, k)) * sum over hit ranks r <= k of hits(r) / r.
// Throws EmptyTruth, DuplicatePrediction.
double average_precision_at_k(std::span<const std::string> predictions,
                              const std::set<std::string>& truth, std::size_t k = kMapCutoff);

struct SubmissionRow {
  std::string customer_id;
  std::vector<std::string> prediction;
  friend bool operator==(const SubmissionRow&, const SubmissionRow&) = default;
};

struct EvalReport {
  double map_at_12 = 0.0;
  std::size_t scored_customer_count = 0;
  std::size_t excluded_customer_count = 0;
  std::vector<std::pair<std::string, double>> per_customer_ap;  // submission order

  // key=value lines: map_at_12, scored, excluded.
  std::string to_text() const;
};

// Customers missing from truth are excluded and counted; the mean runs over
// scored customers in submission order. Throws NoScorableCustomers,
// DuplicateCustomer.
EvalReport map_at_12(std::span<const SubmissionRow> submission, const GroundTruth& truth);

// Throws InvalidRow unless the row has a customer id free of separators and
// exactly 12 distinct canonical article ids.
void validate_submission_row(const SubmissionRow& row);

std::string format_submission(std::span<const SubmissionRow> rows);
std::vector<SubmissionRow> parse_submission(std::string_view text, const std::string& source);
void write_submission(std::span<const SubmissionRow> rows, const std::filesystem::path& path);
std::vector<SubmissionRow> read_submission(const std::filesystem::path& path);

// Side-by-side purchase history and recommendations for manual review,
// with the product types the two lists share. Throws UnknownCustomer.
std::string manual_eval_report(const std::string& customer_id,
                               std::span<const TransactionRecord> transactions,
                               std::span<const Recommendation> recommendations,
                               std::span<const PreparedArticle> articles);

// Product types common to the purchases and the recommendations.
std::set<std::string> shared_product_types(std::span<const std::string> purchased,
                                           std::span<const Recommendation> recommendations,
                                           std::span<const PreparedArticle> articles);

}  // namespace titlerec
