#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "titlerec/corpus.hpp"
#include "titlerec/encoder.hpp"
#include "titlerec/eval.hpp"
#include "titlerec/index.hpp"
#include "titlerec/objectives.hpp"

namespace titlerec {

// Every option of every stage; file keys and flag names are identical
// (see docs/formats.md).
struct PipelineConfig {
  std::filesystem::path articles = "articles.csv";
  std::filesystem::path transactions = "transactions_train.csv";
  std::filesystem::path customers;  // optional extra customer universe
  std::filesystem::path workdir = "work";

  std::vector<std::string> text_columns = default_text_columns();
  int holdout_days = 7;

  std::size_t min_freq = 1;
  std::size_t max_vocab_size = 5000;

  EncoderConfig encoder;  // vocab_size is filled in from the vocabulary

  std::size_t epochs = 1;
  std::size_t batch_size = 16;  // titles and pairs per step
  std::size_t max_steps = 0;    // 0 means no cap
  std::uint64_t seed = 42;
  std::size_t negatives_per_positive = 1;
  double learning_rate = 1e-3;
  double mlm_weight = 1.0;
  double np_weight = 1.0;

  Pooling pooling = Pooling::Mean;
  std::size_t stats_bucket_width = 1;

  // Throws InvalidConfig for out-of-range options.
  void validate() const;
};

// Workdir artifact names.
namespace artifact {
inline constexpr const char* kPreparedArticles = "prepared_articles.tsv";
inline constexpr const char* kTrainTransactions = "transactions_train.tsv";
inline constexpr const char* kTruth = "truth.tsv";
inline constexpr const char* kSessions = "sessions.tsv";
inline constexpr const char* kPopularity = "popularity.tsv";
inline constexpr const char* kCustomers = "customers.txt";
inline constexpr const char* kIngestSummary = "ingest_summary.txt";
inline constexpr const char* kStats = "stats.tsv";
inline constexpr const char* kVocab = "vocab.txt";
inline constexpr const char* kCheckpoint = "model.ckpt";
inline constexpr const char* kLossLog = "loss_log.tsv";
inline constexpr const char* kTrainSummary = "train_summary.txt";
inline constexpr const char* kIndex = "index.bin";
inline constexpr const char* kSubmission = "submission.csv";
inline constexpr const char* kEvalReport = "eval_report.txt";
}  // namespace artifact

std::string format_prepared_articles(std::span<const PreparedArticle> articles);
std::vector<PreparedArticle> parse_prepared_articles(std::string_view text, const std::string& source);

std::string format_transactions(std::span<const TransactionRecord> rows);
std::vector<TransactionRecord> parse_transaction_table(std::string_view text, const std::string& source);

std::string format_sessions(std::span<const SessionGroup> sessions);
std::vector<SessionGroup> parse_sessions(std::string_view text, const std::string& source);

std::string format_truth(const GroundTruth& truth);
GroundTruth parse_truth(std::string_view text, const std::string& source);

std::string format_popularity(std::span<const TransactionRecord> transactions);
std::vector<std::string> parse_popularity(std::string_view text, const std::string& source);

// Each stage returns the text it also prints to stdout.
std::string run_ingest(const PipelineConfig& config);
std::string run_stats(const PipelineConfig& config);
std::string run_train(const PipelineConfig& config);
std::string run_recommend(const PipelineConfig& config);
std::string run_evaluate(const PipelineConfig& config);
std::string run_report(const PipelineConfig& config, const std::string& customer_id);

}  // namespace titlerec
