#pragma once

#include <chrono>
#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace titlerec {

using Date = std::chrono::year_month_day;

// Parses YYYY-MM-DD; nullopt for anything that is not a valid calendar date.
std::optional<Date> parse_date(std::string_view text);
std::string format_date(const Date& date);

// Canonical 10-digit zero-padded form; nullopt when raw is not 1-10 digits.
std::optional<std::string> normalize_article_id(std::string_view raw);
bool is_canonical_article_id(std::string_view id);

struct ArticleRecord {
  std::string article_id;
  std::string prod_name;
  std::string product_type_name;
  std::string index_name;
  std::optional<std::string> detail_desc;  // absent when the cell is empty
};

struct TransactionRecord {
  Date t_dat;
  std::string customer_id;
  std::string article_id;
  double price = 0.0;
  int sales_channel_id = 1;
};

// Article text ready for tokenization. The trailing metadata fields are
// carried along for reporting and statistics after ingest.
struct PreparedArticle {
  std::string article_id;
  std::string text;
  std::size_t text_len = 0;
  std::string product_type_name;
  std::string index_name;
  bool has_description = false;
};

struct SessionGroup {
  std::string customer_id;
  Date t_dat;
  std::vector<std::string> article_ids;  // file order, duplicates kept
};

struct JoinedTransaction {
  TransactionRecord transaction;
  std::size_t article_index = 0;  // into the prepared article list
};

struct JoinResult {
  std::vector<JoinedTransaction> rows;
  std::size_t dropped = 0;
};

struct DescriptionCounts {
  std::size_t with_description = 0;
  std::size_t without_description = 0;
  friend bool operator==(const DescriptionCounts&, const DescriptionCounts&) = default;
};

using DescriptionHistogram = std::map<std::string, DescriptionCounts>;

inline const std::vector<std::string>& default_text_columns() {
  static const std::vector<std::string> columns{"prod_name", "product_type_name",
                                                "index_name", "detail_desc"};
  return columns;
}

std::vector<ArticleRecord> load_articles(const std::filesystem::path& path);
std::vector<ArticleRecord> parse_articles(std::istream& in, const std::string& source);

std::vector<TransactionRecord> load_transactions(const std::filesystem::path& path);
std::vector<TransactionRecord> parse_transactions(std::istream& in, const std::string& source);

// customer_id column of customers.csv, in file order.
std::vector<std::string> load_customer_ids(const std::filesystem::path& path);

std::string clean_text(std::string_view raw);
std::size_t seq_length(std::string_view text);

std::vector<PreparedArticle> prepare_articles(std::span<const ArticleRecord> articles,
                                              std::span<const std::string> text_columns);

JoinResult join_transactions(std::span<const TransactionRecord> transactions,
                             std::span<const PreparedArticle> articles);

std::vector<SessionGroup> group_sessions(std::span<const TransactionRecord> transactions);

DescriptionHistogram missing_description_histogram(std::span<const ArticleRecord> articles);
DescriptionHistogram missing_description_histogram(std::span<const PreparedArticle> articles);

// Bucket start -> article count, buckets of bucket_width tokens.
std::map<std::size_t, std::size_t> text_length_histogram(
    std::span<const PreparedArticle> articles, std::size_t bucket_width = 1);

}  // namespace titlerec
