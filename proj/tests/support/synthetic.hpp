#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "titlerec/corpus.hpp"

namespace titlerec::testing {

// Catalog of `groups` x `items_per_group` articles. Every title carries its
// group's rare token among shared filler words; customers shop inside one
// group, and their held-out purchases are same-group items they have not
// bought before.
struct PlantedSpec {
  std::size_t groups = 20;
  std::size_t items_per_group = 10;
  std::size_t customers = 100;
  std::size_t cold_customers = 0;     // in customers.csv only
  std::size_t sessions_per_customer = 3;
  std::size_t items_per_session = 3;
  std::size_t holdout_items = 2;
  std::size_t filler_words = 30;
  std::size_t filler_per_title = 3;
  std::size_t train_days = 21;
  std::size_t holdout_days = 7;
  std::size_t unknown_article_rows = 0;  // transactions whose article is not in the catalog
  std::uint64_t seed = 7;
};

struct PlantedCorpus {
  std::vector<ArticleRecord> articles;
  std::vector<TransactionRecord> transactions;
  std::vector<std::string> customer_ids;  // transaction customers then cold customers
  std::vector<std::size_t> article_group;  // parallel to articles
  std::vector<std::size_t> customer_group;  // parallel to customer_ids
  std::vector<std::string> group_tokens;
};

PlantedCorpus make_planted_corpus(const PlantedSpec& spec);

std::string group_token(std::size_t group);
std::string article_id_for(std::size_t group, std::size_t item);

std::string articles_csv(const std::vector<ArticleRecord>& articles);
std::string transactions_csv(const std::vector<TransactionRecord>& transactions);
std::string customers_csv(const std::vector<std::string>& customer_ids);

// Writes articles.csv, transactions_train.csv and customers.csv into dir.
void write_planted_csvs(const PlantedCorpus& corpus, const std::filesystem::path& dir);

}  // namespace titlerec::testing
