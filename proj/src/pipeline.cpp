#include "titlerec/pipeline.hpp"

#include <algorithm>
#include <charconv>
#include <numeric>
#include <set>
#include <sstream>

#include "titlerec/error.hpp"
#include "titlerec/io.hpp"
#include "titlerec/tokenizer.hpp"

namespace titlerec {
namespace {

namespace fs = std::filesystem;

// derive_seed stream ids; fixed so artifacts stay reproducible.
enum Stream : std::uint64_t { kInitStream = 0, kShuffleStream, kMaskStream, kPairStream, kDropoutStream };

void invalid(const std::string& msg) { fail(ErrorCode::InvalidConfig, msg); }

fs::path in_workdir(const PipelineConfig& c, const char* name) { return c.workdir / name; }

std::string read_artifact(const PipelineConfig& c, const char* name) {
  const auto path = in_workdir(c, name);
  if (!fs::exists(path)) {
    fail(ErrorCode::MissingArtifact, path.string() + " not found; run the earlier stage first");
  }
  return read_file(path);
}

void require_workdir(const PipelineConfig& c) {
  if (!fs::is_directory(c.workdir)) {
    fail(ErrorCode::MissingArtifact, "workdir " + c.workdir.string() + " not found; run ingest first");
  }
}

void require_input(const fs::path& path, const char* what) {
  if (!fs::is_regular_file(path)) fail(ErrorCode::IoError, std::string(what) + " file not found: " + path.string());
}

std::vector<std::string_view> table_lines(std::string_view text, const std::string& source,
                                          std::string_view header) {
  auto lines = split(text, '\n');
  if (!lines.empty() && lines.back().empty()) lines.pop_back();
  if (!header.empty()) {
    if (lines.empty() || lines.front() != header) {
      fail(ErrorCode::CorruptFile, source + ": unexpected header");
    }
    lines.erase(lines.begin());
  }
  return lines;
}

std::vector<std::string_view> fields_of(std::string_view line, std::size_t expected,
                                        const std::string& source) {
  auto fields = split(line, '\t');
  if (fields.size() != expected) {
    fail(ErrorCode::CorruptFile, source + ": expected " + std::to_string(expected) + " fields in '" +
                                     std::string(line) + "'");
  }
  return fields;
}

template <class T>
T parse_number(std::string_view s, const std::string& source) {
  T v{};
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) {
    fail(ErrorCode::CorruptFile, source + ": bad number '" + std::string(s) + "'");
  }
  return v;
}

Date parse_date_or_throw(std::string_view s, const std::string& source) {
  auto d = parse_date(s);
  if (!d) fail(ErrorCode::CorruptFile, source + ": bad date '" + std::string(s) + "'");
  return *d;
}

std::vector<std::string> split_ids(std::string_view field) {
  std::vector<std::string> ids;
  if (field.empty()) return ids;
  for (auto id : split(field, ' ')) ids.emplace_back(id);
  return ids;
}

std::string join_ids(const auto& ids) {
  std::string out;
  for (const auto& id : ids) {
    if (!out.empty()) out.push_back(' ');
    out += id;
  }
  return out;
}

std::string describe_histogram(const DescriptionHistogram& hist) {
  std::string out = "index_name\twith_description\twithout_description\n";
  for (const auto& [name, counts] : hist) {
    out += name + "\t" + std::to_string(counts.with_description) + "\t" +
           std::to_string(counts.without_description) + "\n";
  }
  return out;
}

std::vector<PreparedArticle> load_prepared(const PipelineConfig& c) {
  return parse_prepared_articles(read_artifact(c, artifact::kPreparedArticles),
                                 in_workdir(c, artifact::kPreparedArticles).string());
}

std::vector<std::string> load_customer_universe(const PipelineConfig& c) {
  std::vector<std::string> out;
  const std::string text = read_artifact(c, artifact::kCustomers);
  for (auto line : table_lines(text, artifact::kCustomers, "")) {
    out.emplace_back(line);
  }
  return out;
}

EncoderConfig encoder_config_for(const PipelineConfig& c, const Vocabulary& vocab) {
  EncoderConfig ec = c.encoder;
  ec.vocab_size = vocab.size();
  ec.validate();
  return ec;
}

// Everything recommend and report need, loaded from the workdir.
struct ServingState {
  std::vector<PreparedArticle> articles;
  std::vector<TransactionRecord> train;
  EmbeddingIndex index;
  std::vector<std::string> popularity;
  PurchaseHistories histories;
};

ServingState load_serving_state(const PipelineConfig& c) {
  auto articles = load_prepared(c);
  const auto vocab = Vocabulary::parse(read_artifact(c, artifact::kVocab),
                                       in_workdir(c, artifact::kVocab).string());
  const auto ckpt = in_workdir(c, artifact::kCheckpoint);
  if (!fs::exists(ckpt)) fail(ErrorCode::MissingArtifact, ckpt.string() + " not found; run train first");
  const auto params = load_checkpoint(ckpt, encoder_config_for(c, vocab));
  auto index = build_index(articles, params, vocab, c.pooling);
  auto train = parse_transaction_table(read_artifact(c, artifact::kTrainTransactions),
                                       in_workdir(c, artifact::kTrainTransactions).string());
  auto popularity = parse_popularity(read_artifact(c, artifact::kPopularity),
                                     in_workdir(c, artifact::kPopularity).string());
  auto histories = purchase_histories(train);
  return {std::move(articles), std::move(train), std::move(index), std::move(popularity),
          std::move(histories)};
}

std::vector<Recommendation> recommend_for(const ServingState& s, const std::string& customer_id) {
  std::span<const std::string> history;
  if (auto it = s.histories.find(customer_id); it != s.histories.end()) history = it->second;
  const auto profile = customer_profile_from_history(customer_id, history, s.index);
  return recommend(profile, s.index, s.popularity);
}

}  // namespace

void PipelineConfig::validate() const {
  if (workdir.empty()) invalid("workdir must be set");
  if (text_columns.empty()) invalid("text_columns must name at least one column");
  if (holdout_days < 0) invalid("holdout_days must be >= 0");
  if (min_freq < 1) invalid("min_freq must be >= 1");
  if (max_vocab_size < 6) invalid("max_vocab_size must be >= 6");
  if (encoder.max_len < 5) invalid("max_len must be >= 5");
  if (batch_size < 1) invalid("batch_size must be >= 1");
  if (negatives_per_positive < 1) invalid("negatives_per_positive must be >= 1");
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) invalid("learning_rate must be >= 0");
  if (!(mlm_weight >= 0.0) || !(np_weight >= 0.0) || !std::isfinite(mlm_weight) ||
      !std::isfinite(np_weight)) {
    invalid("loss weights must be finite and >= 0");
  }
  if (stats_bucket_width < 1) invalid("stats_bucket_width must be >= 1");
  EncoderConfig probe = encoder;
  if (probe.vocab_size == 0) probe.vocab_size = kFirstWordId + 1;
  probe.validate();
}

std::string format_prepared_articles(std::span<const PreparedArticle> articles) {
  std::string out = "article_id\ttext_len\tproduct_type_name\tindex_name\thas_desc\ttext\n";
  for (const auto& a : articles) {
    out += a.article_id + "\t" + std::to_string(a.text_len) + "\t" + a.product_type_name + "\t" +
           a.index_name + "\t" + (a.has_description ? "1" : "0") + "\t" + a.text + "\n";
  }
  return out;
}

std::vector<PreparedArticle> parse_prepared_articles(std::string_view text, const std::string& source) {
  std::vector<PreparedArticle> out;
  for (auto line : table_lines(text, source,
                               "article_id\ttext_len\tproduct_type_name\tindex_name\thas_desc\ttext")) {
    const auto f = fields_of(line, 6, source);
    PreparedArticle a;
    a.article_id = std::string(f[0]);
    a.text_len = parse_number<std::size_t>(f[1], source);
    a.product_type_name = std::string(f[2]);
    a.index_name = std::string(f[3]);
    if (f[4] != "0" && f[4] != "1") fail(ErrorCode::CorruptFile, source + ": bad has_desc flag");
    a.has_description = f[4] == "1";
    a.text = std::string(f[5]);
    if (seq_length(a.text) != a.text_len) fail(ErrorCode::CorruptFile, source + ": text_len mismatch");
    out.push_back(std::move(a));
  }
  return out;
}

std::string format_transactions(std::span<const TransactionRecord> rows) {
  std::string out = "t_dat\tcustomer_id\tarticle_id\tprice\tsales_channel_id\n";
  for (const auto& t : rows) {
    out += format_date(t.t_dat) + "\t" + t.customer_id + "\t" + t.article_id + "\t" +
           format_double(t.price) + "\t" + std::to_string(t.sales_channel_id) + "\n";
  }
  return out;
}

std::vector<TransactionRecord> parse_transaction_table(std::string_view text, const std::string& source) {
  std::vector<TransactionRecord> out;
  for (auto line : table_lines(text, source, "t_dat\tcustomer_id\tarticle_id\tprice\tsales_channel_id")) {
    const auto f = fields_of(line, 5, source);
    TransactionRecord t;
    t.t_dat = parse_date_or_throw(f[0], source);
    t.customer_id = std::string(f[1]);
    t.article_id = std::string(f[2]);
    t.price = parse_number<double>(f[3], source);
    t.sales_channel_id = parse_number<int>(f[4], source);
    out.push_back(std::move(t));
  }
  return out;
}

std::string format_sessions(std::span<const SessionGroup> sessions) {
  std::string out = "customer_id\tt_dat\tarticle_ids\n";
  for (const auto& s : sessions) {
    out += s.customer_id + "\t" + format_date(s.t_dat) + "\t" + join_ids(s.article_ids) + "\n";
  }
  return out;
}

std::vector<SessionGroup> parse_sessions(std::string_view text, const std::string& source) {
  std::vector<SessionGroup> out;
  for (auto line : table_lines(text, source, "customer_id\tt_dat\tarticle_ids")) {
    const auto f = fields_of(line, 3, source);
    out.push_back({std::string(f[0]), parse_date_or_throw(f[1], source), split_ids(f[2])});
  }
  return out;
}

std::string format_truth(const GroundTruth& truth) {
  std::string out = "customer_id\tarticle_ids\n";
  for (const auto& [customer, ids] : truth) out += customer + "\t" + join_ids(ids) + "\n";
  return out;
}

GroundTruth parse_truth(std::string_view text, const std::string& source) {
  GroundTruth truth;
  for (auto line : table_lines(text, source, "customer_id\tarticle_ids")) {
    const auto f = fields_of(line, 2, source);
    const auto ids = split_ids(f[1]);
    if (ids.empty()) fail(ErrorCode::CorruptFile, source + ": empty truth set");
    truth[std::string(f[0])].insert(ids.begin(), ids.end());
  }
  return truth;
}

std::string format_popularity(std::span<const TransactionRecord> transactions) {
  std::map<std::string, std::size_t> counts;
  for (const auto& t : transactions) ++counts[t.article_id];
  std::string out = "article_id\tcount\n";
  for (const auto& id : popularity_ranking(transactions)) {
    out += id + "\t" + std::to_string(counts[id]) + "\n";
  }
  return out;
}

std::vector<std::string> parse_popularity(std::string_view text, const std::string& source) {
  std::vector<std::string> out;
  for (auto line : table_lines(text, source, "article_id\tcount")) {
    const auto fields = fields_of(line, 2, source);
    parse_number<std::size_t>(fields[1], source);
    out.emplace_back(fields[0]);
  }
  return out;
}

std::string run_ingest(const PipelineConfig& c) {
  c.validate();
  require_input(c.articles, "articles");
  require_input(c.transactions, "transactions");
  if (!c.customers.empty()) require_input(c.customers, "customers");
  fs::create_directories(c.workdir);
  WorkdirLock lock(c.workdir);

  const auto articles = load_articles(c.articles);
  const auto prepared = prepare_articles(articles, c.text_columns);
  const auto transactions = load_transactions(c.transactions);
  const auto joined = join_transactions(transactions, prepared);
  std::vector<TransactionRecord> kept;
  kept.reserve(joined.rows.size());
  for (const auto& row : joined.rows) kept.push_back(row.transaction);
  const auto split = temporal_split(kept, c.holdout_days);
  const auto truth = build_ground_truth(split.holdout);
  const auto sessions = group_sessions(split.train);

  std::set<std::string> customers;
  for (const auto& t : transactions) customers.insert(t.customer_id);
  if (!c.customers.empty()) {
    for (auto& id : load_customer_ids(c.customers)) customers.insert(std::move(id));
  }
  std::string customer_text;
  for (const auto& id : customers) customer_text += id + "\n";

  std::size_t with_desc = 0;
  for (const auto& a : prepared) with_desc += a.has_description ? 1 : 0;

  std::ostringstream summary;
  summary << "articles=" << prepared.size() << "\n"
          << "articles_with_description=" << with_desc << "\n"
          << "transactions=" << transactions.size() << "\n"
          << "joined=" << joined.rows.size() << "\n"
          << "dropped=" << joined.dropped << "\n"
          << "train_transactions=" << split.train.size() << "\n"
          << "holdout_transactions=" << split.holdout.size() << "\n"
          << "holdout_customers=" << truth.size() << "\n"
          << "sessions=" << sessions.size() << "\n"
          << "customers=" << customers.size() << "\n"
          << "[missing_description]\n"
          << describe_histogram(missing_description_histogram(std::span<const ArticleRecord>(articles)));

  write_file_atomic(in_workdir(c, artifact::kPreparedArticles), format_prepared_articles(prepared));
  write_file_atomic(in_workdir(c, artifact::kTrainTransactions), format_transactions(split.train));
  write_file_atomic(in_workdir(c, artifact::kTruth), format_truth(truth));
  write_file_atomic(in_workdir(c, artifact::kSessions), format_sessions(sessions));
  write_file_atomic(in_workdir(c, artifact::kPopularity), format_popularity(split.train));
  write_file_atomic(in_workdir(c, artifact::kCustomers), customer_text);
  write_file_atomic(in_workdir(c, artifact::kIngestSummary), summary.str());
  return summary.str();
}

std::string run_stats(const PipelineConfig& c) {
  c.validate();
  require_workdir(c);
  WorkdirLock lock(c.workdir);
  const auto prepared = load_prepared(c);
  if (prepared.empty()) fail(ErrorCode::MissingArtifact, "prepared corpus is empty; nothing to describe");
  std::string out = "[text_length]\nbucket_start\tcount\n";
  for (const auto& [bucket, count] : text_length_histogram(prepared, c.stats_bucket_width)) {
    out += std::to_string(bucket) + "\t" + std::to_string(count) + "\n";
  }
  out += "[missing_description]\n";
  out += describe_histogram(missing_description_histogram(std::span<const PreparedArticle>(prepared)));
  write_file_atomic(in_workdir(c, artifact::kStats), out);
  return out;
}

std::string run_train(const PipelineConfig& c) {
  c.validate();
  require_workdir(c);
  WorkdirLock lock(c.workdir);
  const auto prepared = load_prepared(c);
  const auto sessions = parse_sessions(read_artifact(c, artifact::kSessions),
                                       in_workdir(c, artifact::kSessions).string());
  const auto vocab = build_vocab(prepared, c.min_freq, c.max_vocab_size);
  const auto ec = encoder_config_for(c, vocab);
  auto params = init_params(ec, derive_seed(c.seed, kInitStream));

  std::vector<TokenSequence> titles;
  TitleLookup lookup;
  std::vector<std::string> inventory;
  for (const auto& a : prepared) {
    lookup.emplace(a.article_id, a.text);
    inventory.push_back(a.article_id);
    auto seq = encode_single(a.text, vocab, ec.max_len);
    const bool maskable = std::any_of(seq.ids.begin(), seq.ids.end(),
                                      [](TokenId id) { return !is_special(id); });
    if (maskable) titles.push_back(std::move(seq));
  }

  Rng shuffle_rng(derive_seed(c.seed, kShuffleStream));
  Rng mask_rng(derive_seed(c.seed, kMaskStream));
  Rng pair_rng(derive_seed(c.seed, kPairStream));
  Rng dropout_rng(derive_seed(c.seed, kDropoutStream));
  Rng* dropout = ec.dropout_rate > 0.0 ? &dropout_rng : nullptr;
  auto state = OptimizerState::create(params, {.learning_rate = c.learning_rate});
  const LossWeights weights{c.mlm_weight, c.np_weight};

  std::string log = "step\tmlm\tnp\ttotal\tmlm_sum\tnp_sum\n";
  std::size_t step = 0;
  std::size_t last_pair_count = 0;
  std::optional<double> first_total;
  double last_total = 0.0;
  const auto capped = [&] { return c.max_steps > 0 && step >= c.max_steps; };
  const auto batches = [&](std::size_t n) { return (n + c.batch_size - 1) / c.batch_size; };

  for (std::size_t epoch = 0; epoch < c.epochs && !capped(); ++epoch) {
    std::vector<std::size_t> order(titles.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    shuffle_rng.shuffle(order);
    auto pairs = sample_pairs(sessions, inventory, c.negatives_per_positive, pair_rng);
    shuffle_rng.shuffle(pairs);
    last_pair_count = pairs.size();

    const std::size_t title_batches = batches(titles.size());
    const std::size_t pair_batches = batches(pairs.size());
    const std::size_t steps = std::max(title_batches, pair_batches);
    if (steps == 0) fail(ErrorCode::EmptyBatch, "no maskable titles and no training pairs");

    for (std::size_t s = 0; s < steps && !capped(); ++s) {
      std::vector<MaskedExample> masked;
      if (title_batches > 0) {
        const std::size_t begin = (s % title_batches) * c.batch_size;
        const std::size_t end = std::min(begin + c.batch_size, titles.size());
        for (std::size_t i = begin; i < end; ++i) {
          masked.push_back(apply_masking(titles[order[i]], vocab.size(), mask_rng));
        }
      }
      std::vector<PairExample> pair_examples;
      if (pair_batches > 0) {
        const std::size_t begin = (s % pair_batches) * c.batch_size;
        const std::size_t end = std::min(begin + c.batch_size, pairs.size());
        pair_examples = encode_pairs(std::span(pairs).subspan(begin, end - begin), lookup, vocab,
                                     ec.max_len);
      }
      const auto result = train_step(params, state, masked, pair_examples, weights, dropout);
      ++step;
      const auto& r = result.loss;
      log += std::to_string(step) + "\t" + format_double(r.mlm) + "\t" + format_double(r.np) + "\t" +
             format_double(r.total) + "\t" + format_double(r.mlm_sum) + "\t" + format_double(r.np_sum) +
             "\n";
      if (!first_total) first_total = r.total;
      last_total = r.total;
    }
  }

  std::size_t parameter_count = 0;
  for (const auto& [name, tensor] : params.named_tensors()) parameter_count += tensor->data.size();
  std::ostringstream summary;
  summary << "vocab_size=" << vocab.size() << "\n"
          << "parameters=" << parameter_count << "\n"
          << "titles=" << titles.size() << "\n"
          << "pairs_per_epoch=" << last_pair_count << "\n"
          << "steps=" << step << "\n";
  if (first_total) {
    summary << "initial_total=" << format_double(*first_total) << "\n"
            << "final_total=" << format_double(last_total) << "\n";
  }

  write_file_atomic(in_workdir(c, artifact::kVocab), vocab.serialize());
  save_checkpoint(params, in_workdir(c, artifact::kCheckpoint));
  write_file_atomic(in_workdir(c, artifact::kLossLog), log);
  write_file_atomic(in_workdir(c, artifact::kTrainSummary), summary.str());
  return summary.str();
}

std::string run_recommend(const PipelineConfig& c) {
  c.validate();
  require_workdir(c);
  WorkdirLock lock(c.workdir);
  const auto state = load_serving_state(c);
  const auto customers = load_customer_universe(c);

  std::vector<SubmissionRow> rows;
  rows.reserve(customers.size());
  std::size_t personalized = 0;
  for (const auto& customer : customers) {
    const auto recs = recommend_for(state, customer);
    if (recs.front().similarity) ++personalized;
    rows.push_back({customer, recommendation_ids(recs)});
  }
  state.index.save(in_workdir(c, artifact::kIndex));
  write_submission(rows, in_workdir(c, artifact::kSubmission));

  std::ostringstream summary;
  summary << "indexed_articles=" << state.index.size() << "\n"
          << "customers=" << rows.size() << "\n"
          << "personalized=" << personalized << "\n"
          << "popularity_fallback=" << rows.size() - personalized << "\n";
  return summary.str();
}

std::string run_evaluate(const PipelineConfig& c) {
  c.validate();
  require_workdir(c);
  WorkdirLock lock(c.workdir);
  const auto sub_path = in_workdir(c, artifact::kSubmission);
  if (!fs::exists(sub_path)) fail(ErrorCode::MissingArtifact, sub_path.string() + " not found; run recommend first");
  const auto submission = read_submission(sub_path);
  const auto truth = parse_truth(read_artifact(c, artifact::kTruth), in_workdir(c, artifact::kTruth).string());
  const auto report = map_at_12(submission, truth);
  const auto text = report.to_text();
  write_file_atomic(in_workdir(c, artifact::kEvalReport), text);
  return text;
}

std::string run_report(const PipelineConfig& c, const std::string& customer_id) {
  c.validate();
  require_workdir(c);
  WorkdirLock lock(c.workdir);
  const auto state = load_serving_state(c);
  const auto customers = load_customer_universe(c);
  if (!std::binary_search(customers.begin(), customers.end(), customer_id) &&
      !state.histories.count(customer_id)) {
    fail(ErrorCode::UnknownCustomer, "customer " + customer_id + " is not in the customer universe");
  }
  const auto recs = recommend_for(state, customer_id);
  return manual_eval_report(customer_id, state.train, recs, state.articles);
}

}  // namespace titlerec
