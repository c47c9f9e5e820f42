#include "titlerec/eval.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "titlerec/error.hpp"
#include "titlerec/io.hpp"

namespace titlerec {
namespace {

constexpr std::string_view kSubmissionHeader = "customer_id,prediction";

}  // namespace

TemporalSplit temporal_split(std::span<const TransactionRecord> transactions, int holdout_days) {
  if (holdout_days < 0) fail(ErrorCode::InvalidArgument, "holdout_days must be >= 0");
  TemporalSplit split;
  if (transactions.empty() || holdout_days == 0) {
    split.train.assign(transactions.begin(), transactions.end());
    return split;
  }
  std::chrono::sys_days latest{transactions.front().t_dat};
  for (const auto& t : transactions) latest = std::max(latest, std::chrono::sys_days{t.t_dat});
  const auto cutoff = latest - std::chrono::days{holdout_days};
  for (const auto& t : transactions) {
    if (std::chrono::sys_days{t.t_dat} > cutoff) split.holdout.push_back(t);
    else split.train.push_back(t);
  }
  return split;
}

GroundTruth build_ground_truth(std::span<const TransactionRecord> holdout) {
  GroundTruth truth;
  for (const auto& t : holdout) truth[t.customer_id].insert(t.article_id);
  return truth;
}

double average_precision_at_k(std::span<const std::string> predictions,
                              const std::set<std::string>& truth, std::size_t k) {
  if (truth.empty()) fail(ErrorCode::EmptyTruth, "ground truth set is empty");
  std::unordered_set<std::string_view> seen;
  for (const auto& p : predictions) {
    if (!seen.insert(p).second) fail(ErrorCode::DuplicatePrediction, "article " + p + " predicted twice");
  }
  double sum = 0.0;
  std::size_t hits = 0;
  const std::size_t depth = std::min(k, predictions.size());
  for (std::size_t r = 0; r < depth; ++r) {
    if (truth.count(predictions[r])) {
      ++hits;
      sum += static_cast<double>(hits) / static_cast<double>(r + 1);
    }
  }
  return sum / static_cast<double>(std::min(truth.size(), k));
}

std::string EvalReport::to_text() const {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.12f", map_at_12);
  std::string out = "map_at_12=" + std::string(buf) + "\n";
  out += "scored=" + std::to_string(scored_customer_count) + "\n";
  out += "excluded=" + std::to_string(excluded_customer_count) + "\n";
  return out;
}

EvalReport map_at_12(std::span<const SubmissionRow> submission, const GroundTruth& truth) {
  EvalReport report;
  std::unordered_set<std::string_view> seen;
  double sum = 0.0;
  for (const auto& row : submission) {
    if (!seen.insert(row.customer_id).second) {
      fail(ErrorCode::DuplicateCustomer, "customer " + row.customer_id + " appears twice");
    }
    auto it = truth.find(row.customer_id);
    if (it == truth.end()) {
      ++report.excluded_customer_count;
      continue;
    }
    const double ap = average_precision_at_k(row.prediction, it->second, kMapCutoff);
    report.per_customer_ap.emplace_back(row.customer_id, ap);
    sum += ap;
    ++report.scored_customer_count;
  }
  if (report.scored_customer_count == 0) {
    fail(ErrorCode::NoScorableCustomers, "no submitted customer has held-out purchases");
  }
  report.map_at_12 = sum / static_cast<double>(report.scored_customer_count);
  return report;
}

void validate_submission_row(const SubmissionRow& row) {
  if (row.customer_id.empty() ||
      row.customer_id.find_first_of(", \t\r\n\"") != std::string::npos) {
    fail(ErrorCode::InvalidRow, "invalid customer_id '" + row.customer_id + "'");
  }
  if (row.prediction.size() != kRecommendationCount) {
    fail(ErrorCode::InvalidRow, "customer " + row.customer_id + " has " +
                                    std::to_string(row.prediction.size()) + " predictions, expected 12");
  }
  std::unordered_set<std::string_view> seen;
  for (const auto& id : row.prediction) {
    if (!is_canonical_article_id(id)) {
      fail(ErrorCode::InvalidRow, "customer " + row.customer_id + ": '" + id + "' is not a 10-digit id");
    }
    if (!seen.insert(id).second) {
      fail(ErrorCode::InvalidRow, "customer " + row.customer_id + ": duplicate prediction " + id);
    }
  }
}

std::string format_submission(std::span<const SubmissionRow> rows) {
  std::string out(kSubmissionHeader);
  out.push_back('\n');
  for (const auto& row : rows) {
    validate_submission_row(row);
    out += row.customer_id;
    out.push_back(',');
    for (std::size_t i = 0; i < row.prediction.size(); ++i) {
      if (i > 0) out.push_back(' ');
      out += row.prediction[i];
    }
    out.push_back('\n');
  }
  return out;
}

std::vector<SubmissionRow> parse_submission(std::string_view text, const std::string& source) {
  auto violation = [&](std::size_t line, const std::string& why) {
    fail(ErrorCode::FormatViolation, source + ": line " + std::to_string(line) + ": " + why);
  };
  auto lines = split(text, '\n');
  if (lines.empty() || lines[0] != kSubmissionHeader) {
    violation(1, "expected header 'customer_id,prediction'");
  }
  if (lines.back().empty()) {
    lines.pop_back();
  } else {
    violation(lines.size(), "missing trailing newline");
  }
  std::vector<SubmissionRow> rows;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto fields = split(lines[i], ',');
    if (fields.size() != 2) violation(i + 1, "expected 2 comma-separated fields");
    SubmissionRow row;
    row.customer_id = std::string(fields[0]);
    for (auto id : split(fields[1], ' ')) row.prediction.emplace_back(id);
    try {
      validate_submission_row(row);
    } catch (const Error& e) {
      violation(i + 1, e.what());
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

void write_submission(std::span<const SubmissionRow> rows, const std::filesystem::path& path) {
  write_file_atomic(path, format_submission(rows));
}

std::vector<SubmissionRow> read_submission(const std::filesystem::path& path) {
  return parse_submission(read_file(path), path.string());
}

std::set<std::string> shared_product_types(std::span<const std::string> purchased,
                                           std::span<const Recommendation> recommendations,
                                           std::span<const PreparedArticle> articles) {
  std::unordered_map<std::string_view, const PreparedArticle*> by_id;
  for (const auto& a : articles) by_id.emplace(a.article_id, &a);
  auto types_of = [&](auto&& ids) {
    std::set<std::string> types;
    for (const auto& id : ids) {
      auto it = by_id.find(id);
      if (it != by_id.end() && !it->second->product_type_name.empty()) {
        types.insert(it->second->product_type_name);
      }
    }
    return types;
  };
  const auto bought = types_of(purchased);
  const auto recommended = types_of(recommendation_ids(recommendations));
  std::set<std::string> shared;
  std::set_intersection(bought.begin(), bought.end(), recommended.begin(), recommended.end(),
                        std::inserter(shared, shared.end()));
  return shared;
}

std::string manual_eval_report(const std::string& customer_id,
                               std::span<const TransactionRecord> transactions,
                               std::span<const Recommendation> recommendations,
                               std::span<const PreparedArticle> articles) {
  std::vector<std::string> purchased;
  std::unordered_set<std::string> seen;
  for (const auto& t : transactions) {
    if (t.customer_id == customer_id && seen.insert(t.article_id).second) {
      purchased.push_back(t.article_id);
    }
  }
  if (purchased.empty() && recommendations.empty()) {
    fail(ErrorCode::UnknownCustomer, "customer " + customer_id + " has no purchases or recommendations");
  }
  std::unordered_map<std::string_view, const PreparedArticle*> by_id;
  for (const auto& a : articles) by_id.emplace(a.article_id, &a);
  auto describe = [&](const std::string& id) {
    auto it = by_id.find(id);
    if (it == by_id.end()) return std::string("(not in catalog)");
    return "[" + it->second->product_type_name + "] " + it->second->text;
  };

  std::ostringstream out;
  out << "customer: " << customer_id << "\n\n";
  out << "purchases (" << purchased.size() << "):\n";
  if (purchased.empty()) out << "  none; cold-start customer, recommendations come from the popularity fallback\n";
  for (const auto& id : purchased) out << "  " << id << "  " << describe(id) << "\n";

  out << "\nrecommendations (" << recommendations.size() << "):\n";
  for (std::size_t i = 0; i < recommendations.size(); ++i) {
    const auto& r = recommendations[i];
    char rank[32];
    std::snprintf(rank, sizeof rank, "%2zu. ", i + 1);
    out << "  " << rank << r.article_id << "  ";
    if (r.similarity) {
      char sim[32];
      std::snprintf(sim, sizeof sim, "sim=%.4f", *r.similarity);
      out << sim;
    } else {
      out << "popular";
    }
    out << "  " << describe(r.article_id) << "\n";
  }

  const auto shared = shared_product_types(purchased, recommendations, articles);
  out << "\nshared product types (" << shared.size() << "): ";
  if (shared.empty()) out << "none";
  bool first = true;
  for (const auto& t : shared) {
    out << (first ? "" : ", ") << t;
    first = false;
  }
  out << "\n";
  return out.str();
}

}  // namespace titlerec
