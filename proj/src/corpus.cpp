#include "titlerec/corpus.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <unordered_map>
#include <unordered_set>

#include "titlerec/csv.hpp"
#include "titlerec/error.hpp"

namespace titlerec {
namespace {

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }

// clean_text without the lowercasing; used for category labels.
std::string collapse_whitespace(std::string_view raw) {
  std::string out;
  bool pending_space = false;
  for (char c : raw) {
    if (is_space(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out.push_back(' ');
    pending_space = false;
    out.push_back(c);
  }
  return out;
}

std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::IoError, "cannot open " + path.string());
  return in;
}

// Maps required/optional column names to their header positions.
class HeaderIndex {
 public:
  HeaderIndex(const std::vector<std::string>& header, const std::string& source)
      : source_(source), width_(header.size()) {
    for (std::size_t i = 0; i < header.size(); ++i) positions_.emplace(trim(header[i]), i);
  }

  std::size_t require(const std::string& name) const {
    auto it = positions_.find(name);
    if (it == positions_.end()) {
      fail(ErrorCode::MissingColumn, source_ + ": header lacks column '" + name + "'");
    }
    return it->second;
  }

  std::optional<std::size_t> optional(const std::string& name) const {
    auto it = positions_.find(name);
    if (it == positions_.end()) return std::nullopt;
    return it->second;
  }

  std::size_t width() const { return width_; }

  static std::string trim(std::string_view s) {
    while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
    while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
    return std::string(s);
  }

 private:
  std::string source_;
  std::size_t width_;
  std::unordered_map<std::string, std::size_t> positions_;
};

[[noreturn]] void malformed(const std::string& source, std::size_t row, std::size_t line,
                            const std::string& why) {
  fail(ErrorCode::MalformedRow, source + ": data row " + std::to_string(row) + " (line " +
                                    std::to_string(line) + "): " + why);
}

}  // namespace

std::optional<Date> parse_date(std::string_view text) {
  if (text.size() != 10 || text[4] != '-' || text[7] != '-') return std::nullopt;
  int y = 0;
  unsigned m = 0, d = 0;
  auto parse = [](std::string_view s, auto& out) {
    if (!std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; })) return false;
    auto res = std::from_chars(s.data(), s.data() + s.size(), out);
    return res.ec == std::errc{} && res.ptr == s.data() + s.size();
  };
  if (!parse(text.substr(0, 4), y) || !parse(text.substr(5, 2), m) || !parse(text.substr(8, 2), d)) {
    return std::nullopt;
  }
  const Date date{std::chrono::year{y}, std::chrono::month{m}, std::chrono::day{d}};
  if (!date.ok()) return std::nullopt;
  return date;
}

std::string format_date(const Date& date) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(date.year()),
                static_cast<unsigned>(date.month()), static_cast<unsigned>(date.day()));
  return buf;
}

std::optional<std::string> normalize_article_id(std::string_view raw) {
  std::string trimmed = HeaderIndex::trim(raw);
  if (trimmed.empty() || trimmed.size() > 10) return std::nullopt;
  if (!std::all_of(trimmed.begin(), trimmed.end(), [](char c) { return c >= '0' && c <= '9'; })) {
    return std::nullopt;
  }
  return std::string(10 - trimmed.size(), '0') + trimmed;
}

bool is_canonical_article_id(std::string_view id) {
  return id.size() == 10 &&
         std::all_of(id.begin(), id.end(), [](char c) { return c >= '0' && c <= '9'; });
}

std::vector<ArticleRecord> parse_articles(std::istream& in, const std::string& source) {
  CsvReader reader(in);
  std::vector<std::string> fields;
  if (!reader.next(fields)) fail(ErrorCode::MissingColumn, source + ": missing header row");
  const HeaderIndex header(fields, source);
  const std::size_t c_id = header.require("article_id");
  const std::size_t c_name = header.require("prod_name");
  const std::size_t c_type = header.require("product_type_name");
  const std::size_t c_index = header.require("index_name");
  const std::size_t c_desc = header.require("detail_desc");

  std::vector<ArticleRecord> articles;
  std::unordered_set<std::string> seen;
  std::size_t row = 0;
  while (reader.next(fields)) {
    ++row;
    if (fields.size() != header.width()) {
      malformed(source, row, reader.line(),
                "expected " + std::to_string(header.width()) + " fields, got " +
                    std::to_string(fields.size()));
    }
    auto id = normalize_article_id(fields[c_id]);
    if (!id) malformed(source, row, reader.line(), "invalid article_id '" + fields[c_id] + "'");
    if (!seen.insert(*id).second) {
      fail(ErrorCode::DuplicateArticleId,
           source + ": data row " + std::to_string(row) + ": duplicate article_id " + *id);
    }
    ArticleRecord rec;
    rec.article_id = std::move(*id);
    rec.prod_name = std::move(fields[c_name]);
    rec.product_type_name = std::move(fields[c_type]);
    rec.index_name = std::move(fields[c_index]);
    if (!fields[c_desc].empty()) rec.detail_desc = std::move(fields[c_desc]);
    articles.push_back(std::move(rec));
  }
  return articles;
}

std::vector<ArticleRecord> load_articles(const std::filesystem::path& path) {
  auto in = open_input(path);
  return parse_articles(in, path.string());
}

std::vector<TransactionRecord> parse_transactions(std::istream& in, const std::string& source) {
  CsvReader reader(in);
  std::vector<std::string> fields;
  if (!reader.next(fields)) fail(ErrorCode::MissingColumn, source + ": missing header row");
  const HeaderIndex header(fields, source);
  const std::size_t c_date = header.require("t_dat");
  const std::size_t c_customer = header.require("customer_id");
  const std::size_t c_article = header.require("article_id");
  const auto c_price = header.optional("price");
  const auto c_channel = header.optional("sales_channel_id");

  std::vector<TransactionRecord> out;
  std::size_t row = 0;
  while (reader.next(fields)) {
    ++row;
    if (fields.size() != header.width()) {
      malformed(source, row, reader.line(),
                "expected " + std::to_string(header.width()) + " fields, got " +
                    std::to_string(fields.size()));
    }
    TransactionRecord rec;
    const std::string date_raw = HeaderIndex::trim(fields[c_date]);
    auto date = parse_date(date_raw);
    if (!date) {
      fail(ErrorCode::UnparsableDate, source + ": data row " + std::to_string(row) +
                                          ": unparsable t_dat '" + fields[c_date] + "'");
    }
    rec.t_dat = *date;
    rec.customer_id = HeaderIndex::trim(fields[c_customer]);
    if (rec.customer_id.empty()) malformed(source, row, reader.line(), "empty customer_id");
    if (std::any_of(rec.customer_id.begin(), rec.customer_id.end(),
                    [](char c) { return is_space(c) || c == ','; })) {
      malformed(source, row, reader.line(), "customer_id contains whitespace or comma");
    }
    auto id = normalize_article_id(fields[c_article]);
    if (!id) malformed(source, row, reader.line(), "invalid article_id '" + fields[c_article] + "'");
    rec.article_id = std::move(*id);
    if (c_price) {
      const std::string p = HeaderIndex::trim(fields[*c_price]);
      if (!p.empty()) {
        auto res = std::from_chars(p.data(), p.data() + p.size(), rec.price);
        if (res.ec != std::errc{} || res.ptr != p.data() + p.size() || !(rec.price >= 0.0)) {
          malformed(source, row, reader.line(), "invalid price '" + p + "'");
        }
      }
    }
    if (c_channel) {
      const std::string s = HeaderIndex::trim(fields[*c_channel]);
      if (!s.empty()) {
        auto res = std::from_chars(s.data(), s.data() + s.size(), rec.sales_channel_id);
        if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) {
          malformed(source, row, reader.line(), "invalid sales_channel_id '" + s + "'");
        }
      }
    }
    out.push_back(std::move(rec));
  }
  return out;
}

std::vector<TransactionRecord> load_transactions(const std::filesystem::path& path) {
  auto in = open_input(path);
  return parse_transactions(in, path.string());
}

std::vector<std::string> load_customer_ids(const std::filesystem::path& path) {
  auto in = open_input(path);
  const std::string source = path.string();
  CsvReader reader(in);
  std::vector<std::string> fields;
  if (!reader.next(fields)) fail(ErrorCode::MissingColumn, source + ": missing header row");
  const HeaderIndex header(fields, source);
  const std::size_t c_customer = header.require("customer_id");
  std::vector<std::string> ids;
  std::size_t row = 0;
  while (reader.next(fields)) {
    ++row;
    if (fields.size() != header.width()) {
      malformed(source, row, reader.line(), "wrong field count");
    }
    std::string id = HeaderIndex::trim(fields[c_customer]);
    if (id.empty()) malformed(source, row, reader.line(), "empty customer_id");
    ids.push_back(std::move(id));
  }
  return ids;
}

std::string clean_text(std::string_view raw) {
  std::string out;
  out.reserve(raw.size());
  bool pending_space = false;
  for (char c : raw) {
    if (is_space(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) {
      out.push_back(' ');
      pending_space = false;
    }
    out.push_back(c >= 'A' && c <= 'Z' ? static_cast<char>(c - 'A' + 'a') : c);
  }
  return out;
}

std::size_t seq_length(std::string_view text) {
  std::size_t count = 0;
  bool in_token = false;
  for (char c : text) {
    if (is_space(c)) {
      in_token = false;
    } else if (!in_token) {
      in_token = true;
      ++count;
    }
  }
  return count;
}

std::vector<PreparedArticle> prepare_articles(std::span<const ArticleRecord> articles,
                                              std::span<const std::string> text_columns) {
  if (text_columns.empty()) fail(ErrorCode::UnknownColumn, "no text columns selected");
  enum class Field { Name, Type, Index, Desc };
  std::vector<Field> fields;
  for (const auto& col : text_columns) {
    if (col == "prod_name") fields.push_back(Field::Name);
    else if (col == "product_type_name") fields.push_back(Field::Type);
    else if (col == "index_name") fields.push_back(Field::Index);
    else if (col == "detail_desc") fields.push_back(Field::Desc);
    else fail(ErrorCode::UnknownColumn, "unknown text column '" + col + "'");
  }

  std::vector<PreparedArticle> out;
  out.reserve(articles.size());
  for (const auto& a : articles) {
    std::string joined;
    for (std::size_t i = 0; i < fields.size(); ++i) {
      if (i > 0) joined.push_back(' ');
      switch (fields[i]) {
        case Field::Name: joined += a.prod_name; break;
        case Field::Type: joined += a.product_type_name; break;
        case Field::Index: joined += a.index_name; break;
        case Field::Desc: joined += a.detail_desc.value_or(""); break;
      }
    }
    PreparedArticle p;
    p.article_id = a.article_id;
    p.text = clean_text(joined);
    p.text_len = seq_length(p.text);
    p.product_type_name = clean_text(a.product_type_name);
    p.index_name = collapse_whitespace(a.index_name);
    p.has_description = a.detail_desc.has_value();
    out.push_back(std::move(p));
  }
  return out;
}

JoinResult join_transactions(std::span<const TransactionRecord> transactions,
                             std::span<const PreparedArticle> articles) {
  std::unordered_map<std::string_view, std::size_t> by_id;
  by_id.reserve(articles.size());
  for (std::size_t i = 0; i < articles.size(); ++i) by_id.emplace(articles[i].article_id, i);

  JoinResult result;
  result.rows.reserve(transactions.size());
  for (const auto& t : transactions) {
    auto it = by_id.find(t.article_id);
    if (it == by_id.end()) {
      ++result.dropped;
      continue;
    }
    result.rows.push_back({t, it->second});
  }
  return result;
}

std::vector<SessionGroup> group_sessions(std::span<const TransactionRecord> transactions) {
  std::map<std::pair<std::string_view, std::chrono::sys_days>, std::vector<std::string>> groups;
  for (const auto& t : transactions) {
    groups[{t.customer_id, std::chrono::sys_days{t.t_dat}}].push_back(t.article_id);
  }
  std::vector<SessionGroup> out;
  out.reserve(groups.size());
  for (auto& [key, ids] : groups) {
    out.push_back({std::string(key.first), Date{key.second}, std::move(ids)});
  }
  return out;
}

DescriptionHistogram missing_description_histogram(std::span<const ArticleRecord> articles) {
  DescriptionHistogram hist;
  for (const auto& a : articles) {
    auto& counts = hist[collapse_whitespace(a.index_name)];
    if (a.detail_desc) ++counts.with_description;
    else ++counts.without_description;
  }
  return hist;
}

DescriptionHistogram missing_description_histogram(std::span<const PreparedArticle> articles) {
  DescriptionHistogram hist;
  for (const auto& a : articles) {
    auto& counts = hist[a.index_name];
    if (a.has_description) ++counts.with_description;
    else ++counts.without_description;
  }
  return hist;
}

std::map<std::size_t, std::size_t> text_length_histogram(std::span<const PreparedArticle> articles,
                                                         std::size_t bucket_width) {
  if (bucket_width == 0) fail(ErrorCode::InvalidArgument, "bucket width must be >= 1");
  std::map<std::size_t, std::size_t> hist;
  for (const auto& a : articles) ++hist[a.text_len / bucket_width * bucket_width];
  return hist;
}

}  // namespace titlerec
