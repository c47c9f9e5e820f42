#include "titlerec/tokenizer.hpp"

#include <algorithm>
#include <map>

#include "titlerec/error.hpp"
#include "titlerec/io.hpp"

namespace titlerec {

Vocabulary::Vocabulary(std::vector<std::string> words) {
  id_to_token_.reserve(words.size() + kFirstWordId);
  for (auto special : kSpecialTokens) id_to_token_.emplace_back(special);
  for (auto& w : words) id_to_token_.push_back(std::move(w));
  for (std::size_t i = 0; i < id_to_token_.size(); ++i) {
    const std::string& tok = id_to_token_[i];
    if (tok.empty() || tok.find_first_of(" \t\r\n") != std::string::npos) {
      fail(ErrorCode::InvalidArgument, "vocabulary token must be a non-empty word: '" + tok + "'");
    }
    if (!token_to_id_.emplace(tok, static_cast<TokenId>(i)).second) {
      fail(ErrorCode::InvalidArgument, "duplicate vocabulary token '" + tok + "'");
    }
  }
}

TokenId Vocabulary::id_of(std::string_view token) const {
  auto it = token_to_id_.find(std::string(token));
  return it == token_to_id_.end() ? kUnkId : it->second;
}

bool Vocabulary::contains(std::string_view token) const {
  return token_to_id_.count(std::string(token)) > 0;
}

const std::string& Vocabulary::token(TokenId id) const {
  if (id >= id_to_token_.size()) {
    fail(ErrorCode::IdOutOfRange, "token id " + std::to_string(id) + " outside vocabulary of size " +
                                      std::to_string(id_to_token_.size()));
  }
  return id_to_token_[id];
}

std::string Vocabulary::serialize() const {
  std::string out;
  for (const auto& tok : id_to_token_) {
    out += tok;
    out.push_back('\n');
  }
  return out;
}

void Vocabulary::save(const std::filesystem::path& path) const {
  write_file_atomic(path, serialize());
}

Vocabulary Vocabulary::parse(std::string_view text, const std::string& source) {
  auto lines = split(text, '\n');
  if (!lines.empty() && lines.back().empty()) lines.pop_back();
  if (lines.size() < kFirstWordId) fail(ErrorCode::CorruptFile, source + ": missing special tokens");
  for (std::size_t i = 0; i < kFirstWordId; ++i) {
    if (lines[i] != kSpecialTokens[i]) {
      fail(ErrorCode::CorruptFile, source + ": line " + std::to_string(i + 1) +
                                       " must be " + std::string(kSpecialTokens[i]));
    }
  }
  std::vector<std::string> words;
  for (std::size_t i = kFirstWordId; i < lines.size(); ++i) words.emplace_back(lines[i]);
  try {
    return Vocabulary(std::move(words));
  } catch (const Error& e) {
    fail(ErrorCode::CorruptFile, source + ": " + e.what());
  }
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  return parse(read_file(path), path.string());
}

std::vector<std::string_view> split_words(std::string_view text) {
  std::vector<std::string_view> words;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && text[i] == ' ') ++i;
    const std::size_t start = i;
    while (i < text.size() && text[i] != ' ') ++i;
    if (i > start) words.push_back(text.substr(start, i - start));
  }
  return words;
}

Vocabulary build_vocab(std::span<const PreparedArticle> corpus, std::size_t min_freq,
                       std::size_t max_size) {
  if (corpus.empty()) fail(ErrorCode::EmptyCorpus, "cannot build a vocabulary from no articles");
  if (min_freq < 1) fail(ErrorCode::InvalidArgument, "min_freq must be >= 1");
  if (max_size < kFirstWordId + 1) fail(ErrorCode::InvalidArgument, "max_size must be >= 6");

  std::map<std::string, std::size_t> freq;
  for (const auto& a : corpus) {
    for (auto w : split_words(a.text)) ++freq[std::string(w)];
  }
  std::vector<std::pair<std::string, std::size_t>> ranked;
  for (auto& [tok, n] : freq) {
    const bool reserved = std::find(std::begin(kSpecialTokens), std::end(kSpecialTokens), tok) !=
                          std::end(kSpecialTokens);
    if (n >= min_freq && !reserved) ranked.emplace_back(tok, n);
  }
  // freq is ordered by token, so a stable sort on count keeps the
  // lexicographic tie-break.
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& x, const auto& y) { return x.second > y.second; });
  const std::size_t keep = std::min(ranked.size(), max_size - kFirstWordId);
  std::vector<std::string> words;
  words.reserve(keep);
  for (std::size_t i = 0; i < keep; ++i) words.push_back(std::move(ranked[i].first));
  return Vocabulary(std::move(words));
}

TokenSequence encode_single(std::string_view text, const Vocabulary& vocab, std::size_t max_len) {
  if (max_len < 3) fail(ErrorCode::InvalidArgument, "encode_single needs max_len >= 3");
  const auto words = split_words(text);
  const std::size_t n = std::min(words.size(), max_len - 2);

  TokenSequence seq;
  seq.ids.assign(max_len, kPadId);
  seq.segments.assign(max_len, 0);
  seq.attn_mask.assign(max_len, 0);
  std::size_t pos = 0;
  seq.ids[pos++] = kClsId;
  for (std::size_t i = 0; i < n; ++i) seq.ids[pos++] = vocab.id_of(words[i]);
  seq.ids[pos++] = kSepId;
  std::fill_n(seq.attn_mask.begin(), pos, 1);
  return seq;
}

PairLengths truncate_pair_lengths(std::size_t len_a, std::size_t len_b, std::size_t max_len) {
  const std::size_t budget = max_len - 3;
  if (len_a + len_b <= budget) return {len_a, len_b};
  const std::size_t shorter = std::min(len_a, len_b);
  if (2 * shorter <= budget) {
    // Only the longer side is trimmed (the sides cannot be equal here).
    if (len_a > len_b) return {budget - len_b, len_b};
    return {len_a, budget - len_a};
  }
  // Both sides end within one token of each other; ties trim B first.
  return {budget - budget / 2, budget / 2};
}

TokenSequence encode_pair(std::string_view text_a, std::string_view text_b,
                          const Vocabulary& vocab, std::size_t max_len) {
  if (max_len < 5) fail(ErrorCode::InvalidArgument, "encode_pair needs max_len >= 5");
  const auto a = split_words(text_a);
  const auto b = split_words(text_b);
  const auto keep = truncate_pair_lengths(a.size(), b.size(), max_len);

  TokenSequence seq;
  seq.ids.assign(max_len, kPadId);
  seq.segments.assign(max_len, 0);
  seq.attn_mask.assign(max_len, 0);
  std::size_t pos = 0;
  seq.ids[pos++] = kClsId;
  for (std::size_t i = 0; i < keep.a; ++i) seq.ids[pos++] = vocab.id_of(a[i]);
  seq.ids[pos++] = kSepId;
  const std::size_t second_start = pos;
  for (std::size_t i = 0; i < keep.b; ++i) seq.ids[pos++] = vocab.id_of(b[i]);
  seq.ids[pos++] = kSepId;
  std::fill(seq.segments.begin() + static_cast<std::ptrdiff_t>(second_start),
            seq.segments.begin() + static_cast<std::ptrdiff_t>(pos), 1);
  std::fill_n(seq.attn_mask.begin(), pos, 1);
  return seq;
}

std::string decode(std::span<const TokenId> ids, const Vocabulary& vocab) {
  std::string out;
  for (TokenId id : ids) {
    const std::string& tok = vocab.token(id);
    if (is_special(id)) continue;
    if (!out.empty()) out.push_back(' ');
    out += tok;
  }
  return out;
}

}  // namespace titlerec
