#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "titlerec/corpus.hpp"

namespace titlerec {

using TokenId = std::uint32_t;

inline constexpr TokenId kPadId = 0;
inline constexpr TokenId kUnkId = 1;
inline constexpr TokenId kClsId = 2;
inline constexpr TokenId kSepId = 3;
inline constexpr TokenId kMaskId = 4;
inline constexpr TokenId kFirstWordId = 5;

inline constexpr std::string_view kSpecialTokens[] = {"[PAD]", "[UNK]", "[CLS]", "[SEP]",
                                                       "[MASK]"};

inline bool is_special(TokenId id) { return id < kFirstWordId; }

// Word-level vocabulary. Ids are dense; the five special tokens always hold
// ids 0..4.
class Vocabulary {
 public:
  // words must be distinct and exclude the special spellings.
  explicit Vocabulary(std::vector<std::string> words);

  std::size_t size() const { return id_to_token_.size(); }
  TokenId id_of(std::string_view token) const;  // kUnkId when absent
  bool contains(std::string_view token) const;
  const std::string& token(TokenId id) const;   // throws IdOutOfRange
  const std::vector<std::string>& tokens() const { return id_to_token_; }

  // One token per line; line n (0-based) holds id n.
  void save(const std::filesystem::path& path) const;
  std::string serialize() const;
  static Vocabulary load(const std::filesystem::path& path);
  static Vocabulary parse(std::string_view text, const std::string& source);

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) {
    return a.id_to_token_ == b.id_to_token_;
  }

 private:
  Vocabulary() = default;
  std::vector<std::string> id_to_token_;
  std::unordered_map<std::string, TokenId> token_to_id_;
};

struct TokenSequence {
  std::vector<TokenId> ids;
  std::vector<std::uint8_t> segments;
  std::vector<std::uint8_t> attn_mask;

  std::size_t length() const { return ids.size(); }
  friend bool operator==(const TokenSequence&, const TokenSequence&) = default;
};

Vocabulary build_vocab(std::span<const PreparedArticle> corpus, std::size_t min_freq,
                       std::size_t max_size);

std::vector<std::string_view> split_words(std::string_view text);

TokenSequence encode_single(std::string_view text, const Vocabulary& vocab, std::size_t max_len);
TokenSequence encode_pair(std::string_view text_a, std::string_view text_b,
                          const Vocabulary& vocab, std::size_t max_len);

struct PairLengths {
  std::size_t a = 0;
  std::size_t b = 0;
};
// Word counts kept for each side so that 3 + a + b <= max_len.
PairLengths truncate_pair_lengths(std::size_t len_a, std::size_t len_b, std::size_t max_len);

std::string decode(std::span<const TokenId> ids, const Vocabulary& vocab);

}  // namespace titlerec
