#include <catch_amalgamated.hpp>

#include "oracles.hpp"
#include "test_util.hpp"
#include "titlerec/io.hpp"
#include "titlerec/rng.hpp"
#include "titlerec/tokenizer.hpp"

using namespace titlerec;

namespace {

std::vector<PreparedArticle> corpus_of(std::initializer_list<const char*> texts) {
  std::vector<PreparedArticle> out;
  for (const char* t : texts) {
    PreparedArticle a;
    a.text = t;
    a.text_len = seq_length(t);
    out.push_back(a);
  }
  return out;
}

Vocabulary red_dress_vocab() { return Vocabulary({"red", "dress", "blue"}); }

std::string words(std::size_t n, const std::string& w) {
  std::string out;
  for (std::size_t i = 0; i < n; ++i) out += (i ? " " : "") + w;
  return out;
}

}  // namespace

TEST_CASE("build_vocab ranks by frequency then token", "[tokenizer]") {
  const auto corpus = corpus_of({"red dress", "red shirt"});
  const auto v = build_vocab(corpus, 1, 100);
  REQUIRE(v.size() == 8);
  CHECK(v.id_of("red") == 5);
  CHECK(v.id_of("dress") == 6);
  CHECK(v.id_of("shirt") == 7);
  for (TokenId id = 0; id < kFirstWordId; ++id) CHECK(v.token(id) == kSpecialTokens[id]);

  CHECK(build_vocab(corpus, 3, 100).size() == 5);
  CHECK(build_vocab(corpus, 1, 6).tokens() == std::vector<std::string>{"[PAD]", "[UNK]", "[CLS]",
                                                                       "[SEP]", "[MASK]", "red"});
  REQUIRE_ERROR(build_vocab({}, 1, 100), ErrorCode::EmptyCorpus);
  REQUIRE_ERROR(build_vocab(corpus, 0, 100), ErrorCode::InvalidArgument);
  REQUIRE_ERROR(build_vocab(corpus, 1, 5), ErrorCode::InvalidArgument);
}

TEST_CASE("build_vocab is deterministic and inverse-consistent", "[tokenizer][property]") {
  Rng rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<PreparedArticle> corpus(1 + rng.index(10));
    for (auto& a : corpus) {
      const auto n = rng.index(8);
      for (std::size_t i = 0; i < n; ++i) {
        a.text += (i ? " w" : "w") + std::to_string(rng.index(12));
      }
      a.text_len = seq_length(a.text);
    }
    const auto min_freq = 1 + rng.index(3);
    const auto max_size = 6 + rng.index(10);
    const auto v = build_vocab(corpus, min_freq, max_size);
    REQUIRE(v == build_vocab(corpus, min_freq, max_size));
    REQUIRE(v.size() <= max_size);
    for (TokenId id = 0; id < v.size(); ++id) REQUIRE(v.id_of(v.token(id)) == id);
  }
}

TEST_CASE("vocabulary file round trip", "[tokenizer]") {
  testing::TempDir dir("vocab");
  const auto v = red_dress_vocab();
  v.save(dir / "vocab.txt");
  CHECK(read_file(dir / "vocab.txt") == "[PAD]\n[UNK]\n[CLS]\n[SEP]\n[MASK]\nred\ndress\nblue\n");
  CHECK(Vocabulary::load(dir / "vocab.txt") == v);
  REQUIRE_ERROR(Vocabulary::parse("[PAD]\n[UNK]\n", "v"), ErrorCode::CorruptFile);
  REQUIRE_ERROR(Vocabulary::parse("[PAD]\n[UNK]\n[CLS]\n[SEP]\n[MASK]\nred\nred\n", "v"),
                ErrorCode::CorruptFile);
}

TEST_CASE("encode_single", "[tokenizer]") {
  const auto v = red_dress_vocab();
  auto s = encode_single("red dress", v, 6);
  CHECK(s.ids == std::vector<TokenId>{2, 5, 6, 3, 0, 0});
  CHECK(s.attn_mask == std::vector<std::uint8_t>{1, 1, 1, 1, 0, 0});
  CHECK(s.segments == std::vector<std::uint8_t>(6, 0));

  s = encode_single("", v, 5);
  CHECK(s.ids == std::vector<TokenId>{2, 3, 0, 0, 0});

  s = encode_single("red plinth", v, 5);
  CHECK(s.ids[2] == kUnkId);

  s = encode_single("red dress blue red", v, 4);
  CHECK(s.ids == std::vector<TokenId>{2, 5, 6, 3});
  REQUIRE_ERROR(encode_single("red", v, 2), ErrorCode::InvalidArgument);
}

TEST_CASE("encode_pair", "[tokenizer]") {
  const auto v = red_dress_vocab();
  auto s = encode_pair("red", "blue", v, 8);
  CHECK(s.ids == std::vector<TokenId>{kClsId, 5, kSepId, 7, kSepId, 0, 0, 0});
  CHECK(s.segments == std::vector<std::uint8_t>{0, 0, 0, 1, 1, 0, 0, 0});
  CHECK(s.attn_mask == std::vector<std::uint8_t>{1, 1, 1, 1, 1, 0, 0, 0});

  s = encode_pair("", "", v, 6);
  CHECK(s.ids == std::vector<TokenId>{kClsId, kSepId, kSepId, 0, 0, 0});

  s = encode_pair(words(10, "red"), words(2, "blue"), v, 10);
  CHECK(std::count(s.ids.begin(), s.ids.end(), 5) == 5);
  CHECK(std::count(s.ids.begin(), s.ids.end(), 7) == 2);
  CHECK(s.ids.back() == kSepId);
  REQUIRE_ERROR(encode_pair("a", "b", v, 4), ErrorCode::InvalidArgument);
}

TEST_CASE("pair truncation matches step-by-step trimming", "[tokenizer][property]") {
  // Oracle value for A=10, B=2, max_len=10.
  const auto expected = oracle::pair_truncation(10, 2, 10);
  REQUIRE(expected == std::pair<std::size_t, std::size_t>{5, 2});
  const auto got = truncate_pair_lengths(10, 2, 10);
  CHECK(got.a == 5);
  CHECK(got.b == 2);

  for (std::size_t max_len = 5; max_len <= 20; ++max_len) {
    for (std::size_t a = 0; a <= 25; ++a) {
      for (std::size_t b = 0; b <= 25; ++b) {
        const auto ref = oracle::pair_truncation(a, b, max_len);
        const auto out = truncate_pair_lengths(a, b, max_len);
        REQUIRE(out.a == ref.first);
        REQUIRE(out.b == ref.second);
      }
    }
  }
}

TEST_CASE("decode", "[tokenizer]") {
  const auto v = red_dress_vocab();
  CHECK(decode(std::vector<TokenId>{2, 5, 6, 3, 0}, v) == "red dress");
  CHECK(decode(std::vector<TokenId>{2, 3}, v) == "");
  REQUIRE_ERROR(decode(std::vector<TokenId>{99}, v), ErrorCode::IdOutOfRange);
}

TEST_CASE("encodings keep their shape invariants and round trip", "[tokenizer][property]") {
  std::vector<std::string> vocab_words;
  for (int i = 0; i < 20; ++i) vocab_words.push_back("w" + std::to_string(i));
  const Vocabulary v(vocab_words);
  Rng rng(9);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t max_len = 5 + rng.index(20);
    auto random_text = [&] {
      std::string t;
      const auto n = rng.index(15);
      for (std::size_t i = 0; i < n; ++i) t += (i ? " w" : "w") + std::to_string(rng.index(20));
      return t;
    };
    const auto a = random_text();
    const auto b = random_text();

    const auto single = encode_single(a, v, max_len);
    REQUIRE(single.length() == max_len);
    REQUIRE(single.segments.size() == max_len);
    REQUIRE(single.attn_mask.size() == max_len);
    for (std::size_t t = 0; t < max_len; ++t) {
      REQUIRE((single.attn_mask[t] == 0) == (single.ids[t] == kPadId));
      REQUIRE(single.segments[t] == 0);
    }
    if (seq_length(a) + 2 <= max_len) REQUIRE(decode(single.ids, v) == a);

    const auto pair = encode_pair(a, b, v, max_len);
    REQUIRE(pair.length() == max_len);
    bool after_first_sep = false;
    for (std::size_t t = 0; t < max_len; ++t) {
      REQUIRE((pair.attn_mask[t] == 0) == (pair.ids[t] == kPadId));
      if (pair.ids[t] == kPadId) REQUIRE(pair.segments[t] == 0);
      else REQUIRE(pair.segments[t] == (after_first_sep ? 1 : 0));
      if (pair.ids[t] == kSepId) after_first_sep = true;
    }
    REQUIRE(std::count(pair.ids.begin(), pair.ids.end(), kSepId) == 2);
  }
}
