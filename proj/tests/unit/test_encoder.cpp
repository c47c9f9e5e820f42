#include <catch_amalgamated.hpp>

#include <cmath>

#include "gradcheck.hpp"
#include "oracles.hpp"
#include "test_util.hpp"
#include "titlerec/encoder.hpp"
#include "titlerec/io.hpp"

using namespace titlerec;

namespace {

EncoderConfig small_config() {
  EncoderConfig c;
  c.vocab_size = 12;
  c.d_model = 16;
  c.n_heads = 4;
  c.n_layers = 2;
  c.d_ff = 24;
  c.max_len = 8;
  return c;
}

TokenSequence sequence(std::vector<TokenId> real, std::size_t max_len, std::vector<std::uint8_t> seg = {}) {
  TokenSequence s;
  for (std::size_t t = 0; t < max_len; ++t) {
    const bool used = t < real.size();
    s.ids.push_back(used ? real[t] : kPadId);
    s.segments.push_back(used && t < seg.size() ? seg[t] : 0);
    s.attn_mask.push_back(used ? 1 : 0);
  }
  return s;
}

TokenSequence random_sequence(Rng& rng, const EncoderConfig& c) {
  const std::size_t used = 2 + rng.index(c.max_len - 1);
  std::vector<TokenId> ids{kClsId};
  for (std::size_t t = 1; t + 1 < used; ++t) ids.push_back(static_cast<TokenId>(rng.index(c.vocab_size)));
  ids.push_back(kSepId);
  for (auto& id : ids) {
    if (id == kPadId) id = kUnkId;
  }
  return sequence(ids, c.max_len);
}

}  // namespace

TEST_CASE("init_params is seeded and follows the init scheme", "[encoder]") {
  auto c = small_config();
  const auto a = init_params(c, 17);
  CHECK(a == init_params(c, 17));
  CHECK_FALSE(a == init_params(c, 18));

  for (const auto& layer : a.layers) {
    for (double g : layer.attn_norm_gain.data) CHECK(g == 1.0);
    for (double g : layer.ff_norm_gain.data) CHECK(g == 1.0);
    for (double b : layer.ff_in_bias.data) CHECK(b == 0.0);
    for (double b : layer.attn_norm_bias.data) CHECK(b == 0.0);
  }
  for (double b : a.mlm_bias.data) CHECK(b == 0.0);

  c.vocab_size = 400;
  c.d_model = 64;
  const auto big = init_params(c, 1);
  double sum = 0.0;
  double sq = 0.0;
  for (double x : big.token_embedding.data) {
    sum += x;
    sq += x * x;
  }
  const double n = static_cast<double>(big.token_embedding.data.size());
  CHECK(std::abs(sum / n) < 0.002);
  CHECK(std::sqrt(sq / n) == Catch::Approx(0.02).epsilon(0.05));

  c = small_config();
  c.n_heads = 3;
  REQUIRE_ERROR(init_params(c, 1), ErrorCode::InvalidConfig);
  c = small_config();
  c.max_len = 4;
  REQUIRE_ERROR(init_params(c, 1), ErrorCode::InvalidConfig);
}

TEST_CASE("forward shapes and attention normalization", "[encoder]") {
  const auto c = small_config();
  const auto params = init_params(c, 3);
  const auto trace = forward(params, sequence({kClsId, 5, 6, kSepId}, c.max_len));
  CHECK(trace.hidden_states.rows == 8);
  CHECK(trace.hidden_states.cols == 16);
  CHECK(trace.pooled_cls.size() == 16);
  REQUIRE(trace.attention.size() == c.n_layers);
  REQUIRE(trace.attention[0].size() == c.n_heads);

  auto bad = sequence({kClsId, 5}, c.max_len - 1);
  REQUIRE_ERROR(forward(params, bad), ErrorCode::ShapeMismatch);
  bad = sequence({kClsId, 99}, c.max_len);
  REQUIRE_ERROR(forward(params, bad), ErrorCode::ShapeMismatch);
}

TEST_CASE("attention rows sum to one and ignore PAD keys", "[encoder][property]") {
  Rng rng(21);
  for (int trial = 0; trial < 200; ++trial) {
    auto c = small_config();
    c.max_len = 5 + rng.index(6);
    const auto params = init_params(c, rng.next());
    const auto seq = random_sequence(rng, c);
    const auto trace = forward(params, seq);
    for (const auto& layer : trace.attention) {
      for (const auto& head : layer) {
        for (std::size_t q = 0; q < c.max_len; ++q) {
          if (!seq.attn_mask[q]) continue;
          double total = 0.0;
          for (std::size_t k = 0; k < c.max_len; ++k) {
            if (seq.attn_mask[k]) total += head(q, k);
            else REQUIRE(head(q, k) == 0.0);
          }
          REQUIRE(std::abs(total - 1.0) <= 1e-6);
        }
      }
    }
  }
}

TEST_CASE("PAD-region ids do not affect real positions", "[encoder][property]") {
  Rng rng(8);
  for (int trial = 0; trial < 100; ++trial) {
    const auto c = small_config();
    const auto params = init_params(c, rng.next());
    const auto seq = random_sequence(rng, c);
    auto altered = seq;
    for (std::size_t t = 0; t < c.max_len; ++t) {
      if (!altered.attn_mask[t]) altered.ids[t] = static_cast<TokenId>(rng.index(c.vocab_size));
    }
    const auto a = forward(params, seq);
    const auto b = forward(params, altered);
    for (std::size_t t = 0; t < c.max_len; ++t) {
      if (!seq.attn_mask[t]) continue;
      for (std::size_t d = 0; d < c.d_model; ++d) REQUIRE(a.hidden_states(t, d) == b.hidden_states(t, d));
    }
  }
}

TEST_CASE("mlm_distribution", "[encoder]") {
  auto c = small_config();
  auto params = init_params(c, 4);
  const auto seq = sequence({kClsId, 5, 6, kSepId}, c.max_len);
  auto trace = forward(params, seq);
  for (std::size_t pos = 0; pos < c.max_len; ++pos) {
    const auto p = mlm_distribution(params, trace, pos);
    double total = 0.0;
    for (double v : p) {
      CHECK(v > 0.0);
      total += v;
    }
    CHECK(std::abs(total - 1.0) <= 1e-9);
  }
  REQUIRE_ERROR(mlm_distribution(params, trace, c.max_len), ErrorCode::PositionOutOfRange);

  params.mlm_weight.fill(0.0);
  params.mlm_bias.fill(0.0);
  for (double v : mlm_distribution(params, trace, 1)) CHECK(v == Catch::Approx(1.0 / 12).margin(1e-15));

  SECTION("four-way softmax with one boosted logit") {
    c.vocab_size = 4;
    auto p4 = init_params(c, 4);
    p4.mlm_weight.fill(0.0);
    p4.mlm_bias.data = {0.0, 0.0, 0.0, std::log(3.0)};
    const auto t4 = forward(p4, sequence({kClsId, kSepId}, c.max_len));
    const auto got = mlm_distribution(p4, t4, 0);
    const auto ref = oracle::softmax({0.0, 0.0, 0.0, std::log(3.0)});
    // Oracle output: 1/6, 1/6, 1/6, 1/2.
    REQUIRE(ref[0] == Catch::Approx(1.0 / 6).margin(1e-15));
    REQUIRE(ref[3] == Catch::Approx(0.5).margin(1e-15));
    for (std::size_t i = 0; i < 4; ++i) CHECK(std::abs(got[i] - ref[i]) <= 1e-12);
  }
}

TEST_CASE("np_probability", "[encoder]") {
  const auto c = small_config();
  auto params = init_params(c, 5);
  const auto trace = forward(params, sequence({kClsId, 5, kSepId, 6, kSepId}, c.max_len, {0, 0, 0, 1, 1}));
  params.np_weight.fill(0.0);
  params.np_bias.fill(0.0);
  CHECK(np_probability(params, trace) == 0.5);
  params.np_bias.data[0] = std::log(3.0);
  CHECK(np_probability(params, trace) == Catch::Approx(0.75).margin(1e-15));
  for (double z : {-1e6, -800.0, -40.0, 40.0, 800.0, 1e6}) {
    params.np_bias.data[0] = z;
    const double p = np_probability(params, trace);
    CHECK(p > 0.0);
    CHECK(p < 1.0);
  }
}

TEST_CASE("backward contracts", "[encoder]") {
  const auto c = small_config();
  const auto params = init_params(c, 6);
  const auto seq = sequence({kClsId, 5, 6, kSepId}, c.max_len);
  auto grads = EncoderParams::zeros(c);
  Matrix d_hidden(c.max_len, c.d_model);
  const auto unrecorded = forward(params, seq, {.record = false});
  REQUIRE_ERROR(backward(params, unrecorded, d_hidden, grads), ErrorCode::NoRecordedForward);

  SECTION("zero upstream gradient gives zero gradients of the right shape") {
    const auto trace = forward(params, seq);
    backward(params, trace, d_hidden, grads);
    CHECK(grads.same_shape(params));
    for (const auto& [name, t] : std::as_const(grads).named_tensors()) {
      for (double x : t->data) REQUIRE(x == 0.0);
    }
  }
  SECTION("empty loss gives zero gradients") {
    EncoderParams g2;
    const auto rec = loss_and_gradients(params, {}, {}, {}, &g2);
    CHECK(rec.total == 0.0);
    CHECK(g2.same_shape(params));
    for (const auto& [name, t] : std::as_const(g2).named_tensors()) {
      for (double x : t->data) REQUIRE(x == 0.0);
    }
  }
}

TEST_CASE("analytic gradients match central differences", "[encoder][property]") {
  Rng rng(77);
  std::size_t checked = 0;
  for (int problem = 0; problem < 10; ++problem) {
    const auto p = testing::random_grad_problem(rng);
    for (const auto& s : testing::check_gradients(p, 4, rng)) {
      INFO(s.tensor << "[" << s.coordinate << "] analytic " << s.analytic << " numeric " << s.numeric);
      REQUIRE(s.relative_error <= 1e-4);
      ++checked;
    }
  }
  CHECK(checked == 40);
}

TEST_CASE("dropout is seeded and disabled at rate zero", "[encoder]") {
  auto c = small_config();
  c.dropout_rate = 0.3;
  const auto params = init_params(c, 9);
  const auto seq = sequence({kClsId, 5, 6, 7, kSepId}, c.max_len);
  Rng r1(1), r2(1);
  const auto a = forward(params, seq, {.record = false, .dropout_rng = &r1});
  const auto b = forward(params, seq, {.record = false, .dropout_rng = &r2});
  CHECK(a.hidden_states == b.hidden_states);
  const auto plain = forward(params, seq, {.record = false});
  CHECK_FALSE(a.hidden_states == plain.hidden_states);

  c.dropout_rate = 0.0;
  const auto p0 = init_params(c, 9);
  Rng r3(1);
  CHECK(forward(p0, seq, {.record = false, .dropout_rng = &r3}).hidden_states ==
        forward(p0, seq, {.record = false}).hidden_states);
}

TEST_CASE("checkpoint round trip is bit exact", "[encoder]") {
  testing::TempDir dir("ckpt");
  const auto c = small_config();
  const auto params = init_params(c, 10);
  save_checkpoint(params, dir / "model.ckpt");
  const auto loaded = load_checkpoint(dir / "model.ckpt");
  CHECK(loaded == params);
  CHECK(serialize_checkpoint(loaded) == read_file(dir / "model.ckpt"));
  CHECK(load_checkpoint(dir / "model.ckpt", c) == params);

  auto other = c;
  other.d_ff = 32;
  REQUIRE_ERROR(load_checkpoint(dir / "model.ckpt", other), ErrorCode::ConfigMismatch);

  auto bytes = read_file(dir / "model.ckpt");
  write_file_atomic(dir / "short.ckpt", bytes.substr(0, bytes.size() - 3));
  REQUIRE_ERROR(load_checkpoint(dir / "short.ckpt"), ErrorCode::CorruptFile);
  bytes[0] = 'X';
  write_file_atomic(dir / "magic.ckpt", bytes);
  REQUIRE_ERROR(load_checkpoint(dir / "magic.ckpt"), ErrorCode::CorruptFile);
}
