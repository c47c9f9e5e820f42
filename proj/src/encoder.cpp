#include "titlerec/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "titlerec/error.hpp"
#include "titlerec/io.hpp"

namespace titlerec {
namespace detail {

struct LayerCache {
  Matrix input;
  Matrix query, key, value;
  Matrix context;
  std::vector<double> attn_dropout;  // empty when dropout inactive
  Matrix attn_norm_xhat;
  std::vector<double> attn_norm_inv_std;
  Matrix attn_norm_out;
  Matrix ff_pre;
  Matrix ff_act;
  std::vector<double> ff_dropout;
  Matrix ff_norm_xhat;
  std::vector<double> ff_norm_inv_std;
};

struct ForwardCache {
  TokenSequence seq;
  std::vector<double> embed_dropout;
  std::vector<LayerCache> layers;
};

}  // namespace detail

namespace {

constexpr double kInitStd = 0.02;
constexpr char kCheckpointMagic[8] = {'T', 'R', 'E', 'C', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kCheckpointVersion = 1;

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0))); }

double gelu_grad(double x) {
  constexpr double inv_sqrt_2pi = 0.39894228040143267794;
  return 0.5 * (1.0 + std::erf(x / std::sqrt(2.0))) + x * inv_sqrt_2pi * std::exp(-0.5 * x * x);
}

// Row-wise layer norm of in; records xhat and 1/std for the backward pass.
void layer_norm(const Matrix& in, const Matrix& gain, const Matrix& bias, double eps, Matrix& out,
                Matrix* xhat, std::vector<double>* inv_std) {
  const std::size_t d = in.cols;
  out = Matrix(in.rows, d);
  if (xhat) *xhat = Matrix(in.rows, d);
  if (inv_std) inv_std->assign(in.rows, 0.0);
  for (std::size_t t = 0; t < in.rows; ++t) {
    const auto x = in.row(t);
    double mean = 0.0;
    for (double v : x) mean += v;
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (double v : x) var += (v - mean) * (v - mean);
    var /= static_cast<double>(d);
    const double inv = 1.0 / std::sqrt(var + eps);
    for (std::size_t c = 0; c < d; ++c) {
      const double h = (x[c] - mean) * inv;
      if (xhat) (*xhat)(t, c) = h;
      out(t, c) = h * gain.data[c] + bias.data[c];
    }
    if (inv_std) (*inv_std)[t] = inv;
  }
}

Matrix layer_norm_backward(const Matrix& d_out, const Matrix& xhat,
                           const std::vector<double>& inv_std, const Matrix& gain,
                           Matrix& d_gain, Matrix& d_bias) {
  const std::size_t d = d_out.cols;
  Matrix d_in(d_out.rows, d);
  std::vector<double> d_xhat(d);
  for (std::size_t t = 0; t < d_out.rows; ++t) {
    double sum = 0.0, sum_xhat = 0.0;
    for (std::size_t c = 0; c < d; ++c) {
      const double g = d_out(t, c);
      d_gain.data[c] += g * xhat(t, c);
      d_bias.data[c] += g;
      d_xhat[c] = g * gain.data[c];
      sum += d_xhat[c];
      sum_xhat += d_xhat[c] * xhat(t, c);
    }
    const double scale = inv_std[t] / static_cast<double>(d);
    for (std::size_t c = 0; c < d; ++c) {
      d_in(t, c) = scale * (static_cast<double>(d) * d_xhat[c] - sum - xhat(t, c) * sum_xhat);
    }
  }
  return d_in;
}

// Inverted dropout: returns per-entry multipliers (0 or 1/keep), or an empty
// vector when dropout is inactive.
std::vector<double> dropout_mask(std::size_t n, double rate, Rng* rng) {
  if (!rng || rate <= 0.0) return {};
  const double keep = 1.0 - rate;
  std::vector<double> mask(n);
  for (auto& m : mask) m = rng->uniform() < keep ? 1.0 / keep : 0.0;
  return mask;
}

void apply_mask(Matrix& m, const std::vector<double>& mask) {
  if (mask.empty()) return;
  for (std::size_t i = 0; i < m.data.size(); ++i) m.data[i] *= mask[i];
}

void check_sequence(const EncoderConfig& cfg, const TokenSequence& seq) {
  if (seq.ids.size() != cfg.max_len || seq.segments.size() != cfg.max_len ||
      seq.attn_mask.size() != cfg.max_len) {
    fail(ErrorCode::ShapeMismatch, "sequence length " + std::to_string(seq.ids.size()) +
                                       " does not match max_len " + std::to_string(cfg.max_len));
  }
  for (std::size_t t = 0; t < cfg.max_len; ++t) {
    if (seq.ids[t] >= cfg.vocab_size) {
      fail(ErrorCode::ShapeMismatch, "token id " + std::to_string(seq.ids[t]) +
                                         " outside vocab_size " + std::to_string(cfg.vocab_size));
    }
    if (seq.segments[t] > 1 || seq.attn_mask[t] > 1) {
      fail(ErrorCode::ShapeMismatch, "segment and mask entries must be 0 or 1");
    }
  }
  if (seq.attn_mask[0] == 0) fail(ErrorCode::ShapeMismatch, "position 0 must not be padding");
}

template <class Params, class Out>
void collect_tensors(Params& p, Out& out) {
  out.emplace_back("token_embedding", &p.token_embedding);
  out.emplace_back("position_embedding", &p.position_embedding);
  out.emplace_back("segment_embedding", &p.segment_embedding);
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    auto& L = p.layers[l];
    const std::string pre = "layers." + std::to_string(l) + ".";
    out.emplace_back(pre + "attention.query.weight", &L.query_weight);
    out.emplace_back(pre + "attention.query.bias", &L.query_bias);
    out.emplace_back(pre + "attention.key.weight", &L.key_weight);
    out.emplace_back(pre + "attention.key.bias", &L.key_bias);
    out.emplace_back(pre + "attention.value.weight", &L.value_weight);
    out.emplace_back(pre + "attention.value.bias", &L.value_bias);
    out.emplace_back(pre + "attention.output.weight", &L.output_weight);
    out.emplace_back(pre + "attention.output.bias", &L.output_bias);
    out.emplace_back(pre + "attention_norm.gain", &L.attn_norm_gain);
    out.emplace_back(pre + "attention_norm.bias", &L.attn_norm_bias);
    out.emplace_back(pre + "feed_forward.in.weight", &L.ff_in_weight);
    out.emplace_back(pre + "feed_forward.in.bias", &L.ff_in_bias);
    out.emplace_back(pre + "feed_forward.out.weight", &L.ff_out_weight);
    out.emplace_back(pre + "feed_forward.out.bias", &L.ff_out_bias);
    out.emplace_back(pre + "feed_forward_norm.gain", &L.ff_norm_gain);
    out.emplace_back(pre + "feed_forward_norm.bias", &L.ff_norm_bias);
  }
  out.emplace_back("mlm_head.weight", &p.mlm_weight);
  out.emplace_back("mlm_head.bias", &p.mlm_bias);
  out.emplace_back("np_head.weight", &p.np_weight);
  out.emplace_back("np_head.bias", &p.np_bias);
}

bool ends_with(const std::string& s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

}  // namespace

void EncoderConfig::validate() const {
  auto bad = [](const std::string& why) { fail(ErrorCode::InvalidConfig, why); };
  if (vocab_size < 1 || d_model < 1 || n_heads < 1 || n_layers < 1 || d_ff < 1) {
    bad("all encoder dimensions must be >= 1");
  }
  if (d_model % n_heads != 0) {
    bad("d_model " + std::to_string(d_model) + " is not divisible by n_heads " +
        std::to_string(n_heads));
  }
  if (max_len < 5) bad("max_len must be >= 5");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) bad("dropout_rate must be in [0, 1)");
  if (!(layer_norm_epsilon > 0.0)) bad("layer_norm_epsilon must be positive");
}

EncoderParams EncoderParams::zeros(const EncoderConfig& c) {
  c.validate();
  EncoderParams p;
  p.config = c;
  const std::size_t d = c.d_model;
  p.token_embedding = Matrix(c.vocab_size, d);
  p.position_embedding = Matrix(c.max_len, d);
  p.segment_embedding = Matrix(2, d);
  p.layers.resize(c.n_layers);
  for (auto& L : p.layers) {
    L.query_weight = Matrix(d, d);
    L.key_weight = Matrix(d, d);
    L.value_weight = Matrix(d, d);
    L.output_weight = Matrix(d, d);
    L.query_bias = Matrix(1, d);
    L.key_bias = Matrix(1, d);
    L.value_bias = Matrix(1, d);
    L.output_bias = Matrix(1, d);
    L.attn_norm_gain = Matrix(1, d);
    L.attn_norm_bias = Matrix(1, d);
    L.ff_in_weight = Matrix(d, c.d_ff);
    L.ff_in_bias = Matrix(1, c.d_ff);
    L.ff_out_weight = Matrix(c.d_ff, d);
    L.ff_out_bias = Matrix(1, d);
    L.ff_norm_gain = Matrix(1, d);
    L.ff_norm_bias = Matrix(1, d);
  }
  p.mlm_weight = Matrix(d, c.vocab_size);
  p.mlm_bias = Matrix(1, c.vocab_size);
  p.np_weight = Matrix(d, 1);
  p.np_bias = Matrix(1, 1);
  return p;
}

std::vector<std::pair<std::string, Matrix*>> EncoderParams::named_tensors() {
  std::vector<std::pair<std::string, Matrix*>> out;
  collect_tensors(*this, out);
  return out;
}

std::vector<std::pair<std::string, const Matrix*>> EncoderParams::named_tensors() const {
  std::vector<std::pair<std::string, const Matrix*>> out;
  collect_tensors(*this, out);
  return out;
}

bool EncoderParams::all_finite() const {
  for (const auto& [name, m] : named_tensors()) {
    if (!m->all_finite()) return false;
  }
  return true;
}

bool EncoderParams::same_shape(const EncoderParams& other) const {
  const auto a = named_tensors();
  const auto b = other.named_tensors();
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].first != b[i].first || !a[i].second->same_shape(*b[i].second)) return false;
  }
  return true;
}

EncoderParams init_params(const EncoderConfig& config, std::uint64_t seed) {
  EncoderParams p = EncoderParams::zeros(config);
  Rng rng(seed);
  for (auto& [name, m] : p.named_tensors()) {
    if (ends_with(name, ".gain")) {
      m->fill(1.0);
    } else if (ends_with(name, "bias")) {
      m->fill(0.0);
    } else {
      for (auto& v : m->data) v = kInitStd * rng.normal();
    }
  }
  return p;
}

ForwardTrace forward(const EncoderParams& params, const TokenSequence& seq,
                     const ForwardOptions& options) {
  const EncoderConfig& cfg = params.config;
  check_sequence(cfg, seq);
  const std::size_t T = cfg.max_len;
  const std::size_t d = cfg.d_model;
  const std::size_t H = cfg.n_heads;
  const std::size_t dh = cfg.head_dim();
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  Rng* rng = cfg.dropout_rate > 0.0 ? options.dropout_rng : nullptr;

  auto cache = options.record ? std::make_shared<detail::ForwardCache>() : nullptr;
  if (cache) {
    cache->seq = seq;
    cache->layers.resize(cfg.n_layers);
  }

  Matrix x(T, d);
  for (std::size_t t = 0; t < T; ++t) {
    const auto tok = params.token_embedding.row(seq.ids[t]);
    const auto pos = params.position_embedding.row(t);
    const auto seg = params.segment_embedding.row(seq.segments[t]);
    auto out = x.row(t);
    for (std::size_t c = 0; c < d; ++c) out[c] = tok[c] + pos[c] + seg[c];
  }
  {
    auto mask = dropout_mask(x.size(), cfg.dropout_rate, rng);
    apply_mask(x, mask);
    if (cache) cache->embed_dropout = std::move(mask);
  }

  ForwardTrace trace;
  trace.attention.resize(cfg.n_layers);
  std::vector<std::size_t> keys;
  for (std::size_t t = 0; t < T; ++t) {
    if (seq.attn_mask[t]) keys.push_back(t);
  }
  std::vector<double> scores(keys.size());

  for (std::size_t l = 0; l < cfg.n_layers; ++l) {
    const LayerParams& L = params.layers[l];
    Matrix q, k, v;
    matmul(x, L.query_weight, q, &L.query_bias);
    matmul(x, L.key_weight, k, &L.key_bias);
    matmul(x, L.value_weight, v, &L.value_bias);

    Matrix context(T, d);
    auto& heads = trace.attention[l];
    heads.assign(H, Matrix(T, T));
    for (std::size_t h = 0; h < H; ++h) {
      const std::size_t off = h * dh;
      Matrix& attn = heads[h];
      for (std::size_t i = 0; i < T; ++i) {
        const auto qi = q.row(i).subspan(off, dh);
        double max_score = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < keys.size(); ++j) {
          scores[j] = dot(qi, k.row(keys[j]).subspan(off, dh)) * scale;
          max_score = std::max(max_score, scores[j]);
        }
        double total = 0.0;
        for (auto& s : scores) {
          s = std::exp(s - max_score);
          total += s;
        }
        auto ctx = context.row(i).subspan(off, dh);
        for (std::size_t j = 0; j < keys.size(); ++j) {
          const double a = scores[j] / total;
          attn(i, keys[j]) = a;
          const auto vj = v.row(keys[j]).subspan(off, dh);
          for (std::size_t c = 0; c < dh; ++c) ctx[c] += a * vj[c];
        }
      }
    }

    Matrix attn_out;
    matmul(context, L.output_weight, attn_out, &L.output_bias);
    auto attn_drop = dropout_mask(attn_out.size(), cfg.dropout_rate, rng);
    apply_mask(attn_out, attn_drop);
    for (std::size_t i = 0; i < attn_out.size(); ++i) attn_out.data[i] += x.data[i];

    Matrix h1, h1_xhat;
    std::vector<double> h1_inv;
    layer_norm(attn_out, L.attn_norm_gain, L.attn_norm_bias, cfg.layer_norm_epsilon, h1,
               cache ? &h1_xhat : nullptr, cache ? &h1_inv : nullptr);

    Matrix ff_pre, ff_out;
    matmul(h1, L.ff_in_weight, ff_pre, &L.ff_in_bias);
    Matrix ff_act(ff_pre.rows, ff_pre.cols);
    for (std::size_t i = 0; i < ff_pre.size(); ++i) ff_act.data[i] = gelu(ff_pre.data[i]);
    matmul(ff_act, L.ff_out_weight, ff_out, &L.ff_out_bias);
    auto ff_drop = dropout_mask(ff_out.size(), cfg.dropout_rate, rng);
    apply_mask(ff_out, ff_drop);
    for (std::size_t i = 0; i < ff_out.size(); ++i) ff_out.data[i] += h1.data[i];

    Matrix out, out_xhat;
    std::vector<double> out_inv;
    layer_norm(ff_out, L.ff_norm_gain, L.ff_norm_bias, cfg.layer_norm_epsilon, out,
               cache ? &out_xhat : nullptr, cache ? &out_inv : nullptr);

    if (cache) {
      auto& lc = cache->layers[l];
      lc.input = std::move(x);
      lc.query = std::move(q);
      lc.key = std::move(k);
      lc.value = std::move(v);
      lc.context = std::move(context);
      lc.attn_dropout = std::move(attn_drop);
      lc.attn_norm_xhat = std::move(h1_xhat);
      lc.attn_norm_inv_std = std::move(h1_inv);
      lc.attn_norm_out = std::move(h1);
      lc.ff_pre = std::move(ff_pre);
      lc.ff_act = std::move(ff_act);
      lc.ff_dropout = std::move(ff_drop);
      lc.ff_norm_xhat = std::move(out_xhat);
      lc.ff_norm_inv_std = std::move(out_inv);
    }
    x = std::move(out);
  }

  trace.pooled_cls.assign(x.row(0).begin(), x.row(0).end());
  trace.hidden_states = std::move(x);
  trace.cache = std::move(cache);
  return trace;
}

std::vector<double> softmax(std::span<const double> logits) {
  std::vector<double> out(logits.begin(), logits.end());
  if (out.empty()) return out;
  const double m = *std::max_element(out.begin(), out.end());
  double total = 0.0;
  for (auto& v : out) {
    v = std::exp(v - m);
    total += v;
  }
  for (auto& v : out) v /= total;
  return out;
}

std::vector<double> mlm_logits(const EncoderParams& params, const ForwardTrace& trace,
                               std::size_t position) {
  if (position >= trace.hidden_states.rows) {
    fail(ErrorCode::PositionOutOfRange, "position " + std::to_string(position) +
                                            " outside sequence of length " +
                                            std::to_string(trace.hidden_states.rows));
  }
  const std::size_t V = params.config.vocab_size;
  std::vector<double> logits(params.mlm_bias.data.begin(), params.mlm_bias.data.end());
  const auto h = trace.hidden_states.row(position);
  for (std::size_t i = 0; i < h.size(); ++i) {
    const double hi = h[i];
    const double* w = params.mlm_weight.data.data() + i * V;
    for (std::size_t v = 0; v < V; ++v) logits[v] += hi * w[v];
  }
  return logits;
}

std::vector<double> mlm_distribution(const EncoderParams& params, const ForwardTrace& trace,
                                     std::size_t position) {
  return softmax(mlm_logits(params, trace, position));
}

double sigmoid(double z) {
  const double p = z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
  // Keep the result strictly inside (0, 1) even when the logit saturates.
  return std::clamp(p, std::numeric_limits<double>::denorm_min(), std::nextafter(1.0, 0.0));
}

double np_logit(const EncoderParams& params, const ForwardTrace& trace) {
  return dot(trace.pooled_cls, params.np_weight.data) + params.np_bias.data[0];
}

double np_probability(const EncoderParams& params, const ForwardTrace& trace) {
  return sigmoid(np_logit(params, trace));
}

void mlm_head_backward(const EncoderParams& params, const ForwardTrace& trace,
                       std::size_t position, std::span<const double> d_logits,
                       EncoderParams& grads, Matrix& d_hidden) {
  const std::size_t V = params.config.vocab_size;
  if (d_logits.size() != V) fail(ErrorCode::ShapeMismatch, "d_logits must have vocab_size entries");
  if (position >= trace.hidden_states.rows) {
    fail(ErrorCode::PositionOutOfRange, "position " + std::to_string(position) + " out of range");
  }
  const auto h = trace.hidden_states.row(position);
  auto dh = d_hidden.row(position);
  for (std::size_t v = 0; v < V; ++v) grads.mlm_bias.data[v] += d_logits[v];
  for (std::size_t i = 0; i < h.size(); ++i) {
    const double* w = params.mlm_weight.data.data() + i * V;
    double* gw = grads.mlm_weight.data.data() + i * V;
    double acc = 0.0;
    for (std::size_t v = 0; v < V; ++v) {
      gw[v] += h[i] * d_logits[v];
      acc += w[v] * d_logits[v];
    }
    dh[i] += acc;
  }
}

void np_head_backward(const EncoderParams& params, const ForwardTrace& trace, double d_logit,
                      EncoderParams& grads, Matrix& d_hidden) {
  auto dh = d_hidden.row(0);
  for (std::size_t i = 0; i < trace.pooled_cls.size(); ++i) {
    grads.np_weight.data[i] += trace.pooled_cls[i] * d_logit;
    dh[i] += params.np_weight.data[i] * d_logit;
  }
  grads.np_bias.data[0] += d_logit;
}

void backward(const EncoderParams& params, const ForwardTrace& trace, const Matrix& d_hidden,
              EncoderParams& grads) {
  if (!trace.cache) fail(ErrorCode::NoRecordedForward, "backward needs a recorded forward pass");
  const EncoderConfig& cfg = params.config;
  const std::size_t T = cfg.max_len;
  const std::size_t d = cfg.d_model;
  const std::size_t dh = cfg.head_dim();
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  if (d_hidden.rows != T || d_hidden.cols != d) {
    fail(ErrorCode::ShapeMismatch, "d_hidden must be max_len x d_model");
  }
  if (!grads.same_shape(params)) fail(ErrorCode::ShapeMismatch, "gradient buffers do not match params");
  const auto& cache = *trace.cache;
  const auto& seq = cache.seq;
  std::vector<std::size_t> keys;
  for (std::size_t t = 0; t < T; ++t) {
    if (seq.attn_mask[t]) keys.push_back(t);
  }
  std::vector<double> d_attn(keys.size());

  Matrix dx = d_hidden;
  for (std::size_t l = cfg.n_layers; l-- > 0;) {
    const LayerParams& L = params.layers[l];
    LayerParams& G = grads.layers[l];
    const auto& lc = cache.layers[l];
    const auto& heads = trace.attention[l];

    // Output layer norm, then the feed-forward sublayer.
    Matrix d_res2 = layer_norm_backward(dx, lc.ff_norm_xhat, lc.ff_norm_inv_std, L.ff_norm_gain,
                                        G.ff_norm_gain, G.ff_norm_bias);
    Matrix d_h1 = d_res2;
    Matrix d_ff_out = std::move(d_res2);
    apply_mask(d_ff_out, lc.ff_dropout);
    matmul_at_b_acc(lc.ff_act, d_ff_out, G.ff_out_weight);
    add_column_sums(d_ff_out, G.ff_out_bias);
    Matrix d_act(T, cfg.d_ff);
    matmul_a_bt_acc(d_ff_out, L.ff_out_weight, d_act);
    for (std::size_t i = 0; i < d_act.size(); ++i) d_act.data[i] *= gelu_grad(lc.ff_pre.data[i]);
    matmul_at_b_acc(lc.attn_norm_out, d_act, G.ff_in_weight);
    add_column_sums(d_act, G.ff_in_bias);
    matmul_a_bt_acc(d_act, L.ff_in_weight, d_h1);

    // Attention layer norm, then the attention sublayer.
    Matrix d_res1 = layer_norm_backward(d_h1, lc.attn_norm_xhat, lc.attn_norm_inv_std,
                                        L.attn_norm_gain, G.attn_norm_gain, G.attn_norm_bias);
    Matrix d_in = d_res1;
    Matrix d_attn_out = std::move(d_res1);
    apply_mask(d_attn_out, lc.attn_dropout);
    matmul_at_b_acc(lc.context, d_attn_out, G.output_weight);
    add_column_sums(d_attn_out, G.output_bias);
    Matrix d_context(T, d);
    matmul_a_bt_acc(d_attn_out, L.output_weight, d_context);

    Matrix dq(T, d), dk(T, d), dv(T, d);
    for (std::size_t h = 0; h < cfg.n_heads; ++h) {
      const std::size_t off = h * dh;
      const Matrix& attn = heads[h];
      for (std::size_t i = 0; i < T; ++i) {
        const auto dci = d_context.row(i).subspan(off, dh);
        double weighted = 0.0;
        for (std::size_t j = 0; j < keys.size(); ++j) {
          d_attn[j] = dot(dci, lc.value.row(keys[j]).subspan(off, dh));
          weighted += attn(i, keys[j]) * d_attn[j];
        }
        const auto qi = lc.query.row(i).subspan(off, dh);
        auto dqi = dq.row(i).subspan(off, dh);
        for (std::size_t j = 0; j < keys.size(); ++j) {
          const std::size_t kj = keys[j];
          const double a = attn(i, kj);
          const double ds = a * (d_attn[j] - weighted) * scale;
          const auto krow = lc.key.row(kj).subspan(off, dh);
          auto dkrow = dk.row(kj).subspan(off, dh);
          auto dvrow = dv.row(kj).subspan(off, dh);
          for (std::size_t c = 0; c < dh; ++c) {
            dqi[c] += ds * krow[c];
            dkrow[c] += ds * qi[c];
            dvrow[c] += a * dci[c];
          }
        }
      }
    }
    matmul_at_b_acc(lc.input, dq, G.query_weight);
    add_column_sums(dq, G.query_bias);
    matmul_a_bt_acc(dq, L.query_weight, d_in);
    matmul_at_b_acc(lc.input, dk, G.key_weight);
    add_column_sums(dk, G.key_bias);
    matmul_a_bt_acc(dk, L.key_weight, d_in);
    matmul_at_b_acc(lc.input, dv, G.value_weight);
    add_column_sums(dv, G.value_bias);
    matmul_a_bt_acc(dv, L.value_weight, d_in);
    dx = std::move(d_in);
  }

  apply_mask(dx, cache.embed_dropout);
  for (std::size_t t = 0; t < T; ++t) {
    const auto g = dx.row(t);
    auto tok = grads.token_embedding.row(seq.ids[t]);
    auto pos = grads.position_embedding.row(t);
    auto seg = grads.segment_embedding.row(seq.segments[t]);
    for (std::size_t c = 0; c < d; ++c) {
      tok[c] += g[c];
      pos[c] += g[c];
      seg[c] += g[c];
    }
  }
}

std::string serialize_checkpoint(const EncoderParams& params) {
  BinaryWriter w;
  w.bytes(kCheckpointMagic, sizeof kCheckpointMagic);
  w.u32(kCheckpointVersion);
  const auto& c = params.config;
  w.u64(c.vocab_size);
  w.u64(c.d_model);
  w.u64(c.n_heads);
  w.u64(c.n_layers);
  w.u64(c.d_ff);
  w.u64(c.max_len);
  w.f64(c.dropout_rate);
  w.f64(c.layer_norm_epsilon);
  const auto tensors = params.named_tensors();
  w.u32(static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, m] : tensors) {
    w.str(name);
    w.u64(m->rows);
    w.u64(m->cols);
    w.bytes(m->data.data(), m->data.size() * sizeof(double));
  }
  return w.buffer();
}

void save_checkpoint(const EncoderParams& params, const std::filesystem::path& path) {
  write_file_atomic(path, serialize_checkpoint(params));
}

EncoderParams load_checkpoint(const std::filesystem::path& path,
                              const std::optional<EncoderConfig>& expected) {
  BinaryReader r(read_file(path), path.string());
  char magic[8];
  r.bytes(magic, sizeof magic);
  if (!std::equal(std::begin(magic), std::end(magic), std::begin(kCheckpointMagic))) {
    fail(ErrorCode::CorruptFile, path.string() + ": not a checkpoint file");
  }
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    fail(ErrorCode::CorruptFile, path.string() + ": unsupported checkpoint version " +
                                     std::to_string(version));
  }
  EncoderConfig c;
  c.vocab_size = r.u64();
  c.d_model = r.u64();
  c.n_heads = r.u64();
  c.n_layers = r.u64();
  c.d_ff = r.u64();
  c.max_len = r.u64();
  c.dropout_rate = r.f64();
  c.layer_norm_epsilon = r.f64();
  if (expected && !(*expected == c)) {
    fail(ErrorCode::ConfigMismatch,
         path.string() + ": checkpoint config (vocab " + std::to_string(c.vocab_size) +
             ", d_model " + std::to_string(c.d_model) + ", heads " + std::to_string(c.n_heads) +
             ", layers " + std::to_string(c.n_layers) + ", d_ff " + std::to_string(c.d_ff) +
             ", max_len " + std::to_string(c.max_len) + ") differs from the requested config");
  }
  EncoderParams p;
  try {
    p = EncoderParams::zeros(c);
  } catch (const Error& e) {
    fail(ErrorCode::CorruptFile, path.string() + ": " + e.what());
  }
  auto tensors = p.named_tensors();
  const std::uint32_t count = r.u32();
  if (count != tensors.size()) fail(ErrorCode::CorruptFile, path.string() + ": wrong tensor count");
  for (auto& [name, m] : tensors) {
    const std::string stored = r.str();
    const std::uint64_t rows = r.u64();
    const std::uint64_t cols = r.u64();
    if (stored != name || rows != m->rows || cols != m->cols) {
      fail(ErrorCode::CorruptFile, path.string() + ": unexpected tensor '" + stored + "'");
    }
    r.bytes(m->data.data(), m->data.size() * sizeof(double));
  }
  if (!r.at_end()) fail(ErrorCode::CorruptFile, path.string() + ": trailing bytes");
  return p;
}

}  // namespace titlerec
