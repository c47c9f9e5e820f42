#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "titlerec/matrix.hpp"
#include "titlerec/rng.hpp"
#include "titlerec/tokenizer.hpp"

namespace titlerec {

struct EncoderConfig {
  std::size_t vocab_size = 0;
  std::size_t d_model = 64;
  std::size_t n_heads = 4;
  std::size_t n_layers = 2;
  std::size_t d_ff = 128;
  std::size_t max_len = 48;
  double dropout_rate = 0.0;
  double layer_norm_epsilon = 1e-12;

  std::size_t head_dim() const { return d_model / n_heads; }
  // Throws InvalidConfig.
  void validate() const;

  friend bool operator==(const EncoderConfig&, const EncoderConfig&) = default;
};

struct LayerParams {
  Matrix query_weight, query_bias;
  Matrix key_weight, key_bias;
  Matrix value_weight, value_bias;
  Matrix output_weight, output_bias;
  Matrix attn_norm_gain, attn_norm_bias;
  Matrix ff_in_weight, ff_in_bias;    // d_model x d_ff
  Matrix ff_out_weight, ff_out_bias;  // d_ff x d_model
  Matrix ff_norm_gain, ff_norm_bias;

  friend bool operator==(const LayerParams&, const LayerParams&) = default;
};

// All trainable tensors. Also used, shape for shape, for gradients and
// optimizer moments.
struct EncoderParams {
  EncoderConfig config;
  Matrix token_embedding;     // V x d
  Matrix position_embedding;  // max_len x d
  Matrix segment_embedding;   // 2 x d
  std::vector<LayerParams> layers;
  Matrix mlm_weight;  // d x V
  Matrix mlm_bias;    // 1 x V
  Matrix np_weight;   // d x 1
  Matrix np_bias;     // 1 x 1

  // Correctly shaped, every entry zero.
  static EncoderParams zeros(const EncoderConfig& config);

  std::vector<std::pair<std::string, Matrix*>> named_tensors();
  std::vector<std::pair<std::string, const Matrix*>> named_tensors() const;

  bool all_finite() const;
  bool same_shape(const EncoderParams& other) const;

  friend bool operator==(const EncoderParams&, const EncoderParams&) = default;
};

// N(0, 0.02^2) weights, zero biases, unit layer-norm gains. Deterministic
// in (config, seed).
EncoderParams init_params(const EncoderConfig& config, std::uint64_t seed);

namespace detail {
struct ForwardCache;
}

struct ForwardTrace {
  Matrix hidden_states;                        // max_len x d_model
  std::vector<std::vector<Matrix>> attention;  // [layer][head], max_len x max_len
  std::vector<double> pooled_cls;              // hidden state at position 0

  // Intermediates needed by backward(); absent when the forward pass was
  // run without recording.
  std::shared_ptr<const detail::ForwardCache> cache;
  bool has_cache() const { return cache != nullptr; }
};

struct ForwardOptions {
  bool record = true;
  // Dropout is active only when a generator is supplied and the configured
  // rate is positive.
  Rng* dropout_rng = nullptr;
};

ForwardTrace forward(const EncoderParams& params, const TokenSequence& seq,
                     const ForwardOptions& options = {});

std::vector<double> mlm_logits(const EncoderParams& params, const ForwardTrace& trace,
                               std::size_t position);
std::vector<double> mlm_distribution(const EncoderParams& params, const ForwardTrace& trace,
                                     std::size_t position);
// Stable softmax, exposed for the loss code and tests.
std::vector<double> softmax(std::span<const double> logits);

double np_logit(const EncoderParams& params, const ForwardTrace& trace);
double np_probability(const EncoderParams& params, const ForwardTrace& trace);
double sigmoid(double z);

// Head backward passes: accumulate head parameter gradients into grads and
// the gradient reaching the hidden states into d_hidden (max_len x d_model).
void mlm_head_backward(const EncoderParams& params, const ForwardTrace& trace,
                       std::size_t position, std::span<const double> d_logits,
                       EncoderParams& grads, Matrix& d_hidden);
void np_head_backward(const EncoderParams& params, const ForwardTrace& trace, double d_logit,
                      EncoderParams& grads, Matrix& d_hidden);

// Backpropagates d_hidden through the encoder stack and embeddings,
// accumulating into grads. Throws NoRecordedForward if trace has no cache.
void backward(const EncoderParams& params, const ForwardTrace& trace, const Matrix& d_hidden,
              EncoderParams& grads);

// Checkpoint: see docs/formats.md.
void save_checkpoint(const EncoderParams& params, const std::filesystem::path& path);
std::string serialize_checkpoint(const EncoderParams& params);
// Throws ConfigMismatch when expected is given and differs from the file.
EncoderParams load_checkpoint(const std::filesystem::path& path,
                              const std::optional<EncoderConfig>& expected = std::nullopt);

}  // namespace titlerec
