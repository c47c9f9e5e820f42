#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "titlerec/corpus.hpp"
#include "titlerec/encoder.hpp"
#include "titlerec/rng.hpp"
#include "titlerec/tokenizer.hpp"

namespace titlerec {

enum class Replacement : std::uint8_t { Mask, Random, Keep };

struct MaskingPlan {
  std::vector<std::size_t> positions;  // ascending
  std::vector<TokenId> labels;         // original ids at positions
  std::vector<Replacement> replacement_kinds;
};

struct MaskedExample {
  TokenSequence seq;  // after replacement
  MaskingPlan plan;
};

inline constexpr double kMaskFraction = 0.15;

// Number of positions masked out of `maskable`: round-half-up of 15%, at
// least one.
std::size_t masked_count(std::size_t maskable);

// Masks max(1, round(0.15 n)) of the n non-special tokens: 80% become
// [MASK], 10% a random word id, 10% stay unchanged. Throws NothingToMask.
MaskedExample apply_masking(const TokenSequence& seq, const Vocabulary& vocab, Rng& rng);
MaskedExample apply_masking(const TokenSequence& seq, std::size_t vocab_size, Rng& rng);

struct TrainingPair {
  std::string seed_article_id;
  std::string candidate_article_id;
  int label = 0;  // 1 co-purchased, 0 random inventory
  friend bool operator==(const TrainingPair&, const TrainingPair&) = default;
};

// Every ordered pair of distinct articles inside a session is a positive;
// each positive gets negatives_per_positive negatives drawn uniformly from
// the inventory outside that session. Throws InventoryTooSmall.
std::vector<TrainingPair> sample_pairs(std::span<const SessionGroup> sessions,
                                       std::span<const std::string> inventory,
                                       std::size_t negatives_per_positive, Rng& rng);

using TitleLookup = std::unordered_map<std::string, std::string>;

struct PairExample {
  TokenSequence seq;
  int label = 0;
};

std::vector<PairExample> encode_pairs(std::span<const TrainingPair> pairs, const TitleLookup& titles,
                                      const Vocabulary& vocab, std::size_t max_len);

inline constexpr double kProbabilityFloor = 1e-12;

// -sum log p over the probabilities the model gave the true labels.
double negative_log_likelihood(std::span<const double> label_probabilities);

struct LabeledProbability {
  double probability = 0.5;
  int label = 0;
};
// -sum_{pos} log p - sum_{neg} log(1 - p), p clamped to [1e-12, 1 - 1e-12].
double binary_cross_entropy(std::span<const LabeledProbability> items);

// Raw (summed) masked-token loss of one example. Throws EmptyPlan.
double mlm_loss(const EncoderParams& params, const TokenSequence& masked_seq,
                const MaskingPlan& plan);

// Raw (summed) next-purchase loss. Throws EmptyBatch, UnknownArticle.
double np_loss(const EncoderParams& params, std::span<const TrainingPair> pairs,
               const TitleLookup& titles, const Vocabulary& vocab);

// Exact unweighted sum. Throws NonFiniteComponent for NaN/Inf or negative parts.
double joint_loss(double mlm_component, double np_component);

struct LossWeights {
  double mlm = 1.0;
  double np = 1.0;
};

struct LossRecord {
  double mlm = 0.0;    // mean over masked positions
  double np = 0.0;     // mean over pairs
  double total = 0.0;  // weighted mlm + np
  double mlm_sum = 0.0;
  double np_sum = 0.0;
  std::size_t masked_positions = 0;
  std::size_t pairs = 0;
};

// Mean-normalized joint loss of a batch and, when grads is non-null, its
// gradient (grads is overwritten). Examples are processed in batch order,
// which fixes the floating-point reduction order. Empty batches contribute
// zero loss and zero gradient.
LossRecord loss_and_gradients(const EncoderParams& params, std::span<const MaskedExample> masked,
                              std::span<const PairExample> pairs, const LossWeights& weights,
                              EncoderParams* grads, Rng* dropout_rng = nullptr);

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct OptimizerState {
  AdamConfig config;
  EncoderParams first_moment;
  EncoderParams second_moment;
  std::uint64_t step = 0;

  static OptimizerState create(const EncoderParams& params, const AdamConfig& config);
};

void adam_update(EncoderParams& params, OptimizerState& state, const EncoderParams& grads);

struct TrainStepResult {
  LossRecord loss;
  EncoderParams gradients;
};

// One optimizer step on the joint objective. Throws EmptyBatch when both
// batches are empty.
TrainStepResult train_step(EncoderParams& params, OptimizerState& state,
                           std::span<const MaskedExample> masked, std::span<const PairExample> pairs,
                           const LossWeights& weights = {}, Rng* dropout_rng = nullptr);

}  // namespace titlerec
