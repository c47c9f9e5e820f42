#include "titlerec/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <unordered_set>

#include "titlerec/error.hpp"

namespace titlerec {
namespace {

// log softmax(logits)[label], computed without forming the probabilities.
double log_softmax_at(std::span<const double> logits, std::size_t label) {
  const double m = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  for (double v : logits) total += std::exp(v - m);
  return logits[label] - m - std::log(total);
}

double clamp_probability(double p) {
  return std::clamp(p, kProbabilityFloor, 1.0 - kProbabilityFloor);
}

double bce_term(double p, int label) {
  const double c = clamp_probability(p);
  return label == 1 ? -std::log(c) : -std::log(1.0 - c);
}

}  // namespace

std::size_t masked_count(std::size_t maskable) {
  if (maskable == 0) return 0;
  // round-half-up of 15 * n / 100 in integer arithmetic
  return std::max<std::size_t>(1, (15 * maskable + 50) / 100);
}

MaskedExample apply_masking(const TokenSequence& seq, const Vocabulary& vocab, Rng& rng) {
  return apply_masking(seq, vocab.size(), rng);
}

MaskedExample apply_masking(const TokenSequence& seq, std::size_t vocab_size, Rng& rng) {
  std::vector<std::size_t> candidates;
  for (std::size_t t = 0; t < seq.ids.size(); ++t) {
    if (seq.attn_mask[t] && !is_special(seq.ids[t])) candidates.push_back(t);
  }
  if (candidates.empty()) fail(ErrorCode::NothingToMask, "sequence has no maskable tokens");
  if (vocab_size <= kFirstWordId) fail(ErrorCode::InvalidArgument, "vocabulary has no word tokens");

  const std::size_t n = candidates.size();
  const std::size_t k = masked_count(n);
  for (std::size_t i = 0; i < k; ++i) {
    const auto j = i + static_cast<std::size_t>(rng.index(n - i));
    std::swap(candidates[i], candidates[j]);
  }
  candidates.resize(k);
  std::sort(candidates.begin(), candidates.end());

  MaskedExample out{seq, {}};
  auto& plan = out.plan;
  plan.positions = candidates;
  for (std::size_t pos : candidates) {
    plan.labels.push_back(seq.ids[pos]);
    const double u = rng.uniform();
    if (u < 0.8) {
      plan.replacement_kinds.push_back(Replacement::Mask);
      out.seq.ids[pos] = kMaskId;
    } else if (u < 0.9) {
      plan.replacement_kinds.push_back(Replacement::Random);
      out.seq.ids[pos] =
          kFirstWordId + static_cast<TokenId>(rng.index(vocab_size - kFirstWordId));
    } else {
      plan.replacement_kinds.push_back(Replacement::Keep);
    }
  }
  return out;
}

std::vector<TrainingPair> sample_pairs(std::span<const SessionGroup> sessions,
                                       std::span<const std::string> inventory,
                                       std::size_t negatives_per_positive, Rng& rng) {
  if (inventory.empty()) fail(ErrorCode::InvalidArgument, "inventory is empty");
  if (negatives_per_positive < 1) fail(ErrorCode::InvalidArgument, "negatives_per_positive must be >= 1");

  std::vector<TrainingPair> pairs;
  for (const auto& session : sessions) {
    std::vector<std::string_view> items;
    std::unordered_set<std::string_view> members;
    for (const auto& id : session.article_ids) {
      if (members.insert(id).second) items.push_back(id);
    }
    if (items.size() < 2) continue;
    const bool has_outside = std::any_of(inventory.begin(), inventory.end(),
                                         [&](const std::string& id) { return !members.count(id); });
    if (!has_outside) {
      fail(ErrorCode::InventoryTooSmall, "no negative candidate outside the session of customer " +
                                             session.customer_id + " on " + format_date(session.t_dat));
    }
    for (std::size_t i = 0; i < items.size(); ++i) {
      for (std::size_t j = 0; j < items.size(); ++j) {
        if (i == j) continue;
        pairs.push_back({std::string(items[i]), std::string(items[j]), 1});
        for (std::size_t n = 0; n < negatives_per_positive; ++n) {
          const std::string* candidate = &inventory[rng.index(inventory.size())];
          while (members.count(*candidate)) candidate = &inventory[rng.index(inventory.size())];
          pairs.push_back({std::string(items[i]), *candidate, 0});
        }
      }
    }
  }
  return pairs;
}

std::vector<PairExample> encode_pairs(std::span<const TrainingPair> pairs, const TitleLookup& titles,
                                      const Vocabulary& vocab, std::size_t max_len) {
  auto title_of = [&](const std::string& id) -> const std::string& {
    auto it = titles.find(id);
    if (it == titles.end()) fail(ErrorCode::UnknownArticle, "no title for article " + id);
    return it->second;
  };
  std::vector<PairExample> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) {
    out.push_back({encode_pair(title_of(p.seed_article_id), title_of(p.candidate_article_id), vocab,
                               max_len),
                   p.label});
  }
  return out;
}

double negative_log_likelihood(std::span<const double> label_probabilities) {
  double loss = 0.0;
  for (double p : label_probabilities) loss -= std::log(p);
  return loss;
}

double binary_cross_entropy(std::span<const LabeledProbability> items) {
  double loss = 0.0;
  for (const auto& item : items) loss += bce_term(item.probability, item.label);
  return loss;
}

double mlm_loss(const EncoderParams& params, const TokenSequence& masked_seq,
                const MaskingPlan& plan) {
  if (plan.positions.empty()) fail(ErrorCode::EmptyPlan, "masking plan has no positions");
  const auto trace = forward(params, masked_seq, {.record = false});
  double loss = 0.0;
  for (std::size_t i = 0; i < plan.positions.size(); ++i) {
    if (plan.labels[i] >= params.config.vocab_size) {
      fail(ErrorCode::ShapeMismatch, "label outside vocabulary");
    }
    const auto logits = mlm_logits(params, trace, plan.positions[i]);
    loss -= log_softmax_at(logits, plan.labels[i]);
  }
  return loss;
}

double np_loss(const EncoderParams& params, std::span<const TrainingPair> pairs,
               const TitleLookup& titles, const Vocabulary& vocab) {
  if (pairs.empty()) fail(ErrorCode::EmptyBatch, "no pairs to score");
  const auto encoded = encode_pairs(pairs, titles, vocab, params.config.max_len);
  std::vector<LabeledProbability> scored;
  scored.reserve(encoded.size());
  for (const auto& ex : encoded) {
    const auto trace = forward(params, ex.seq, {.record = false});
    scored.push_back({np_probability(params, trace), ex.label});
  }
  return binary_cross_entropy(scored);
}

double joint_loss(double mlm_component, double np_component) {
  if (!std::isfinite(mlm_component) || !std::isfinite(np_component) || mlm_component < 0.0 ||
      np_component < 0.0) {
    fail(ErrorCode::NonFiniteComponent, "loss components must be finite and non-negative");
  }
  return mlm_component + np_component;
}

LossRecord loss_and_gradients(const EncoderParams& params, std::span<const MaskedExample> masked,
                              std::span<const PairExample> pairs, const LossWeights& weights,
                              EncoderParams* grads, Rng* dropout_rng) {
  LossRecord rec;
  for (const auto& ex : masked) rec.masked_positions += ex.plan.positions.size();
  rec.pairs = pairs.size();
  if (grads) *grads = EncoderParams::zeros(params.config);

  const ForwardOptions options{.record = grads != nullptr, .dropout_rng = dropout_rng};
  const std::size_t V = params.config.vocab_size;
  Matrix d_hidden;
  std::vector<double> d_logits(V);

  if (rec.masked_positions > 0) {
    const double coeff = weights.mlm / static_cast<double>(rec.masked_positions);
    for (const auto& ex : masked) {
      if (ex.plan.positions.empty()) continue;
      const auto trace = forward(params, ex.seq, options);
      if (grads) d_hidden = Matrix(params.config.max_len, params.config.d_model);
      for (std::size_t i = 0; i < ex.plan.positions.size(); ++i) {
        const std::size_t pos = ex.plan.positions[i];
        const TokenId label = ex.plan.labels[i];
        const auto logits = mlm_logits(params, trace, pos);
        rec.mlm_sum -= log_softmax_at(logits, label);
        if (grads) {
          const auto probs = softmax(logits);
          for (std::size_t v = 0; v < V; ++v) d_logits[v] = coeff * probs[v];
          d_logits[label] -= coeff;
          mlm_head_backward(params, trace, pos, d_logits, *grads, d_hidden);
        }
      }
      if (grads) backward(params, trace, d_hidden, *grads);
    }
    rec.mlm = rec.mlm_sum / static_cast<double>(rec.masked_positions);
  }

  if (rec.pairs > 0) {
    const double coeff = weights.np / static_cast<double>(rec.pairs);
    for (const auto& ex : pairs) {
      const auto trace = forward(params, ex.seq, options);
      const double p = np_probability(params, trace);
      rec.np_sum += bce_term(p, ex.label);
      if (grads) {
        // d/dz of -log sigmoid / -log(1 - sigmoid); zero where the clamp is active.
        const bool clamped = p != clamp_probability(p);
        const double d_logit = clamped ? 0.0 : coeff * (p - static_cast<double>(ex.label));
        d_hidden = Matrix(params.config.max_len, params.config.d_model);
        np_head_backward(params, trace, d_logit, *grads, d_hidden);
        backward(params, trace, d_hidden, *grads);
      }
    }
    rec.np = rec.np_sum / static_cast<double>(rec.pairs);
  }

  rec.total = joint_loss(weights.mlm * rec.mlm, weights.np * rec.np);
  return rec;
}

OptimizerState OptimizerState::create(const EncoderParams& params, const AdamConfig& config) {
  return {config, EncoderParams::zeros(params.config), EncoderParams::zeros(params.config), 0};
}

void adam_update(EncoderParams& params, OptimizerState& state, const EncoderParams& grads) {
  if (!grads.same_shape(params) || !state.first_moment.same_shape(params)) {
    fail(ErrorCode::ShapeMismatch, "optimizer state does not match parameters");
  }
  ++state.step;
  const auto& c = state.config;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(c.beta1, t);
  const double correction2 = 1.0 - std::pow(c.beta2, t);
  auto p = params.named_tensors();
  const auto g = grads.named_tensors();
  auto m = state.first_moment.named_tensors();
  auto v = state.second_moment.named_tensors();
  for (std::size_t i = 0; i < p.size(); ++i) {
    auto& pd = p[i].second->data;
    const auto& gd = g[i].second->data;
    auto& md = m[i].second->data;
    auto& vd = v[i].second->data;
    for (std::size_t j = 0; j < pd.size(); ++j) {
      md[j] = c.beta1 * md[j] + (1.0 - c.beta1) * gd[j];
      vd[j] = c.beta2 * vd[j] + (1.0 - c.beta2) * gd[j] * gd[j];
      const double m_hat = md[j] / correction1;
      const double v_hat = vd[j] / correction2;
      pd[j] -= c.learning_rate * m_hat / (std::sqrt(v_hat) + c.epsilon);
    }
  }
}

TrainStepResult train_step(EncoderParams& params, OptimizerState& state,
                           std::span<const MaskedExample> masked, std::span<const PairExample> pairs,
                           const LossWeights& weights, Rng* dropout_rng) {
  if (masked.empty() && pairs.empty()) fail(ErrorCode::EmptyBatch, "train_step needs examples");
  TrainStepResult result;
  result.loss = loss_and_gradients(params, masked, pairs, weights, &result.gradients, dropout_rng);
  adam_update(params, state, result.gradients);
  if (!params.all_finite()) fail(ErrorCode::NonFiniteComponent, "parameters became non-finite");
  return result;
}

}  // namespace titlerec
