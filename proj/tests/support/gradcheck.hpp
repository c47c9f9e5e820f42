#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "titlerec/encoder.hpp"
#include "titlerec/objectives.hpp"
#include "titlerec/rng.hpp"

namespace titlerec::testing {

struct GradProblem {
  EncoderParams params;
  std::vector<MaskedExample> masked;
  std::vector<PairExample> pairs;
};

// Random small config, parameters pushed off the init scale so gradients are
// not vanishingly small, and a batch exercising both objectives.
inline GradProblem random_grad_problem(Rng& rng) {
  EncoderConfig c;
  const std::size_t heads_choice[] = {1, 2, 4};
  c.n_heads = heads_choice[rng.index(3)];
  c.d_model = c.n_heads * (2 + rng.index(3));
  c.n_layers = 1 + rng.index(2);
  c.d_ff = 4 + rng.index(9);
  c.max_len = 5 + rng.index(5);
  c.vocab_size = 8 + rng.index(8);

  GradProblem p{init_params(c, rng.next()), {}, {}};
  for (auto& [name, tensor] : p.params.named_tensors()) {
    for (auto& x : tensor->data) x += 0.3 * rng.normal();
  }

  auto random_sequence = [&](bool pair) {
    TokenSequence s;
    const std::size_t used = 3 + rng.index(c.max_len - 2);  // >= 3 real positions
    for (std::size_t t = 0; t < c.max_len; ++t) {
      if (t >= used) {
        s.ids.push_back(kPadId);
        s.segments.push_back(0);
        s.attn_mask.push_back(0);
        continue;
      }
      TokenId id = kFirstWordId + static_cast<TokenId>(rng.index(c.vocab_size - kFirstWordId));
      if (t == 0) id = kClsId;
      if (t == used - 1) id = kSepId;
      s.ids.push_back(id);
      s.segments.push_back(pair && t > used / 2 ? 1 : 0);
      s.attn_mask.push_back(1);
    }
    return s;
  };

  const std::size_t n_masked = 1 + rng.index(2);
  for (std::size_t i = 0; i < n_masked; ++i) {
    p.masked.push_back(apply_masking(random_sequence(false), c.vocab_size, rng));
  }
  const std::size_t n_pairs = 1 + rng.index(2);
  for (std::size_t i = 0; i < n_pairs; ++i) {
    p.pairs.push_back({random_sequence(true), static_cast<int>(rng.index(2))});
  }
  return p;
}

struct GradSample {
  std::string tensor;
  std::size_t coordinate = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double relative_error = 0.0;
};

inline double joint_total(const GradProblem& p, const EncoderParams& params) {
  return loss_and_gradients(params, p.masked, p.pairs, {}, nullptr).total;
}

// Central differences at step 1e-4 carry roughly 1e-11 of absolute rounding
// noise, so magnitudes below this floor cannot be resolved to 1e-4 relative.
inline constexpr double kGradientFloor = 1e-6;

// |a - n| / max(|a|, |n|, kGradientFloor).
inline double relative_error(double a, double n) {
  return std::abs(a - n) / std::max({std::abs(a), std::abs(n), kGradientFloor});
}

// Compares analytic and central-difference gradients at `count` random
// coordinates; tensors are picked uniformly, then a coordinate inside.
inline std::vector<GradSample> check_gradients(const GradProblem& p, std::size_t count, Rng& rng,
                                               double step = 1e-4) {
  EncoderParams grads;
  loss_and_gradients(p.params, p.masked, p.pairs, {}, &grads);
  std::vector<GradSample> out;
  EncoderParams probe = p.params;
  auto probe_tensors = probe.named_tensors();
  const auto grad_tensors = std::as_const(grads).named_tensors();
  for (std::size_t s = 0; s < count; ++s) {
    const std::size_t ti = rng.index(probe_tensors.size());
    auto& data = probe_tensors[ti].second->data;
    const std::size_t ci = rng.index(data.size());
    const double original = data[ci];
    data[ci] = original + step;
    const double up = joint_total(p, probe);
    data[ci] = original - step;
    const double down = joint_total(p, probe);
    data[ci] = original;
    GradSample g;
    g.tensor = probe_tensors[ti].first;
    g.coordinate = ci;
    g.analytic = grad_tensors[ti].second->data[ci];
    g.numeric = (up - down) / (2.0 * step);
    g.relative_error = relative_error(g.analytic, g.numeric);
    out.push_back(std::move(g));
  }
  return out;
}

}  // namespace titlerec::testing
