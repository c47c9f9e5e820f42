#pragma once

// Reference implementations used only by tests. Each one recomputes a
// quantity from its definition by a different route than the library.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <set>
#include <string>
#include <utility>
#include <vector>

namespace titlerec::oracle {

// AP@k as a sum of precision@r over relevant ranks, each precision counted
// from scratch.
inline double average_precision(const std::vector<std::string>& predictions,
                                const std::set<std::string>& truth, std::size_t k) {
  double sum = 0.0;
  for (std::size_t r = 1; r <= std::min(k, predictions.size()); ++r) {
    if (!truth.count(predictions[r - 1])) continue;
    std::size_t relevant = 0;
    for (std::size_t i = 0; i < r; ++i) relevant += truth.count(predictions[i]);
    sum += static_cast<double>(relevant) / static_cast<double>(r);
  }
  const std::size_t denom = truth.size() < k ? truth.size() : k;
  return sum / static_cast<double>(denom);
}

// Trims one token at a time: the longer side, B on ties.
inline std::pair<std::size_t, std::size_t> pair_truncation(std::size_t a, std::size_t b,
                                                           std::size_t max_len) {
  while (a + b + 3 > max_len) {
    if (a > b) --a;
    else --b;
  }
  return {a, b};
}

// max(1, round-half-up(0.15 n)) via quotient and remainder.
inline std::size_t masked_count(std::size_t n) {
  if (n == 0) return 0;
  std::size_t q = (n * 15) / 100;
  if ((n * 15) % 100 >= 50) ++q;
  return q == 0 ? 1 : q;
}

struct Scored {
  std::string id;
  double sim;
};

// Full sort of every (id, dot) pair.
inline std::vector<Scored> knn(const std::vector<std::string>& ids,
                               const std::vector<std::vector<double>>& rows,
                               const std::vector<double>& query, std::size_t k) {
  std::vector<Scored> all;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    double s = 0.0;
    for (std::size_t c = 0; c < query.size(); ++c) s += query[c] * rows[i][c];
    all.push_back({ids[i], s});
  }
  std::sort(all.begin(), all.end(), [](const Scored& x, const Scored& y) {
    if (x.sim > y.sim) return true;
    if (x.sim < y.sim) return false;
    return x.id < y.id;
  });
  all.resize(k);
  return all;
}

inline std::vector<double> softmax(const std::vector<double>& z) {
  double m = z[0];
  for (double v : z) m = std::max(m, v);
  std::vector<double> p(z.size());
  double total = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) total += (p[i] = std::exp(z[i] - m));
  for (auto& v : p) v /= total;
  return p;
}

}  // namespace titlerec::oracle
