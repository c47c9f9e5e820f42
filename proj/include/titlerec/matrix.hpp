#pragma once

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

namespace titlerec {

// Dense row-major matrix of doubles. Vectors and biases are 1 x n.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double value = 0.0)
      : rows(r), cols(c), data(r * c, value) {}

  double& operator()(std::size_t r, std::size_t c) {
    assert(r < rows && c < cols);
    return data[r * cols + c];
  }
  double operator()(std::size_t r, std::size_t c) const {
    assert(r < rows && c < cols);
    return data[r * cols + c];
  }

  std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }
  std::span<const double> row(std::size_t r) const {
    return {data.data() + r * cols, cols};
  }

  std::size_t size() const { return data.size(); }
  bool same_shape(const Matrix& other) const {
    return rows == other.rows && cols == other.cols;
  }
  void fill(double value) { std::fill(data.begin(), data.end(), value); }

  bool all_finite() const {
    return std::all_of(data.begin(), data.end(),
                       [](double v) { return std::isfinite(v); });
  }

  friend bool operator==(const Matrix&, const Matrix&) = default;
};

inline double dot(std::span<const double> a, std::span<const double> b) {
  assert(a.size() == b.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) sum += a[i] * b[i];
  return sum;
}

inline double l2_norm(std::span<const double> v) { return std::sqrt(dot(v, v)); }

// out = a * b (+ bias row broadcast when given).
inline void matmul(const Matrix& a, const Matrix& b, Matrix& out,
                   const Matrix* bias = nullptr) {
  assert(a.cols == b.rows);
  out = Matrix(a.rows, b.cols);
  for (std::size_t i = 0; i < a.rows; ++i) {
    double* o = out.data.data() + i * out.cols;
    if (bias) std::copy(bias->data.begin(), bias->data.end(), o);
    for (std::size_t k = 0; k < a.cols; ++k) {
      const double aik = a.data[i * a.cols + k];
      if (aik == 0.0) continue;
      const double* brow = b.data.data() + k * b.cols;
      for (std::size_t j = 0; j < b.cols; ++j) o[j] += aik * brow[j];
    }
  }
}

// out += a^T * b
inline void matmul_at_b_acc(const Matrix& a, const Matrix& b, Matrix& out) {
  assert(a.rows == b.rows && out.rows == a.cols && out.cols == b.cols);
  for (std::size_t r = 0; r < a.rows; ++r) {
    const double* arow = a.data.data() + r * a.cols;
    const double* brow = b.data.data() + r * b.cols;
    for (std::size_t i = 0; i < a.cols; ++i) {
      const double ai = arow[i];
      if (ai == 0.0) continue;
      double* o = out.data.data() + i * out.cols;
      for (std::size_t j = 0; j < b.cols; ++j) o[j] += ai * brow[j];
    }
  }
}

// out += a * b^T
inline void matmul_a_bt_acc(const Matrix& a, const Matrix& b, Matrix& out) {
  assert(a.cols == b.cols && out.rows == a.rows && out.cols == b.rows);
  for (std::size_t i = 0; i < a.rows; ++i) {
    const auto arow = a.row(i);
    for (std::size_t j = 0; j < b.rows; ++j) out(i, j) += dot(arow, b.row(j));
  }
}

// Column sums of m accumulated into a 1 x cols bias gradient.
inline void add_column_sums(const Matrix& m, Matrix& out) {
  assert(out.cols == m.cols && out.rows == 1);
  for (std::size_t r = 0; r < m.rows; ++r) {
    const double* row = m.data.data() + r * m.cols;
    for (std::size_t c = 0; c < m.cols; ++c) out.data[c] += row[c];
  }
}

}  // namespace titlerec
