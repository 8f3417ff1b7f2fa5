#pragma once

#include <cassert>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "ratelab/core.hpp"

namespace ratelab {

using Vec = std::vector<double>;

// Dense row-major matrix. Sized for controller-scale tensors (<= 128x64),
// so plain loops beat any BLAS dispatch overhead here.
struct Mat {
  std::size_t rows = 0;
  std::size_t cols = 0;
  Vec data;

  Mat() = default;
  Mat(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const {
    return data[r * cols + c];
  }

  void fill(double v) {
    for (auto& x : data) x = v;
  }
};

inline Vec zeros(std::size_t n) { return Vec(n, 0.0); }

// y = A x
inline Vec matvec(const Mat& a, const Vec& x) {
  assert(a.cols == x.size());
  Vec y(a.rows, 0.0);
  for (std::size_t r = 0; r < a.rows; ++r) {
    const double* row = a.data.data() + r * a.cols;
    double acc = 0.0;
    for (std::size_t c = 0; c < a.cols; ++c) acc += row[c] * x[c];
    y[r] = acc;
  }
  return y;
}

// y = A^T x
inline Vec matvec_t(const Mat& a, const Vec& x) {
  assert(a.rows == x.size());
  Vec y(a.cols, 0.0);
  for (std::size_t r = 0; r < a.rows; ++r) {
    const double* row = a.data.data() + r * a.cols;
    const double s = x[r];
    for (std::size_t c = 0; c < a.cols; ++c) y[c] += row[c] * s;
  }
  return y;
}

// A += u v^T
inline void add_outer(Mat& a, const Vec& u, const Vec& v) {
  assert(a.rows == u.size() && a.cols == v.size());
  for (std::size_t r = 0; r < a.rows; ++r) {
    double* row = a.data.data() + r * a.cols;
    const double s = u[r];
    for (std::size_t c = 0; c < a.cols; ++c) row[c] += s * v[c];
  }
}

inline void add_scaled(Vec& y, const Vec& x, double s = 1.0) {
  assert(y.size() == x.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += s * x[i];
}

inline Vec add(const Vec& a, const Vec& b) {
  assert(a.size() == b.size());
  Vec y(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) y[i] = a[i] + b[i];
  return y;
}

inline Vec hadamard(const Vec& a, const Vec& b) {
  assert(a.size() == b.size());
  Vec y(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) y[i] = a[i] * b[i];
  return y;
}

inline double dot(const Vec& a, const Vec& b) {
  assert(a.size() == b.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

inline Vec concat(const Vec& a, const Vec& b) {
  Vec y;
  y.reserve(a.size() + b.size());
  y.insert(y.end(), a.begin(), a.end());
  y.insert(y.end(), b.begin(), b.end());
  return y;
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline Vec sigmoid(const Vec& x) {
  Vec y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = sigmoid(x[i]);
  return y;
}

inline Vec tanh_vec(const Vec& x) {
  Vec y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = std::tanh(x[i]);
  return y;
}

inline bool all_finite(const Vec& v) {
  for (double x : v) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

inline bool all_finite(const Mat& m) { return all_finite(m.data); }

}  // namespace ratelab
