#ifndef FASOPT_VEC_HPP
#define FASOPT_VEC_HPP

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace fasopt {

using Vec = std::vector<double>;

inline double dot(const Vec& a, const Vec& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm2_sq(const Vec& a) { return dot(a, a); }

inline double norm2(const Vec& a) { return std::sqrt(norm2_sq(a)); }

inline Vec sub(const Vec& a, const Vec& b) {
  Vec out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] - b[i];
  return out;
}

inline Vec add(const Vec& a, const Vec& b) {
  Vec out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
  return out;
}

inline Vec scale(double alpha, const Vec& x) {
  Vec out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = alpha * x[i];
  return out;
}

/// alpha * x + y
inline Vec axpy(double alpha, const Vec& x, const Vec& y) {
  Vec out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = alpha * x[i] + y[i];
  return out;
}

inline double dist2(const Vec& a, const Vec& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return std::sqrt(s);
}

inline bool all_finite(const Vec& a) {
  for (double x : a)
    if (!std::isfinite(x)) return false;
  return true;
}

inline void check_dim(const Vec& v, std::size_t n, const char* what) {
  if (v.size() != n)
    throw std::invalid_argument(std::string(what) + ": expected length " +
                                std::to_string(n) + ", got " + std::to_string(v.size()));
}

inline void check_finite(const Vec& v, const char* what) {
  if (!all_finite(v))
    throw std::invalid_argument(std::string(what) + ": non-finite entry");
}

/// Dense row-major matrix, just enough for the built-in problems.
struct Mat {
  std::size_t rows = 0;
  std::size_t cols = 0;
  Vec data;  // rows * cols, row-major

  Mat() = default;
  Mat(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

  static Mat identity(std::size_t n) {
    Mat m(n, n);
    for (std::size_t i = 0; i < n; ++i) m.at(i, i) = 1.0;
    return m;
  }

  double& at(std::size_t i, std::size_t j) { return data[i * cols + j]; }
  double at(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

  Vec apply(const Vec& x) const {
    if (x.size() != cols) throw std::invalid_argument("Mat::apply: dimension mismatch");
    Vec out(rows, 0.0);
    for (std::size_t i = 0; i < rows; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < cols; ++j) s += at(i, j) * x[j];
      out[i] = s;
    }
    return out;
  }

  Vec apply_transpose(const Vec& x) const {
    if (x.size() != rows) throw std::invalid_argument("Mat::apply_transpose: dimension mismatch");
    Vec out(cols, 0.0);
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < cols; ++j) out[j] += at(i, j) * x[i];
    return out;
  }
};

/// Largest singular value via power iteration on A^T A. Used for the
/// Lipschitz constants of the built-in quadratic instances.
double spectral_norm(const Mat& a, int iterations = 200);

}  // namespace fasopt

#endif
