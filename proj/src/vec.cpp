#include "fasopt/vec.hpp"

namespace fasopt {

double spectral_norm(const Mat& a, int iterations) {
  if (a.rows == 0 || a.cols == 0) return 0.0;
  // power iteration on A^T A with a fixed deterministic start
  Vec v(a.cols, 1.0 / std::sqrt(static_cast<double>(a.cols)));
  double sigma_sq = 0.0;
  for (int it = 0; it < iterations; ++it) {
    Vec w = a.apply_transpose(a.apply(v));
    const double n = norm2(w);
    if (n == 0.0) return 0.0;
    for (auto& x : w) x /= n;
    sigma_sq = dot(w, a.apply_transpose(a.apply(w)));
    v = std::move(w);
  }
  return std::sqrt(std::max(0.0, sigma_sq));
}

}  // namespace fasopt
