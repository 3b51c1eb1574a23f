#ifndef ADENS_NUMERIC_HPP
#define ADENS_NUMERIC_HPP

#include <cmath>
#include <limits>
#include <span>
#include <vector>

namespace adens {

inline constexpr double kLogZero = -std::numeric_limits<double>::infinity();

// log(exp(x) + exp(y)) without leaving log space.
inline double log_add(double x, double y) {
  if (x < y) std::swap(x, y);
  if (y == kLogZero) return x;
  return x + std::log1p(std::exp(y - x));
}

inline double log_sum_exp(std::span<const double> xs) {
  double m = kLogZero;
  for (double x : xs)
    if (x > m) m = x;
  if (m == kLogZero) return kLogZero;
  double s = 0.0;
  for (double x : xs) s += std::exp(x - m);
  return m + std::log(s);
}

// Normalizes a vector of log weights into probabilities. All-(-inf) input
// yields an all-zero vector; callers decide how to handle that.
inline std::vector<double> softmax_from_logs(std::span<const double> logs) {
  std::vector<double> out(logs.size(), 0.0);
  double z = log_sum_exp(logs);
  if (z == kLogZero) return out;
  for (std::size_t i = 0; i < logs.size(); ++i) out[i] = std::exp(logs[i] - z);
  return out;
}

inline bool all_finite(std::span<const double> xs) {
  for (double x : xs)
    if (!std::isfinite(x)) return false;
  return true;
}

}  // namespace adens

#endif  // ADENS_NUMERIC_HPP
