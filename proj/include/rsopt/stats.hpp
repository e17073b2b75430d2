// Deterministic reductions and simple sample statistics.
#pragma once

#include <cmath>
#include <cstddef>
#include <span>

namespace rsopt {

// Pairwise (tree) summation: fixed association order, so results do not
// depend on how work is sliced across threads.
inline double pairwise_sum(std::span<const double> xs) {
  if (xs.size() <= 8) {
    double s = 0.0;
    for (double x : xs) s += x;
    return s;
  }
  const std::size_t half = xs.size() / 2;
  return pairwise_sum(xs.first(half)) + pairwise_sum(xs.subspan(half));
}

inline double mean(std::span<const double> xs) {
  return xs.empty() ? 0.0 : pairwise_sum(xs) / static_cast<double>(xs.size());
}

// Standard error of the sample mean.
inline double std_error(std::span<const double> xs) {
  const std::size_t n = xs.size();
  if (n < 2) return 0.0;
  const double mu = mean(xs);
  double ss = 0.0;
  for (double x : xs) ss += (x - mu) * (x - mu);
  return std::sqrt(ss / (static_cast<double>(n) * static_cast<double>(n - 1)));
}

}  // namespace rsopt
