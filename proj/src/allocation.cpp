#include "rsopt/allocation.hpp"

#include <algorithm>
#include <cstdint>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace rsopt {

namespace {

void check_inputs(double r_c, std::span<const double> r_p) {
  if (r_p.empty()) throw std::invalid_argument("allocation needs at least one user");
  if (!(r_c >= 0.0)) throw std::invalid_argument("shared-stream rate must be non-negative");
  for (double r : r_p)
    if (!(r >= 0.0)) throw std::invalid_argument("private rates must be non-negative");
}

}  // namespace

WsrAllocation wsr_allocation(double r_c, std::span<const double> weights) {
  if (weights.empty()) throw std::invalid_argument("allocation needs at least one user");
  if (!(r_c >= 0.0)) throw std::invalid_argument("shared-stream rate must be non-negative");
  WsrAllocation out;
  out.c.assign(weights.size(), 0.0);
  out.k_prime = static_cast<int>(
      std::max_element(weights.begin(), weights.end()) - weights.begin());
  out.c[static_cast<std::size_t>(out.k_prime)] = r_c;
  return out;
}

MmfAllocation mmf_allocation(double r_c, std::span<const double> r_p) {
  check_inputs(r_c, r_p);
  const int K = static_cast<int>(r_p.size());

  std::vector<int> order(r_p.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return r_p[static_cast<std::size_t>(a)] <
                                              r_p[static_cast<std::size_t>(b)]; });

  // Largest prefix of the sorted users that can be raised to a common level
  // with a non-negative split. The single lowest user is always feasible.
  double eta = 0.0;
  int kp = 1;
  double prefix = 0.0;
  std::vector<double> sorted(r_p.size());
  for (int i = 0; i < K; ++i) sorted[static_cast<std::size_t>(i)] = r_p[static_cast<std::size_t>(order[i])];
  for (int cand = K; cand >= 1; --cand) {
    prefix = 0.0;
    for (int i = 0; i < cand; ++i) prefix += sorted[static_cast<std::size_t>(i)];
    const double level = (r_c + prefix) / cand;
    if (level >= sorted[static_cast<std::size_t>(cand - 1)]) {
      eta = level;
      kp = cand;
      break;
    }
  }

  MmfAllocation out;
  out.c.assign(r_p.size(), 0.0);
  for (int i = 0; i < kp; ++i) {
    const int k = order[static_cast<std::size_t>(i)];
    out.c[static_cast<std::size_t>(k)] = std::max(0.0, eta - sorted[static_cast<std::size_t>(i)]);
  }
  out.min_rate = std::numeric_limits<double>::infinity();
  for (int k = 0; k < K; ++k)
    out.min_rate = std::min(out.min_rate,
                            out.c[static_cast<std::size_t>(k)] + r_p[static_cast<std::size_t>(k)]);
  return out;
}

MmfAllocation mmf_allocation_lp_oracle(double r_c, std::span<const double> r_p) {
  check_inputs(r_c, r_p);
  const int K = static_cast<int>(r_p.size());
  if (K > 12) throw std::invalid_argument("LP enumeration oracle is limited to 12 users");

  constexpr double kTol = 1e-12;
  double best_t = -std::numeric_limits<double>::infinity();
  std::uint32_t best_mask = 0;
  for (std::uint32_t mask = 1; mask < (1u << K); ++mask) {
    double sum = 0.0;
    int cnt = 0;
    for (int k = 0; k < K; ++k)
      if (mask & (1u << k)) {
        sum += r_p[static_cast<std::size_t>(k)];
        ++cnt;
      }
    const double t = (r_c + sum) / cnt;
    bool ok = true;
    for (int k = 0; k < K && ok; ++k) {
      const double rk = r_p[static_cast<std::size_t>(k)];
      if (mask & (1u << k))
        ok = t >= rk - kTol;  // members get c_k = t - r_k >= 0
      else
        ok = rk >= t - kTol;  // non-members already sit at or above the level
    }
    if (ok && t > best_t) {
      best_t = t;
      best_mask = mask;
    }
  }

  MmfAllocation out;
  out.c.assign(r_p.size(), 0.0);
  for (int k = 0; k < K; ++k)
    if (best_mask & (1u << k))
      out.c[static_cast<std::size_t>(k)] = std::max(0.0, best_t - r_p[static_cast<std::size_t>(k)]);
  out.min_rate = std::numeric_limits<double>::infinity();
  for (int k = 0; k < K; ++k)
    out.min_rate = std::min(out.min_rate,
                            out.c[static_cast<std::size_t>(k)] + r_p[static_cast<std::size_t>(k)]);
  return out;
}

}  // namespace rsopt
