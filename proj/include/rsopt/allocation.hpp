// Splitting the shared-stream rate across users, for weighted-sum-rate and
// max-min-fairness objectives.
#pragma once

#include <span>
#include <vector>

namespace rsopt {

struct WsrAllocation {
  std::vector<double> c;  // per-user share of the shared-stream rate
  int k_prime = 0;        // receiving user (highest weight, lowest index on ties)
};

// Weighted sum rate is maximized by giving the whole shared-stream rate to
// one maximum-weight user.
WsrAllocation wsr_allocation(double r_c, std::span<const double> weights);

struct MmfAllocation {
  std::vector<double> c;    // >= 0, sums to r_c
  double min_rate = 0.0;    // min_k (c_k + r_p_k) after the split
};

// Water-filling split: raise the lowest private rates to a common level.
MmfAllocation mmf_allocation(double r_c, std::span<const double> r_p);

// Independent reference: enumerate every candidate support set of the
// equivalent linear program. Refuses more than 12 users.
MmfAllocation mmf_allocation_lp_oracle(double r_c, std::span<const double> r_p);

}  // namespace rsopt
