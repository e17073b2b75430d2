// Scaling to many users: pair users by channel alignment, null interference
// between pairs, optimize each pair in a reduced subspace, and stitch the
// per-group precoders back into the full antenna space.
#pragma once

#include <Eigen/Dense>
#include <span>
#include <vector>

#include "rsopt/cc_rate.hpp"
#include "rsopt/optimizer.hpp"

namespace rsopt {

// |<a,b>| / (||a|| ||b||).
double channel_similarity(const Eigen::VectorXcd& a, const Eigen::VectorXcd& b);

// Greedy pairing by descending similarity; a leftover user forms a singleton.
std::vector<std::vector<int>> group_users(std::span<const Eigen::VectorXcd> channels);

struct Group {
  std::vector<int> users;               // global indices, ascending
  Eigen::MatrixXcd F;                   // orthonormal basis avoiding other groups' channels
  Eigen::MatrixXcd G;                   // isometric alignment with the in-group channels
  std::vector<Eigen::VectorXcd> reduced_channels;  // (FG)^H h_k per member
};

struct GroupingPlan {
  std::vector<Group> groups;
  int n_tx = 0;
  int num_users = 0;
};

GroupingPlan nulling_and_reduction(std::span<const Eigen::VectorXcd> channels,
                                   std::span<const std::vector<int>> groups);

GroupingPlan build_plan(std::span<const Eigen::VectorXcd> channels);

// Reduced precoders, one block per group: [shared column (when the mode has
// one) | one private column per member in group order].
struct GroupedPrecoder {
  std::vector<Eigen::MatrixXcd> blocks;
};

// Full-antenna precoder: shared columns in group order, then private columns
// in global user order.
Eigen::MatrixXcd expand_precoder(const GroupingPlan& plan, const GroupedPrecoder& v,
                                 const TransmissionMode& mode);

struct GroupedRateReport {
  std::vector<double> r_c_per_user;  // clamped rate of the user's own shared stream
  std::vector<double> r_c_group;     // min within each group
  std::vector<double> r_p_sic;
  std::vector<double> r_p_sicfree;
  std::vector<bool> clamped;
  std::vector<double> raw_r_c_per_user;
  std::vector<double> raw_r_p_sic;
  std::vector<double> raw_r_p_sicfree;
  std::vector<double> r_c_stderr;
  std::vector<double> r_p_sic_stderr;
  std::vector<double> r_p_sicfree_stderr;

  double r_p(int k, Receiver rx) const {
    return rx == Receiver::sic ? r_p_sic[static_cast<std::size_t>(k)]
                               : r_p_sicfree[static_cast<std::size_t>(k)];
  }
};

// Per-group evaluation in the reduced spaces (cross-group terms dropped, which
// the nulling makes negligible).
GroupedRateReport grouped_rate_report(const GroupingPlan& plan, const GroupedPrecoder& v,
                                      const TransmissionMode& mode, RateMethod method,
                                      const NoiseModel& noise, const McConfig* mc = nullptr);

// Honest evaluation of the expanded precoder against the original channels,
// every stream of every group included. Used to validate the reduction.
GroupedRateReport expanded_rate_report(const GroupingPlan& plan, const Eigen::MatrixXcd& expanded,
                                       std::span<const Eigen::VectorXcd> channels,
                                       const TransmissionMode& mode, RateMethod method,
                                       const NoiseModel& noise, const McConfig* mc = nullptr);

struct GroupedOptimizeResult {
  GroupingPlan plan;
  GroupedPrecoder blocks;
  Eigen::MatrixXcd precoder;        // expanded
  std::vector<double> allocation;   // per-user share of the own group's shared rate
  double objective = 0.0;
  std::vector<double> objective_trace;
  int iterations = 0;
  bool converged = false;
};

GroupedOptimizeResult grouped_optimize_wsr(const GroupingPlan& plan,
                                           std::span<const double> weights, Receiver rx,
                                           const NoiseModel& noise, const TransmissionMode& mode,
                                           const OptimizerConfig& cfg);

GroupedOptimizeResult grouped_optimize_mmf(const GroupingPlan& plan, Receiver rx,
                                           const NoiseModel& noise, const TransmissionMode& mode,
                                           const OptimizerConfig& cfg);

// Work accounting: point-pair counts with and without the grouping.
PairCount grouped_pair_count(const GroupingPlan& plan, const TransmissionMode& mode);
PairCount full_pair_count(int num_users, const TransmissionMode& mode);

}  // namespace rsopt
