// Reference schemes: private-streams-only transmission (no shared stream) and
// the two-user power-domain scheme where the stronger receiver decodes and
// cancels the weaker user's stream.
#pragma once

#include <Eigen/Dense>
#include <span>

#include "rsopt/cc_rate.hpp"
#include "rsopt/optimizer.hpp"

namespace rsopt {

// Private-only transmission: the given mode must have no shared stream (the
// first entry of every built-in dictionary).
OptimizeResult sdma_optimize_wsr(std::span<const Eigen::VectorXcd> channels,
                                 const TransmissionMode& mode, std::span<const double> weights,
                                 const NoiseModel& noise, const OptimizerConfig& cfg);
OptimizeResult sdma_optimize_mmf(std::span<const Eigen::VectorXcd> channels,
                                 const TransmissionMode& mode, const NoiseModel& noise,
                                 const OptimizerConfig& cfg);

struct NomaRates {
  int strong = 0;  // larger channel norm (lower index on ties)
  int weak = 1;
  double r_weak = 0.0;   // clamped to [0, bits]
  double r_strong = 0.0;
  double raw_r_weak = 0.0;
  double raw_r_strong = 0.0;
  double r_weak_stderr = 0.0;
  double r_strong_stderr = 0.0;
  bool weak_limited_by_strong = false;  // decodability at the strong user binds
  bool clamped = false;
};

// Both users draw from `alphabet`; the weak user's rate is the minimum of its
// own decoding rate and the strong user's decoding rate for that stream (the
// strong user must decode it before cancelling), the strong user's rate
// assumes the weaker stream is gone. Precoder columns follow user order.
NomaRates noma_rates(const Eigen::MatrixXcd& P, std::span<const Eigen::VectorXcd> channels,
                     const Constellation& alphabet, RateMethod method, const NoiseModel& noise,
                     const McConfig* mc = nullptr);

struct NomaResult {
  Eigen::MatrixXcd precoder;  // columns in user order
  double objective = 0.0;
  std::vector<double> objective_trace;
  int iterations = 0;
  bool converged = false;
  int strong = 0;
  int weak = 1;
};

NomaResult noma_optimize_wsr(std::span<const Eigen::VectorXcd> channels,
                             const Constellation& alphabet, std::span<const double> weights,
                             const NoiseModel& noise, const OptimizerConfig& cfg);
NomaResult noma_optimize_mmf(std::span<const Eigen::VectorXcd> channels,
                             const Constellation& alphabet, const NoiseModel& noise,
                             const OptimizerConfig& cfg);

}  // namespace rsopt
