// Precoder optimization by projected subgradient ascent on the approximate
// rates, for weighted-sum-rate and max-min-fairness objectives.
#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "rsopt/allocation.hpp"
#include "rsopt/cc_rate.hpp"

namespace rsopt {

struct OptimizerConfig {
  double p_t = 1.0;         // transmit power budget (Frobenius norm squared)
  double epsilon = 1e-4;    // stop when the objective moves less than this
  int v_max = 500;          // iteration cap
  double alpha = 0.3;       // Armijo slope factor
  double beta = 0.5;        // step shrink factor
  double t_min = 1e-8;      // below this the step is declared zero
  double gamma = -30.0;     // sharpness of the smoothed-minimum surrogate (< 0)
  int restarts = 2;         // extra random initializations, best result kept
  std::uint64_t seed = 0;   // seeds the random restarts
  double pair_budget = 1e9; // refuse modes whose point sets need more pairs
};

struct OptimizeResult {
  Eigen::MatrixXcd precoder;
  std::vector<double> allocation;      // per-user share of the shared-stream rate
  double objective = 0.0;              // final trace value
  std::vector<double> objective_trace; // one entry per iteration, plus the start
  int iterations = 0;
  bool converged = false;
};

// Scale P onto the power sphere ||P||_F^2 = p_t.
Eigen::MatrixXcd project_power(const Eigen::MatrixXcd& P, double p_t);

// Backtracking line search along `delta`: largest t in {1, beta, beta^2, ...}
// whose projected step improves `objective` by at least alpha*t*||delta||_F^2;
// 0 when no t above t_min does.
double backtracking_step(const Eigen::MatrixXcd& P, const Eigen::MatrixXcd& delta,
                         const std::function<double(const Eigen::MatrixXcd&)>& objective,
                         const OptimizerConfig& cfg);

// Ascent direction for the weighted sum rate: the shared-stream term follows
// the currently weakest user, private terms are weighted per user.
Eigen::MatrixXcd wsr_subgradient(const Eigen::MatrixXcd& P,
                                 std::span<const Eigen::VectorXcd> channels,
                                 const TransmissionMode& mode, std::span<const double> weights,
                                 Receiver rx, const NoiseModel& noise);

// Smoothed minimum of the per-user totals c_k + r_p_k (gamma < 0):
//   (1/gamma) log sum_k exp(gamma (c_k + r_p_k)),
// a lower bound on the true minimum within (log K)/|gamma|.
double mmf_objective_lse(const Eigen::MatrixXcd& P, std::span<const Eigen::VectorXcd> channels,
                         const TransmissionMode& mode, std::span<const double> c, Receiver rx,
                         const NoiseModel& noise, double gamma);

OptimizeResult optimize_wsr(std::span<const Eigen::VectorXcd> channels,
                            const TransmissionMode& mode, std::span<const double> weights,
                            Receiver rx, const NoiseModel& noise, const OptimizerConfig& cfg,
                            const Eigen::MatrixXcd* init = nullptr);

OptimizeResult optimize_mmf(std::span<const Eigen::VectorXcd> channels,
                            const TransmissionMode& mode, Receiver rx, const NoiseModel& noise,
                            const OptimizerConfig& cfg, const Eigen::MatrixXcd* init = nullptr);

// Deterministic starting point: matched-filter private columns, the dominant
// left singular vector of the channel matrix for the shared column, equal
// power split between the two kinds.
Eigen::MatrixXcd default_precoder_init(std::span<const Eigen::VectorXcd> channels,
                                       const TransmissionMode& mode, double p_t);

// Objective readouts from a finished rate report.
double wsr_value(const RateReport& rep, std::span<const double> weights, Receiver rx,
                 bool use_raw);
double mmf_value(const RateReport& rep, Receiver rx);

}  // namespace rsopt
