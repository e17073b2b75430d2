// Achievable-rate computation for finite-alphabet multi-stream transmission:
// conditional entropies of Gaussian-noise mixtures (exact Monte Carlo and a
// Jensen-style closed-form approximation), per-user rates for receivers with
// and without successive cancellation of the shared stream, and the matching
// entropy gradients used by the precoder optimizer.
#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "rsopt/constellation.hpp"

namespace rsopt {

struct NoiseModel {
  double sigma2 = 1.0;  // complex noise variance (per complex dimension total)
};

struct McConfig {
  int samples = 2000;
  std::uint64_t seed = 0;
};

struct McEstimate {
  double value = 0.0;
  double std_error = 0.0;
};

// H(X | effective points) via the closed-form upper-bound surrogate:
//   (1/N) sum_m log2 sum_l exp(-|e_m - e_l|^2 / (2 sigma2)).
// The 1/ln2 constant of the exact expression is intentionally absent; rate
// formulas only ever use entropy differences, where it cancels.
double cond_entropy_approx(const EffectivePointSet& set, const NoiseModel& noise);

// Monte Carlo estimate of the exact conditional entropy
//   1/ln2 + (1/N) sum_m E_n log2 sum_l exp(-|e_m - e_l + n|^2 / sigma2),
// with n ~ CN(0, sigma2) drawn deterministically from mc.seed.
McEstimate cond_entropy_exact(const EffectivePointSet& set, const NoiseModel& noise,
                              const McConfig& mc);

enum class Receiver { sic, sic_free };
enum class RateMethod { approx, exact };

// Rates for a single user. std_error fields are zero for the approx method.
struct UserRates {
  double r_c = 0.0;         // shared-stream rate seen by this user
  double r_p_sic = 0.0;     // private rate after cancelling the shared stream
  double r_p_sicfree = 0.0; // private rate with the shared stream as interference
  double r_c_stderr = 0.0;
  double r_p_sic_stderr = 0.0;
  double r_p_sicfree_stderr = 0.0;
};

// Precoder column convention: column 0 carries the shared stream when the
// mode has one, followed by one private column per user in user order. When
// the mode has no shared stream the private columns start at 0; when it has
// no private streams the matrix is the single shared column.
struct StreamLayout {
  int common_col = -1;             // -1 when the mode has no shared stream
  std::vector<int> private_cols;   // per user in `users` order
};

StreamLayout stream_layout(const TransmissionMode& mode, int num_users);

// Unclamped rates of user `user` (index into `users`) under precoder P and
// channel h. `users` lists the user indices sharing the private columns of P
// (normally 0..K-1). mc may be null for the approx method.
UserRates user_rates(const Eigen::MatrixXcd& P, const Eigen::VectorXcd& h,
                     const TransmissionMode& mode, int user, std::span<const int> users,
                     RateMethod method, const NoiseModel& noise, const McConfig* mc = nullptr);

// Rates of every user under a common precoder. Clamped values are reported;
// raw (unclamped) values are kept for the optimizer.
struct RateReport {
  std::vector<double> r_c_per_user;  // clamped to [0, common bits]
  double r_c = 0.0;                  // min over users (0 when no shared stream)
  std::vector<double> r_p_sic;       // clamped to [0, private bits]
  std::vector<double> r_p_sicfree;
  std::vector<bool> clamped;         // true where any clamp changed a value
  std::vector<double> raw_r_c_per_user;
  std::vector<double> raw_r_p_sic;
  std::vector<double> raw_r_p_sicfree;
  std::vector<double> r_c_stderr;
  std::vector<double> r_p_sic_stderr;
  std::vector<double> r_p_sicfree_stderr;

  double r_p(int k, Receiver rx) const {
    return rx == Receiver::sic ? r_p_sic[k] : r_p_sicfree[k];
  }
  double raw_r_p(int k, Receiver rx) const {
    return rx == Receiver::sic ? raw_r_p_sic[k] : raw_r_p_sicfree[k];
  }
};

RateReport rate_report(const Eigen::MatrixXcd& P, std::span<const Eigen::VectorXcd> channels,
                       const TransmissionMode& mode, RateMethod method, const NoiseModel& noise,
                       const McConfig* mc = nullptr);

// Gradient (Wirtinger, w.r.t. conj(P)) of the approximate conditional entropy
// of the stream subset `cols` of P with per-stream alphabets `alphas`, at
// channel h. Returned matrix has the shape of P; columns outside `cols` are 0.
Eigen::MatrixXcd entropy_approx_gradient(const Eigen::MatrixXcd& P, const Eigen::VectorXcd& h,
                                         std::span<const int> cols,
                                         std::span<const Constellation* const> alphas,
                                         const NoiseModel& noise);

// Gradients of the approximate rates (same orientation as entropy gradient;
// ascent direction for the rate is the returned matrix itself).
Eigen::MatrixXcd rate_c_gradient(const Eigen::MatrixXcd& P, const Eigen::VectorXcd& h,
                                 const TransmissionMode& mode, std::span<const int> users,
                                 const NoiseModel& noise);
Eigen::MatrixXcd rate_p_gradient(const Eigen::MatrixXcd& P, const Eigen::VectorXcd& h,
                                 const TransmissionMode& mode, int user, std::span<const int> users,
                                 Receiver rx, const NoiseModel& noise);

// Paired-sample Monte Carlo estimate of r_p_sic - r_p_sicfree for one user
// (common random numbers, so the difference has low variance).
McEstimate sic_gap_exact(const Eigen::MatrixXcd& P, const Eigen::VectorXcd& h,
                         const TransmissionMode& mode, int user, std::span<const int> users,
                         const NoiseModel& noise, const McConfig& mc);

namespace detail {

// One conditional-entropy term: the nonzero-gain streams entering the
// effective set, plus exact integer bookkeeping for pruned zero-gain streams
// (each contributes log2|alphabet| bits and exactly zero gradient).
struct TermSpec {
  std::vector<cplx> gains;
  std::vector<const Constellation*> alphas;
  std::vector<int> cols;
  int dropped_bits = 0;
};

TermSpec make_term(const Eigen::MatrixXcd& P, const Eigen::VectorXcd& h,
                   std::span<const int> cols, std::span<const Constellation* const> alphas);

std::vector<cplx> term_points(const TermSpec& term);

// Approximate entropy of a term (surrogate body + dropped bits).
double term_entropy_approx(const TermSpec& term, double sigma2);

// Per-sample values (1/N) sum_m log2 sum_l exp(-|e_m - e_l + n_s|^2/sigma2)
// + dropped bits, for externally supplied noise draws (shared across terms).
std::vector<double> term_entropy_exact_samples(const TermSpec& term, double sigma2,
                                               std::span<const cplx> noise_draws);

// Gradient of term_entropy_approx w.r.t. conj(P), scattered into P's shape.
Eigen::MatrixXcd term_entropy_gradient(const TermSpec& term, const Eigen::VectorXcd& h,
                                       double sigma2, Eigen::Index n_tx, Eigen::Index n_cols);

std::vector<cplx> draw_noise(const NoiseModel& noise, const McConfig& mc);

}  // namespace detail

}  // namespace rsopt
