#include "rsopt/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "rsopt/rng.hpp"

namespace rsopt {

namespace {

void check_config(const OptimizerConfig& cfg) {
  if (!(cfg.p_t > 0.0)) throw std::invalid_argument("power budget must be positive");
  if (!(cfg.epsilon > 0.0)) throw std::invalid_argument("epsilon must be positive");
  if (cfg.v_max < 1) throw std::invalid_argument("iteration cap must be at least 1");
  if (!(cfg.alpha > 0.0)) throw std::invalid_argument("alpha must be positive");
  if (!(cfg.beta > 0.0 && cfg.beta < 1.0)) throw std::invalid_argument("beta must be in (0,1)");
  if (!(cfg.t_min > 0.0)) throw std::invalid_argument("t_min must be positive");
  if (!(cfg.gamma < 0.0)) throw std::invalid_argument("gamma must be negative");
  if (cfg.restarts < 0) throw std::invalid_argument("restart count must be non-negative");
}

void check_problem(std::span<const Eigen::VectorXcd> channels, const TransmissionMode& mode,
                   const OptimizerConfig& cfg) {
  check_config(cfg);
  if (channels.empty()) throw std::invalid_argument("need at least one user channel");
  const Eigen::Index n_tx = channels[0].size();
  for (const auto& h : channels) {
    if (h.size() != n_tx) throw std::invalid_argument("channels must share one dimension");
    if (!(h.norm() > 0.0)) throw std::invalid_argument("zero channel vector");
  }
  std::vector<Constellation> list;
  if (mode.common) list.push_back(*mode.common);
  if (mode.priv)
    for (std::size_t k = 0; k < channels.size(); ++k) list.push_back(*mode.priv);
  const PairCount pc = pair_count(list);
  if (!pc.tractable(cfg.pair_budget)) {
    std::ostringstream os;
    os << "effective point set needs ";
    if (pc.saturated)
      os << "more than " << pc.pairs;
    else
      os << pc.pairs;
    os << " point pairs (budget " << cfg.pair_budget
       << "); use fewer users per group or a smaller mode";
    throw std::invalid_argument(os.str());
  }
}

int expected_cols(const TransmissionMode& mode, int num_users) {
  return (mode.common ? 1 : 0) + (mode.priv ? num_users : 0);
}

std::vector<int> all_users(int K) {
  std::vector<int> u(static_cast<std::size_t>(K));
  std::iota(u.begin(), u.end(), 0);
  return u;
}

Eigen::MatrixXcd random_precoder(Eigen::Index n_tx, Eigen::Index cols, double p_t,
                                 std::uint64_t seed, std::uint64_t index) {
  CounterRng rng(derive_key({seed, index}));
  Eigen::MatrixXcd P(n_tx, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < n_tx; ++i) P(i, j) = rng.next_cnormal();
  return project_power(P, p_t);
}

double stable_lse_min(std::span<const double> totals, double gamma) {
  double hi = -std::numeric_limits<double>::infinity();
  for (double r : totals) hi = std::max(hi, gamma * r);
  double s = 0.0;
  for (double r : totals) s += std::exp(gamma * r - hi);
  return (hi + std::log(s)) / gamma;
}

std::vector<double> softmax_weights(std::span<const double> totals, double gamma) {
  double hi = -std::numeric_limits<double>::infinity();
  for (double r : totals) hi = std::max(hi, gamma * r);
  std::vector<double> w(totals.size());
  double s = 0.0;
  for (std::size_t k = 0; k < totals.size(); ++k) {
    w[k] = std::exp(gamma * totals[k] - hi);
    s += w[k];
  }
  for (double& x : w) x /= s;
  return w;
}

std::vector<double> raw_totals(const RateReport& rep, std::span<const double> c, Receiver rx) {
  std::vector<double> t(c.size());
  for (std::size_t k = 0; k < c.size(); ++k)
    t[k] = c[k] + rep.raw_r_p(static_cast<int>(k), rx);
  return t;
}

std::vector<double> clamped_private(const RateReport& rep, Receiver rx) {
  std::vector<double> r(rep.r_p_sic.size());
  for (std::size_t k = 0; k < r.size(); ++k) r[k] = rep.r_p(static_cast<int>(k), rx);
  return r;
}

}  // namespace

Eigen::MatrixXcd project_power(const Eigen::MatrixXcd& P, double p_t) {
  if (!(p_t > 0.0)) throw std::invalid_argument("power budget must be positive");
  const double n = P.norm();
  if (!(n > 0.0)) throw std::invalid_argument("cannot project a zero precoder");
  return P * (std::sqrt(p_t) / n);
}

namespace {

template <class Objective, class Accept>
double backtrack_impl(const Eigen::MatrixXcd& P, const Eigen::MatrixXcd& delta,
                      Objective&& objective, Accept&& accept, const OptimizerConfig& cfg) {
  const double f0 = objective(P);
  const double slope = cfg.alpha * delta.squaredNorm();
  double t = 1.0;
  while (t > cfg.t_min) {
    Eigen::MatrixXcd cand = P + t * delta;
    if (cand.norm() > 0.0) {
      cand = project_power(cand, cfg.p_t);
      if (objective(cand) > f0 + t * slope && accept(cand)) return t;
    }
    t *= cfg.beta;
  }
  return 0.0;
}

}  // namespace

double backtracking_step(const Eigen::MatrixXcd& P, const Eigen::MatrixXcd& delta,
                         const std::function<double(const Eigen::MatrixXcd&)>& objective,
                         const OptimizerConfig& cfg) {
  return backtrack_impl(P, delta, objective, [](const Eigen::MatrixXcd&) { return true; }, cfg);
}

Eigen::MatrixXcd wsr_subgradient(const Eigen::MatrixXcd& P,
                                 std::span<const Eigen::VectorXcd> channels,
                                 const TransmissionMode& mode, std::span<const double> weights,
                                 Receiver rx, const NoiseModel& noise) {
  const int K = static_cast<int>(channels.size());
  const std::vector<int> users = all_users(K);
  Eigen::MatrixXcd g = Eigen::MatrixXcd::Zero(P.rows(), P.cols());
  if (mode.common) {
    const RateReport rep = rate_report(P, channels, mode, RateMethod::approx, noise);
    const int k_min = static_cast<int>(
        std::min_element(rep.raw_r_c_per_user.begin(), rep.raw_r_c_per_user.end()) -
        rep.raw_r_c_per_user.begin());
    const int k_prime = static_cast<int>(
        std::max_element(weights.begin(), weights.end()) - weights.begin());
    g += weights[static_cast<std::size_t>(k_prime)] *
         rate_c_gradient(P, channels[static_cast<std::size_t>(k_min)], mode, users, noise);
  }
  if (mode.priv)
    for (int k = 0; k < K; ++k)
      g += weights[static_cast<std::size_t>(k)] *
           rate_p_gradient(P, channels[static_cast<std::size_t>(k)], mode, k, users, rx, noise);
  return g;
}

double wsr_value(const RateReport& rep, std::span<const double> weights, Receiver rx,
                 bool use_raw) {
  const int K = static_cast<int>(rep.r_p_sic.size());
  const int k_prime = static_cast<int>(
      std::max_element(weights.begin(), weights.end()) - weights.begin());
  // For modes without a shared stream the per-user values are all zero.
  const double rc = use_raw ? *std::min_element(rep.raw_r_c_per_user.begin(),
                                                rep.raw_r_c_per_user.end())
                            : rep.r_c;
  double v = weights[static_cast<std::size_t>(k_prime)] * rc;
  for (int k = 0; k < K; ++k)
    v += weights[static_cast<std::size_t>(k)] *
         (use_raw ? rep.raw_r_p(k, rx) : rep.r_p(k, rx));
  return v;
}

double mmf_value(const RateReport& rep, Receiver rx) {
  const std::vector<double> rp = clamped_private(rep, rx);
  return mmf_allocation(rep.r_c, rp).min_rate;
}

double mmf_objective_lse(const Eigen::MatrixXcd& P, std::span<const Eigen::VectorXcd> channels,
                         const TransmissionMode& mode, std::span<const double> c, Receiver rx,
                         const NoiseModel& noise, double gamma) {
  if (!(gamma < 0.0)) throw std::invalid_argument("gamma must be negative");
  const RateReport rep = rate_report(P, channels, mode, RateMethod::approx, noise);
  const std::vector<double> totals = raw_totals(rep, c, rx);
  return stable_lse_min(totals, gamma);
}

Eigen::MatrixXcd default_precoder_init(std::span<const Eigen::VectorXcd> channels,
                                       const TransmissionMode& mode, double p_t) {
  const int K = static_cast<int>(channels.size());
  const Eigen::Index n_tx = channels[0].size();
  const int cols = expected_cols(mode, K);
  Eigen::MatrixXcd P = Eigen::MatrixXcd::Zero(n_tx, cols);
  const bool both = mode.common.has_value() && mode.priv.has_value();
  const double common_power = mode.common ? (both ? p_t / 2.0 : p_t) : 0.0;
  const double private_power = mode.priv ? (both ? p_t / 2.0 : p_t) : 0.0;
  if (mode.priv) {
    const int off = mode.common ? 1 : 0;
    for (int k = 0; k < K; ++k) {
      const auto& h = channels[static_cast<std::size_t>(k)];
      P.col(off + k) = h / h.norm() * std::sqrt(private_power / K);
    }
  }
  if (mode.common) {
    Eigen::MatrixXcd H(n_tx, K);
    for (int k = 0; k < K; ++k) H.col(k) = channels[static_cast<std::size_t>(k)];
    Eigen::JacobiSVD<Eigen::MatrixXcd> svd(H, Eigen::ComputeThinU);
    P.col(0) = svd.matrixU().col(0) * std::sqrt(common_power);
  }
  return project_power(P, p_t);
}

namespace {

struct PsgaRun {
  Eigen::MatrixXcd P;
  std::vector<double> trace;
  bool converged = false;
};

std::vector<Eigen::MatrixXcd> build_inits(std::span<const Eigen::VectorXcd> channels,
                                          const TransmissionMode& mode,
                                          const OptimizerConfig& cfg,
                                          const Eigen::MatrixXcd* init) {
  const int K = static_cast<int>(channels.size());
  const Eigen::Index n_tx = channels[0].size();
  const int cols = expected_cols(mode, K);
  std::vector<Eigen::MatrixXcd> inits;
  if (init != nullptr) {
    if (init->rows() != n_tx || init->cols() != cols)
      throw std::invalid_argument("initial precoder has the wrong shape");
    inits.push_back(project_power(*init, cfg.p_t));
  } else {
    inits.push_back(default_precoder_init(channels, mode, cfg.p_t));
  }
  for (int r = 0; r < cfg.restarts; ++r)
    inits.push_back(random_precoder(n_tx, cols, cfg.p_t,
                                    cfg.seed, static_cast<std::uint64_t>(r) + 1));
  return inits;
}

PsgaRun run_wsr(const Eigen::MatrixXcd& P0, std::span<const Eigen::VectorXcd> channels,
                const TransmissionMode& mode, std::span<const double> weights, Receiver rx,
                const NoiseModel& noise, const OptimizerConfig& cfg) {
  auto objective = [&](const Eigen::MatrixXcd& X) {
    return wsr_value(rate_report(X, channels, mode, RateMethod::approx, noise), weights, rx,
                     /*use_raw=*/true);
  };
  PsgaRun run;
  run.P = P0;
  run.trace.push_back(objective(run.P));
  for (int v = 1; v <= cfg.v_max; ++v) {
    const Eigen::MatrixXcd delta = wsr_subgradient(run.P, channels, mode, weights, rx, noise);
    const double t = backtrack_impl(run.P, delta, objective,
                                    [](const Eigen::MatrixXcd&) { return true; }, cfg);
    if (t > 0.0) run.P = project_power(run.P + t * delta, cfg.p_t);
    run.trace.push_back(objective(run.P));
    const std::size_t n = run.trace.size();
    if (std::abs(run.trace[n - 1] - run.trace[n - 2]) < cfg.epsilon) {
      run.converged = true;
      break;
    }
  }
  return run;
}

PsgaRun run_mmf(const Eigen::MatrixXcd& P0, std::span<const Eigen::VectorXcd> channels,
                const TransmissionMode& mode, Receiver rx, const NoiseModel& noise,
                const OptimizerConfig& cfg, std::vector<double>* final_c) {
  const int K = static_cast<int>(channels.size());
  const std::vector<int> users = all_users(K);

  PsgaRun run;
  run.P = P0;
  RateReport rep = rate_report(run.P, channels, mode, RateMethod::approx, noise);
  MmfAllocation alloc = mmf_allocation(rep.r_c, clamped_private(rep, rx));
  run.trace.push_back(alloc.min_rate);
  std::vector<double> totals = raw_totals(rep, alloc.c, rx);
  double lse_prev = stable_lse_min(totals, cfg.gamma);

  for (int v = 1; v <= cfg.v_max; ++v) {
    // Ascent direction of the smoothed minimum at the current split.
    const std::vector<double> w = softmax_weights(totals, cfg.gamma);
    Eigen::MatrixXcd delta = Eigen::MatrixXcd::Zero(run.P.rows(), run.P.cols());
    if (mode.common) {
      const int k_min = static_cast<int>(
          std::min_element(rep.raw_r_c_per_user.begin(), rep.raw_r_c_per_user.end()) -
          rep.raw_r_c_per_user.begin());
      double cw = 0.0;
      for (std::size_t k = 0; k < w.size(); ++k) cw += w[k] * alloc.c[k];
      delta += cw * rate_c_gradient(run.P, channels[static_cast<std::size_t>(k_min)], mode,
                                    users, noise);
    }
    if (mode.priv)
      for (int k = 0; k < K; ++k)
        delta += w[static_cast<std::size_t>(k)] *
                 rate_p_gradient(run.P, channels[static_cast<std::size_t>(k)], mode, k, users,
                                 rx, noise);

    // Backtracking on the smoothed objective at the frozen split; a candidate
    // must also keep the re-balanced true minimum from falling (the frozen
    // split may be infeasible for the candidate's smaller shared rate, so the
    // guard has to re-split), which keeps the reported trace non-decreasing.
    const double f0 = stable_lse_min(totals, cfg.gamma);
    const double m0 = run.trace.back();
    const double slope = cfg.alpha * delta.squaredNorm();
    double t = 1.0;
    bool accepted = false;
    Eigen::MatrixXcd p_next = run.P;
    RateReport rep_next = rep;
    while (t > cfg.t_min) {
      Eigen::MatrixXcd cand = run.P + t * delta;
      if (cand.norm() > 0.0) {
        cand = project_power(cand, cfg.p_t);
        RateReport rc = rate_report(cand, channels, mode, RateMethod::approx, noise);
        const std::vector<double> tc = raw_totals(rc, alloc.c, rx);
        if (stable_lse_min(tc, cfg.gamma) > f0 + t * slope &&
            mmf_allocation(rc.r_c, clamped_private(rc, rx)).min_rate >= m0) {
          accepted = true;
          p_next = std::move(cand);
          rep_next = std::move(rc);
          break;
        }
      }
      t *= cfg.beta;
    }
    if (!accepted) {
      p_next = run.P;
      rep_next = rep;
    }

    MmfAllocation alloc_next = mmf_allocation(rep_next.r_c, clamped_private(rep_next, rx));
    const std::vector<double> totals_next = raw_totals(rep_next, alloc_next.c, rx);
    const double lse_now = stable_lse_min(totals_next, cfg.gamma);
    run.trace.push_back(alloc_next.min_rate);

    run.P = std::move(p_next);
    rep = std::move(rep_next);
    alloc = std::move(alloc_next);
    totals = totals_next;
    if (std::abs(lse_now - lse_prev) < cfg.epsilon) {
      run.converged = true;
      break;
    }
    lse_prev = lse_now;
  }
  if (final_c != nullptr) *final_c = alloc.c;
  return run;
}

}  // namespace

OptimizeResult optimize_wsr(std::span<const Eigen::VectorXcd> channels,
                            const TransmissionMode& mode, std::span<const double> weights,
                            Receiver rx, const NoiseModel& noise, const OptimizerConfig& cfg,
                            const Eigen::MatrixXcd* init) {
  check_problem(channels, mode, cfg);
  if (weights.size() != channels.size())
    throw std::invalid_argument("one weight per user required");
  for (double w : weights)
    if (!(w >= 0.0)) throw std::invalid_argument("weights must be non-negative");

  const std::vector<Eigen::MatrixXcd> inits = build_inits(channels, mode, cfg, init);
  PsgaRun best;
  bool have = false;
  for (const auto& P0 : inits) {
    PsgaRun run = run_wsr(P0, channels, mode, weights, rx, noise, cfg);
    if (!have || run.trace.back() > best.trace.back()) {
      best = std::move(run);
      have = true;
    }
  }

  OptimizeResult out;
  out.precoder = best.P;
  out.objective = best.trace.back();
  out.objective_trace = best.trace;
  out.iterations = static_cast<int>(best.trace.size()) - 1;
  out.converged = best.converged;
  const RateReport rep = rate_report(best.P, channels, mode, RateMethod::approx, noise);
  out.allocation = wsr_allocation(rep.r_c, weights).c;
  return out;
}

OptimizeResult optimize_mmf(std::span<const Eigen::VectorXcd> channels,
                            const TransmissionMode& mode, Receiver rx, const NoiseModel& noise,
                            const OptimizerConfig& cfg, const Eigen::MatrixXcd* init) {
  check_problem(channels, mode, cfg);
  const std::vector<Eigen::MatrixXcd> inits = build_inits(channels, mode, cfg, init);
  PsgaRun best;
  std::vector<double> best_c;
  bool have = false;
  for (const auto& P0 : inits) {
    std::vector<double> c;
    PsgaRun run = run_mmf(P0, channels, mode, rx, noise, cfg, &c);
    if (!have || run.trace.back() > best.trace.back()) {
      best = std::move(run);
      best_c = std::move(c);
      have = true;
    }
  }

  OptimizeResult out;
  out.precoder = best.P;
  out.objective = best.trace.back();
  out.objective_trace = best.trace;
  out.iterations = static_cast<int>(best.trace.size()) - 1;
  out.converged = best.converged;
  out.allocation = best_c;
  return out;
}

}  // namespace rsopt
