#include "rsopt/baselines.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "rsopt/rng.hpp"
#include "rsopt/stats.hpp"

namespace rsopt {

OptimizeResult sdma_optimize_wsr(std::span<const Eigen::VectorXcd> channels,
                                 const TransmissionMode& mode, std::span<const double> weights,
                                 const NoiseModel& noise, const OptimizerConfig& cfg) {
  if (mode.common) throw std::invalid_argument("private-only transmission cannot carry a shared stream");
  return optimize_wsr(channels, mode, weights, Receiver::sic, noise, cfg);
}

OptimizeResult sdma_optimize_mmf(std::span<const Eigen::VectorXcd> channels,
                                 const TransmissionMode& mode, const NoiseModel& noise,
                                 const OptimizerConfig& cfg) {
  if (mode.common) throw std::invalid_argument("private-only transmission cannot carry a shared stream");
  return optimize_mmf(channels, mode, Receiver::sic, noise, cfg);
}

namespace {

void check_pair(const Eigen::MatrixXcd& P, std::span<const Eigen::VectorXcd> channels) {
  if (channels.size() != 2) throw std::invalid_argument("the power-domain baseline is two-user");
  if (P.cols() != 2 || P.rows() != channels[0].size() || channels[1].size() != channels[0].size())
    throw std::invalid_argument("precoder/channel dimension mismatch");
}

int strong_user(std::span<const Eigen::VectorXcd> channels) {
  return channels[1].squaredNorm() > channels[0].squaredNorm() ? 1 : 0;
}

struct NomaTerms {
  detail::TermSpec both_at_weak;    // both streams, weak user's channel
  detail::TermSpec strong_at_weak;  // strong stream only, weak user's channel
  detail::TermSpec both_at_strong;
  detail::TermSpec strong_at_strong;
  int strong = 0, weak = 1;
};

NomaTerms build_noma_terms(const Eigen::MatrixXcd& P, std::span<const Eigen::VectorXcd> channels,
                           const Constellation& alphabet) {
  NomaTerms t;
  t.strong = strong_user(channels);
  t.weak = 1 - t.strong;
  const std::array<const Constellation*, 2> two{&alphabet, &alphabet};
  const std::array<const Constellation*, 1> one{&alphabet};
  const std::array<int, 2> both{t.weak, t.strong};
  const std::array<int, 1> only_strong{t.strong};
  const auto& hw = channels[static_cast<std::size_t>(t.weak)];
  const auto& hs = channels[static_cast<std::size_t>(t.strong)];
  t.both_at_weak = detail::make_term(P, hw, both, two);
  t.strong_at_weak = detail::make_term(P, hw, only_strong, one);
  t.both_at_strong = detail::make_term(P, hs, both, two);
  t.strong_at_strong = detail::make_term(P, hs, only_strong, one);
  return t;
}

}  // namespace

NomaRates noma_rates(const Eigen::MatrixXcd& P, std::span<const Eigen::VectorXcd> channels,
                     const Constellation& alphabet, RateMethod method, const NoiseModel& noise,
                     const McConfig* mc) {
  check_pair(P, channels);
  const NomaTerms t = build_noma_terms(P, channels, alphabet);
  const double bits = alphabet.bits;
  const double s2 = noise.sigma2;

  NomaRates out;
  out.strong = t.strong;
  out.weak = t.weak;
  double own = 0.0, cross = 0.0, strong = 0.0;
  double se_own = 0.0, se_cross = 0.0, se_strong = 0.0;
  if (method == RateMethod::approx) {
    own = bits - detail::term_entropy_approx(t.both_at_weak, s2) +
          detail::term_entropy_approx(t.strong_at_weak, s2);
    cross = bits - detail::term_entropy_approx(t.both_at_strong, s2) +
            detail::term_entropy_approx(t.strong_at_strong, s2);
    strong = bits - detail::term_entropy_approx(t.strong_at_strong, s2);
  } else {
    if (mc == nullptr) throw std::invalid_argument("exact method needs a Monte Carlo config");
    const std::vector<cplx> draws = detail::draw_noise(noise, *mc);
    const auto g_bw = detail::term_entropy_exact_samples(t.both_at_weak, s2, draws);
    const auto g_sw = detail::term_entropy_exact_samples(t.strong_at_weak, s2, draws);
    const auto g_bs = detail::term_entropy_exact_samples(t.both_at_strong, s2, draws);
    const auto g_ss = detail::term_entropy_exact_samples(t.strong_at_strong, s2, draws);
    std::vector<double> diff(draws.size());
    for (std::size_t s = 0; s < draws.size(); ++s) diff[s] = bits - g_bw[s] + g_sw[s];
    own = mean(diff);
    se_own = std_error(diff);
    for (std::size_t s = 0; s < draws.size(); ++s) diff[s] = bits - g_bs[s] + g_ss[s];
    cross = mean(diff);
    se_cross = std_error(diff);
    for (std::size_t s = 0; s < draws.size(); ++s) diff[s] = bits - g_ss[s];
    strong = mean(diff);
    se_strong = std_error(diff);
  }

  out.weak_limited_by_strong = cross < own;
  out.raw_r_weak = out.weak_limited_by_strong ? cross : own;
  out.r_weak_stderr = out.weak_limited_by_strong ? se_cross : se_own;
  out.raw_r_strong = strong;
  out.r_strong_stderr = se_strong;
  auto clamp = [&](double x) {
    const double y = std::min(std::max(x, 0.0), bits);
    if (y != x) out.clamped = true;
    return y;
  };
  out.r_weak = clamp(out.raw_r_weak);
  out.r_strong = clamp(out.raw_r_strong);
  return out;
}

namespace {

Eigen::MatrixXcd noma_gradient(const Eigen::MatrixXcd& P,
                               std::span<const Eigen::VectorXcd> channels,
                               const Constellation& alphabet, const NoiseModel& noise,
                               double w_weak, double w_strong, const NomaRates& at) {
  const NomaTerms t = build_noma_terms(P, channels, alphabet);
  const auto& hw = channels[static_cast<std::size_t>(t.weak)];
  const auto& hs = channels[static_cast<std::size_t>(t.strong)];
  const double s2 = noise.sigma2;
  auto grad = [&](const detail::TermSpec& term, const Eigen::VectorXcd& h) {
    return detail::term_entropy_gradient(term, h, s2, P.rows(), P.cols());
  };
  Eigen::MatrixXcd g = Eigen::MatrixXcd::Zero(P.rows(), P.cols());
  if (w_weak != 0.0) {
    if (at.weak_limited_by_strong)
      g += w_weak * (grad(t.strong_at_strong, hs) - grad(t.both_at_strong, hs));
    else
      g += w_weak * (grad(t.strong_at_weak, hw) - grad(t.both_at_weak, hw));
  }
  if (w_strong != 0.0) g += w_strong * (-grad(t.strong_at_strong, hs));
  return g;
}

Eigen::MatrixXcd noma_init(std::span<const Eigen::VectorXcd> channels, double p_t) {
  Eigen::MatrixXcd P(channels[0].size(), 2);
  for (int k = 0; k < 2; ++k) {
    const auto& h = channels[static_cast<std::size_t>(k)];
    P.col(k) = h / h.norm() * std::sqrt(p_t / 2.0);
  }
  return project_power(P, p_t);
}

Eigen::MatrixXcd noma_random_init(Eigen::Index n_tx, double p_t, std::uint64_t seed,
                                  std::uint64_t index) {
  CounterRng rng(derive_key({seed, index}));
  Eigen::MatrixXcd P(n_tx, 2);
  for (Eigen::Index j = 0; j < 2; ++j)
    for (Eigen::Index i = 0; i < n_tx; ++i) P(i, j) = rng.next_cnormal();
  return project_power(P, p_t);
}

struct NomaRun {
  Eigen::MatrixXcd P;
  std::vector<double> trace;
  bool converged = false;
};

double lse_pair(double a, double b, double gamma) {
  const double hi = std::max(gamma * a, gamma * b);
  return (hi + std::log(std::exp(gamma * a - hi) + std::exp(gamma * b - hi))) / gamma;
}

NomaRun run_noma(const Eigen::MatrixXcd& P0, std::span<const Eigen::VectorXcd> channels,
                 const Constellation& alphabet, const NoiseModel& noise,
                 const OptimizerConfig& cfg, bool mmf, std::span<const double> weights) {
  const int strong = strong_user(channels);
  const int weak = 1 - strong;
  const double uw = mmf ? 0.0 : weights[static_cast<std::size_t>(weak)];
  const double us = mmf ? 0.0 : weights[static_cast<std::size_t>(strong)];

  auto raw_objective = [&](const NomaRates& r) {
    if (mmf) return lse_pair(r.raw_r_weak, r.raw_r_strong, cfg.gamma);
    return uw * r.raw_r_weak + us * r.raw_r_strong;
  };
  auto true_min = [](const NomaRates& r) { return std::min(r.r_weak, r.r_strong); };
  auto eval = [&](const Eigen::MatrixXcd& X) {
    return noma_rates(X, channels, alphabet, RateMethod::approx, noise);
  };

  NomaRun run;
  run.P = P0;
  NomaRates cur = eval(run.P);
  run.trace.push_back(mmf ? true_min(cur) : raw_objective(cur));
  double smooth_prev = raw_objective(cur);

  for (int v = 1; v <= cfg.v_max; ++v) {
    double gw = uw, gs = us;
    if (mmf) {
      const double hi = std::max(cfg.gamma * cur.raw_r_weak, cfg.gamma * cur.raw_r_strong);
      const double ew = std::exp(cfg.gamma * cur.raw_r_weak - hi);
      const double es = std::exp(cfg.gamma * cur.raw_r_strong - hi);
      gw = ew / (ew + es);
      gs = es / (ew + es);
    }
    const Eigen::MatrixXcd delta =
        noma_gradient(run.P, channels, alphabet, noise, gw, gs, cur);

    const double f0 = raw_objective(cur);
    const double m0 = true_min(cur);
    const double slope = cfg.alpha * delta.squaredNorm();
    double t = 1.0;
    Eigen::MatrixXcd p_next = run.P;
    NomaRates r_next = cur;
    while (t > cfg.t_min) {
      Eigen::MatrixXcd cand = run.P + t * delta;
      if (cand.norm() > 0.0) {
        cand = project_power(cand, cfg.p_t);
        const NomaRates rc = eval(cand);
        const bool ok = raw_objective(rc) > f0 + t * slope && (!mmf || true_min(rc) >= m0);
        if (ok) {
          p_next = std::move(cand);
          r_next = rc;
          break;
        }
      }
      t *= cfg.beta;
    }
    run.P = std::move(p_next);
    cur = r_next;
    const double smooth_now = raw_objective(cur);
    run.trace.push_back(mmf ? true_min(cur) : smooth_now);
    if (std::abs(smooth_now - smooth_prev) < cfg.epsilon) {
      run.converged = true;
      break;
    }
    smooth_prev = smooth_now;
  }
  return run;
}

NomaResult run_noma_best(std::span<const Eigen::VectorXcd> channels,
                         const Constellation& alphabet, const NoiseModel& noise,
                         const OptimizerConfig& cfg, bool mmf, std::span<const double> weights) {
  if (channels.size() != 2) throw std::invalid_argument("the power-domain baseline is two-user");
  for (const auto& h : channels)
    if (!(h.norm() > 0.0)) throw std::invalid_argument("zero channel vector");
  std::vector<Eigen::MatrixXcd> inits{noma_init(channels, cfg.p_t)};
  for (int r = 0; r < cfg.restarts; ++r)
    inits.push_back(noma_random_init(channels[0].size(), cfg.p_t, cfg.seed,
                                     static_cast<std::uint64_t>(r) + 1));
  NomaRun best;
  bool have = false;
  for (const auto& P0 : inits) {
    NomaRun run = run_noma(P0, channels, alphabet, noise, cfg, mmf, weights);
    if (!have || run.trace.back() > best.trace.back()) {
      best = std::move(run);
      have = true;
    }
  }
  NomaResult out;
  out.precoder = best.P;
  out.objective = best.trace.back();
  out.objective_trace = best.trace;
  out.iterations = static_cast<int>(best.trace.size()) - 1;
  out.converged = best.converged;
  out.strong = strong_user(channels);
  out.weak = 1 - out.strong;
  return out;
}

}  // namespace

NomaResult noma_optimize_wsr(std::span<const Eigen::VectorXcd> channels,
                             const Constellation& alphabet, std::span<const double> weights,
                             const NoiseModel& noise, const OptimizerConfig& cfg) {
  if (weights.size() != 2) throw std::invalid_argument("two weights required");
  return run_noma_best(channels, alphabet, noise, cfg, /*mmf=*/false, weights);
}

NomaResult noma_optimize_mmf(std::span<const Eigen::VectorXcd> channels,
                             const Constellation& alphabet, const NoiseModel& noise,
                             const OptimizerConfig& cfg) {
  return run_noma_best(channels, alphabet, noise, cfg, /*mmf=*/true, {});
}

}  // namespace rsopt
