#include "rsopt/cc_rate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

#include "rsopt/rng.hpp"
#include "rsopt/stats.hpp"

namespace rsopt {

namespace {

constexpr double kLog2e = std::numbers::log2e;

void check_noise(const NoiseModel& noise) {
  if (!(noise.sigma2 > 0.0)) throw std::invalid_argument("noise variance must be positive");
}

// (1/N) sum_m log2 sum_l exp(-|p_m - p_l|^2 / (2 sigma2)). The weight matrix
// is symmetric, so only the upper triangle is visited.
double body_approx(std::span<const cplx> pts, double sigma2) {
  const std::size_t n = pts.size();
  if (n <= 1) return 0.0;
  const double inv = 1.0 / (2.0 * sigma2);
  std::vector<double> acc(n, 1.0);  // diagonal term exp(0) = 1
  for (std::size_t i = 0; i + 1 < n; ++i) {
    const cplx pi = pts[i];
    for (std::size_t j = i + 1; j < n; ++j) {
      const double w = std::exp(-std::norm(pi - pts[j]) * inv);
      acc[i] += w;
      acc[j] += w;
    }
  }
  std::vector<double> logs(n);
  for (std::size_t i = 0; i < n; ++i) logs[i] = std::log2(acc[i]);
  return mean(logs);
}

// Per-sample (1/N) sum_m log2 sum_l exp(-|p_m - p_l + n_s|^2 / sigma2),
// computed with max-subtraction for stability.
std::vector<double> body_exact_samples(std::span<const cplx> pts, double sigma2,
                                       std::span<const cplx> noise_draws) {
  const std::size_t n = pts.size();
  std::vector<double> out(noise_draws.size(), 0.0);
  if (n == 0) return out;
  const double inv = 1.0 / sigma2;
  std::vector<double> row(n);
  std::vector<double> per_m(n);
  for (std::size_t s = 0; s < noise_draws.size(); ++s) {
    const cplx ns = noise_draws[s];
    for (std::size_t m = 0; m < n; ++m) {
      const cplx base = pts[m] + ns;
      double best = -std::numeric_limits<double>::infinity();
      for (std::size_t l = 0; l < n; ++l) {
        const double e = -std::norm(base - pts[l]) * inv;
        row[l] = e;
        if (e > best) best = e;
      }
      double sum = 0.0;
      for (std::size_t l = 0; l < n; ++l) sum += std::exp(row[l] - best);
      per_m[m] = best * kLog2e + std::log2(sum);
    }
    out[s] = mean(per_m);
  }
  return out;
}

}  // namespace

namespace detail {

TermSpec make_term(const Eigen::MatrixXcd& P, const Eigen::VectorXcd& h,
                   std::span<const int> cols, std::span<const Constellation* const> alphas) {
  if (cols.size() != alphas.size())
    throw std::invalid_argument("stream columns and alphabets must align");
  if (h.size() != P.rows()) throw std::invalid_argument("channel/precoder dimension mismatch");
  TermSpec term;
  for (std::size_t i = 0; i < cols.size(); ++i) {
    if (cols[i] < 0 || cols[i] >= P.cols()) throw std::invalid_argument("stream column out of range");
    const cplx g = h.dot(P.col(cols[i]));  // h^H p
    if (g.real() == 0.0 && g.imag() == 0.0) {
      term.dropped_bits += alphas[i]->bits;  // exactly-zero gain: constant bits, zero gradient
    } else {
      term.gains.push_back(g);
      term.alphas.push_back(alphas[i]);
      term.cols.push_back(cols[i]);
    }
  }
  return term;
}

std::vector<cplx> term_points(const TermSpec& term) {
  std::vector<cplx> pts{cplx(0.0, 0.0)};
  for (std::size_t i = 0; i < term.gains.size(); ++i) {
    const auto& sym = term.alphas[i]->points;
    std::vector<cplx> nxt;
    nxt.reserve(pts.size() * sym.size());
    for (const cplx& p : pts)
      for (const cplx& x : sym) nxt.push_back(p + term.gains[i] * x);
    pts = std::move(nxt);
  }
  return pts;
}

double term_entropy_approx(const TermSpec& term, double sigma2) {
  const std::vector<cplx> pts = term_points(term);
  return body_approx(pts, sigma2) + term.dropped_bits;
}

std::vector<double> term_entropy_exact_samples(const TermSpec& term, double sigma2,
                                               std::span<const cplx> noise_draws) {
  const std::vector<cplx> pts = term_points(term);
  std::vector<double> out = body_exact_samples(pts, sigma2, noise_draws);
  if (term.dropped_bits != 0)
    for (double& v : out) v += term.dropped_bits;
  return out;
}

Eigen::MatrixXcd term_entropy_gradient(const TermSpec& term, const Eigen::VectorXcd& h,
                                       double sigma2, Eigen::Index n_tx, Eigen::Index n_cols) {
  Eigen::MatrixXcd grad = Eigen::MatrixXcd::Zero(n_tx, n_cols);
  const std::size_t ns = term.gains.size();
  if (ns == 0) return grad;

  const std::vector<cplx> pts = term_points(term);
  const std::size_t n = pts.size();

  // Per-stream symbol value of each joint index (last stream varies fastest,
  // matching term_points).
  std::vector<std::vector<cplx>> sym(ns, std::vector<cplx>(n));
  {
    std::vector<std::size_t> card(ns), stride(ns);
    for (std::size_t i = 0; i < ns; ++i) card[i] = term.alphas[i]->points.size();
    stride[ns - 1] = 1;
    for (std::size_t i = ns - 1; i > 0; --i) stride[i - 1] = stride[i] * card[i];
    for (std::size_t i = 0; i < ns; ++i)
      for (std::size_t m = 0; m < n; ++m)
        sym[i][m] = term.alphas[i]->points[(m / stride[i]) % card[i]];
  }

  const double inv = 1.0 / (2.0 * sigma2);
  std::vector<double> acc(n, 1.0);
  for (std::size_t i = 0; i + 1 < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      const double w = std::exp(-std::norm(pts[i] - pts[j]) * inv);
      acc[i] += w;
      acc[j] += w;
    }

  // A = sum over pairs of softmax-normalized weights times d d^H, with d the
  // per-stream symbol difference vector.
  Eigen::MatrixXcd A = Eigen::MatrixXcd::Zero(static_cast<Eigen::Index>(ns),
                                              static_cast<Eigen::Index>(ns));
  std::vector<cplx> d(ns);
  for (std::size_t i = 0; i + 1 < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      const double w = std::exp(-std::norm(pts[i] - pts[j]) * inv);
      const double coeff = w * (1.0 / acc[i] + 1.0 / acc[j]);
      for (std::size_t a = 0; a < ns; ++a) d[a] = sym[a][i] - sym[a][j];
      for (std::size_t a = 0; a < ns; ++a)
        for (std::size_t b = 0; b < ns; ++b)
          A(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) +=
              coeff * d[a] * std::conj(d[b]);
    }

  Eigen::RowVectorXcd gains(static_cast<Eigen::Index>(ns));
  for (std::size_t i = 0; i < ns; ++i) gains(static_cast<Eigen::Index>(i)) = term.gains[i];
  const Eigen::RowVectorXcd r = gains * A;
  const double scale = -kLog2e / (2.0 * sigma2 * static_cast<double>(n));
  for (std::size_t i = 0; i < ns; ++i)
    grad.col(term.cols[i]) = scale * r(static_cast<Eigen::Index>(i)) * h;
  return grad;
}

std::vector<cplx> draw_noise(const NoiseModel& noise, const McConfig& mc) {
  if (mc.samples < 2) throw std::invalid_argument("Monte Carlo needs at least 2 samples");
  CounterRng rng(derive_key({mc.seed}));
  const double s = std::sqrt(noise.sigma2);
  std::vector<cplx> v(static_cast<std::size_t>(mc.samples));
  for (auto& n : v) n = s * rng.next_cnormal();
  return v;
}

}  // namespace detail

double cond_entropy_approx(const EffectivePointSet& set, const NoiseModel& noise) {
  check_noise(noise);
  return body_approx(set.points, noise.sigma2);
}

McEstimate cond_entropy_exact(const EffectivePointSet& set, const NoiseModel& noise,
                              const McConfig& mc) {
  check_noise(noise);
  const std::vector<cplx> draws = detail::draw_noise(noise, mc);
  const std::vector<double> g = body_exact_samples(set.points, noise.sigma2, draws);
  return {kLog2e + mean(g), std_error(g)};
}

StreamLayout stream_layout(const TransmissionMode& mode, int num_users) {
  StreamLayout layout;
  layout.common_col = mode.common ? 0 : -1;
  const int offset = mode.common ? 1 : 0;
  layout.private_cols.assign(static_cast<std::size_t>(num_users), -1);
  if (mode.priv)
    for (int k = 0; k < num_users; ++k) layout.private_cols[static_cast<std::size_t>(k)] = offset + k;
  return layout;
}

namespace {

// The four conditional-entropy terms behind one user's rates.
struct UserTerms {
  detail::TermSpec full;          // shared stream + every private stream
  detail::TermSpec priv;          // every private stream
  detail::TermSpec priv_minus;    // private streams of the other users
  detail::TermSpec c_priv_minus;  // shared stream + other users' privates
  bool has_common = false;
  bool has_priv = false;
};

int expected_cols(const TransmissionMode& mode, int num_users) {
  return (mode.common ? 1 : 0) + (mode.priv ? num_users : 0);
}

UserTerms build_terms(const Eigen::MatrixXcd& P, const Eigen::VectorXcd& h,
                      const TransmissionMode& mode, int pos, int num_users) {
  UserTerms t;
  t.has_common = mode.common.has_value();
  t.has_priv = mode.priv.has_value();
  const StreamLayout layout = stream_layout(mode, num_users);
  const Constellation* ca = t.has_common ? &*mode.common : nullptr;
  const Constellation* pa = t.has_priv ? &*mode.priv : nullptr;

  std::vector<int> cols;
  std::vector<const Constellation*> alphas;
  auto add_common = [&] {
    cols.push_back(layout.common_col);
    alphas.push_back(ca);
  };
  auto add_priv = [&](bool skip_pos) {
    if (!t.has_priv) return;
    for (int k = 0; k < num_users; ++k) {
      if (skip_pos && k == pos) continue;
      cols.push_back(layout.private_cols[static_cast<std::size_t>(k)]);
      alphas.push_back(pa);
    }
  };

  auto make = [&] { return detail::make_term(P, h, cols, alphas); };

  cols.clear(); alphas.clear();
  add_priv(false);
  t.priv = make();

  if (t.has_common) {
    cols.clear(); alphas.clear();
    add_common();
    add_priv(false);
    t.full = make();
  } else {
    t.full = t.priv;
  }

  if (t.has_priv) {
    cols.clear(); alphas.clear();
    add_priv(true);
    t.priv_minus = make();
    if (t.has_common) {
      cols.clear(); alphas.clear();
      add_common();
      add_priv(true);
      t.c_priv_minus = make();
    }
  }
  return t;
}

UserRates eval_user_approx(const UserTerms& t, const TransmissionMode& mode, double sigma2) {
  UserRates r;
  const double h_priv = detail::term_entropy_approx(t.priv, sigma2);
  const double h_full = t.has_common ? detail::term_entropy_approx(t.full, sigma2) : h_priv;
  if (t.has_common) r.r_c = mode.common_bits() - h_full + h_priv;
  if (t.has_priv) {
    const double h_pm = detail::term_entropy_approx(t.priv_minus, sigma2);
    r.r_p_sic = mode.private_bits() - h_priv + h_pm;
    if (t.has_common) {
      const double h_cpm = detail::term_entropy_approx(t.c_priv_minus, sigma2);
      r.r_p_sicfree = mode.private_bits() - h_full + h_cpm;
    } else {
      r.r_p_sicfree = r.r_p_sic;
    }
  }
  return r;
}

UserRates eval_user_exact(const UserTerms& t, const TransmissionMode& mode, double sigma2,
                          std::span<const cplx> draws) {
  UserRates r;
  const std::vector<double> g_priv = detail::term_entropy_exact_samples(t.priv, sigma2, draws);
  const std::vector<double> g_full =
      t.has_common ? detail::term_entropy_exact_samples(t.full, sigma2, draws) : g_priv;
  const std::size_t S = draws.size();
  std::vector<double> diff(S);

  if (t.has_common) {
    for (std::size_t s = 0; s < S; ++s) diff[s] = mode.common_bits() - g_full[s] + g_priv[s];
    r.r_c = mean(diff);
    r.r_c_stderr = std_error(diff);
  }
  if (t.has_priv) {
    const std::vector<double> g_pm =
        detail::term_entropy_exact_samples(t.priv_minus, sigma2, draws);
    for (std::size_t s = 0; s < S; ++s) diff[s] = mode.private_bits() - g_priv[s] + g_pm[s];
    r.r_p_sic = mean(diff);
    r.r_p_sic_stderr = std_error(diff);
    if (t.has_common) {
      const std::vector<double> g_cpm =
          detail::term_entropy_exact_samples(t.c_priv_minus, sigma2, draws);
      for (std::size_t s = 0; s < S; ++s) diff[s] = mode.private_bits() - g_full[s] + g_cpm[s];
      r.r_p_sicfree = mean(diff);
      r.r_p_sicfree_stderr = std_error(diff);
    } else {
      r.r_p_sicfree = r.r_p_sic;
      r.r_p_sicfree_stderr = r.r_p_sic_stderr;
    }
  }
  return r;
}

int position_of(int user, std::span<const int> users) {
  for (std::size_t i = 0; i < users.size(); ++i)
    if (users[i] == user) return static_cast<int>(i);
  throw std::invalid_argument("user is not part of the given user set");
}

}  // namespace

UserRates user_rates(const Eigen::MatrixXcd& P, const Eigen::VectorXcd& h,
                     const TransmissionMode& mode, int user, std::span<const int> users,
                     RateMethod method, const NoiseModel& noise, const McConfig* mc) {
  check_noise(noise);
  if (P.cols() != expected_cols(mode, static_cast<int>(users.size())))
    throw std::invalid_argument("precoder column count does not match mode/user set");
  const int pos = position_of(user, users);
  const UserTerms t = build_terms(P, h, mode, pos, static_cast<int>(users.size()));
  if (method == RateMethod::approx) return eval_user_approx(t, mode, noise.sigma2);
  if (mc == nullptr) throw std::invalid_argument("exact method needs a Monte Carlo config");
  const std::vector<cplx> draws = detail::draw_noise(noise, *mc);
  return eval_user_exact(t, mode, noise.sigma2, draws);
}

RateReport rate_report(const Eigen::MatrixXcd& P, std::span<const Eigen::VectorXcd> channels,
                       const TransmissionMode& mode, RateMethod method, const NoiseModel& noise,
                       const McConfig* mc) {
  check_noise(noise);
  const int K = static_cast<int>(channels.size());
  if (K == 0) throw std::invalid_argument("rate report needs at least one user");
  if (P.cols() != expected_cols(mode, K))
    throw std::invalid_argument("precoder column count does not match mode/user count");

  std::vector<cplx> draws;
  if (method == RateMethod::exact) {
    if (mc == nullptr) throw std::invalid_argument("exact method needs a Monte Carlo config");
    draws = detail::draw_noise(noise, *mc);  // shared draws: common random numbers
  }

  RateReport rep;
  rep.r_c_per_user.resize(K);
  rep.r_p_sic.resize(K);
  rep.r_p_sicfree.resize(K);
  rep.clamped.assign(static_cast<std::size_t>(K), false);
  rep.raw_r_c_per_user.resize(K);
  rep.raw_r_p_sic.resize(K);
  rep.raw_r_p_sicfree.resize(K);
  rep.r_c_stderr.assign(static_cast<std::size_t>(K), 0.0);
  rep.r_p_sic_stderr.assign(static_cast<std::size_t>(K), 0.0);
  rep.r_p_sicfree_stderr.assign(static_cast<std::size_t>(K), 0.0);

  const double cb = mode.common_bits();
  const double pb = mode.private_bits();
  for (int k = 0; k < K; ++k) {
    const UserTerms t = build_terms(P, channels[static_cast<std::size_t>(k)], mode, k, K);
    const UserRates u = method == RateMethod::approx
                            ? eval_user_approx(t, mode, noise.sigma2)
                            : eval_user_exact(t, mode, noise.sigma2, draws);
    rep.raw_r_c_per_user[k] = u.r_c;
    rep.raw_r_p_sic[k] = u.r_p_sic;
    rep.raw_r_p_sicfree[k] = u.r_p_sicfree;
    rep.r_c_stderr[k] = u.r_c_stderr;
    rep.r_p_sic_stderr[k] = u.r_p_sic_stderr;
    rep.r_p_sicfree_stderr[k] = u.r_p_sicfree_stderr;
    auto clamp = [&](double x, double hi) {
      const double y = std::min(std::max(x, 0.0), hi);
      if (y != x) rep.clamped[static_cast<std::size_t>(k)] = true;
      return y;
    };
    rep.r_c_per_user[k] = mode.common ? clamp(u.r_c, cb) : 0.0;
    rep.r_p_sic[k] = mode.priv ? clamp(u.r_p_sic, pb) : 0.0;
    rep.r_p_sicfree[k] = mode.priv ? clamp(u.r_p_sicfree, pb) : 0.0;
  }
  rep.r_c = mode.common ? *std::min_element(rep.r_c_per_user.begin(), rep.r_c_per_user.end()) : 0.0;
  return rep;
}

Eigen::MatrixXcd entropy_approx_gradient(const Eigen::MatrixXcd& P, const Eigen::VectorXcd& h,
                                         std::span<const int> cols,
                                         std::span<const Constellation* const> alphas,
                                         const NoiseModel& noise) {
  check_noise(noise);
  const detail::TermSpec term = detail::make_term(P, h, cols, alphas);
  return detail::term_entropy_gradient(term, h, noise.sigma2, P.rows(), P.cols());
}

namespace {

Eigen::MatrixXcd term_grad(const Eigen::MatrixXcd& P, const Eigen::VectorXcd& h,
                           const detail::TermSpec& t, double sigma2) {
  return detail::term_entropy_gradient(t, h, sigma2, P.rows(), P.cols());
}

}  // namespace

Eigen::MatrixXcd rate_c_gradient(const Eigen::MatrixXcd& P, const Eigen::VectorXcd& h,
                                 const TransmissionMode& mode, std::span<const int> users,
                                 const NoiseModel& noise) {
  check_noise(noise);
  if (!mode.common) return Eigen::MatrixXcd::Zero(P.rows(), P.cols());
  const UserTerms t = build_terms(P, h, mode, 0, static_cast<int>(users.size()));
  return term_grad(P, h, t.priv, noise.sigma2) - term_grad(P, h, t.full, noise.sigma2);
}

Eigen::MatrixXcd rate_p_gradient(const Eigen::MatrixXcd& P, const Eigen::VectorXcd& h,
                                 const TransmissionMode& mode, int user, std::span<const int> users,
                                 Receiver rx, const NoiseModel& noise) {
  check_noise(noise);
  if (!mode.priv) return Eigen::MatrixXcd::Zero(P.rows(), P.cols());
  const int pos = position_of(user, users);
  const UserTerms t = build_terms(P, h, mode, pos, static_cast<int>(users.size()));
  if (rx == Receiver::sic || !t.has_common)
    return term_grad(P, h, t.priv_minus, noise.sigma2) - term_grad(P, h, t.priv, noise.sigma2);
  return term_grad(P, h, t.c_priv_minus, noise.sigma2) - term_grad(P, h, t.full, noise.sigma2);
}

McEstimate sic_gap_exact(const Eigen::MatrixXcd& P, const Eigen::VectorXcd& h,
                         const TransmissionMode& mode, int user, std::span<const int> users,
                         const NoiseModel& noise, const McConfig& mc) {
  check_noise(noise);
  if (!mode.common || !mode.priv) return {0.0, 0.0};
  const int pos = position_of(user, users);
  const UserTerms t = build_terms(P, h, mode, pos, static_cast<int>(users.size()));
  const std::vector<cplx> draws = detail::draw_noise(noise, mc);
  const double s2 = noise.sigma2;
  const auto g_full = detail::term_entropy_exact_samples(t.full, s2, draws);
  const auto g_priv = detail::term_entropy_exact_samples(t.priv, s2, draws);
  const auto g_pm = detail::term_entropy_exact_samples(t.priv_minus, s2, draws);
  const auto g_cpm = detail::term_entropy_exact_samples(t.c_priv_minus, s2, draws);
  std::vector<double> diff(draws.size());
  for (std::size_t s = 0; s < draws.size(); ++s)
    diff[s] = (-g_priv[s] + g_pm[s]) - (-g_full[s] + g_cpm[s]);
  return {mean(diff), std_error(diff)};
}

}  // namespace rsopt
