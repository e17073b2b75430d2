#include "rsopt/largescale.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "rsopt/rng.hpp"
#include "rsopt/stats.hpp"

namespace rsopt {

namespace {

constexpr double kNullTol = 1e-10;   // eigenvalue cut, relative to the largest
constexpr double kRankTol = 1e-12;   // singular value cut, relative to the largest

void check_channels(std::span<const Eigen::VectorXcd> channels) {
  if (channels.empty()) throw std::invalid_argument("need at least one user channel");
  const Eigen::Index n_tx = channels[0].size();
  for (const auto& h : channels) {
    if (h.size() != n_tx) throw std::invalid_argument("channels must share one dimension");
    if (!(h.norm() > 0.0)) throw std::invalid_argument("zero channel vector");
  }
}

int group_of(const GroupingPlan& plan, int user) {
  for (std::size_t i = 0; i < plan.groups.size(); ++i)
    for (int u : plan.groups[i].users)
      if (u == user) return static_cast<int>(i);
  throw std::invalid_argument("user missing from grouping plan");
}

int block_cols(const TransmissionMode& mode, int group_size) {
  return (mode.common ? 1 : 0) + (mode.priv ? group_size : 0);
}

void check_blocks(const GroupingPlan& plan, const GroupedPrecoder& v,
                  const TransmissionMode& mode) {
  if (v.blocks.size() != plan.groups.size())
    throw std::invalid_argument("one precoder block per group required");
  for (std::size_t i = 0; i < plan.groups.size(); ++i) {
    const auto g = static_cast<Eigen::Index>(plan.groups[i].users.size());
    if (v.blocks[i].rows() != g ||
        v.blocks[i].cols() != block_cols(mode, static_cast<int>(g)))
      throw std::invalid_argument("precoder block has the wrong shape");
  }
}

}  // namespace

double channel_similarity(const Eigen::VectorXcd& a, const Eigen::VectorXcd& b) {
  const double na = a.norm();
  const double nb = b.norm();
  if (!(na > 0.0) || !(nb > 0.0)) throw std::invalid_argument("zero channel vector");
  return std::abs(a.dot(b)) / (na * nb);
}

std::vector<std::vector<int>> group_users(std::span<const Eigen::VectorXcd> channels) {
  check_channels(channels);
  const int K = static_cast<int>(channels.size());
  Eigen::MatrixXd Q = Eigen::MatrixXd::Constant(K, K, -1.0);
  for (int m = 0; m < K; ++m)
    for (int n = m + 1; n < K; ++n)
      Q(m, n) = channel_similarity(channels[static_cast<std::size_t>(m)],
                                   channels[static_cast<std::size_t>(n)]);

  std::vector<bool> taken(static_cast<std::size_t>(K), false);
  std::vector<std::vector<int>> groups;
  int remaining = K;
  while (remaining >= 2) {
    int bm = -1, bn = -1;
    double best = -1.0;
    for (int m = 0; m < K; ++m) {
      if (taken[static_cast<std::size_t>(m)]) continue;
      for (int n = m + 1; n < K; ++n) {
        if (taken[static_cast<std::size_t>(n)]) continue;
        if (Q(m, n) > best) {
          best = Q(m, n);
          bm = m;
          bn = n;
        }
      }
    }
    groups.push_back({bm, bn});
    taken[static_cast<std::size_t>(bm)] = true;
    taken[static_cast<std::size_t>(bn)] = true;
    remaining -= 2;
  }
  if (remaining == 1)
    for (int k = 0; k < K; ++k)
      if (!taken[static_cast<std::size_t>(k)]) groups.push_back({k});
  return groups;
}

GroupingPlan nulling_and_reduction(std::span<const Eigen::VectorXcd> channels,
                                   std::span<const std::vector<int>> groups) {
  check_channels(channels);
  const int K = static_cast<int>(channels.size());
  const Eigen::Index n_tx = channels[0].size();
  if (n_tx < K)
    throw std::invalid_argument("interference nulling needs at least as many antennas as users");

  std::vector<int> seen(static_cast<std::size_t>(K), 0);
  for (const auto& g : groups)
    for (int u : g) {
      if (u < 0 || u >= K) throw std::invalid_argument("group member out of range");
      if (seen[static_cast<std::size_t>(u)]++) throw std::invalid_argument("user grouped twice");
    }
  for (int s : seen)
    if (!s) throw std::invalid_argument("groups must cover every user");

  GroupingPlan plan;
  plan.n_tx = static_cast<int>(n_tx);
  plan.num_users = K;
  for (const auto& members : groups) {
    Group grp;
    grp.users = members;
    std::sort(grp.users.begin(), grp.users.end());
    const int g = static_cast<int>(grp.users.size());

    std::vector<int> others;
    for (int u = 0; u < K; ++u)
      if (std::find(grp.users.begin(), grp.users.end(), u) == grp.users.end())
        others.push_back(u);

    if (others.empty()) {
      grp.F = Eigen::MatrixXcd::Identity(n_tx, n_tx);
    } else {
      Eigen::MatrixXcd Hb(n_tx, static_cast<Eigen::Index>(others.size()));
      for (std::size_t j = 0; j < others.size(); ++j)
        Hb.col(static_cast<Eigen::Index>(j)) = channels[static_cast<std::size_t>(others[j])];
      const Eigen::MatrixXcd M = Hb * Hb.adjoint();
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(M);
      const double lmax = es.eigenvalues()(n_tx - 1);
      const double thr = kNullTol * lmax;
      Eigen::Index cnt = 0;
      while (cnt < n_tx && es.eigenvalues()(cnt) <= thr) ++cnt;
      if (cnt == 0) throw std::runtime_error("no interference-free directions left for a group");
      grp.F = es.eigenvectors().leftCols(cnt);
    }

    Eigen::MatrixXcd Hg(n_tx, g);
    for (int j = 0; j < g; ++j)
      Hg.col(j) = channels[static_cast<std::size_t>(grp.users[static_cast<std::size_t>(j)])];
    const Eigen::MatrixXcd A = grp.F.adjoint() * Hg;
    Eigen::JacobiSVD<Eigen::MatrixXcd> svd(A, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const auto& sv = svd.singularValues();
    Eigen::Index rank = 0;
    while (rank < sv.size() && sv(rank) > sv(0) * kRankTol) ++rank;
    if (rank == 0) throw std::runtime_error("group channels vanish inside the nulled subspace");
    grp.G = svd.matrixU().leftCols(rank) * svd.matrixV().leftCols(rank).adjoint();

    const Eigen::MatrixXcd FG = grp.F * grp.G;
    for (int j = 0; j < g; ++j)
      grp.reduced_channels.push_back(
          FG.adjoint() * channels[static_cast<std::size_t>(grp.users[static_cast<std::size_t>(j)])]);
    plan.groups.push_back(std::move(grp));
  }
  return plan;
}

GroupingPlan build_plan(std::span<const Eigen::VectorXcd> channels) {
  const auto groups = group_users(channels);
  return nulling_and_reduction(channels, groups);
}

Eigen::MatrixXcd expand_precoder(const GroupingPlan& plan, const GroupedPrecoder& v,
                                 const TransmissionMode& mode) {
  check_blocks(plan, v, mode);
  const int n_groups = static_cast<int>(plan.groups.size());
  const int nc = mode.common ? n_groups : 0;
  const int cols = nc + (mode.priv ? plan.num_users : 0);
  Eigen::MatrixXcd E = Eigen::MatrixXcd::Zero(plan.n_tx, cols);
  for (int i = 0; i < n_groups; ++i) {
    const Group& grp = plan.groups[static_cast<std::size_t>(i)];
    const Eigen::MatrixXcd FG = grp.F * grp.G;
    const Eigen::MatrixXcd& B = v.blocks[static_cast<std::size_t>(i)];
    const int off = mode.common ? 1 : 0;
    if (mode.common) E.col(i) = FG * B.col(0);
    if (mode.priv)
      for (std::size_t pos = 0; pos < grp.users.size(); ++pos)
        E.col(nc + grp.users[pos]) = FG * B.col(off + static_cast<Eigen::Index>(pos));
  }
  return E;
}

GroupedRateReport grouped_rate_report(const GroupingPlan& plan, const GroupedPrecoder& v,
                                      const TransmissionMode& mode, RateMethod method,
                                      const NoiseModel& noise, const McConfig* mc) {
  check_blocks(plan, v, mode);
  const int K = plan.num_users;
  GroupedRateReport rep;
  rep.r_c_per_user.assign(static_cast<std::size_t>(K), 0.0);
  rep.r_c_group.assign(plan.groups.size(), 0.0);
  rep.r_p_sic.assign(static_cast<std::size_t>(K), 0.0);
  rep.r_p_sicfree.assign(static_cast<std::size_t>(K), 0.0);
  rep.clamped.assign(static_cast<std::size_t>(K), false);
  rep.raw_r_c_per_user.assign(static_cast<std::size_t>(K), 0.0);
  rep.raw_r_p_sic.assign(static_cast<std::size_t>(K), 0.0);
  rep.raw_r_p_sicfree.assign(static_cast<std::size_t>(K), 0.0);
  rep.r_c_stderr.assign(static_cast<std::size_t>(K), 0.0);
  rep.r_p_sic_stderr.assign(static_cast<std::size_t>(K), 0.0);
  rep.r_p_sicfree_stderr.assign(static_cast<std::size_t>(K), 0.0);

  for (std::size_t i = 0; i < plan.groups.size(); ++i) {
    const Group& grp = plan.groups[i];
    const RateReport local = rate_report(v.blocks[i], grp.reduced_channels, mode, method,
                                         noise, mc);
    rep.r_c_group[i] = local.r_c;
    for (std::size_t pos = 0; pos < grp.users.size(); ++pos) {
      const auto k = static_cast<std::size_t>(grp.users[pos]);
      rep.r_c_per_user[k] = local.r_c_per_user[pos];
      rep.r_p_sic[k] = local.r_p_sic[pos];
      rep.r_p_sicfree[k] = local.r_p_sicfree[pos];
      rep.clamped[k] = local.clamped[pos];
      rep.raw_r_c_per_user[k] = local.raw_r_c_per_user[pos];
      rep.raw_r_p_sic[k] = local.raw_r_p_sic[pos];
      rep.raw_r_p_sicfree[k] = local.raw_r_p_sicfree[pos];
      rep.r_c_stderr[k] = local.r_c_stderr[pos];
      rep.r_p_sic_stderr[k] = local.r_p_sic_stderr[pos];
      rep.r_p_sicfree_stderr[k] = local.r_p_sicfree_stderr[pos];
    }
  }
  return rep;
}

GroupedRateReport expanded_rate_report(const GroupingPlan& plan, const Eigen::MatrixXcd& expanded,
                                       std::span<const Eigen::VectorXcd> channels,
                                       const TransmissionMode& mode, RateMethod method,
                                       const NoiseModel& noise, const McConfig* mc) {
  check_channels(channels);
  if (static_cast<int>(channels.size()) != plan.num_users)
    throw std::invalid_argument("channel count does not match the grouping plan");
  const int n_groups = static_cast<int>(plan.groups.size());
  const int nc = mode.common ? n_groups : 0;
  const int K = plan.num_users;
  if (expanded.cols() != nc + (mode.priv ? K : 0) || expanded.rows() != plan.n_tx)
    throw std::invalid_argument("expanded precoder has the wrong shape");

  std::vector<cplx> draws;
  if (method == RateMethod::exact) {
    if (mc == nullptr) throw std::invalid_argument("exact method needs a Monte Carlo config");
    draws = detail::draw_noise(noise, *mc);
  }

  const Constellation* ca = mode.common ? &*mode.common : nullptr;
  const Constellation* pa = mode.priv ? &*mode.priv : nullptr;

  GroupedRateReport rep;
  rep.r_c_per_user.assign(static_cast<std::size_t>(K), 0.0);
  rep.r_c_group.assign(static_cast<std::size_t>(n_groups),
                       std::numeric_limits<double>::infinity());
  rep.r_p_sic.assign(static_cast<std::size_t>(K), 0.0);
  rep.r_p_sicfree.assign(static_cast<std::size_t>(K), 0.0);
  rep.clamped.assign(static_cast<std::size_t>(K), false);
  rep.raw_r_c_per_user.assign(static_cast<std::size_t>(K), 0.0);
  rep.raw_r_p_sic.assign(static_cast<std::size_t>(K), 0.0);
  rep.raw_r_p_sicfree.assign(static_cast<std::size_t>(K), 0.0);
  rep.r_c_stderr.assign(static_cast<std::size_t>(K), 0.0);
  rep.r_p_sic_stderr.assign(static_cast<std::size_t>(K), 0.0);
  rep.r_p_sicfree_stderr.assign(static_cast<std::size_t>(K), 0.0);

  for (int k = 0; k < K; ++k) {
    const int gi = group_of(plan, k);
    const int own_c = mode.common ? gi : -1;
    const int own_p = mode.priv ? nc + k : -1;

    std::vector<int> cols;
    std::vector<const Constellation*> alphas;
    auto add_all = [&](bool skip_own_common, bool skip_own_private) {
      cols.clear();
      alphas.clear();
      if (mode.common)
        for (int i = 0; i < n_groups; ++i) {
          if (skip_own_common && i == own_c) continue;
          cols.push_back(i);
          alphas.push_back(ca);
        }
      if (mode.priv)
        for (int u = 0; u < K; ++u) {
          if (skip_own_private && nc + u == own_p) continue;
          cols.push_back(nc + u);
          alphas.push_back(pa);
        }
    };
    const auto& h = channels[static_cast<std::size_t>(k)];
    auto make = [&] { return detail::make_term(expanded, h, cols, alphas); };
    add_all(false, false);
    const detail::TermSpec t_all = make();
    add_all(true, false);
    const detail::TermSpec t_no_c = make();
    add_all(true, true);
    const detail::TermSpec t_no_cp = make();
    add_all(false, true);
    const detail::TermSpec t_no_p = make();

    double raw_c = 0.0, raw_sic = 0.0, raw_free = 0.0;
    double se_c = 0.0, se_sic = 0.0, se_free = 0.0;
    const double s2 = noise.sigma2;
    if (method == RateMethod::approx) {
      const double h_all = detail::term_entropy_approx(t_all, s2);
      const double h_no_c = mode.common ? detail::term_entropy_approx(t_no_c, s2) : h_all;
      if (mode.common) raw_c = mode.common_bits() - h_all + h_no_c;
      if (mode.priv) {
        raw_sic = mode.private_bits() - h_no_c + detail::term_entropy_approx(t_no_cp, s2);
        raw_free = mode.common
                       ? mode.private_bits() - h_all + detail::term_entropy_approx(t_no_p, s2)
                       : raw_sic;
      }
    } else {
      const auto g_all = detail::term_entropy_exact_samples(t_all, s2, draws);
      const auto g_no_c =
          mode.common ? detail::term_entropy_exact_samples(t_no_c, s2, draws) : g_all;
      std::vector<double> diff(draws.size());
      if (mode.common) {
        for (std::size_t s = 0; s < draws.size(); ++s)
          diff[s] = mode.common_bits() - g_all[s] + g_no_c[s];
        raw_c = mean(diff);
        se_c = std_error(diff);
      }
      if (mode.priv) {
        const auto g_no_cp = detail::term_entropy_exact_samples(t_no_cp, s2, draws);
        for (std::size_t s = 0; s < draws.size(); ++s)
          diff[s] = mode.private_bits() - g_no_c[s] + g_no_cp[s];
        raw_sic = mean(diff);
        se_sic = std_error(diff);
        if (mode.common) {
          const auto g_no_p = detail::term_entropy_exact_samples(t_no_p, s2, draws);
          for (std::size_t s = 0; s < draws.size(); ++s)
            diff[s] = mode.private_bits() - g_all[s] + g_no_p[s];
          raw_free = mean(diff);
          se_free = std_error(diff);
        } else {
          raw_free = raw_sic;
          se_free = se_sic;
        }
      }
    }

    const auto uk = static_cast<std::size_t>(k);
    rep.raw_r_c_per_user[uk] = raw_c;
    rep.raw_r_p_sic[uk] = raw_sic;
    rep.raw_r_p_sicfree[uk] = raw_free;
    rep.r_c_stderr[uk] = se_c;
    rep.r_p_sic_stderr[uk] = se_sic;
    rep.r_p_sicfree_stderr[uk] = se_free;
    auto clamp = [&](double x, double hi) {
      const double y = std::min(std::max(x, 0.0), hi);
      if (y != x) rep.clamped[uk] = true;
      return y;
    };
    rep.r_c_per_user[uk] = mode.common ? clamp(raw_c, mode.common_bits()) : 0.0;
    rep.r_p_sic[uk] = mode.priv ? clamp(raw_sic, mode.private_bits()) : 0.0;
    rep.r_p_sicfree[uk] = mode.priv ? clamp(raw_free, mode.private_bits()) : 0.0;
    rep.r_c_group[static_cast<std::size_t>(gi)] =
        std::min(rep.r_c_group[static_cast<std::size_t>(gi)], rep.r_c_per_user[uk]);
  }
  for (double& v : rep.r_c_group)
    if (!std::isfinite(v)) v = 0.0;
  return rep;
}

namespace {

double blocks_norm2(const GroupedPrecoder& v) {
  double s = 0.0;
  for (const auto& b : v.blocks) s += b.squaredNorm();
  return s;
}

GroupedPrecoder blocks_project(const GroupedPrecoder& v, double p_t) {
  const double n2 = blocks_norm2(v);
  if (!(n2 > 0.0)) throw std::invalid_argument("cannot project a zero precoder");
  const double s = std::sqrt(p_t / n2);
  GroupedPrecoder out = v;
  for (auto& b : out.blocks) b *= s;
  return out;
}

GroupedPrecoder blocks_axpy(const GroupedPrecoder& x, double t, const GroupedPrecoder& d) {
  GroupedPrecoder out = x;
  for (std::size_t i = 0; i < out.blocks.size(); ++i) out.blocks[i] += t * d.blocks[i];
  return out;
}

std::vector<int> local_users(int g) {
  std::vector<int> u(static_cast<std::size_t>(g));
  std::iota(u.begin(), u.end(), 0);
  return u;
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

GroupedPrecoder default_grouped_init(const GroupingPlan& plan, const TransmissionMode& mode,
                                     double p_t) {
  const int n_groups = static_cast<int>(plan.groups.size());
  const bool both = mode.common.has_value() && mode.priv.has_value();
  const double common_total = mode.common ? (both ? p_t / 2.0 : p_t) : 0.0;
  const double private_total = mode.priv ? (both ? p_t / 2.0 : p_t) : 0.0;
  GroupedPrecoder v;
  for (const Group& grp : plan.groups) {
    const int g = static_cast<int>(grp.users.size());
    Eigen::MatrixXcd B = Eigen::MatrixXcd::Zero(g, block_cols(mode, g));
    const int off = mode.common ? 1 : 0;
    if (mode.priv)
      for (int pos = 0; pos < g; ++pos) {
        const auto& h = grp.reduced_channels[static_cast<std::size_t>(pos)];
        B.col(off + pos) = h / h.norm() * std::sqrt(private_total / plan.num_users);
      }
    if (mode.common) {
      Eigen::MatrixXcd Hg(g, g);
      for (int pos = 0; pos < g; ++pos)
        Hg.col(pos) = grp.reduced_channels[static_cast<std::size_t>(pos)];
      Eigen::JacobiSVD<Eigen::MatrixXcd> svd(Hg, Eigen::ComputeThinU);
      B.col(0) = svd.matrixU().col(0) * std::sqrt(common_total / n_groups);
    }
    v.blocks.push_back(std::move(B));
  }
  return blocks_project(v, p_t);
}

GroupedPrecoder random_grouped_init(const GroupingPlan& plan, const TransmissionMode& mode,
                                    double p_t, std::uint64_t seed, std::uint64_t index) {
  CounterRng rng(derive_key({seed, index}));
  GroupedPrecoder v;
  for (const Group& grp : plan.groups) {
    const int g = static_cast<int>(grp.users.size());
    Eigen::MatrixXcd B(g, block_cols(mode, g));
    for (Eigen::Index j = 0; j < B.cols(); ++j)
      for (Eigen::Index i = 0; i < B.rows(); ++i) B(i, j) = rng.next_cnormal();
    v.blocks.push_back(std::move(B));
  }
  return blocks_project(v, p_t);
}

// Raw weighted sum rate with each group's shared rate assigned to its own
// highest-weight member.
double grouped_wsr_raw(const GroupingPlan& plan, const GroupedRateReport& rep,
                       std::span<const double> weights, Receiver rx,
                       const TransmissionMode& mode) {
  double v = 0.0;
  if (mode.common)
    for (std::size_t i = 0; i < plan.groups.size(); ++i) {
      const Group& grp = plan.groups[i];
      double rc = std::numeric_limits<double>::infinity();
      double wbest = -1.0;
      for (int u : grp.users) {
        rc = std::min(rc, rep.raw_r_c_per_user[static_cast<std::size_t>(u)]);
        if (weights[static_cast<std::size_t>(u)] > wbest) wbest = weights[static_cast<std::size_t>(u)];
      }
      v += wbest * rc;
    }
  if (mode.priv)
    for (int k = 0; k < plan.num_users; ++k)
      v += weights[static_cast<std::size_t>(k)] *
           (rx == Receiver::sic ? rep.raw_r_p_sic[static_cast<std::size_t>(k)]
                                : rep.raw_r_p_sicfree[static_cast<std::size_t>(k)]);
  return v;
}

// Per-group subgradient blocks for either objective; `common_scale[i]` and
// `private_scale[k]` hold the multipliers in front of the shared/private rate
// gradients.
GroupedPrecoder grouped_subgradient(const GroupingPlan& plan, const GroupedPrecoder& v,
                                    const TransmissionMode& mode, Receiver rx,
                                    const NoiseModel& noise, const GroupedRateReport& rep,
                                    std::span<const double> common_scale,
                                    std::span<const double> private_scale) {
  GroupedPrecoder delta;
  for (std::size_t i = 0; i < plan.groups.size(); ++i) {
    const Group& grp = plan.groups[i];
    const int g = static_cast<int>(grp.users.size());
    const std::vector<int> users = local_users(g);
    Eigen::MatrixXcd D = Eigen::MatrixXcd::Zero(v.blocks[i].rows(), v.blocks[i].cols());
    if (mode.common && common_scale[i] != 0.0) {
      int pos_min = 0;
      double best = std::numeric_limits<double>::infinity();
      for (int pos = 0; pos < g; ++pos) {
        const double rc = rep.raw_r_c_per_user[static_cast<std::size_t>(grp.users[static_cast<std::size_t>(pos)])];
        if (rc < best) {
          best = rc;
          pos_min = pos;
        }
      }
      D += common_scale[i] *
           rate_c_gradient(v.blocks[i], grp.reduced_channels[static_cast<std::size_t>(pos_min)],
                           mode, users, noise);
    }
    if (mode.priv)
      for (int pos = 0; pos < g; ++pos) {
        const double w = private_scale[static_cast<std::size_t>(grp.users[static_cast<std::size_t>(pos)])];
        if (w == 0.0) continue;
        D += w * rate_p_gradient(v.blocks[i], grp.reduced_channels[static_cast<std::size_t>(pos)],
                                 mode, pos, users, rx, noise);
      }
    delta.blocks.push_back(std::move(D));
  }
  return delta;
}

// Per-user split of each group's shared rate, water-filling within the group.
std::vector<double> grouped_mmf_split(const GroupingPlan& plan, const GroupedRateReport& rep,
                                      Receiver rx) {
  std::vector<double> c(static_cast<std::size_t>(plan.num_users), 0.0);
  for (std::size_t i = 0; i < plan.groups.size(); ++i) {
    const Group& grp = plan.groups[i];
    std::vector<double> rp;
    rp.reserve(grp.users.size());
    for (int u : grp.users) rp.push_back(rep.r_p(u, rx));
    const MmfAllocation a = mmf_allocation(rep.r_c_group[i], rp);
    for (std::size_t pos = 0; pos < grp.users.size(); ++pos)
      c[static_cast<std::size_t>(grp.users[pos])] = a.c[pos];
  }
  return c;
}

std::vector<double> grouped_totals_raw(const GroupedRateReport& rep, std::span<const double> c,
                                       Receiver rx) {
  std::vector<double> t(c.size());
  for (std::size_t k = 0; k < c.size(); ++k)
    t[k] = c[k] + (rx == Receiver::sic ? rep.raw_r_p_sic[k] : rep.raw_r_p_sicfree[k]);
  return t;
}

double grouped_min_fixed_c(const GroupedRateReport& rep, std::span<const double> c, Receiver rx) {
  double m = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < c.size(); ++k)
    m = std::min(m, c[k] + rep.r_p(static_cast<int>(k), rx));
  return m;
}

void check_grouped_problem(const GroupingPlan& plan, const TransmissionMode& mode,
                           const OptimizerConfig& cfg) {
  if (plan.groups.empty()) throw std::invalid_argument("grouping plan is empty");
  for (const Group& grp : plan.groups) {
    std::vector<Constellation> list;
    if (mode.common) list.push_back(*mode.common);
    if (mode.priv)
      for (std::size_t j = 0; j < grp.users.size(); ++j) list.push_back(*mode.priv);
    if (!pair_count(list).tractable(cfg.pair_budget))
      throw std::invalid_argument("a group's effective point set exceeds the pair budget");
  }
}

struct GroupedRun {
  GroupedPrecoder v;
  std::vector<double> trace;
  bool converged = false;
  std::vector<double> allocation;
};

GroupedRun run_grouped_wsr(const GroupingPlan& plan, const GroupedPrecoder& v0,
                           const TransmissionMode& mode, std::span<const double> weights,
                           Receiver rx, const NoiseModel& noise, const OptimizerConfig& cfg) {
  auto objective = [&](const GroupedPrecoder& x) {
    return grouped_wsr_raw(plan, grouped_rate_report(plan, x, mode, RateMethod::approx, noise),
                           weights, rx, mode);
  };
  // Shared-stream gradient multiplier: the group's top weight.
  std::vector<double> cscale(plan.groups.size(), 0.0);
  for (std::size_t i = 0; i < plan.groups.size(); ++i)
    for (int u : plan.groups[i].users)
      cscale[i] = std::max(cscale[i], weights[static_cast<std::size_t>(u)]);

  GroupedRun run;
  run.v = v0;
  run.trace.push_back(objective(run.v));
  for (int it = 1; it <= cfg.v_max; ++it) {
    const GroupedRateReport rep =
        grouped_rate_report(plan, run.v, mode, RateMethod::approx, noise);
    const GroupedPrecoder delta =
        grouped_subgradient(plan, run.v, mode, rx, noise, rep, cscale, weights);

    const double f0 = run.trace.back();
    double slope = 0.0;
    for (const auto& b : delta.blocks) slope += b.squaredNorm();
    slope *= cfg.alpha;
    double t = 1.0;
    bool accepted = false;
    while (t > cfg.t_min) {
      GroupedPrecoder cand = blocks_axpy(run.v, t, delta);
      if (blocks_norm2(cand) > 0.0) {
        cand = blocks_project(cand, cfg.p_t);
        if (objective(cand) > f0 + t * slope) {
          run.v = std::move(cand);
          accepted = true;
          break;
        }
      }
      t *= cfg.beta;
    }
    (void)accepted;
    run.trace.push_back(objective(run.v));
    const std::size_t n = run.trace.size();
    if (std::abs(run.trace[n - 1] - run.trace[n - 2]) < cfg.epsilon) {
      run.converged = true;
      break;
    }
  }
  return run;
}

GroupedRun run_grouped_mmf(const GroupingPlan& plan, const GroupedPrecoder& v0,
                           const TransmissionMode& mode, Receiver rx, const NoiseModel& noise,
                           const OptimizerConfig& cfg) {
  GroupedRun run;
  run.v = v0;
  GroupedRateReport rep = grouped_rate_report(plan, run.v, mode, RateMethod::approx, noise);
  std::vector<double> c = grouped_mmf_split(plan, rep, rx);
  std::vector<double> totals = grouped_totals_raw(rep, c, rx);
  run.trace.push_back(grouped_min_fixed_c(rep, c, rx));
  double lse_prev = stable_lse_min(totals, cfg.gamma);

  for (int it = 1; it <= cfg.v_max; ++it) {
    const std::vector<double> w = softmax_weights(totals, cfg.gamma);
    std::vector<double> cscale(plan.groups.size(), 0.0);
    for (std::size_t i = 0; i < plan.groups.size(); ++i)
      for (int u : plan.groups[i].users)
        cscale[i] += w[static_cast<std::size_t>(u)] * c[static_cast<std::size_t>(u)];
    const GroupedPrecoder delta = grouped_subgradient(plan, run.v, mode, rx, noise, rep,
                                                      cscale, w);

    // The guard re-splits each candidate's shared rates: the frozen split can
    // overstate a candidate whose shared rate shrank, and the trace must not dip.
    const double f0 = stable_lse_min(totals, cfg.gamma);
    const double m0 = run.trace.back();
    double slope = 0.0;
    for (const auto& b : delta.blocks) slope += b.squaredNorm();
    slope *= cfg.alpha;
    double t = 1.0;
    GroupedPrecoder v_next = run.v;
    GroupedRateReport rep_next = rep;
    while (t > cfg.t_min) {
      GroupedPrecoder cand = blocks_axpy(run.v, t, delta);
      if (blocks_norm2(cand) > 0.0) {
        cand = blocks_project(cand, cfg.p_t);
        GroupedRateReport rc = grouped_rate_report(plan, cand, mode, RateMethod::approx, noise);
        if (stable_lse_min(grouped_totals_raw(rc, c, rx), cfg.gamma) > f0 + t * slope &&
            grouped_min_fixed_c(rc, grouped_mmf_split(plan, rc, rx), rx) >= m0) {
          v_next = std::move(cand);
          rep_next = std::move(rc);
          break;
        }
      }
      t *= cfg.beta;
    }

    const std::vector<double> c_next = grouped_mmf_split(plan, rep_next, rx);
    const std::vector<double> totals_next = grouped_totals_raw(rep_next, c_next, rx);
    const double lse_now = stable_lse_min(totals_next, cfg.gamma);
    run.trace.push_back(grouped_min_fixed_c(rep_next, c_next, rx));
    run.v = std::move(v_next);
    rep = std::move(rep_next);
    c = c_next;
    totals = totals_next;
    if (std::abs(lse_now - lse_prev) < cfg.epsilon) {
      run.converged = true;
      break;
    }
    lse_prev = lse_now;
  }
  run.allocation = c;
  return run;
}

}  // namespace

GroupedOptimizeResult grouped_optimize_wsr(const GroupingPlan& plan,
                                           std::span<const double> weights, Receiver rx,
                                           const NoiseModel& noise, const TransmissionMode& mode,
                                           const OptimizerConfig& cfg) {
  check_grouped_problem(plan, mode, cfg);
  if (weights.size() != static_cast<std::size_t>(plan.num_users))
    throw std::invalid_argument("one weight per user required");

  std::vector<GroupedPrecoder> inits{default_grouped_init(plan, mode, cfg.p_t)};
  for (int r = 0; r < cfg.restarts; ++r)
    inits.push_back(random_grouped_init(plan, mode, cfg.p_t, cfg.seed,
                                        static_cast<std::uint64_t>(r) + 1));
  GroupedRun best;
  bool have = false;
  for (const auto& v0 : inits) {
    GroupedRun run = run_grouped_wsr(plan, v0, mode, weights, rx, noise, cfg);
    if (!have || run.trace.back() > best.trace.back()) {
      best = std::move(run);
      have = true;
    }
  }

  GroupedOptimizeResult out;
  out.plan = plan;
  out.blocks = best.v;
  out.precoder = expand_precoder(plan, best.v, mode);
  out.objective = best.trace.back();
  out.objective_trace = best.trace;
  out.iterations = static_cast<int>(best.trace.size()) - 1;
  out.converged = best.converged;
  // Report split: each group's shared rate to its top-weight member.
  const GroupedRateReport rep =
      grouped_rate_report(plan, best.v, mode, RateMethod::approx, noise);
  out.allocation.assign(static_cast<std::size_t>(plan.num_users), 0.0);
  if (mode.common)
    for (std::size_t i = 0; i < plan.groups.size(); ++i) {
      const Group& grp = plan.groups[i];
      int kp = grp.users[0];
      for (int u : grp.users)
        if (weights[static_cast<std::size_t>(u)] > weights[static_cast<std::size_t>(kp)]) kp = u;
      out.allocation[static_cast<std::size_t>(kp)] = rep.r_c_group[i];
    }
  return out;
}

GroupedOptimizeResult grouped_optimize_mmf(const GroupingPlan& plan, Receiver rx,
                                           const NoiseModel& noise, const TransmissionMode& mode,
                                           const OptimizerConfig& cfg) {
  check_grouped_problem(plan, mode, cfg);
  std::vector<GroupedPrecoder> inits{default_grouped_init(plan, mode, cfg.p_t)};
  for (int r = 0; r < cfg.restarts; ++r)
    inits.push_back(random_grouped_init(plan, mode, cfg.p_t, cfg.seed,
                                        static_cast<std::uint64_t>(r) + 1));
  GroupedRun best;
  bool have = false;
  for (const auto& v0 : inits) {
    GroupedRun run = run_grouped_mmf(plan, v0, mode, rx, noise, cfg);
    if (!have || run.trace.back() > best.trace.back()) {
      best = std::move(run);
      have = true;
    }
  }

  GroupedOptimizeResult out;
  out.plan = plan;
  out.blocks = best.v;
  out.precoder = expand_precoder(plan, best.v, mode);
  out.objective = best.trace.back();
  out.objective_trace = best.trace;
  out.iterations = static_cast<int>(best.trace.size()) - 1;
  out.converged = best.converged;
  out.allocation = best.allocation;
  return out;
}

PairCount grouped_pair_count(const GroupingPlan& plan, const TransmissionMode& mode) {
  PairCount total;
  total.pairs = 0;
  for (const Group& grp : plan.groups) {
    std::vector<Constellation> list;
    if (mode.common) list.push_back(*mode.common);
    if (mode.priv)
      for (std::size_t j = 0; j < grp.users.size(); ++j) list.push_back(*mode.priv);
    const PairCount pc = pair_count(list);
    if (pc.saturated) total.saturated = true;
    if (__builtin_add_overflow(total.pairs, pc.pairs, &total.pairs)) total.saturated = true;
  }
  return total;
}

PairCount full_pair_count(int num_users, const TransmissionMode& mode) {
  std::vector<Constellation> list;
  if (mode.common) list.push_back(*mode.common);
  if (mode.priv)
    for (int k = 0; k < num_users; ++k) list.push_back(*mode.priv);
  return pair_count(list);
}

}  // namespace rsopt
