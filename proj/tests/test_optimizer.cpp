#include <doctest.h>

#include <cmath>
#include <vector>

#include "rsopt/optimizer.hpp"
#include "rsopt/rng.hpp"

using namespace rsopt;

namespace {

const Constellation kQpsk = standard_constellation(ConstellationName::qpsk);

std::vector<Eigen::VectorXcd> random_channels(int n_tx, int K, std::uint64_t seed) {
  CounterRng rng(seed);
  std::vector<Eigen::VectorXcd> out;
  for (int k = 0; k < K; ++k) {
    Eigen::VectorXcd h(n_tx);
    for (int i = 0; i < n_tx; ++i) h(i) = rng.next_cnormal();
    out.push_back(std::move(h));
  }
  return out;
}

TransmissionMode qpsk_mode() {
  TransmissionMode m;
  m.common = kQpsk;
  m.priv = kQpsk;
  m.r_max_bits = 6;
  return m;
}

void check_contracts(const OptimizeResult& res, double p_t) {
  CHECK(std::abs(res.precoder.squaredNorm() - p_t) < 1e-10 * std::max(1.0, p_t));
  for (std::size_t i = 1; i < res.objective_trace.size(); ++i)
    CHECK(res.objective_trace[i] >= res.objective_trace[i - 1] - 1e-9);
  CHECK(res.objective == res.objective_trace.back());
}

}  // namespace

TEST_CASE("power projection") {
  Eigen::MatrixXcd P(2, 2);
  P << cplx(1, 1), cplx(1, -1), cplx(-1, 1), cplx(-1, -1);  // ||P||_F^2 = 8
  SUBCASE("scales onto the sphere") {
    const Eigen::MatrixXcd Q = project_power(P, 2.0);
    CHECK(Q.squaredNorm() == doctest::Approx(2.0).epsilon(1e-14));
    CHECK((Q - 0.5 * P).norm() < 1e-14);
  }
  SUBCASE("idempotent on the sphere") {
    const Eigen::MatrixXcd Q = project_power(P, 3.7);
    const Eigen::MatrixXcd R = project_power(Q, 3.7);
    CHECK((Q - R).norm() < 1e-13);
  }
  SUBCASE("zero matrix is degenerate") {
    CHECK_THROWS_AS(project_power(Eigen::MatrixXcd::Zero(2, 2), 1.0), std::invalid_argument);
  }
}

TEST_CASE("backtracking line search") {
  OptimizerConfig cfg;
  cfg.p_t = 4.0;
  Eigen::MatrixXcd P(2, 1);
  P << cplx(2, 0), cplx(0, 0);  // on the sphere

  SUBCASE("zero direction returns zero step") {
    const auto f = [](const Eigen::MatrixXcd& Q) { return -Q.col(0).squaredNorm(); };
    CHECK(backtracking_step(P, Eigen::MatrixXcd::Zero(2, 1), f, cfg) == 0.0);
  }
  SUBCASE("constant objective returns zero step") {
    const auto f = [](const Eigen::MatrixXcd&) { return 1.0; };
    Eigen::MatrixXcd delta(2, 1);
    delta << cplx(0, 0), cplx(1, 0);
    CHECK(backtracking_step(P, delta, f, cfg) == 0.0);
  }
  SUBCASE("concave objective: largest passing step is returned, never a loss") {
    Eigen::MatrixXcd target(2, 1);
    target << cplx(0, 0), cplx(2, 0);  // also on the sphere
    const auto f = [&](const Eigen::MatrixXcd& Q) { return -(Q - target).squaredNorm(); };
    Eigen::MatrixXcd delta = target - P;
    const double t = backtracking_step(P, delta, f, cfg);
    REQUIRE(t > 0.0);
    const double base = f(P);
    const double stepped = f(project_power(P + t * delta, cfg.p_t));
    CHECK(stepped > base + cfg.alpha * t * delta.squaredNorm());
    // No larger candidate from {1, beta, beta^2, ...} passes.
    for (double cand = 1.0; cand > t * 1.0001; cand *= cfg.beta) {
      const double fc = f(project_power(P + cand * delta, cfg.p_t));
      CHECK(fc <= base + cfg.alpha * cand * delta.squaredNorm());
    }
  }
}

TEST_CASE("wsr subgradient: single user without a shared stream is the private gradient") {
  TransmissionMode mode;
  mode.priv = kQpsk;
  mode.r_max_bits = 2;
  const auto channels = random_channels(2, 1, derive_key({3, 1}));
  Eigen::MatrixXcd P = Eigen::MatrixXcd::Random(2, 1);
  const double w[] = {1.0};
  const NoiseModel noise{1.0};
  const Eigen::MatrixXcd g = wsr_subgradient(P, channels, mode, w, Receiver::sic, noise);
  const int users[] = {0};
  const Eigen::MatrixXcd gp = rate_p_gradient(P, channels[0], mode, 0, users, Receiver::sic, noise);
  CHECK((g - gp).norm() < 1e-14);
}

TEST_CASE("wsr subgradient has nonnegative directional derivative") {
  const TransmissionMode mode = qpsk_mode();
  const NoiseModel noise{1.0};
  const double w[] = {1.0, 1.5};
  for (std::uint64_t trial = 0; trial < 5; ++trial) {
    const auto channels = random_channels(2, 2, derive_key({4, trial}));
    CounterRng rng(derive_key({5, trial}));
    Eigen::MatrixXcd P(2, 3);
    for (int j = 0; j < 3; ++j)
      for (int i = 0; i < 2; ++i) P(i, j) = rng.next_cnormal();
    const Eigen::MatrixXcd g = wsr_subgradient(P, channels, mode, w, Receiver::sic, noise);

    const auto value = [&](const Eigen::MatrixXcd& Q) {
      double v = 0.0;
      const int users[] = {0, 1};
      double min_rc = 1e300;
      for (int k = 0; k < 2; ++k) {
        const UserRates r = user_rates(Q, channels[static_cast<std::size_t>(k)], mode, k, users,
                                       RateMethod::approx, noise);
        min_rc = std::min(min_rc, r.r_c);
        v += w[k] * r.r_p_sic;
      }
      return v + std::max(w[0], w[1]) * min_rc;
    };
    const double step = 1e-6;
    const double up = value(P + step * g);
    const double down = value(P - step * g);
    CAPTURE(trial);
    CHECK(up - down >= -1e-9);  // ascent direction at non-kink points
  }
}

TEST_CASE("wsr optimization contracts on random instances") {
  const TransmissionMode mode = qpsk_mode();
  const NoiseModel noise{1.0};
  const double w[] = {1.0, 2.0};
  OptimizerConfig cfg;
  cfg.p_t = 10.0;
  cfg.restarts = 1;
  cfg.seed = 99;
  for (std::uint64_t trial = 0; trial < 4; ++trial) {
    const auto channels = random_channels(2, 2, derive_key({6, trial}));
    const OptimizeResult res = optimize_wsr(channels, mode, w, Receiver::sic, noise, cfg);
    CAPTURE(trial);
    check_contracts(res, cfg.p_t);
    // Allocation: whole shared rate to the top-weight user.
    CHECK(res.allocation[0] == 0.0);
    CHECK(res.allocation[1] >= 0.0);
  }
}

TEST_CASE("wsr optimization: vanishing power gives vanishing rates") {
  const TransmissionMode mode = qpsk_mode();
  const auto channels = random_channels(2, 2, derive_key({7, 0}));
  const double w[] = {1.0, 1.0};
  OptimizerConfig cfg;
  cfg.p_t = 1e-6;
  cfg.restarts = 0;
  const OptimizeResult res = optimize_wsr(channels, mode, w, Receiver::sic, NoiseModel{1.0}, cfg);
  CHECK(res.objective < 0.01);
}

TEST_CASE("wsr optimization: orthogonal channels saturate at high snr") {
  TransmissionMode sdma;
  sdma.priv = standard_constellation(ConstellationName::qam8);
  sdma.r_max_bits = 6;
  std::vector<Eigen::VectorXcd> channels(2, Eigen::VectorXcd::Zero(2));
  channels[0](0) = cplx(1, 0);
  channels[1](1) = cplx(1, 0);
  const double w[] = {1.0, 1.0};
  OptimizerConfig cfg;
  cfg.p_t = 1.0;
  cfg.restarts = 0;
  cfg.v_max = 200;
  const OptimizeResult res =
      optimize_wsr(channels, sdma, w, Receiver::sic, NoiseModel{1e-3}, cfg);
  CHECK(res.objective > 6.0 - 0.05);
  CHECK(res.objective <= 6.0 + 1e-9);
}

TEST_CASE("wsr objective is permutation-invariant for equal weights") {
  const TransmissionMode mode = qpsk_mode();
  const NoiseModel noise{1.0};
  const double w[] = {1.0, 1.0};
  OptimizerConfig cfg;
  cfg.p_t = 10.0;
  cfg.restarts = 0;
  auto channels = random_channels(2, 2, derive_key({8, 4}));
  const OptimizeResult a = optimize_wsr(channels, mode, w, Receiver::sic, noise, cfg);
  std::swap(channels[0], channels[1]);
  const OptimizeResult b = optimize_wsr(channels, mode, w, Receiver::sic, noise, cfg);
  CHECK(std::abs(a.objective - b.objective) < 0.05);
}

TEST_CASE("intractable constellation products are refused with a diagnostic") {
  TransmissionMode huge;
  huge.common = standard_constellation(ConstellationName::qam512);
  huge.priv = standard_constellation(ConstellationName::qam512);
  huge.r_max_bits = 99;
  const auto channels = random_channels(2, 3, derive_key({9, 0}));
  const double w[] = {1.0, 1.0, 1.0};
  OptimizerConfig cfg;
  try {
    optimize_wsr(channels, huge, w, Receiver::sic, NoiseModel{1.0}, cfg);
    FAIL("expected a throw");
  } catch (const std::invalid_argument& e) {
    CHECK(std::string(e.what()).find("pair") != std::string::npos);
  }
}

TEST_CASE("smoothed minimum objective: bounds and limits") {
  const TransmissionMode mode = qpsk_mode();
  const NoiseModel noise{1.0};
  const auto channels = random_channels(2, 2, derive_key({10, 1}));
  CounterRng rng(derive_key({10, 2}));
  Eigen::MatrixXcd P(2, 3);
  for (int j = 0; j < 3; ++j)
    for (int i = 0; i < 2; ++i) P(i, j) = rng.next_cnormal();
  P = project_power(P, 4.0);
  const std::vector<double> c = {0.3, 0.1};

  const int users[] = {0, 1};
  double true_min = 1e300;
  for (int k = 0; k < 2; ++k) {
    const UserRates r = user_rates(P, channels[static_cast<std::size_t>(k)], mode, k, users,
                                   RateMethod::approx, noise);
    true_min = std::min(true_min, c[static_cast<std::size_t>(k)] + r.r_p_sic);
  }

  const double lse30 = mmf_objective_lse(P, channels, mode, c, Receiver::sic, noise, -30.0);
  CHECK(lse30 <= true_min + 1e-12);
  CHECK(true_min - lse30 <= std::log(2.0) / 30.0 + 1e-12);

  const double lse200 = mmf_objective_lse(P, channels, mode, c, Receiver::sic, noise, -200.0);
  CHECK(std::abs(lse200 - true_min) < 1e-3);
}

TEST_CASE("mmf optimization contracts and symmetry") {
  const TransmissionMode mode = qpsk_mode();
  const NoiseModel noise{1.0};
  OptimizerConfig cfg;
  cfg.p_t = 10.0;
  cfg.restarts = 1;
  cfg.seed = 1234;

  SUBCASE("random instances satisfy the contracts") {
    for (std::uint64_t trial = 0; trial < 3; ++trial) {
      const auto channels = random_channels(2, 2, derive_key({11, trial}));
      const OptimizeResult res = optimize_mmf(channels, mode, Receiver::sic, noise, cfg);
      CAPTURE(trial);
      check_contracts(res, cfg.p_t);
      double csum = 0.0;
      for (double ck : res.allocation) {
        CHECK(ck >= 0.0);
        csum += ck;
      }
      CHECK(csum >= 0.0);
    }
  }
  SUBCASE("symmetric users end with nearly equal totals") {
    auto channels = random_channels(2, 1, derive_key({12, 5}));
    channels.push_back(channels[0]);
    const OptimizeResult res = optimize_mmf(channels, mode, Receiver::sic, noise, cfg);
    const RateReport rep = rate_report(res.precoder, channels, mode, RateMethod::approx,
                                       noise);
    const double r1 = res.allocation[0] + rep.r_p(0, Receiver::sic);
    const double r2 = res.allocation[1] + rep.r_p(1, Receiver::sic);
    CHECK(std::abs(r1 - r2) < 0.05);
  }
}

TEST_CASE("single-user mmf and wsr coincide") {
  TransmissionMode mode;
  mode.priv = kQpsk;
  mode.r_max_bits = 2;
  const auto channels = random_channels(2, 1, derive_key({13, 0}));
  const double w[] = {1.0};
  OptimizerConfig cfg;
  cfg.p_t = 4.0;
  cfg.restarts = 0;
  const NoiseModel noise{1.0};
  const OptimizeResult a = optimize_wsr(channels, mode, w, Receiver::sic, noise, cfg);
  const OptimizeResult b = optimize_mmf(channels, mode, Receiver::sic, noise, cfg);
  CHECK(std::abs(a.objective - b.objective) < 1e-3);
}

TEST_CASE("initial precoder override is validated and used") {
  const TransmissionMode mode = qpsk_mode();
  const auto channels = random_channels(2, 2, derive_key({14, 0}));
  const double w[] = {1.0, 1.0};
  OptimizerConfig cfg;
  cfg.p_t = 4.0;
  cfg.restarts = 0;
  const NoiseModel noise{1.0};

  Eigen::MatrixXcd bad = Eigen::MatrixXcd::Random(2, 2);  // wrong column count
  CHECK_THROWS_AS(optimize_wsr(channels, mode, w, Receiver::sic, noise, cfg, &bad),
                  std::invalid_argument);

  Eigen::MatrixXcd good = Eigen::MatrixXcd::Random(2, 3);
  const OptimizeResult res = optimize_wsr(channels, mode, w, Receiver::sic, noise, cfg, &good);
  check_contracts(res, cfg.p_t);
}
