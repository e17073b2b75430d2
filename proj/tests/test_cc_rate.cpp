#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <numbers>
#include <vector>

#include "rsopt/cc_rate.hpp"
#include "rsopt/rng.hpp"

using namespace rsopt;

namespace {

const Constellation kBpsk = standard_constellation(ConstellationName::bpsk);
const Constellation kQpsk = standard_constellation(ConstellationName::qpsk);

EffectivePointSet set_of(std::vector<cplx> pts) {
  EffectivePointSet s;
  s.source_cardinalities = {static_cast<int>(pts.size())};
  s.points = std::move(pts);
  return s;
}

// Gauss-Hermite nodes/weights via the Golub-Welsch tridiagonal eigenproblem.
struct Quad {
  std::vector<double> x, w;
};

Quad gauss_hermite(int n) {
  Eigen::MatrixXd jacobi = Eigen::MatrixXd::Zero(n, n);
  for (int k = 0; k + 1 < n; ++k) {
    const double b = std::sqrt((k + 1) / 2.0);
    jacobi(k, k + 1) = b;
    jacobi(k + 1, k) = b;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(jacobi);
  Quad q;
  q.x.resize(static_cast<std::size_t>(n));
  q.w.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    q.x[static_cast<std::size_t>(i)] = es.eigenvalues()(i);
    q.w[static_cast<std::size_t>(i)] =
        std::sqrt(std::numbers::pi) * es.eigenvectors()(0, i) * es.eigenvectors()(0, i);
  }
  return q;
}

// Deterministic reference for the exact conditional entropy: the expectation
// over CN(0, sigma2) noise done with a 2-D tensor Gauss-Hermite rule.
double quadrature_exact_entropy(const std::vector<cplx>& pts, double sigma2, int nodes = 48) {
  const Quad q = gauss_hermite(nodes);
  const double sigma = std::sqrt(sigma2);
  const std::size_t N = pts.size();
  double outer = 0.0;
  for (std::size_t m = 0; m < N; ++m) {
    double acc = 0.0;
    for (std::size_t i = 0; i < q.x.size(); ++i)
      for (std::size_t j = 0; j < q.x.size(); ++j) {
        const cplx nz(sigma * q.x[i], sigma * q.x[j]);
        double s = 0.0;
        for (std::size_t l = 0; l < N; ++l) s += std::exp(-std::norm(pts[m] - pts[l] + nz) / sigma2);
        acc += q.w[i] * q.w[j] * std::log2(s);
      }
    outer += acc / std::numbers::pi;
  }
  return std::numbers::log2e + outer / static_cast<double>(N);
}

Eigen::MatrixXcd random_matrix(Eigen::Index rows, Eigen::Index cols, CounterRng& rng) {
  Eigen::MatrixXcd m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = rng.next_cnormal();
  return m;
}

Eigen::VectorXcd random_vector(Eigen::Index rows, CounterRng& rng) {
  Eigen::VectorXcd v(rows);
  for (Eigen::Index i = 0; i < rows; ++i) v(i) = rng.next_cnormal();
  return v;
}

// Central finite differences of f over the real parametrization of P, checked
// against the Wirtinger gradient G via df/dRe = 2 Re G, df/dIm = 2 Im G.
template <typename F>
double max_rel_fd_error(const Eigen::MatrixXcd& P, const Eigen::MatrixXcd& grad, F&& f,
                        double step = 1e-5) {
  double scale = 1e-12;
  for (Eigen::Index j = 0; j < P.cols(); ++j)
    for (Eigen::Index i = 0; i < P.rows(); ++i)
      scale = std::max({scale, std::abs(2.0 * grad(i, j).real()), std::abs(2.0 * grad(i, j).imag())});
  double worst = 0.0;
  for (Eigen::Index j = 0; j < P.cols(); ++j)
    for (Eigen::Index i = 0; i < P.rows(); ++i) {
      for (int part = 0; part < 2; ++part) {
        Eigen::MatrixXcd Pp = P, Pm = P;
        const cplx delta = part == 0 ? cplx(step, 0) : cplx(0, step);
        Pp(i, j) += delta;
        Pm(i, j) -= delta;
        const double fd = (f(Pp) - f(Pm)) / (2.0 * step);
        const double ana = part == 0 ? 2.0 * grad(i, j).real() : 2.0 * grad(i, j).imag();
        worst = std::max(worst, std::abs(fd - ana) / scale);
      }
    }
  return worst;
}

}  // namespace

TEST_CASE("surrogate entropy spot values") {
  const NoiseModel noise{1.0};
  SUBCASE("BPSK pair at unit noise") {
    const double h = cond_entropy_approx(set_of({cplx(1, 0), cplx(-1, 0)}), noise);
    CHECK(h == doctest::Approx(std::log2(1.0 + std::exp(-2.0))).epsilon(1e-12));
  }
  SUBCASE("identical points give exactly the alphabet size") {
    const double h = cond_entropy_approx(set_of({cplx(0, 0), cplx(0, 0), cplx(0, 0), cplx(0, 0)}),
                                         noise);
    CHECK(h == 2.0);
  }
  SUBCASE("noiseless limit vanishes") {
    const double h = cond_entropy_approx(set_of({cplx(1, 0), cplx(-1, 0)}), NoiseModel{1e-12});
    CHECK(h >= 0.0);
    CHECK(h <= 1e-9);
  }
}

TEST_CASE("exact entropy at zero gains equals the alphabet size") {
  const cplx g[] = {cplx(0, 0), cplx(0, 0)};
  const Constellation a[] = {kQpsk, kQpsk};
  const auto set = effective_points(g, a);
  const McEstimate est = cond_entropy_exact(set, NoiseModel{0.8}, McConfig{4000, 5});
  CHECK(std::abs(est.value - 4.0) <= 3.0 * est.std_error);
  CHECK(est.std_error > 0.0);
}

TEST_CASE("exact entropy matches the 2-D Gauss-Hermite oracle on BPSK") {
  const std::vector<cplx> pts = {cplx(1, 0), cplx(-1, 0)};
  const double oracle = quadrature_exact_entropy(pts, 1.0);
  const McEstimate est = cond_entropy_exact(set_of(pts), NoiseModel{1.0}, McConfig{20000, 3});
  CHECK(std::abs(est.value - oracle) <= 3.0 * est.std_error);

  // Same oracle at a second noise level, so the sigma2 plumbing is exercised.
  const double oracle2 = quadrature_exact_entropy(pts, 0.37);
  const McEstimate est2 = cond_entropy_exact(set_of(pts), NoiseModel{0.37}, McConfig{20000, 4});
  CHECK(std::abs(est2.value - oracle2) <= 3.0 * est2.std_error);
}

TEST_CASE("exact entropy: noiseless limit, determinism, stderr scaling") {
  const std::vector<cplx> pts = {cplx(1, 0.2), cplx(-0.8, 0), cplx(0.1, -1.0)};
  SUBCASE("distinct points at tiny noise have near-zero entropy") {
    const McEstimate est = cond_entropy_exact(set_of(pts), NoiseModel{1e-12}, McConfig{2000, 9});
    CHECK(std::abs(est.value) <= 3.0 * est.std_error + 1e-9);
  }
  SUBCASE("same seed reproduces bit-identically") {
    const McEstimate a = cond_entropy_exact(set_of(pts), NoiseModel{0.7}, McConfig{2000, 11});
    const McEstimate b = cond_entropy_exact(set_of(pts), NoiseModel{0.7}, McConfig{2000, 11});
    CHECK(a.value == b.value);
    CHECK(a.std_error == b.std_error);
    const McEstimate c = cond_entropy_exact(set_of(pts), NoiseModel{0.7}, McConfig{2000, 12});
    CHECK(a.value != c.value);
  }
  SUBCASE("stderr halves when samples quadruple") {
    const McEstimate small = cond_entropy_exact(set_of(pts), NoiseModel{0.7}, McConfig{4000, 13});
    const McEstimate big = cond_entropy_exact(set_of(pts), NoiseModel{0.7}, McConfig{16000, 13});
    const double ratio = small.std_error / big.std_error;
    CHECK(ratio > 1.6);
    CHECK(ratio < 2.4);
  }
}

TEST_CASE("single-user BPSK rates") {
  TransmissionMode mode;
  mode.priv = kBpsk;
  mode.r_max_bits = 1;
  Eigen::MatrixXcd P(1, 1);
  P(0, 0) = cplx(1, 0);
  Eigen::VectorXcd h(1);
  h(0) = cplx(1, 0);
  const int users[] = {0};
  const NoiseModel noise{1.0};

  SUBCASE("approx rate is bits minus the surrogate entropy") {
    const UserRates r = user_rates(P, h, mode, 0, users, RateMethod::approx, noise);
    CHECK(r.r_p_sic == doctest::Approx(1.0 - std::log2(1.0 + std::exp(-2.0))).epsilon(1e-12));
    CHECK(r.r_p_sic == r.r_p_sicfree);
    CHECK(r.r_c == 0.0);
  }
  SUBCASE("exact rate matches the quadrature oracle") {
    const McConfig mc{20000, 17};
    const UserRates r = user_rates(P, h, mode, 0, users, RateMethod::exact, noise, &mc);
    const double oracle = 1.0 - quadrature_exact_entropy({cplx(1, 0), cplx(-1, 0)}, 1.0);
    CHECK(std::abs(r.r_p_sic - oracle) <= 3.0 * r.r_p_sic_stderr);
    CHECK(r.r_p_sic_stderr > 0.0);
  }
}

TEST_CASE("orthogonal shared-stream precoder zeroes the shared rate") {
  TransmissionMode mode;
  mode.common = kQpsk;
  mode.priv = kQpsk;
  mode.r_max_bits = 6;
  Eigen::VectorXcd h(2);
  h << cplx(1, 0), cplx(0.3, -0.4);
  // Column 0 (shared) orthogonal to h; two private columns arbitrary.
  Eigen::MatrixXcd P(2, 3);
  P.col(0) << -std::conj(h(1)), std::conj(h(0));
  P.col(1) << cplx(0.7, 0.1), cplx(-0.2, 0.5);
  P.col(2) << cplx(0.1, -0.9), cplx(0.4, 0.3);
  const int users[] = {0, 1};
  const NoiseModel noise{0.5};

  const UserRates approx = user_rates(P, h, mode, 0, users, RateMethod::approx, noise);
  CHECK(approx.r_c == 0.0);
  CHECK(approx.r_p_sic == approx.r_p_sicfree);

  const McConfig mc{3000, 23};
  const UserRates exact = user_rates(P, h, mode, 0, users, RateMethod::exact, noise, &mc);
  // Exact-path estimates carry the pruned stream as an integer offset inside
  // each term; the offsets cancel up to summation rounding.
  CHECK(std::abs(exact.r_c) < 1e-12);
  CHECK(exact.r_p_sic == exact.r_p_sicfree);
}

TEST_CASE("zero-forcing privates reduce to the single-user rate") {
  CounterRng rng(derive_key({91, 2}));
  // Channels on disjoint antenna supports, so the cross gains h_k^H p_j are
  // exactly zero (not merely tiny) and the zero-gain pruning path is hit.
  Eigen::VectorXcd h0 = Eigen::VectorXcd::Zero(3), h1 = Eigen::VectorXcd::Zero(3);
  h0(0) = rng.next_cnormal();
  h1(1) = rng.next_cnormal();
  Eigen::MatrixXcd P = Eigen::MatrixXcd::Zero(3, 2);
  P(0, 0) = rng.next_cnormal();
  P(2, 0) = rng.next_cnormal();
  P(1, 1) = rng.next_cnormal();
  P(2, 1) = rng.next_cnormal();
  TransmissionMode mode;
  mode.priv = standard_constellation(ConstellationName::qam8);
  mode.r_max_bits = 6;
  const int users[] = {0, 1};
  const NoiseModel noise{1.0};
  const McConfig mc{4000, 29};

  const UserRates two = user_rates(P, h0, mode, 0, users, RateMethod::exact, noise, &mc);

  Eigen::MatrixXcd P1(3, 1);
  P1.col(0) = P.col(0);
  const int solo[] = {0};
  const UserRates one = user_rates(P1, h0, mode, 0, solo, RateMethod::exact, noise, &mc);

  // The cross gain is exactly zero, so the pruned term sets coincide and the
  // shared noise draws make the two estimates identical.
  CHECK(two.r_p_sic == doctest::Approx(one.r_p_sic).epsilon(1e-12));

  const McConfig mc2{4000, 31};
  const UserRates other = user_rates(P1, h0, mode, 0, solo, RateMethod::exact, noise, &mc2);
  CHECK(std::abs(two.r_p_sic - other.r_p_sic) <=
        3.0 * (two.r_p_sic_stderr + other.r_p_sic_stderr));
}

TEST_CASE("rate_report assembles per-user results") {
  TransmissionMode mode;
  mode.common = kQpsk;
  mode.priv = kQpsk;
  mode.r_max_bits = 6;
  const NoiseModel noise{1.0};
  CounterRng rng(derive_key({17, 5}));

  SUBCASE("symmetric channels give equal shared rates") {
    Eigen::VectorXcd h = random_vector(2, rng);
    std::vector<Eigen::VectorXcd> channels = {h, h};
    const Eigen::MatrixXcd P = random_matrix(2, 3, rng);
    const RateReport rep = rate_report(P, channels, mode, RateMethod::approx, noise);
    CHECK(rep.r_c_per_user[0] == rep.r_c_per_user[1]);
    CHECK(rep.r_c == rep.r_c_per_user[0]);
  }
  SUBCASE("shared rate is the minimum and everything is clamped to range") {
    std::vector<Eigen::VectorXcd> channels = {random_vector(2, rng), random_vector(2, rng),
                                              random_vector(2, rng)};
    const Eigen::MatrixXcd P = random_matrix(2, 4, rng);
    const RateReport rep = rate_report(P, channels, mode, RateMethod::approx, noise);
    for (double rc : rep.r_c_per_user) {
      CHECK(rep.r_c <= rc);
      CHECK(rc >= 0.0);
      CHECK(rc <= 2.0);
    }
    for (int k = 0; k < 3; ++k) {
      CHECK(rep.r_p(k, Receiver::sic) >= 0.0);
      CHECK(rep.r_p(k, Receiver::sic) <= 2.0);
      CHECK(rep.r_p(k, Receiver::sic_free) >= 0.0);
      CHECK(rep.r_p(k, Receiver::sic_free) <= 2.0);
    }
  }
  SUBCASE("single user: shared rate equals its only entry") {
    std::vector<Eigen::VectorXcd> channels = {random_vector(2, rng)};
    const Eigen::MatrixXcd P = random_matrix(2, 2, rng);
    const RateReport rep = rate_report(P, channels, mode, RateMethod::approx, noise);
    CHECK(rep.r_c == rep.r_c_per_user[0]);
  }
}

TEST_CASE("entropy gradient vanishes for a zero channel") {
  const Eigen::MatrixXcd P = Eigen::MatrixXcd::Random(2, 3);
  const Eigen::VectorXcd h = Eigen::VectorXcd::Zero(2);
  const int cols[] = {0, 1, 2};
  const Constellation* alphas[] = {&kQpsk, &kQpsk, &kQpsk};
  const Eigen::MatrixXcd g = entropy_approx_gradient(P, h, cols, alphas, NoiseModel{1.0});
  CHECK(g.norm() == 0.0);
}

TEST_CASE("entropy gradient matches the scalar BPSK derivative") {
  // f(g) = log2(1 + exp(-2 g^2 / sigma2)) for the set {g, -g}:
  // df/dg = -(4 g / (sigma2 ln 2)) q / (1 + q), q = exp(-2 g^2 / sigma2).
  const double g0 = 0.8, sigma2 = 0.9;
  Eigen::MatrixXcd P(1, 1);
  P(0, 0) = cplx(g0, 0);
  Eigen::VectorXcd h(1);
  h(0) = cplx(1, 0);
  const int cols[] = {0};
  const Constellation* alphas[] = {&kBpsk};
  const Eigen::MatrixXcd grad = entropy_approx_gradient(P, h, cols, alphas, NoiseModel{sigma2});

  const double q = std::exp(-2.0 * g0 * g0 / sigma2);
  const double want = -(4.0 * g0 / (sigma2 * std::numbers::ln2)) * q / (1.0 + q);
  CHECK(2.0 * grad(0, 0).real() == doctest::Approx(want).epsilon(1e-8));
  CHECK(std::abs(grad(0, 0).imag()) < 1e-12);
}

TEST_CASE("entropy gradient matches central finite differences") {
  const NoiseModel noise{1.0};
  const int cols[] = {0, 1, 2};
  const Constellation* alphas[] = {&kQpsk, &kQpsk, &kQpsk};
  for (std::uint64_t trial = 0; trial < 10; ++trial) {
    CounterRng rng(derive_key({55, trial}));
    const Eigen::MatrixXcd P = 0.8 * random_matrix(2, 3, rng);
    const Eigen::VectorXcd h = random_vector(2, rng);
    const Eigen::MatrixXcd grad = entropy_approx_gradient(P, h, cols, alphas, noise);
    const auto f = [&](const Eigen::MatrixXcd& Q) {
      std::vector<cplx> gains;
      for (int c : cols) gains.push_back(h.dot(Q.col(c)));
      const Constellation arr[] = {kQpsk, kQpsk, kQpsk};
      return cond_entropy_approx(effective_points(gains, arr), noise);
    };
    CAPTURE(trial);
    CHECK(max_rel_fd_error(P, grad, f) < 1e-5);
  }
}

TEST_CASE("rate gradients match central finite differences") {
  TransmissionMode mode;
  mode.common = kQpsk;
  mode.priv = kQpsk;
  mode.r_max_bits = 6;
  const NoiseModel noise{1.0};
  const int users[] = {0, 1};
  for (std::uint64_t trial = 0; trial < 5; ++trial) {
    CounterRng rng(derive_key({77, trial}));
    const Eigen::MatrixXcd P = 0.7 * random_matrix(2, 3, rng);
    const Eigen::VectorXcd h = random_vector(2, rng);
    CAPTURE(trial);

    const Eigen::MatrixXcd gc = rate_c_gradient(P, h, mode, users, noise);
    CHECK(max_rel_fd_error(P, gc, [&](const Eigen::MatrixXcd& Q) {
            return user_rates(Q, h, mode, 0, users, RateMethod::approx, noise).r_c;
          }) < 1e-5);

    const Eigen::MatrixXcd gs = rate_p_gradient(P, h, mode, 0, users, Receiver::sic, noise);
    CHECK(max_rel_fd_error(P, gs, [&](const Eigen::MatrixXcd& Q) {
            return user_rates(Q, h, mode, 0, users, RateMethod::approx, noise).r_p_sic;
          }) < 1e-5);

    const Eigen::MatrixXcd gf = rate_p_gradient(P, h, mode, 1, users, Receiver::sic_free, noise);
    CHECK(max_rel_fd_error(P, gf, [&](const Eigen::MatrixXcd& Q) {
            return user_rates(Q, h, mode, 1, users, RateMethod::approx, noise).r_p_sicfree;
          }) < 1e-5);
  }
}

TEST_CASE("sic gap behaviour") {
  TransmissionMode mode;
  mode.common = kQpsk;
  mode.priv = kQpsk;
  mode.r_max_bits = 6;
  const int users[] = {0, 1};
  const NoiseModel noise{1.0};
  const McConfig mc{4000, 41};

  SUBCASE("orthogonal shared precoder gives a zero gap") {
    Eigen::VectorXcd h(2);
    h << cplx(1, 0), cplx(0.5, 0.5);
    Eigen::MatrixXcd P(2, 3);
    P.col(0) << -std::conj(h(1)), std::conj(h(0));
    P.col(1) << cplx(0.4, 0), cplx(0.1, -0.3);
    P.col(2) << cplx(-0.2, 0.6), cplx(0.3, 0.2);
    const McEstimate gap = sic_gap_exact(P, h, mode, 0, users, noise, mc);
    // The pruned shared stream contributes an integer offset to each term, so
    // only summation rounding (~1e-18) can survive in the difference.
    CHECK(std::abs(gap.value) < 1e-12);
  }
  SUBCASE("moderate shared gain: gap nonnegative within MC error") {
    CounterRng rng(derive_key({43, 7}));
    const Eigen::MatrixXcd P = random_matrix(2, 3, rng);
    const Eigen::VectorXcd h = random_vector(2, rng);
    const McEstimate gap = sic_gap_exact(P, h, mode, 0, users, noise, mc);
    CHECK(gap.value >= -3.0 * gap.std_error);
  }
  SUBCASE("large shared gain: finite-alphabet interference is removable") {
    CounterRng rng(derive_key({43, 8}));
    Eigen::MatrixXcd P = random_matrix(2, 3, rng);
    const Eigen::VectorXcd h = random_vector(2, rng);
    P.col(0) *= 100.0;
    const McEstimate gap = sic_gap_exact(P, h, mode, 0, users, noise, mc);
    CHECK(std::abs(gap.value) < 0.05);
  }
}

TEST_CASE("stream layout follows the column convention") {
  TransmissionMode with_common;
  with_common.common = kQpsk;
  with_common.priv = kQpsk;
  const StreamLayout a = stream_layout(with_common, 3);
  CHECK(a.common_col == 0);
  REQUIRE(a.private_cols.size() == 3);
  CHECK(a.private_cols[0] == 1);
  CHECK(a.private_cols[2] == 3);

  TransmissionMode no_common;
  no_common.priv = kQpsk;
  const StreamLayout b = stream_layout(no_common, 2);
  CHECK(b.common_col == -1);
  CHECK(b.private_cols[0] == 0);
  CHECK(b.private_cols[1] == 1);

  TransmissionMode only_common;
  only_common.common = kQpsk;
  const StreamLayout c = stream_layout(only_common, 2);
  CHECK(c.common_col == 0);
  REQUIRE(c.private_cols.size() == 2);  // -1 sentinel per user: no private column
  CHECK(c.private_cols[0] == -1);
  CHECK(c.private_cols[1] == -1);
}
