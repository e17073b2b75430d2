#include <doctest.h>

#include <cmath>
#include <vector>

#include "rsopt/rng.hpp"
#include "rsopt/stats.hpp"

using namespace rsopt;

TEST_CASE("counter rng is reproducible and key-sensitive") {
  CounterRng a(42), b(42), c(43);
  for (int i = 0; i < 16; ++i) {
    const std::uint64_t x = a.next_u64();
    CHECK(x == b.next_u64());
  }
  bool any_diff = false;
  CounterRng a2(42);
  for (int i = 0; i < 16; ++i) any_diff = any_diff || a2.next_u64() != c.next_u64();
  CHECK(any_diff);
}

TEST_CASE("derive_key separates streams") {
  CHECK(derive_key({1, 2}) != derive_key({2, 1}));
  CHECK(derive_key({1}) != derive_key({1, 0}));
  CHECK(derive_key({7, 3, 1}) == derive_key({7, 3, 1}));
}

TEST_CASE("complex normals have the CN(0,1) moments") {
  CounterRng rng(7);
  const int n = 200000;
  double mean_re = 0, mean_im = 0, power = 0;
  for (int i = 0; i < n; ++i) {
    const std::complex<double> z = rng.next_cnormal();
    mean_re += z.real();
    mean_im += z.imag();
    power += std::norm(z);
  }
  mean_re /= n;
  mean_im /= n;
  power /= n;
  CHECK(std::abs(mean_re) < 0.01);
  CHECK(std::abs(mean_im) < 0.01);
  CHECK(power == doctest::Approx(1.0).epsilon(0.02));
}

TEST_CASE("unit draws stay inside (0, 1]") {
  CounterRng rng(11);
  for (int i = 0; i < 10000; ++i) {
    const double u = rng.next_unit();
    CHECK(u > 0.0);
    CHECK(u <= 1.0);
  }
}

TEST_CASE("pairwise_sum is deterministic and exact on structured input") {
  std::vector<double> xs;
  for (int i = 0; i < 1000; ++i) xs.push_back(0.1 * i);
  const double s1 = pairwise_sum(xs);
  const double s2 = pairwise_sum(xs);
  CHECK(s1 == s2);  // bit-identical
  CHECK(s1 == doctest::Approx(0.1 * 999 * 1000 / 2).epsilon(1e-12));
}

TEST_CASE("mean and std_error match hand calculation") {
  const std::vector<double> xs = {1.0, 2.0, 3.0, 4.0};
  CHECK(mean(xs) == doctest::Approx(2.5).epsilon(1e-15));
  // sample variance = ((1.5^2 + .5^2) * 2) / 3 = 5/3; stderr = sqrt(5/3/4)
  CHECK(std_error(xs) == doctest::Approx(std::sqrt(5.0 / 3.0 / 4.0)).epsilon(1e-12));
}

TEST_CASE("rng algorithm name is exposed for run metadata") {
  CHECK(std::string(CounterRng::algorithm()).find("splitmix64") != std::string::npos);
}
