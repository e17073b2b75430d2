#include "rsopt/channel.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "rsopt/rng.hpp"

namespace rsopt {

Eigen::VectorXcd steering_vector(const ArrayGeometry& array, double azimuth, double elevation) {
  if (array.n_y < 1 || array.n_z < 1) throw std::invalid_argument("array needs elements");
  if (array.kind == ArrayKind::ula && array.n_z != 1)
    throw std::invalid_argument("a linear array has a single row");
  const double el = array.kind == ArrayKind::ula ? 0.0 : elevation;
  const double ky = std::sin(azimuth) * std::cos(el);
  const double kz = std::sin(el);
  Eigen::VectorXcd a(array.size());
  for (int n = 0; n < array.n_z; ++n)
    for (int m = 0; m < array.n_y; ++m) {
      const double phase = 2.0 * std::numbers::pi * array.spacing * (m * ky + n * kz);
      a(n * array.n_y + m) = std::complex<double>(std::cos(phase), std::sin(phase));
    }
  return a;
}

Eigen::VectorXcd rician_sample(const ArrayGeometry& array, const UserGeometry& user,
                               std::uint64_t seed, int user_index) {
  const double kappa = std::pow(10.0, user.kappa_db / 10.0);
  const Eigen::VectorXcd los = steering_vector(array, user.azimuth, user.elevation);
  CounterRng rng(derive_key({seed, static_cast<std::uint64_t>(user_index)}));
  Eigen::VectorXcd scatter(array.size());
  for (int i = 0; i < array.size(); ++i) scatter(i) = rng.next_cnormal();
  return std::sqrt(kappa / (kappa + 1.0)) * los + std::sqrt(1.0 / (kappa + 1.0)) * scatter;
}

std::vector<Eigen::VectorXcd> rician_channels(const ArrayGeometry& array,
                                              std::span<const UserGeometry> users,
                                              std::uint64_t seed) {
  std::vector<Eigen::VectorXcd> out;
  out.reserve(users.size());
  for (std::size_t k = 0; k < users.size(); ++k)
    out.push_back(rician_sample(array, users[k], seed, static_cast<int>(k)));
  return out;
}

}  // namespace rsopt
