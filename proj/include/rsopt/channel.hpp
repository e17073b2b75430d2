// Synthetic multi-antenna channels: uniform linear/rectangular arrays with
// line-of-sight steering plus Rician-faded scatter.
#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <span>
#include <vector>

namespace rsopt {

enum class ArrayKind { ula, ura };

struct ArrayGeometry {
  ArrayKind kind = ArrayKind::ula;
  int n_y = 1;           // elements along the y axis
  int n_z = 1;           // elements along the z axis (1 for a linear array)
  double spacing = 0.5;  // element spacing in wavelengths
  int size() const { return n_y * n_z; }
};

struct UserGeometry {
  double azimuth = 0.0;    // radians
  double elevation = 0.0;  // radians (ignored for a linear array)
  double kappa_db = 10.0;  // line-of-sight to scatter power ratio, in dB
};

// Unit-modulus steering entries exp(j 2 pi spacing (m sin(az) cos(el) + n sin(el))),
// flattened with the y index varying fastest.
Eigen::VectorXcd steering_vector(const ArrayGeometry& array, double azimuth, double elevation);

// One Rician draw: sqrt(kappa/(1+kappa)) * steering + sqrt(1/(1+kappa)) * scatter,
// scatter entries CN(0,1) drawn from (seed, user_index) only.
Eigen::VectorXcd rician_sample(const ArrayGeometry& array, const UserGeometry& user,
                               std::uint64_t seed, int user_index);

std::vector<Eigen::VectorXcd> rician_channels(const ArrayGeometry& array,
                                              std::span<const UserGeometry> users,
                                              std::uint64_t seed);

}  // namespace rsopt
