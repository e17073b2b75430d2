// Finite constellations, transmission-mode dictionaries and the effective
// received-point multisets whose pairwise differences drive the rate math.
#pragma once

#include <complex>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace rsopt {

using cplx = std::complex<double>;

enum class ConstellationName { bpsk, qpsk, qam8, qam16, qam64, qam256, qam512 };

ConstellationName constellation_from_string(const std::string& name);
std::string to_string(ConstellationName name);

/// A zero-mean, unit-average-power symbol alphabet of cardinality 2^bits.
struct Constellation {
  std::vector<cplx> points;  // row-major grid order for QAM layouts
  int bits = 0;

  std::size_t size() const { return points.size(); }
};

/// Builds one of the standard layouts. 8QAM is the rectangular 4x2 grid and
/// 512QAM the rectangular 32x16 grid; both normalized to unit average power.
Constellation standard_constellation(ConstellationName name);

/// One (common, private) constellation pairing. Either stream may be absent:
/// mode 1 of every dictionary has no common stream (SDMA), and the last mode
/// carries the whole bit budget on the common stream alone.
struct TransmissionMode {
  std::optional<Constellation> common;
  std::optional<Constellation> priv;  // shared by all private streams
  int r_max_bits = 0;

  int common_bits() const { return common ? common->bits : 0; }
  int private_bits() const { return priv ? priv->bits : 0; }
};

/// Built-in dictionaries for (K, r_max_bits) in {(2,6), (2,8), (3,6), (3,9)}.
/// Throws std::invalid_argument for other keys.
std::vector<TransmissionMode> mode_dictionary(int num_users, int r_max_bits);

/// Parses {"K": int, "r_max_bits": int, "modes": [{"common": str|null,
/// "private": str|null}, ...]} and validates the per-mode bit budget.
std::vector<TransmissionMode> mode_dictionary_from_json(const nlohmann::json& doc);
std::vector<TransmissionMode> load_mode_dictionary(const std::string& path);

/// Multiset {sum_a gains[a] * x_a : x_a in alphabets[a]}. The empty product is
/// the single point 0. Point order follows mixed-radix index order with the
/// last alphabet varying fastest.
struct EffectivePointSet {
  std::vector<cplx> points;
  std::vector<int> source_cardinalities;
};

EffectivePointSet effective_points(std::span<const cplx> gains,
                                   std::span<const Constellation> alphabets);

/// Number of (m,l) difference evaluations for one conditional-entropy term,
/// (prod |X_a|)^2, saturating at uint64 max.
struct PairCount {
  static constexpr double kDefaultPairBudget = 1e9;

  std::uint64_t pairs = 1;
  bool saturated = false;

  bool tractable(double budget = kDefaultPairBudget) const {
    return !saturated && static_cast<double>(pairs) <= budget;
  }
};

PairCount pair_count(std::span<const Constellation> alphabets);

}  // namespace rsopt
