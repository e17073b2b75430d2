#include "rsopt/constellation.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace rsopt {

namespace {

// Rectangular grid of odd-integer coordinates, ny columns by nz rows,
// normalized to unit average power. Covers BPSK (2x1) through 512QAM (32x16).
Constellation rect_grid(int ny, int nz, int bits) {
  Constellation c;
  c.bits = bits;
  c.points.reserve(static_cast<std::size_t>(ny) * nz);
  double power = 0.0;
  for (int row = 0; row < nz; ++row) {
    for (int col = 0; col < ny; ++col) {
      const double re = static_cast<double>(2 * col - ny + 1);
      const double im = static_cast<double>(2 * row - nz + 1);
      c.points.emplace_back(re, im);
      power += re * re + im * im;
    }
  }
  const double scale = 1.0 / std::sqrt(power / static_cast<double>(c.points.size()));
  for (auto& p : c.points) p *= scale;
  return c;
}

}  // namespace

ConstellationName constellation_from_string(const std::string& name) {
  if (name == "BPSK") return ConstellationName::bpsk;
  if (name == "QPSK") return ConstellationName::qpsk;
  if (name == "8QAM") return ConstellationName::qam8;
  if (name == "16QAM") return ConstellationName::qam16;
  if (name == "64QAM") return ConstellationName::qam64;
  if (name == "256QAM") return ConstellationName::qam256;
  if (name == "512QAM") return ConstellationName::qam512;
  throw std::invalid_argument("unknown constellation name: " + name);
}

std::string to_string(ConstellationName name) {
  switch (name) {
    case ConstellationName::bpsk: return "BPSK";
    case ConstellationName::qpsk: return "QPSK";
    case ConstellationName::qam8: return "8QAM";
    case ConstellationName::qam16: return "16QAM";
    case ConstellationName::qam64: return "64QAM";
    case ConstellationName::qam256: return "256QAM";
    case ConstellationName::qam512: return "512QAM";
  }
  throw std::invalid_argument("bad constellation enum");
}

Constellation standard_constellation(ConstellationName name) {
  switch (name) {
    case ConstellationName::bpsk: return rect_grid(2, 1, 1);
    case ConstellationName::qpsk: return rect_grid(2, 2, 2);
    case ConstellationName::qam8: return rect_grid(4, 2, 3);
    case ConstellationName::qam16: return rect_grid(4, 4, 4);
    case ConstellationName::qam64: return rect_grid(8, 8, 6);
    case ConstellationName::qam256: return rect_grid(16, 16, 8);
    case ConstellationName::qam512: return rect_grid(32, 16, 9);
  }
  throw std::invalid_argument("bad constellation enum");
}

namespace {

TransmissionMode make_mode(const char* common, const char* priv, int r_max_bits) {
  TransmissionMode m;
  if (common) m.common = standard_constellation(constellation_from_string(common));
  if (priv) m.priv = standard_constellation(constellation_from_string(priv));
  m.r_max_bits = r_max_bits;
  return m;
}

void validate_mode_bits(const TransmissionMode& m, int num_users, int index) {
  const int total = m.common_bits() + num_users * m.private_bits();
  if (total != m.r_max_bits)
    throw std::invalid_argument("mode " + std::to_string(index + 1) + ": " +
                                std::to_string(m.common_bits()) + "+" +
                                std::to_string(num_users) + "*" +
                                std::to_string(m.private_bits()) + " bits != r_max_bits=" +
                                std::to_string(m.r_max_bits));
  if (!m.common && !m.priv)
    throw std::invalid_argument("mode " + std::to_string(index + 1) + " has no streams");
  if (index == 0 && m.common)
    throw std::invalid_argument("mode 1 must have an empty common constellation");
}

}  // namespace

std::vector<TransmissionMode> mode_dictionary(int num_users, int r_max_bits) {
  std::vector<TransmissionMode> dict;
  if (num_users == 2 && r_max_bits == 6) {
    dict = {make_mode(nullptr, "8QAM", 6), make_mode("QPSK", "QPSK", 6),
            make_mode("16QAM", "BPSK", 6), make_mode("64QAM", nullptr, 6)};
  } else if (num_users == 2 && r_max_bits == 8) {
    dict = {make_mode(nullptr, "16QAM", 8), make_mode("QPSK", "8QAM", 8),
            make_mode("16QAM", "QPSK", 8), make_mode("64QAM", "BPSK", 8),
            make_mode("256QAM", nullptr, 8)};
  } else if (num_users == 3 && r_max_bits == 6) {
    dict = {make_mode(nullptr, "QPSK", 6), make_mode("8QAM", "BPSK", 6),
            make_mode("64QAM", nullptr, 6)};
  } else if (num_users == 3 && r_max_bits == 9) {
    dict = {make_mode(nullptr, "8QAM", 9), make_mode("8QAM", "QPSK", 9),
            make_mode("64QAM", "BPSK", 9), make_mode("512QAM", nullptr, 9)};
  } else {
    throw std::invalid_argument("no built-in mode dictionary for K=" +
                                std::to_string(num_users) + ", r_max_bits=" +
                                std::to_string(r_max_bits) +
                                "; supply a dictionary file");
  }
  for (std::size_t i = 0; i < dict.size(); ++i)
    validate_mode_bits(dict[i], num_users, static_cast<int>(i));
  return dict;
}

std::vector<TransmissionMode> mode_dictionary_from_json(const nlohmann::json& doc) {
  for (const char* key : {"K", "r_max_bits", "modes"})
    if (!doc.contains(key))
      throw std::invalid_argument(std::string("mode dictionary missing key \"") + key + "\"");
  const int num_users = doc.at("K").get<int>();
  const int r_max_bits = doc.at("r_max_bits").get<int>();
  std::vector<TransmissionMode> dict;
  for (const auto& entry : doc.at("modes")) {
    TransmissionMode m;
    m.r_max_bits = r_max_bits;
    if (entry.contains("common") && !entry.at("common").is_null())
      m.common = standard_constellation(
          constellation_from_string(entry.at("common").get<std::string>()));
    if (entry.contains("private") && !entry.at("private").is_null())
      m.priv = standard_constellation(
          constellation_from_string(entry.at("private").get<std::string>()));
    validate_mode_bits(m, num_users, static_cast<int>(dict.size()));
    dict.push_back(std::move(m));
  }
  if (dict.empty()) throw std::invalid_argument("mode dictionary has no modes");
  return dict;
}

std::vector<TransmissionMode> load_mode_dictionary(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open mode dictionary file: " + path);
  nlohmann::json doc;
  in >> doc;
  return mode_dictionary_from_json(doc);
}

EffectivePointSet effective_points(std::span<const cplx> gains,
                                   std::span<const Constellation> alphabets) {
  if (gains.size() != alphabets.size())
    throw std::invalid_argument("effective_points: |gains| != |alphabets|");
  EffectivePointSet out;
  out.points = {cplx{0.0, 0.0}};
  for (std::size_t a = 0; a < alphabets.size(); ++a) {
    out.source_cardinalities.push_back(static_cast<int>(alphabets[a].size()));
    std::vector<cplx> next;
    next.reserve(out.points.size() * alphabets[a].size());
    for (const cplx& base : out.points)
      for (const cplx& x : alphabets[a].points) next.push_back(base + gains[a] * x);
    out.points = std::move(next);
  }
  return out;
}

PairCount pair_count(std::span<const Constellation> alphabets) {
  PairCount pc;
  std::uint64_t prod = 1;
  for (const auto& a : alphabets) {
    if (__builtin_mul_overflow(prod, static_cast<std::uint64_t>(a.size()), &prod)) {
      pc.pairs = UINT64_MAX;
      pc.saturated = true;
      return pc;
    }
  }
  if (__builtin_mul_overflow(prod, prod, &pc.pairs)) {
    pc.pairs = UINT64_MAX;
    pc.saturated = true;
  }
  return pc;
}

}  // namespace rsopt
