// Experiment driver: JSON configuration, adaptive mode search, ergodic sweeps
// over seeded channel realizations, rate-region sweeps, CSV/JSON emission.
#pragma once

#include <json.hpp>
#include <stdexcept>
#include <string>

#include "rsopt/baselines.hpp"
#include "rsopt/channel.hpp"
#include "rsopt/largescale.hpp"
#include "rsopt/optimizer.hpp"

namespace rsopt {

enum class Scheme { rsma_sic, rsma_sicfree, sdma, noma };
enum class Objective { wsr, mmf };

std::string scheme_name(Scheme s);
Scheme scheme_from_string(const std::string& s);
std::string objective_name(Objective o);
Objective objective_from_string(const std::string& s);

// Malformed configuration; the message names the offending key.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ExperimentConfig {
  Scheme scheme = Scheme::rsma_sic;
  Objective objective = Objective::wsr;
  std::vector<double> weights;  // defaults to all-ones
  ArrayGeometry array;
  std::vector<UserGeometry> users;
  std::vector<double> snr_db;
  std::vector<TransmissionMode> dictionary;
  int realizations = 1;
  std::uint64_t seed = 0;
  OptimizerConfig optimizer;  // p_t is overwritten per SNR point
  bool large_scale = false;
  RateMethod method = RateMethod::approx;
  McConfig mc;
  int threads = 1;
  nlohmann::json echo;  // the parsed document, for metadata
};

ExperimentConfig parse_config(const nlohmann::json& doc);
ExperimentConfig load_config(const std::string& path);

struct ModeSearchResult {
  int mode_index = 1;  // 1-based index into the dictionary
  OptimizeResult result;
};

// Optimize every dictionary mode and keep the best final objective (lowest
// index on ties). Modes whose point sets blow the pair budget are skipped;
// if all are skipped the collected diagnostics are thrown.
ModeSearchResult mode_search(std::span<const Eigen::VectorXcd> channels,
                             std::span<const TransmissionMode> dict, Objective objective,
                             std::span<const double> weights, Receiver rx,
                             const NoiseModel& noise, const OptimizerConfig& cfg);

struct GroupedModeSearchResult {
  int mode_index = 1;
  GroupedOptimizeResult result;
};

GroupedModeSearchResult grouped_mode_search(const GroupingPlan& plan,
                                            std::span<const TransmissionMode> dict,
                                            Objective objective, std::span<const double> weights,
                                            Receiver rx, const NoiseModel& noise,
                                            const OptimizerConfig& cfg);

// One (snr, realization) cell: optimize under the configured scheme and
// evaluate the final precoder with the configured method.
struct InstanceResult {
  int mode_index = 1;
  double objective = 0.0;         // per config.method (approx: optimizer value)
  double common_power_ratio = 0.0;
  Eigen::MatrixXcd precoder;      // expanded to antenna space
  std::vector<double> allocation;
  std::vector<double> trace;
  int iterations = 0;
  bool converged = false;
  std::vector<Eigen::VectorXcd> channels;
  std::vector<double> per_user_rate;  // c_k + private rate, per the eval method
};

InstanceResult optimize_instance(const ExperimentConfig& cfg, double snr_db, int realization);

struct SweepRow {
  double snr_db = 0.0;
  std::string scheme;
  double objective_mean = 0.0;
  double objective_stderr = 0.0;
  double common_power_ratio = 0.0;
  double mode_index_mean = 0.0;
  int realizations = 0;
};

std::vector<SweepRow> ergodic_sweep(const ExperimentConfig& cfg);
std::string sweep_csv(std::span<const SweepRow> rows);

struct RegionPoint {
  double u1 = 0.0, u2 = 0.0;
  double r1_mean = 0.0, r1_stderr = 0.0;
  double r2_mean = 0.0, r2_stderr = 0.0;
  bool frontier = false;
};

// 2-user weighted-sum sweep over a fixed weight grid (u1=1, u2 log-spaced in
// [1e-2, 1e2], 21 points, plus the swapped pairs); uses the first SNR point.
std::vector<RegionPoint> rate_region(const ExperimentConfig& cfg);
std::string region_csv(std::span<const RegionPoint> points);

nlohmann::json run_metadata(const ExperimentConfig& cfg, const std::string& command);

// JSON helpers shared with the CLI ([re, im] pairs, rows of a matrix).
nlohmann::json matrix_to_json(const Eigen::MatrixXcd& m);
Eigen::MatrixXcd matrix_from_json(const nlohmann::json& doc, const std::string& key);
nlohmann::json vector_to_json(const Eigen::VectorXcd& v);

inline constexpr const char* kLibraryVersion = "0.1.0";

}  // namespace rsopt
