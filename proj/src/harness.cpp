#include "rsopt/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <limits>
#include <mutex>
#include <sstream>
#include <thread>

#include "rsopt/rng.hpp"
#include "rsopt/stats.hpp"

namespace rsopt {

std::string scheme_name(Scheme s) {
  switch (s) {
    case Scheme::rsma_sic: return "rsma_sic";
    case Scheme::rsma_sicfree: return "rsma_sicfree";
    case Scheme::sdma: return "sdma";
    case Scheme::noma: return "noma";
  }
  return "?";
}

Scheme scheme_from_string(const std::string& s) {
  if (s == "rsma_sic") return Scheme::rsma_sic;
  if (s == "rsma_sicfree") return Scheme::rsma_sicfree;
  if (s == "sdma") return Scheme::sdma;
  if (s == "noma") return Scheme::noma;
  throw ConfigError("key \"scheme\" must be one of rsma_sic, rsma_sicfree, sdma, noma");
}

std::string objective_name(Objective o) { return o == Objective::wsr ? "wsr" : "mmf"; }

Objective objective_from_string(const std::string& s) {
  if (s == "wsr") return Objective::wsr;
  if (s == "mmf") return Objective::mmf;
  throw ConfigError("key \"objective\" must be wsr or mmf");
}

namespace {

const nlohmann::json& require_key(const nlohmann::json& j, const char* key) {
  if (!j.is_object() || !j.contains(key))
    throw ConfigError(std::string("missing required key \"") + key + "\"");
  return j.at(key);
}

double as_number(const nlohmann::json& j, const char* key) {
  if (!j.is_number()) throw ConfigError(std::string("key \"") + key + "\" must be a number");
  return j.get<double>();
}

int as_int(const nlohmann::json& j, const char* key) {
  if (!j.is_number_integer())
    throw ConfigError(std::string("key \"") + key + "\" must be an integer");
  return j.get<int>();
}

std::string as_string(const nlohmann::json& j, const char* key) {
  if (!j.is_string()) throw ConfigError(std::string("key \"") + key + "\" must be a string");
  return j.get<std::string>();
}

ArrayGeometry parse_array(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("key \"array\" must be an object");
  ArrayGeometry a;
  const std::string kind = as_string(require_key(j, "kind"), "array.kind");
  if (kind == "ula")
    a.kind = ArrayKind::ula;
  else if (kind == "ura")
    a.kind = ArrayKind::ura;
  else
    throw ConfigError("key \"array.kind\" must be ula or ura");
  a.n_y = as_int(require_key(j, "n_y"), "array.n_y");
  a.n_z = a.kind == ArrayKind::ura ? as_int(require_key(j, "n_z"), "array.n_z") : 1;
  if (j.contains("spacing")) a.spacing = as_number(j.at("spacing"), "array.spacing");
  if (a.n_y < 1 || a.n_z < 1) throw ConfigError("key \"array\" needs positive element counts");
  return a;
}

std::vector<UserGeometry> parse_users(const nlohmann::json& j) {
  if (!j.is_array() || j.empty()) throw ConfigError("key \"users\" must be a non-empty array");
  std::vector<UserGeometry> out;
  for (const auto& u : j) {
    if (!u.is_object()) throw ConfigError("key \"users\" entries must be objects");
    UserGeometry g;
    g.azimuth = as_number(require_key(u, "azimuth_rad"), "users[].azimuth_rad");
    if (u.contains("elevation_rad")) g.elevation = as_number(u.at("elevation_rad"), "users[].elevation_rad");
    if (u.contains("kappa_db")) g.kappa_db = as_number(u.at("kappa_db"), "users[].kappa_db");
    out.push_back(g);
  }
  return out;
}

std::vector<TransmissionMode> parse_dictionary(const nlohmann::json& j) {
  if (j.is_object() && j.contains("modes")) return mode_dictionary_from_json(j);
  if (j.is_object() && j.contains("file"))
    return load_mode_dictionary(as_string(j.at("file"), "dictionary.file"));
  if (j.is_object() && j.contains("k") && j.contains("r_max"))
    return mode_dictionary(as_int(j.at("k"), "dictionary.k"),
                           as_int(j.at("r_max"), "dictionary.r_max"));
  throw ConfigError(
      "key \"dictionary\" must give {k, r_max}, {file}, or an inline {K, r_max_bits, modes} table");
}

OptimizerConfig parse_optimizer(const nlohmann::json& j, OptimizerConfig base) {
  if (!j.is_object()) throw ConfigError("key \"optimizer\" must be an object");
  for (const auto& [key, value] : j.items()) {
    if (key == "epsilon")
      base.epsilon = as_number(value, "optimizer.epsilon");
    else if (key == "v_max")
      base.v_max = as_int(value, "optimizer.v_max");
    else if (key == "alpha")
      base.alpha = as_number(value, "optimizer.alpha");
    else if (key == "beta")
      base.beta = as_number(value, "optimizer.beta");
    else if (key == "t_min")
      base.t_min = as_number(value, "optimizer.t_min");
    else if (key == "gamma")
      base.gamma = as_number(value, "optimizer.gamma");
    else if (key == "restarts")
      base.restarts = as_int(value, "optimizer.restarts");
    else if (key == "pair_budget")
      base.pair_budget = as_number(value, "optimizer.pair_budget");
    else
      throw ConfigError("unknown key \"optimizer." + key + "\"");
  }
  return base;
}

McConfig parse_mc(const nlohmann::json& j, McConfig base) {
  if (!j.is_object()) throw ConfigError("key \"mc\" must be an object");
  for (const auto& [key, value] : j.items()) {
    if (key == "samples")
      base.samples = as_int(value, "mc.samples");
    else if (key == "seed")
      base.seed = static_cast<std::uint64_t>(as_number(value, "mc.seed"));
    else
      throw ConfigError("unknown key \"mc." + key + "\"");
  }
  if (base.samples < 2) throw ConfigError("key \"mc.samples\" must be at least 2");
  return base;
}

}  // namespace

ExperimentConfig parse_config(const nlohmann::json& doc) {
  if (!doc.is_object()) throw ConfigError("config root must be a JSON object");
  static const char* known[] = {"scheme",       "objective", "weights",    "array",
                                "users",        "snr_db",    "dictionary", "realizations",
                                "seed",         "optimizer", "large_scale", "method",
                                "mc",           "threads"};
  for (const auto& [key, value] : doc.items()) {
    (void)value;
    bool ok = false;
    for (const char* k : known) ok = ok || key == k;
    if (!ok) throw ConfigError("unknown key \"" + key + "\"");
  }

  ExperimentConfig cfg;
  cfg.echo = doc;
  cfg.scheme = scheme_from_string(as_string(require_key(doc, "scheme"), "scheme"));
  cfg.objective = objective_from_string(as_string(require_key(doc, "objective"), "objective"));
  cfg.array = parse_array(require_key(doc, "array"));
  cfg.users = parse_users(require_key(doc, "users"));
  {
    const auto& snr = require_key(doc, "snr_db");
    if (!snr.is_array() || snr.empty())
      throw ConfigError("key \"snr_db\" must be a non-empty array");
    for (const auto& v : snr) cfg.snr_db.push_back(as_number(v, "snr_db"));
  }
  cfg.dictionary = parse_dictionary(require_key(doc, "dictionary"));

  const std::size_t K = cfg.users.size();
  if (doc.contains("weights")) {
    const auto& w = doc.at("weights");
    if (!w.is_array() || w.size() != K)
      throw ConfigError("key \"weights\" must list one weight per user");
    for (const auto& v : w) cfg.weights.push_back(as_number(v, "weights"));
    for (double v : cfg.weights)
      if (!(v >= 0.0)) throw ConfigError("key \"weights\" entries must be non-negative");
  } else {
    cfg.weights.assign(K, 1.0);
  }

  if (doc.contains("realizations")) cfg.realizations = as_int(doc.at("realizations"), "realizations");
  if (cfg.realizations < 1) throw ConfigError("key \"realizations\" must be at least 1");
  if (doc.contains("seed")) cfg.seed = static_cast<std::uint64_t>(as_number(doc.at("seed"), "seed"));
  if (doc.contains("optimizer")) cfg.optimizer = parse_optimizer(doc.at("optimizer"), cfg.optimizer);
  if (doc.contains("large_scale")) {
    if (!doc.at("large_scale").is_boolean()) throw ConfigError("key \"large_scale\" must be a boolean");
    cfg.large_scale = doc.at("large_scale").get<bool>();
  }
  if (doc.contains("method")) {
    const std::string m = as_string(doc.at("method"), "method");
    if (m == "approx")
      cfg.method = RateMethod::approx;
    else if (m == "exact")
      cfg.method = RateMethod::exact;
    else
      throw ConfigError("key \"method\" must be approx or exact");
  }
  if (doc.contains("mc")) cfg.mc = parse_mc(doc.at("mc"), cfg.mc);
  if (doc.contains("threads")) cfg.threads = as_int(doc.at("threads"), "threads");
  if (cfg.threads < 1) throw ConfigError("key \"threads\" must be at least 1");

  if (cfg.scheme == Scheme::noma && K != 2)
    throw ConfigError("key \"scheme\": noma needs exactly 2 users");
  if (cfg.scheme == Scheme::noma && cfg.large_scale)
    throw ConfigError("key \"large_scale\" is not available for the noma scheme");
  if (cfg.scheme == Scheme::sdma && cfg.dictionary.at(0).common)
    throw ConfigError("key \"dictionary\": first mode must have no shared stream for sdma");
  if (cfg.scheme == Scheme::noma && !cfg.dictionary.at(0).priv)
    throw ConfigError("key \"dictionary\": first mode must have a private alphabet for noma");
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file: " + path);
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  return parse_config(doc);
}

namespace {

// Final objectives closer than this count as a tie. The ascent stops once a
// step moves the objective by less than its epsilon, so finer differences are
// trajectory noise rather than a real ranking; ties go to the lowest-index
// (simplest) mode, which also drains the shared stream once every mode
// saturates at the bit ceiling.
constexpr double kModeTieTolerance = 1e-2;

}  // namespace

ModeSearchResult mode_search(std::span<const Eigen::VectorXcd> channels,
                             std::span<const TransmissionMode> dict, Objective objective,
                             std::span<const double> weights, Receiver rx,
                             const NoiseModel& noise, const OptimizerConfig& cfg) {
  if (dict.empty()) throw std::invalid_argument("empty mode dictionary");
  std::vector<std::pair<int, OptimizeResult>> runs;
  std::string diags;
  for (std::size_t i = 0; i < dict.size(); ++i) {
    try {
      OptimizeResult r = objective == Objective::wsr
                             ? optimize_wsr(channels, dict[i], weights, rx, noise, cfg)
                             : optimize_mmf(channels, dict[i], rx, noise, cfg);
      runs.emplace_back(static_cast<int>(i) + 1, std::move(r));
    } catch (const std::invalid_argument& e) {
      diags += "mode " + std::to_string(i + 1) + ": " + e.what() + "\n";
    }
  }
  if (runs.empty()) throw std::runtime_error("every mode failed:\n" + diags);
  double top = runs.front().second.objective;
  for (const auto& [index, r] : runs) top = std::max(top, r.objective);
  ModeSearchResult best;
  for (auto& [index, r] : runs)
    if (r.objective >= top - kModeTieTolerance) {
      best.mode_index = index;
      best.result = std::move(r);
      break;
    }
  return best;
}

GroupedModeSearchResult grouped_mode_search(const GroupingPlan& plan,
                                            std::span<const TransmissionMode> dict,
                                            Objective objective, std::span<const double> weights,
                                            Receiver rx, const NoiseModel& noise,
                                            const OptimizerConfig& cfg) {
  if (dict.empty()) throw std::invalid_argument("empty mode dictionary");
  std::vector<std::pair<int, GroupedOptimizeResult>> runs;
  std::string diags;
  for (std::size_t i = 0; i < dict.size(); ++i) {
    try {
      GroupedOptimizeResult r =
          objective == Objective::wsr
              ? grouped_optimize_wsr(plan, weights, rx, noise, dict[i], cfg)
              : grouped_optimize_mmf(plan, rx, noise, dict[i], cfg);
      runs.emplace_back(static_cast<int>(i) + 1, std::move(r));
    } catch (const std::invalid_argument& e) {
      diags += "mode " + std::to_string(i + 1) + ": " + e.what() + "\n";
    }
  }
  if (runs.empty()) throw std::runtime_error("every mode failed:\n" + diags);
  double top = runs.front().second.objective;
  for (const auto& [index, r] : runs) top = std::max(top, r.objective);
  GroupedModeSearchResult best;
  for (auto& [index, r] : runs)
    if (r.objective >= top - kModeTieTolerance) {
      best.mode_index = index;
      best.result = std::move(r);
      break;
    }
  return best;
}

namespace {

double grouped_wsr_clamped(const GroupingPlan& plan, const GroupedRateReport& rep,
                           std::span<const double> weights, Receiver rx,
                           const TransmissionMode& mode) {
  double v = 0.0;
  if (mode.common)
    for (std::size_t i = 0; i < plan.groups.size(); ++i) {
      double wt = 0.0;
      for (int u : plan.groups[i].users)
        wt = std::max(wt, weights[static_cast<std::size_t>(u)]);
      v += wt * rep.r_c_group[i];
    }
  if (mode.priv)
    for (int k = 0; k < plan.num_users; ++k)
      v += weights[static_cast<std::size_t>(k)] * rep.r_p(k, rx);
  return v;
}

std::vector<double> grouped_mmf_split_clamped(const GroupingPlan& plan,
                                              const GroupedRateReport& rep, Receiver rx) {
  std::vector<double> c(static_cast<std::size_t>(plan.num_users), 0.0);
  for (std::size_t i = 0; i < plan.groups.size(); ++i) {
    const Group& grp = plan.groups[i];
    std::vector<double> rp;
    for (int u : grp.users) rp.push_back(rep.r_p(u, rx));
    const MmfAllocation a = mmf_allocation(rep.r_c_group[i], rp);
    for (std::size_t pos = 0; pos < grp.users.size(); ++pos)
      c[static_cast<std::size_t>(grp.users[pos])] = a.c[pos];
  }
  return c;
}

}  // namespace

InstanceResult optimize_instance(const ExperimentConfig& cfg, double snr_db, int realization) {
  const double p_t = std::pow(10.0, snr_db / 10.0);
  OptimizerConfig oc = cfg.optimizer;
  oc.p_t = p_t;
  oc.seed = derive_key({cfg.seed, static_cast<std::uint64_t>(realization), 1});
  const NoiseModel noise{1.0};
  const std::uint64_t chseed = derive_key({cfg.seed, static_cast<std::uint64_t>(realization)});
  const std::vector<Eigen::VectorXcd> channels = rician_channels(cfg.array, cfg.users, chseed);
  const Receiver rx = cfg.scheme == Scheme::rsma_sicfree ? Receiver::sic_free : Receiver::sic;

  InstanceResult out;
  out.channels = channels;

  if (cfg.scheme == Scheme::noma) {
    const Constellation& alphabet = *cfg.dictionary.at(0).priv;
    NomaResult res = cfg.objective == Objective::wsr
                         ? noma_optimize_wsr(channels, alphabet, cfg.weights, noise, oc)
                         : noma_optimize_mmf(channels, alphabet, noise, oc);
    out.mode_index = 1;
    out.precoder = res.precoder;
    out.trace = res.objective_trace;
    out.iterations = res.iterations;
    out.converged = res.converged;
    out.common_power_ratio = 0.0;
    const NomaRates nr = noma_rates(res.precoder, channels, alphabet, cfg.method, noise,
                                    cfg.method == RateMethod::exact ? &cfg.mc : nullptr);
    out.per_user_rate.assign(2, 0.0);
    out.per_user_rate[static_cast<std::size_t>(nr.weak)] = nr.r_weak;
    out.per_user_rate[static_cast<std::size_t>(nr.strong)] = nr.r_strong;
    out.allocation.assign(2, 0.0);
    if (cfg.method == RateMethod::approx) {
      out.objective = res.objective;
    } else {
      out.objective = cfg.objective == Objective::wsr
                          ? cfg.weights[static_cast<std::size_t>(nr.weak)] * nr.r_weak +
                                cfg.weights[static_cast<std::size_t>(nr.strong)] * nr.r_strong
                          : std::min(nr.r_weak, nr.r_strong);
    }
    return out;
  }

  if (cfg.large_scale && cfg.scheme != Scheme::noma) {
    const GroupingPlan plan = build_plan(channels);
    std::span<const TransmissionMode> dict = cfg.dictionary;
    std::span<const TransmissionMode> search =
        cfg.scheme == Scheme::sdma ? dict.first(1) : dict;
    const GroupedModeSearchResult g =
        grouped_mode_search(plan, search, cfg.objective, cfg.weights, rx, noise, oc);
    const TransmissionMode& mode = cfg.dictionary[static_cast<std::size_t>(g.mode_index - 1)];
    out.mode_index = g.mode_index;
    out.precoder = g.result.precoder;
    out.trace = g.result.objective_trace;
    out.iterations = g.result.iterations;
    out.converged = g.result.converged;
    if (mode.common) {
      double cp = 0.0;
      for (std::size_t i = 0; i < plan.groups.size(); ++i)
        cp += out.precoder.col(static_cast<Eigen::Index>(i)).squaredNorm();
      out.common_power_ratio = cp / p_t;
    }
    const GroupedRateReport rep =
        grouped_rate_report(plan, g.result.blocks, mode, cfg.method, noise,
                            cfg.method == RateMethod::exact ? &cfg.mc : nullptr);
    const std::vector<double> c = cfg.objective == Objective::wsr
                                      ? g.result.allocation
                                      : grouped_mmf_split_clamped(plan, rep, rx);
    out.allocation = c;
    out.per_user_rate.resize(static_cast<std::size_t>(plan.num_users));
    for (int k = 0; k < plan.num_users; ++k)
      out.per_user_rate[static_cast<std::size_t>(k)] = c[static_cast<std::size_t>(k)] + rep.r_p(k, rx);
    if (cfg.method == RateMethod::approx) {
      out.objective = g.result.objective;
    } else {
      out.objective = cfg.objective == Objective::wsr
                          ? grouped_wsr_clamped(plan, rep, cfg.weights, rx, mode)
                          : *std::min_element(out.per_user_rate.begin(), out.per_user_rate.end());
    }
    return out;
  }

  // Plain single-cell schemes.
  ModeSearchResult m;
  if (cfg.scheme == Scheme::sdma) {
    m.mode_index = 1;
    m.result = cfg.objective == Objective::wsr
                   ? sdma_optimize_wsr(channels, cfg.dictionary.at(0), cfg.weights, noise, oc)
                   : sdma_optimize_mmf(channels, cfg.dictionary.at(0), noise, oc);
  } else {
    m = mode_search(channels, cfg.dictionary, cfg.objective, cfg.weights, rx, noise, oc);
  }
  const TransmissionMode& mode = cfg.dictionary[static_cast<std::size_t>(m.mode_index - 1)];
  out.mode_index = m.mode_index;
  out.precoder = m.result.precoder;
  out.trace = m.result.objective_trace;
  out.iterations = m.result.iterations;
  out.converged = m.result.converged;
  if (mode.common) out.common_power_ratio = out.precoder.col(0).squaredNorm() / p_t;

  const RateReport rep = rate_report(out.precoder, channels, mode, cfg.method, noise,
                                     cfg.method == RateMethod::exact ? &cfg.mc : nullptr);
  std::vector<double> c;
  if (cfg.objective == Objective::wsr) {
    c = wsr_allocation(rep.r_c, cfg.weights).c;
  } else {
    std::vector<double> rp(rep.r_p_sic.size());
    for (std::size_t k = 0; k < rp.size(); ++k) rp[k] = rep.r_p(static_cast<int>(k), rx);
    c = mmf_allocation(rep.r_c, rp).c;
  }
  out.allocation = c;
  out.per_user_rate.resize(c.size());
  for (std::size_t k = 0; k < c.size(); ++k)
    out.per_user_rate[k] = c[k] + rep.r_p(static_cast<int>(k), rx);
  if (cfg.method == RateMethod::approx) {
    out.objective = m.result.objective;
  } else {
    out.objective = cfg.objective == Objective::wsr
                        ? wsr_value(rep, cfg.weights, rx, /*use_raw=*/false)
                        : mmf_value(rep, rx);
  }
  return out;
}

namespace {

void parallel_for(int n, int threads, const std::function<void(int)>& fn) {
  if (threads <= 1 || n <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  const int T = std::min(threads, n);
  std::mutex mu;
  std::exception_ptr err;
  std::vector<std::thread> pool;
  for (int t = 0; t < T; ++t)
    pool.emplace_back([&, t] {
      for (int i = t; i < n; i += T) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(mu);
          if (!err) err = std::current_exception();
        }
      }
    });
  for (auto& th : pool) th.join();
  if (err) std::rethrow_exception(err);
}

std::string fmt(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.12g", x);
  return buf;
}

}  // namespace

std::vector<SweepRow> ergodic_sweep(const ExperimentConfig& cfg) {
  const int S = static_cast<int>(cfg.snr_db.size());
  const int R = cfg.realizations;
  std::vector<double> obj(static_cast<std::size_t>(S * R));
  std::vector<double> ratio(static_cast<std::size_t>(S * R));
  std::vector<double> mode(static_cast<std::size_t>(S * R));
  parallel_for(S * R, cfg.threads, [&](int idx) {
    const int si = idx / R;
    const int r = idx % R;
    const InstanceResult res = optimize_instance(cfg, cfg.snr_db[static_cast<std::size_t>(si)], r);
    obj[static_cast<std::size_t>(idx)] = res.objective;
    ratio[static_cast<std::size_t>(idx)] = res.common_power_ratio;
    mode[static_cast<std::size_t>(idx)] = res.mode_index;
  });

  std::vector<SweepRow> rows;
  for (int si = 0; si < S; ++si) {
    const std::span<const double> o(obj.data() + si * R, static_cast<std::size_t>(R));
    const std::span<const double> q(ratio.data() + si * R, static_cast<std::size_t>(R));
    const std::span<const double> mi(mode.data() + si * R, static_cast<std::size_t>(R));
    SweepRow row;
    row.snr_db = cfg.snr_db[static_cast<std::size_t>(si)];
    row.scheme = scheme_name(cfg.scheme);
    row.objective_mean = mean(o);
    row.objective_stderr = std_error(o);
    row.common_power_ratio = mean(q);
    row.mode_index_mean = mean(mi);
    row.realizations = R;
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string sweep_csv(std::span<const SweepRow> rows) {
  std::ostringstream os;
  os << "snr_db,scheme,objective_mean,objective_stderr,common_power_ratio,"
        "mode_index_mean,realizations\n";
  for (const auto& r : rows)
    os << fmt(r.snr_db) << ',' << r.scheme << ',' << fmt(r.objective_mean) << ','
       << fmt(r.objective_stderr) << ',' << fmt(r.common_power_ratio) << ','
       << fmt(r.mode_index_mean) << ',' << r.realizations << '\n';
  return os.str();
}

std::vector<RegionPoint> rate_region(const ExperimentConfig& cfg) {
  if (cfg.users.size() != 2) throw ConfigError("key \"users\": rate region needs exactly 2 users");
  std::vector<std::pair<double, double>> grid;
  for (int i = 0; i < 21; ++i) {
    const double w = -2.0 + 4.0 * i / 20.0;
    grid.emplace_back(1.0, std::pow(10.0, w));
  }
  for (int i = 0; i < 21; ++i) {
    const double w = -2.0 + 4.0 * i / 20.0;
    if (i == 10) continue;  // (1,1) already present
    grid.emplace_back(std::pow(10.0, w), 1.0);
  }

  const int P = static_cast<int>(grid.size());
  const int R = cfg.realizations;
  std::vector<double> r1(static_cast<std::size_t>(P * R));
  std::vector<double> r2(static_cast<std::size_t>(P * R));
  parallel_for(P * R, cfg.threads, [&](int idx) {
    const int pi = idx / R;
    const int r = idx % R;
    ExperimentConfig local = cfg;
    local.objective = Objective::wsr;
    local.weights = {grid[static_cast<std::size_t>(pi)].first,
                     grid[static_cast<std::size_t>(pi)].second};
    const InstanceResult res = optimize_instance(local, cfg.snr_db.at(0), r);
    r1[static_cast<std::size_t>(idx)] = res.per_user_rate.at(0);
    r2[static_cast<std::size_t>(idx)] = res.per_user_rate.at(1);
  });

  std::vector<RegionPoint> pts;
  for (int pi = 0; pi < P; ++pi) {
    const std::span<const double> a(r1.data() + pi * R, static_cast<std::size_t>(R));
    const std::span<const double> b(r2.data() + pi * R, static_cast<std::size_t>(R));
    RegionPoint pt;
    pt.u1 = grid[static_cast<std::size_t>(pi)].first;
    pt.u2 = grid[static_cast<std::size_t>(pi)].second;
    pt.r1_mean = mean(a);
    pt.r1_stderr = std_error(a);
    pt.r2_mean = mean(b);
    pt.r2_stderr = std_error(b);
    pts.push_back(pt);
  }
  for (std::size_t i = 0; i < pts.size(); ++i) {
    bool dominated = false;
    for (std::size_t j = 0; j < pts.size() && !dominated; ++j) {
      if (i == j) continue;
      dominated = pts[j].r1_mean >= pts[i].r1_mean && pts[j].r2_mean >= pts[i].r2_mean &&
                  (pts[j].r1_mean > pts[i].r1_mean || pts[j].r2_mean > pts[i].r2_mean);
    }
    pts[i].frontier = !dominated;
  }
  return pts;
}

std::string region_csv(std::span<const RegionPoint> points) {
  std::ostringstream os;
  os << "u1,u2,r1_mean,r1_stderr,r2_mean,r2_stderr,frontier\n";
  for (const auto& p : points)
    os << fmt(p.u1) << ',' << fmt(p.u2) << ',' << fmt(p.r1_mean) << ',' << fmt(p.r1_stderr)
       << ',' << fmt(p.r2_mean) << ',' << fmt(p.r2_stderr) << ',' << (p.frontier ? 1 : 0)
       << '\n';
  return os.str();
}

nlohmann::json run_metadata(const ExperimentConfig& cfg, const std::string& command) {
  nlohmann::json meta;
  meta["command"] = command;
  meta["config"] = cfg.echo;
  meta["library_version"] = kLibraryVersion;
  meta["rng_algorithm"] = CounterRng::algorithm();
  return meta;
}

nlohmann::json matrix_to_json(const Eigen::MatrixXcd& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      row.push_back({m(i, j).real(), m(i, j).imag()});
    rows.push_back(std::move(row));
  }
  return rows;
}

Eigen::MatrixXcd matrix_from_json(const nlohmann::json& doc, const std::string& key) {
  if (!doc.is_array() || doc.empty())
    throw ConfigError("key \"" + key + "\" must be a non-empty array of rows");
  const std::size_t cols = doc.at(0).is_array() ? doc.at(0).size() : 0;
  if (cols == 0) throw ConfigError("key \"" + key + "\" rows must be non-empty arrays");
  Eigen::MatrixXcd m(static_cast<Eigen::Index>(doc.size()), static_cast<Eigen::Index>(cols));
  for (std::size_t i = 0; i < doc.size(); ++i) {
    const auto& row = doc.at(i);
    if (!row.is_array() || row.size() != cols)
      throw ConfigError("key \"" + key + "\" must be rectangular");
    for (std::size_t j = 0; j < cols; ++j) {
      const auto& e = row.at(j);
      if (!e.is_array() || e.size() != 2 || !e.at(0).is_number() || !e.at(1).is_number())
        throw ConfigError("key \"" + key + "\" entries must be [re, im] pairs");
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          cplx(e.at(0).get<double>(), e.at(1).get<double>());
    }
  }
  return m;
}

nlohmann::json vector_to_json(const Eigen::VectorXcd& v) {
  nlohmann::json out = nlohmann::json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back({v(i).real(), v(i).imag()});
  return out;
}

}  // namespace rsopt
