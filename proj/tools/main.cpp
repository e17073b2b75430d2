#include <CLI11.hpp>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "rsopt/harness.hpp"
#include "rsopt/rng.hpp"

namespace {

using rsopt::ConfigError;
using rsopt::ExperimentConfig;

struct CommonOpts {
  std::string config_path;
  std::string out_dir = ".";
  std::uint64_t seed = 0;
  bool seed_set = false;
  int threads = 0;
  std::string method;
};

void add_common(CLI::App* cmd, CommonOpts& o) {
  cmd->add_option("--config", o.config_path, "experiment config (JSON)")->required();
  cmd->add_option("--out-dir", o.out_dir, "output directory");
  cmd->add_option("--seed", o.seed, "override the config seed");
  cmd->add_option("--threads", o.threads, "worker threads (overrides config)");
  cmd->add_option("--method", o.method, "evaluation method: exact|approx")
      ->check(CLI::IsMember({"exact", "approx"}));
}

ExperimentConfig load_with_overrides(const CommonOpts& o, const CLI::App& cmd) {
  ExperimentConfig cfg = rsopt::load_config(o.config_path);
  if (cmd.count("--seed") > 0) cfg.seed = o.seed;
  if (o.threads > 0) cfg.threads = o.threads;
  if (!o.method.empty())
    cfg.method = o.method == "exact" ? rsopt::RateMethod::exact : rsopt::RateMethod::approx;
  return cfg;
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

void write_outputs(const CommonOpts& o, const ExperimentConfig& cfg, const std::string& command,
                   const std::string& csv) {
  std::filesystem::create_directories(o.out_dir);
  const std::filesystem::path dir(o.out_dir);
  write_file(dir / "results.csv", csv);
  write_file(dir / "metadata.json", rsopt::run_metadata(cfg, command).dump(2) + "\n");
}

nlohmann::json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read file: " + path);
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("not valid JSON: ") + e.what());
  }
  return doc;
}

int run_modes(const CommonOpts& o, int k, int r_max) {
  std::vector<rsopt::TransmissionMode> dict;
  if (!o.config_path.empty()) {
    dict = rsopt::load_config(o.config_path).dictionary;
  } else {
    dict = rsopt::mode_dictionary(k, r_max);
  }
  const auto label = [](const std::optional<rsopt::Constellation>& c) {
    if (!c) return std::string("none");
    return std::to_string(c->points.size()) + "pt/" + std::to_string(c->bits) + "b";
  };
  for (std::size_t i = 0; i < dict.size(); ++i) {
    const auto& m = dict[i];
    std::cout << (i + 1) << ": common=" << label(m.common) << " private=" << label(m.priv)
              << " bits=" << m.common_bits() + m.private_bits() << "/user, cap "
              << m.r_max_bits << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"constellation-constrained rate-splitting precoder optimization"};
  app.require_subcommand(1);

  CommonOpts opt;
  std::string precoder_path;
  int mode_index = 1;
  int realization = 0;
  int modes_k = 2, modes_rmax = 6;

  auto* eval = app.add_subcommand("rate-eval", "evaluate rates for a fixed precoder");
  auto* optimize = app.add_subcommand("optimize", "optimize one channel realization");
  auto* sweep = app.add_subcommand("ergodic-sweep", "mean objective over an SNR grid");
  auto* region = app.add_subcommand("rate-region", "2-user weighted-sum rate region");
  auto* lss = app.add_subcommand("large-scale-sweep", "ergodic sweep with user grouping");
  auto* modes = app.add_subcommand("modes", "list the transmission-mode dictionary");

  for (CLI::App* cmd : {eval, optimize, sweep, region, lss}) add_common(cmd, opt);
  modes->add_option("--config", opt.config_path, "experiment config (JSON)");
  modes->add_option("-k,--users", modes_k, "users (built-in dictionary)");
  modes->add_option("--r-max", modes_rmax, "per-user bit cap (built-in dictionary)");

  eval->add_option("--precoder", precoder_path, "precoder JSON ([re,im] rows)");
  eval->add_option("--mode", mode_index, "1-based dictionary mode");
  eval->add_option("--realization", realization, "channel realization index");
  optimize->add_option("--realization", realization, "channel realization index");

  CLI11_PARSE(app, argc, argv);

  try {
    if (modes->parsed()) return run_modes(opt, modes_k, modes_rmax);

    if (sweep->parsed() || lss->parsed()) {
      ExperimentConfig cfg = load_with_overrides(opt, *(sweep->parsed() ? sweep : lss));
      if (lss->parsed()) cfg.large_scale = true;
      const auto rows = rsopt::ergodic_sweep(cfg);
      write_outputs(opt, cfg, lss->parsed() ? "large-scale-sweep" : "ergodic-sweep",
                    rsopt::sweep_csv(rows));
      return 0;
    }

    if (region->parsed()) {
      ExperimentConfig cfg = load_with_overrides(opt, *region);
      const auto pts = rsopt::rate_region(cfg);
      write_outputs(opt, cfg, "rate-region", rsopt::region_csv(pts));
      return 0;
    }

    if (optimize->parsed()) {
      ExperimentConfig cfg = load_with_overrides(opt, *optimize);
      const rsopt::InstanceResult res = rsopt::optimize_instance(cfg, cfg.snr_db.at(0), realization);
      std::filesystem::create_directories(opt.out_dir);
      const std::filesystem::path dir(opt.out_dir);

      nlohmann::json doc;
      doc["mode_index"] = res.mode_index;
      doc["objective"] = res.objective;
      doc["common_power_ratio"] = res.common_power_ratio;
      doc["allocation"] = res.allocation;
      doc["per_user_rate"] = res.per_user_rate;
      doc["iterations"] = res.iterations;
      doc["converged"] = res.converged;
      write_file(dir / "result.json", doc.dump(2) + "\n");
      write_file(dir / "precoder.json", rsopt::matrix_to_json(res.precoder).dump(2) + "\n");
      nlohmann::json ch = nlohmann::json::array();
      for (const auto& h : res.channels) ch.push_back(rsopt::vector_to_json(h));
      write_file(dir / "channels.json", ch.dump(2) + "\n");
      std::string trace = "iteration,objective\n";
      for (std::size_t i = 0; i < res.trace.size(); ++i) {
        char buf[64];
        std::snprintf(buf, sizeof buf, "%zu,%.12g\n", i, res.trace[i]);
        trace += buf;
      }
      write_file(dir / "trace.csv", trace);
      write_file(dir / "metadata.json", rsopt::run_metadata(cfg, "optimize").dump(2) + "\n");
      return 0;
    }

    if (eval->parsed()) {
      ExperimentConfig cfg = load_with_overrides(opt, *eval);
      if (mode_index < 1 || mode_index > static_cast<int>(cfg.dictionary.size()))
        throw ConfigError("key \"--mode\" is out of range for the dictionary");
      const rsopt::TransmissionMode& mode =
          cfg.dictionary[static_cast<std::size_t>(mode_index - 1)];
      const auto channels = rsopt::rician_channels(
          cfg.array, cfg.users,
          rsopt::derive_key({cfg.seed, static_cast<std::uint64_t>(realization)}));
      const double p_t = std::pow(10.0, cfg.snr_db.at(0) / 10.0);
      Eigen::MatrixXcd P;
      if (!precoder_path.empty()) {
        P = rsopt::matrix_from_json(read_json(precoder_path), "precoder");
      } else {
        P = rsopt::default_precoder_init(channels, mode, p_t);
      }
      const rsopt::NoiseModel noise{1.0};
      const rsopt::RateReport rep =
          rsopt::rate_report(P, channels, mode, cfg.method, noise,
                             cfg.method == rsopt::RateMethod::exact ? &cfg.mc : nullptr);
      nlohmann::json doc;
      doc["r_c"] = rep.r_c;
      doc["r_c_per_user"] = rep.r_c_per_user;
      doc["r_p_sic"] = rep.r_p_sic;
      doc["r_p_sicfree"] = rep.r_p_sicfree;
      doc["r_c_stderr"] = rep.r_c_stderr;
      doc["r_p_sic_stderr"] = rep.r_p_sic_stderr;
      doc["r_p_sicfree_stderr"] = rep.r_p_sicfree_stderr;
      std::filesystem::create_directories(opt.out_dir);
      write_file(std::filesystem::path(opt.out_dir) / "rates.json", doc.dump(2) + "\n");
      write_file(std::filesystem::path(opt.out_dir) / "metadata.json",
                 rsopt::run_metadata(cfg, "rate-eval").dump(2) + "\n");
      return 0;
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
