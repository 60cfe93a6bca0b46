// Command-line front end: simulate / sweep / detect / presets.
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "vfem/error.hpp"
#include "vfem/harness.hpp"
#include "vfem/oracle.hpp"
#include "vfem/siso_ddf.hpp"
#include "vfem/siso_discrete.hpp"
#include "vfem/siso_gaussian.hpp"

namespace {

constexpr int kOk = 0;
constexpr int kRuntimeError = 1;
constexpr int kUsageError = 2;

struct RunFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> trials;
  std::optional<unsigned> threads;
  std::string schedule;
  std::string detector;
  std::string out;
  std::string em_out;
  std::string snr;
};

std::vector<double> parse_grid(const std::string& text) {
  return vfem::parse_config("snr_db = " + text).snr_db;
}

vfem::ScenarioConfig configure(const RunFlags& f) {
  vfem::ScenarioConfig cfg = vfem::load_config(f.config);
  if (f.seed) cfg.seed = *f.seed;
  if (f.trials) {
    cfg.trials = *f.trials;
    if (cfg.max_trials != 0 && cfg.max_trials < cfg.trials) cfg.max_trials = cfg.trials;
  }
  if (f.threads) cfg.threads = *f.threads;
  if (!f.schedule.empty()) cfg.schedule = vfem::parse_schedule(f.schedule);
  if (!f.detector.empty()) cfg.detector = vfem::parse_detector(f.detector);
  if (!f.snr.empty()) cfg.snr_db = parse_grid(f.snr);
  cfg.validate();
  return cfg;
}

std::string default_out(const vfem::ScenarioConfig& cfg, const std::string& requested) {
  if (!requested.empty()) return requested;
  if (const char* dir = std::getenv("VFEM_OUT_DIR"); dir != nullptr && *dir != '\0') {
    return (std::filesystem::path(dir) / (cfg.name + ".csv")).string();
  }
  return {};
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw vfem::Error(vfem::ErrorCode::IoError, "cannot write '" + path + "'");
  os << text;
  if (!os) throw vfem::Error(vfem::ErrorCode::IoError, "write failed for '" + path + "'");
}

int run(const RunFlags& f) {
  vfem::ScenarioConfig cfg;
  try {
    cfg = configure(f);
  } catch (const vfem::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsageError;
  }
  const vfem::BerReport report = vfem::run_scenario(cfg);
  std::ostringstream ber;
  vfem::write_ber_csv(ber, report);
  const std::string out = default_out(cfg, f.out);
  if (out.empty()) {
    std::cout << ber.str();
  } else {
    write_file(out, ber.str());
  }
  if (cfg.runs_em()) {
    std::string em_path = f.em_out;
    if (em_path.empty() && !out.empty()) {
      std::filesystem::path p(out);
      em_path = (p.parent_path() / (p.stem().string() + "_em.csv")).string();
    }
    if (!em_path.empty()) {
      std::ostringstream em;
      vfem::write_em_csv(em, report);
      write_file(em_path, em.str());
    }
  }
  return kOk;
}

// Instance file: flat key = value. spreading rows are separated by ';'.
struct Instance {
  vfem::ChannelInstance ch;
  vfem::Vector r;
  vfem::Vector prior;
  std::string detector;
};

std::vector<double> numbers(const std::string& key, const std::string& v) {
  std::vector<double> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (item.find_first_not_of(" \t", used) != std::string::npos) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw vfem::Error(vfem::ErrorCode::ConfigError, "instance field '" + key + "': bad number '" + item + "'");
    }
  }
  return out;
}

vfem::Vector to_vector(const std::vector<double>& v) {
  return Eigen::Map<const vfem::Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

Instance load_instance(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw vfem::Error(vfem::ErrorCode::IoError, "cannot open instance '" + path + "'");
  std::vector<std::vector<double>> rows;
  std::vector<double> a, r, prior;
  double sigma2 = -1.0;
  std::string detector = "hybrid";
  std::string line;
  while (std::getline(in, line)) {
    if (auto h = line.find('#'); h != std::string::npos) line.resize(h);
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      throw vfem::Error(vfem::ErrorCode::ConfigError, "instance: expected key = value");
    }
    auto strip = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      const auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    const std::string key = strip(line.substr(0, eq));
    const std::string v = strip(line.substr(eq + 1));
    if (key == "spreading") {
      std::stringstream ss(v);
      std::string row;
      while (std::getline(ss, row, ';')) rows.push_back(numbers(key, row));
    } else if (key == "amplitudes") {
      a = numbers(key, v);
    } else if (key == "sigma2") {
      sigma2 = numbers(key, v).at(0);
    } else if (key == "r") {
      r = numbers(key, v);
    } else if (key == "prior_llr") {
      prior = numbers(key, v);
    } else if (key == "detector") {
      detector = v;
    } else {
      throw vfem::Error(vfem::ErrorCode::ConfigError, "instance: unknown key '" + key + "'");
    }
  }
  if (rows.empty() || a.empty() || r.empty() || !(sigma2 > 0.0)) {
    throw vfem::Error(vfem::ErrorCode::ConfigError, "instance needs spreading, amplitudes, r and sigma2 > 0");
  }
  vfem::Matrix s(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows[0].size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != rows[0].size()) throw vfem::Error(vfem::ErrorCode::ConfigError, "instance: ragged spreading");
    for (std::size_t j = 0; j < rows[i].size(); ++j) {
      s(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    }
  }
  if (prior.empty()) prior.assign(a.size(), 0.0);
  Instance inst{vfem::ChannelInstance::from_spreading(s, to_vector(a), sigma2), to_vector(r), to_vector(prior),
                detector};
  if (static_cast<std::size_t>(inst.r.size()) != inst.ch.chips() ||
      static_cast<std::size_t>(inst.prior.size()) != inst.ch.users()) {
    throw vfem::Error(vfem::ErrorCode::ConfigError, "instance: r or prior_llr has the wrong length");
  }
  return inst;
}

vfem::Vector detect_llrs(const Instance& in) {
  const vfem::Vector y = in.ch.spreading().transpose() * in.r;
  const auto prior = vfem::GaussianPrior::from_llrs(in.prior);
  if (in.detector == "hybrid") return vfem::ext_hybrid(in.ch, y, prior).llr;
  if (in.detector == "flooding") return vfem::ext_flooding(in.ch, y, prior).llr;
  if (in.detector == "one-shot") return vfem::ext_one_shot_mf(in.ch, y, in.prior).llr;
  if (in.detector == "serial") {
    const auto order = vfem::cyclic_order(in.ch.users());
    vfem::DiscreteBelief q{vfem::Vector::Zero(in.prior.size())};
    for (int sweep = 0; sweep < 50; ++sweep) q = vfem::serial_update(in.ch, in.r, in.prior, q, order).q;
    return vfem::serial_update(in.ch, in.r, in.prior, q, order).posterior_llr - in.prior;
  }
  if (in.detector == "ddf") {
    const vfem::DdfPrecompute pre(in.ch, vfem::detection_order(in.ch, vfem::DetectionOrderPolicy::strongest_first()));
    return vfem::ddf_pass(in.ch, pre.whiten(y), in.prior, pre).ext.llr;
  }
  if (in.detector == "exact") {
    vfem::Vector out(in.prior.size());
    for (Eigen::Index k = 0; k < out.size(); ++k) {
      out(k) = vfem::exact_ext(in.ch, in.r, in.prior, static_cast<std::size_t>(k)).marginalised;
    }
    return out;
  }
  throw vfem::Error(vfem::ErrorCode::ConfigError,
                    "instance field 'detector': expected hybrid, flooding, one-shot, serial, ddf or exact");
}

int detect(const std::string& path) {
  std::optional<Instance> inst;
  try {
    inst.emplace(load_instance(path));
  } catch (const vfem::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsageError;
  }
  const vfem::Vector llr = detect_llrs(*inst);
  for (Eigen::Index k = 0; k < llr.size(); ++k) std::printf("%lld %.12g\n", static_cast<long long>(k + 1), llr(k));
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Turbo multiuser detection by free-energy minimisation"};
  app.require_subcommand(1);

  RunFlags flags;
  auto add_run_flags = [&flags](CLI::App* sub) {
    sub->add_option("config", flags.config, "config file or preset name")->required();
    sub->add_option("--seed", flags.seed, "master seed");
    sub->add_option("--out", flags.out, "BER CSV path (default: $VFEM_OUT_DIR/<name>.csv, else stdout)");
    sub->add_option("--em-out", flags.em_out, "EM trajectory CSV path");
    sub->add_option("--schedule", flags.schedule, "sequential | flooding | hybrid");
    sub->add_option("--detector", flags.detector, "gaussian | discrete | ddf | mmse | decorrelator | sic");
    sub->add_option("--trials", flags.trials, "minimum trials per SNR point");
    sub->add_option("--threads", flags.threads, "worker threads (0: all cores)");
  };
  auto* simulate = app.add_subcommand("simulate", "run a scenario");
  add_run_flags(simulate);
  auto* sweep = app.add_subcommand("sweep", "run a scenario over another SNR grid");
  add_run_flags(sweep);
  sweep->add_option("--snr", flags.snr, "comma-separated SNR grid in dB")->required();

  std::string instance;
  auto* det = app.add_subcommand("detect", "one-shot detection on an instance file, prints extrinsic LLRs");
  det->add_option("instance", instance, "instance file")->required();

  std::string preset;
  auto* presets = app.add_subcommand("presets", "list built-in presets, or print one");
  presets->add_option("name", preset);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsageError;
  }

  try {
    if (*simulate || *sweep) return run(flags);
    if (*det) return detect(instance);
    if (preset.empty()) {
      for (const auto& name : vfem::preset_names()) std::cout << name << '\n';
      return kOk;
    }
    if (auto text = vfem::preset_text(preset)) {
      std::cout << *text;
      return kOk;
    }
    std::cerr << "error: no preset named '" << preset << "'\n";
    return kUsageError;
  } catch (const vfem::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return e.code() == vfem::ErrorCode::ConfigError ? kUsageError : kRuntimeError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntimeError;
  }
}
