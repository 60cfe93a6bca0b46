#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "vfem/siso_gaussian.hpp"

namespace vfem {

enum class SpreadingKind { Equicorrelated, Random };

enum class DetectorKind { Gaussian, Discrete, DdfAided, Mmse, Decorrelator, Sic };

struct ScenarioConfig {
  std::string name = "custom";

  SpreadingKind spreading = SpreadingKind::Equicorrelated;
  std::size_t chips = 0;  // random spreading only
  std::size_t users = 1;
  double rho = 0.0;
  std::vector<double> power_offsets_db;  // per user, relative to the SNR grid; empty means all zero
  bool fixed_spreading = true;           // random spreading: one draw for the whole run

  std::string code = "none";  // generator list or "none"
  std::size_t block_length = 256;

  DetectorKind detector = DetectorKind::Gaussian;
  Schedule schedule = Schedule::Flooding;
  int outer_iterations = 1;
  int inner_iterations = 1;
  std::string order = "strongest-first";
  double clip_lo = -1.0;
  double clip_hi = 1.0;

  double varsigma = 0.0;  // amplitude-estimate error std; 0 means amplitudes known
  bool estimate_sigma2 = false;

  std::vector<double> snr_db;

  std::uint64_t seed = 1;
  std::size_t trials = 10;
  std::size_t max_trials = 0;  // 0: same as trials
  std::uint64_t min_errors = 100;
  std::size_t batch = 8;
  unsigned threads = 0;  // 0: hardware concurrency
  bool per_user = false;

  bool uncoded() const noexcept { return code == "none"; }
  bool runs_em() const noexcept { return varsigma > 0.0 || estimate_sigma2; }
  Vector amplitudes() const;
  void validate() const;
};

/// Parses the flat `key = value` format; `#` starts a comment.
ScenarioConfig parse_config(std::string_view text);
ScenarioConfig load_config(const std::string& path_or_preset);
std::string format_config(const ScenarioConfig& cfg);

std::vector<std::string> preset_names();
/// Built-in text of a named preset, if it exists.
std::optional<std::string> preset_text(std::string_view name);

struct BerCounts {
  std::uint64_t bits = 0;
  std::uint64_t errors = 0;

  double ber() const noexcept { return bits ? static_cast<double>(errors) / static_cast<double>(bits) : 0.0; }
  double std_error() const noexcept;
  double ci95() const noexcept { return 1.96 * std_error(); }
  BerCounts& operator+=(const BerCounts& o) noexcept {
    bits += o.bits;
    errors += o.errors;
    return *this;
  }
};

struct EmPoint {
  double sigma2_hat = 0.0;
  double a_hat_rmse = 0.0;
};

struct SnrResult {
  double snr_db = 0.0;
  std::size_t trials = 0;
  std::vector<std::vector<BerCounts>> cells;  // [iteration][user]
  std::vector<EmPoint> em;                    // per iteration, averaged over trials

  BerCounts total(std::size_t iteration) const;
  BerCounts final_total() const { return total(cells.size() - 1); }
};

struct BerReport {
  ScenarioConfig config;
  std::vector<SnrResult> points;
};

BerReport run_scenario(const ScenarioConfig& cfg);

/// Same code, block length and SNR grid with a single user at unit amplitude and perfect CSI.
BerReport single_user_bound(const ScenarioConfig& cfg);

void write_ber_csv(std::ostream& os, const BerReport& report);
void write_em_csv(std::ostream& os, const BerReport& report);

std::string_view to_string(DetectorKind d) noexcept;
std::string_view to_string(Schedule s) noexcept;
DetectorKind parse_detector(std::string_view v);
Schedule parse_schedule(std::string_view v);

}  // namespace vfem
