#include "vfem/harness.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <ostream>
#include <sstream>
#include <thread>

#include "vfem/error.hpp"
#include "vfem/rng.hpp"
#include "vfem/siso_ddf.hpp"
#include "vfem/siso_discrete.hpp"
#include "vfem/varem.hpp"

namespace vfem {

namespace {

// Stream tags for derive_seed. Per-trial streams use (snr, trial, purpose).
enum : std::uint64_t { kBits = 0, kNoise = 1, kAmplitudeError = 2, kTrialSpreading = 3 };
constexpr std::uint64_t kInterleaverTag = 0x1a7e;
constexpr std::uint64_t kSpreadingTag = 0x5b3d;

constexpr double kDetectorSigma2Floor = 1e-9;

const std::map<std::string, std::string, std::less<>>& builtin_presets() {
  static const std::map<std::string, std::string, std::less<>> presets = {
      {"scenario-i",
       "name = scenario-i\n"
       "spreading = equicorrelated\n"
       "users = 4\n"
       "rho = 0.7\n"
       "code = 10011,11101\n"
       "block_length = 256\n"
       "detector = gaussian\n"
       "schedule = flooding\n"
       "outer_iterations = 5\n"
       "snr_db = 2,3,4,5\n"
       "trials = 40\n"
       "max_trials = 400\n"
       "min_errors = 100\n"},
      {"scenario-ii",
       "name = scenario-ii\n"
       "spreading = random\n"
       "chips = 32\n"
       "users = 32\n"
       "code = 111,101\n"
       "block_length = 256\n"
       "detector = gaussian\n"
       "schedule = flooding\n"
       "outer_iterations = 10\n"
       "varsigma = 0.3\n"
       "estimate_sigma2 = true\n"
       "snr_db = 4,5,6\n"
       "trials = 10\n"
       "max_trials = 100\n"
       "min_errors = 100\n"},
      {"ddf-two-user",
       "name = ddf-two-user\n"
       "spreading = equicorrelated\n"
       "users = 2\n"
       "rho = 0.7\n"
       "power_offsets_db = 6,0\n"
       "code = none\n"
       "block_length = 1024\n"
       "detector = ddf\n"
       "schedule = flooding\n"
       "outer_iterations = 2\n"
       "inner_iterations = 4\n"
       "order = weakest-first\n"
       "snr_db = 11\n"
       "trials = 100\n"
       "max_trials = 1000\n"
       "min_errors = 100\n"
       "per_user = true\n"},
  };
  return presets;
}

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    out.push_back(trim(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

[[noreturn]] void bad_field(std::string_view key, std::string_view what) {
  throw Error(ErrorCode::ConfigError, "config field '" + std::string(key) + "': " + std::string(what));
}

double to_double(std::string_view key, std::string_view v) {
  if (v == "inf") return std::numeric_limits<double>::infinity();
  double x = 0.0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), x);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size()) bad_field(key, "not a number: '" + std::string(v) + "'");
  return x;
}

std::uint64_t to_uint(std::string_view key, std::string_view v) {
  std::uint64_t x = 0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), x);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size()) {
    bad_field(key, "not a non-negative integer: '" + std::string(v) + "'");
  }
  return x;
}

bool to_bool(std::string_view key, std::string_view v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  bad_field(key, "expected true or false");
}

std::vector<double> to_list(std::string_view key, std::string_view v) {
  std::vector<double> out;
  if (v.empty()) return out;
  for (auto item : split(v, ',')) out.push_back(to_double(key, item));
  return out;
}

std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

std::string join(const std::vector<double>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + fmt("%.17g", v[i]);
  return s;
}

std::vector<std::size_t> resolve_order(const ScenarioConfig& cfg, const ChannelInstance& ch) {
  if (cfg.order == "strongest-first") return detection_order(ch, DetectionOrderPolicy::strongest_first());
  if (cfg.order == "as-given") return detection_order(ch, DetectionOrderPolicy::as_given());
  if (cfg.order == "weakest-first") {
    auto o = detection_order(ch, DetectionOrderPolicy::strongest_first());
    std::reverse(o.begin(), o.end());
    return o;
  }
  std::vector<std::size_t> custom;
  for (auto item : split(cfg.order, ',')) custom.push_back(static_cast<std::size_t>(to_uint("order", item)));
  return detection_order(ch, DetectionOrderPolicy::fixed(custom));
}

// Everything shared by all trials of a run.
struct Setup {
  ScenarioConfig cfg;
  Vector amplitudes;
  std::optional<ChannelInstance> geometry;  // fixed spreading
  std::unique_ptr<ConvDecoderBank> bank;
  std::size_t frame = 0;  // channel symbols per user per trial
  std::size_t iterations = 1;

  ChannelInstance channel_for(std::size_t snr_index, std::uint64_t trial, double sigma2) const {
    if (geometry) return geometry->with_parameters(amplitudes, sigma2);
    return make_random_spreading(cfg.chips, cfg.users, derive_seed(cfg.seed, {snr_index, trial, kTrialSpreading}),
                                 sigma2, amplitudes);
  }
};

struct TrialOutcome {
  std::vector<std::vector<std::uint64_t>> errors;  // [iteration][user]
  std::vector<EmPoint> em;
};

Setup make_setup(const ScenarioConfig& cfg) {
  cfg.validate();
  Setup s;
  s.cfg = cfg;
  s.amplitudes = cfg.amplitudes();
  if (cfg.spreading == SpreadingKind::Equicorrelated) {
    s.geometry = make_equicorrelated(cfg.users, cfg.rho, 1.0, s.amplitudes);
  } else if (cfg.fixed_spreading) {
    s.geometry = make_random_spreading(cfg.chips, cfg.users, derive_seed(cfg.seed, {kSpreadingTag}), 1.0, s.amplitudes);
  }
  if (cfg.uncoded()) {
    s.frame = cfg.block_length;
  } else {
    s.bank = std::make_unique<ConvDecoderBank>(ConvCode::parse(cfg.code), cfg.users, cfg.block_length,
                                               derive_seed(cfg.seed, {kInterleaverTag}));
    s.frame = s.bank->frame_length();
  }
  const bool linear = cfg.detector == DetectorKind::Mmse || cfg.detector == DetectorKind::Decorrelator ||
                      cfg.detector == DetectorKind::Sic;
  s.iterations = linear ? 1 : static_cast<std::size_t>(cfg.outer_iterations);
  return s;
}

std::uint64_t count_errors(std::span<const double> llr, std::span<const std::uint8_t> bits) {
  std::uint64_t e = 0;
  for (std::size_t i = 0; i < bits.size(); ++i) e += (llr[i] < 0.0 ? 1U : 0U) != bits[i];
  return e;
}

TrialOutcome run_trial(const Setup& s, std::size_t snr_index, double sigma2, std::uint64_t trial) {
  const ScenarioConfig& cfg = s.cfg;
  const std::size_t k_users = cfg.users;
  const ChannelInstance truth = s.channel_for(snr_index, trial, sigma2);

  Rng bit_rng(derive_seed(cfg.seed, {snr_index, trial, kBits}));
  std::bernoulli_distribution coin(0.5);
  std::vector<std::vector<std::uint8_t>> info(k_users, std::vector<std::uint8_t>(cfg.block_length));
  SymbolBlock block{RowMatrix(static_cast<Eigen::Index>(s.frame), static_cast<Eigen::Index>(k_users))};
  for (std::size_t k = 0; k < k_users; ++k) {
    for (auto& b : info[k]) b = coin(bit_rng) ? 1 : 0;
    std::vector<double> sym;
    if (s.bank) {
      sym = s.bank->transmit_symbols(k, info[k]);
    } else {
      sym.resize(s.frame);
      for (std::size_t i = 0; i < s.frame; ++i) sym[i] = info[k][i] ? -1.0 : 1.0;
    }
    for (std::size_t i = 0; i < s.frame; ++i) block.b(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = sym[i];
  }
  const Observation obs = transmit(truth, block, derive_seed(cfg.seed, {snr_index, trial, kNoise}));
  const ChannelInstance detector_ch = truth.with_parameters(truth.amplitudes(), std::max(sigma2, kDetectorSigma2Floor));

  TrialOutcome out;
  out.errors.assign(s.iterations, std::vector<std::uint64_t>(k_users, 0));

  if (s.iterations == 1 && (cfg.detector == DetectorKind::Mmse || cfg.detector == DetectorKind::Decorrelator ||
                            cfg.detector == DetectorKind::Sic)) {
    for (Eigen::Index t = 0; t < obs.r.rows(); ++t) {
      const Vector r = obs.r.row(t).transpose();
      Vector mu;
      if (cfg.detector == DetectorKind::Mmse) {
        mu = mmse(detector_ch, r).mu;
      } else if (cfg.detector == DetectorKind::Decorrelator) {
        mu = decorrelate(detector_ch, r).mu;
      } else {
        mu = sic(detector_ch, r, ClipBox{cfg.clip_lo, cfg.clip_hi}, LinearTarget::Mmse, 200);
      }
      for (std::size_t k = 0; k < k_users; ++k) {
        const bool decided = mu(static_cast<Eigen::Index>(k)) < 0.0;
        out.errors[0][k] += decided != (info[k][static_cast<std::size_t>(t)] != 0);
      }
    }
    return out;
  }

  std::unique_ptr<SisoDecoder> uncoded;
  if (!s.bank) uncoded = std::make_unique<UncodedDecoder>(k_users, s.frame);
  const SisoDecoder& decoder = s.bank ? static_cast<const SisoDecoder&>(*s.bank) : *uncoded;
  const int outer = static_cast<int>(s.iterations);

  std::vector<LlrFrame> frames;
  if (cfg.runs_em()) {
    Vector a_tilde = truth.amplitudes();
    if (cfg.varsigma > 0.0) {
      Rng arng(derive_seed(cfg.seed, {snr_index, trial, kAmplitudeError}));
      std::normal_distribution<double> gauss(0.0, cfg.varsigma);
      for (Eigen::Index k = 0; k < a_tilde.size(); ++k) a_tilde(k) += gauss(arng);
    }
    const EmState st0 = initial_em_state(obs, a_tilde, cfg.varsigma * cfg.varsigma, cfg.estimate_sigma2,
                                         detector_ch.sigma2());
    const DetectorFamily family =
        cfg.detector == DetectorKind::Gaussian ? DetectorFamily::Gaussian : DetectorFamily::Discrete;
    VarEmResult em = run_varem(truth, obs, family, cfg.schedule, outer, cfg.inner_iterations, decoder, st0);
    frames = std::move(em.history);
    for (const EmState& st : em.trajectory) {
      const double rmse = std::sqrt((st.a_hat - truth.amplitudes()).squaredNorm() / static_cast<double>(k_users));
      out.em.push_back({st.sigma2_hat, rmse});
    }
  } else if (cfg.detector == DetectorKind::Gaussian) {
    frames = run_schedule_gauss(detector_ch, obs, decoder, cfg.schedule, outer);
  } else if (cfg.detector == DetectorKind::Discrete) {
    frames = run_schedule_disc(detector_ch, obs, decoder, cfg.schedule, outer, cfg.inner_iterations);
  } else {
    frames = ddf_aided_discrete(detector_ch, obs, decoder, cfg.schedule, outer, cfg.inner_iterations,
                                DetectionOrderPolicy::fixed(resolve_order(cfg, detector_ch)));
  }

  for (std::size_t j = 0; j < frames.size(); ++j) {
    for (std::size_t k = 0; k < k_users; ++k) out.errors[j][k] = count_errors(frames[j].info_posterior[k], info[k]);
  }
  return out;
}

unsigned worker_count(const ScenarioConfig& cfg) {
  if (cfg.threads > 0) return cfg.threads;
  return std::max(1U, std::thread::hardware_concurrency());
}

// Runs trials [first, first + count) on the worker pool; results come back in trial order.
std::vector<TrialOutcome> run_batch(const Setup& s, std::size_t snr_index, double sigma2, std::uint64_t first,
                                    std::size_t count) {
  std::vector<TrialOutcome> results(count);
  const unsigned workers = std::min<unsigned>(worker_count(s.cfg), static_cast<unsigned>(count));
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) results[i] = run_trial(s, snr_index, sigma2, first + i);
    return results;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto work = [&] {
    while (true) {
      const std::size_t i = next.fetch_add(1);
      if (i >= count) return;
      try {
        results[i] = run_trial(s, snr_index, sigma2, first + i);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next = count;
      }
    }
  };
  std::vector<std::thread> pool;
  for (unsigned w = 0; w < workers; ++w) pool.emplace_back(work);
  for (auto& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);
  return results;
}

}  // namespace

Vector ScenarioConfig::amplitudes() const {
  Vector a = Vector::Ones(static_cast<Eigen::Index>(users));
  for (std::size_t k = 0; k < power_offsets_db.size() && k < users; ++k) {
    a(static_cast<Eigen::Index>(k)) = std::pow(10.0, power_offsets_db[k] / 20.0);
  }
  return a;
}

void ScenarioConfig::validate() const {
  if (users == 0) bad_field("users", "must be at least 1");
  if (spreading == SpreadingKind::Equicorrelated && !(rho >= 0.0 && rho < 1.0)) bad_field("rho", "must lie in [0, 1)");
  if (spreading == SpreadingKind::Random && chips < users) bad_field("chips", "random spreading needs chips >= users");
  if (!power_offsets_db.empty() && power_offsets_db.size() != users) {
    bad_field("power_offsets_db", "needs one entry per user");
  }
  for (double p : power_offsets_db) {
    if (!std::isfinite(p)) bad_field("power_offsets_db", "entries must be finite");
  }
  if (!uncoded()) {
    try {
      (void)ConvCode::parse(code);
    } catch (const Error& e) {
      bad_field("code", e.what());
    }
  }
  if (block_length == 0) bad_field("block_length", "must be at least 1");
  if (outer_iterations < 1) bad_field("outer_iterations", "must be at least 1");
  if (inner_iterations < 1) bad_field("inner_iterations", "must be at least 1");
  if (!(clip_lo < clip_hi)) bad_field("clip", "lower bound must be below upper bound");
  if (!(varsigma >= 0.0)) bad_field("varsigma", "must be non-negative");
  if (snr_db.empty()) bad_field("snr_db", "grid must not be empty");
  for (double v : snr_db) {
    if (std::isnan(v) || v == -std::numeric_limits<double>::infinity()) bad_field("snr_db", "entries must be > -inf");
  }
  if (trials == 0) bad_field("trials", "budget must be positive");
  if (max_trials != 0 && max_trials < trials) bad_field("max_trials", "must be 0 or at least trials");
  if (batch == 0) bad_field("batch", "must be at least 1");
  const bool linear = detector == DetectorKind::Mmse || detector == DetectorKind::Decorrelator ||
                      detector == DetectorKind::Sic;
  if (linear && !uncoded()) bad_field("detector", "linear detectors run uncoded only (code = none)");
  if (linear && runs_em()) bad_field("detector", "parameter estimation needs the gaussian or discrete detector");
  if (detector == DetectorKind::DdfAided && runs_em()) {
    bad_field("detector", "parameter estimation needs the gaussian or discrete detector");
  }
  if (order != "strongest-first" && order != "weakest-first" && order != "as-given") {
    const auto items = split(order, ',');
    if (items.size() != users) bad_field("order", "expected a policy name or a permutation of the users");
    std::vector<bool> seen(users, false);
    for (auto item : items) {
      const auto v = to_uint("order", item);
      if (v >= users || seen[v]) bad_field("order", "not a permutation of 0..users-1");
      seen[v] = true;
    }
  }
}

std::string_view to_string(DetectorKind d) noexcept {
  switch (d) {
    case DetectorKind::Gaussian: return "gaussian";
    case DetectorKind::Discrete: return "discrete";
    case DetectorKind::DdfAided: return "ddf";
    case DetectorKind::Mmse: return "mmse";
    case DetectorKind::Decorrelator: return "decorrelator";
    case DetectorKind::Sic: return "sic";
  }
  return "?";
}

std::string_view to_string(Schedule s) noexcept {
  switch (s) {
    case Schedule::Sequential: return "sequential";
    case Schedule::Flooding: return "flooding";
    case Schedule::Hybrid: return "hybrid";
  }
  return "?";
}

DetectorKind parse_detector(std::string_view v) {
  for (auto d : {DetectorKind::Gaussian, DetectorKind::Discrete, DetectorKind::DdfAided, DetectorKind::Mmse,
                 DetectorKind::Decorrelator, DetectorKind::Sic}) {
    if (v == to_string(d)) return d;
  }
  bad_field("detector", "expected gaussian, discrete, ddf, mmse, decorrelator or sic");
}

Schedule parse_schedule(std::string_view v) {
  for (auto s : {Schedule::Sequential, Schedule::Flooding, Schedule::Hybrid}) {
    if (v == to_string(s)) return s;
  }
  bad_field("schedule", "expected sequential, flooding or hybrid");
}

ScenarioConfig parse_config(std::string_view text) {
  ScenarioConfig c;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto end = text.find('\n', start);
    std::string_view line = text.substr(start, end == std::string_view::npos ? std::string_view::npos : end - start);
    start = end == std::string_view::npos ? text.size() + 1 : end + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw Error(ErrorCode::ConfigError, "config line " + std::to_string(line_no) + ": expected key = value");
    }
    const std::string_view key = trim(line.substr(0, eq));
    const std::string_view v = trim(line.substr(eq + 1));

    if (key == "name") c.name = v;
    else if (key == "spreading") {
      if (v == "equicorrelated") c.spreading = SpreadingKind::Equicorrelated;
      else if (v == "random") c.spreading = SpreadingKind::Random;
      else bad_field(key, "expected equicorrelated or random");
    } else if (key == "chips") c.chips = to_uint(key, v);
    else if (key == "users") c.users = to_uint(key, v);
    else if (key == "rho") c.rho = to_double(key, v);
    else if (key == "power_offsets_db") c.power_offsets_db = to_list(key, v);
    else if (key == "fixed_spreading") c.fixed_spreading = to_bool(key, v);
    else if (key == "code") c.code = v;
    else if (key == "block_length") c.block_length = to_uint(key, v);
    else if (key == "detector") c.detector = parse_detector(v);
    else if (key == "schedule") c.schedule = parse_schedule(v);
    else if (key == "outer_iterations") c.outer_iterations = static_cast<int>(to_uint(key, v));
    else if (key == "inner_iterations") c.inner_iterations = static_cast<int>(to_uint(key, v));
    else if (key == "order") c.order = v;
    else if (key == "clip") {
      if (v == "none") {
        c.clip_lo = -std::numeric_limits<double>::infinity();
        c.clip_hi = std::numeric_limits<double>::infinity();
      } else {
        const auto b = to_list(key, v);
        if (b.size() != 2) bad_field(key, "expected lo,hi or none");
        c.clip_lo = b[0];
        c.clip_hi = b[1];
      }
    } else if (key == "varsigma") c.varsigma = to_double(key, v);
    else if (key == "estimate_sigma2") c.estimate_sigma2 = to_bool(key, v);
    else if (key == "snr_db") c.snr_db = to_list(key, v);
    else if (key == "seed") c.seed = to_uint(key, v);
    else if (key == "trials") c.trials = to_uint(key, v);
    else if (key == "max_trials") c.max_trials = to_uint(key, v);
    else if (key == "min_errors") c.min_errors = to_uint(key, v);
    else if (key == "batch") c.batch = to_uint(key, v);
    else if (key == "threads") c.threads = static_cast<unsigned>(to_uint(key, v));
    else if (key == "per_user") c.per_user = to_bool(key, v);
    else {
      throw Error(ErrorCode::ConfigError,
                  "config line " + std::to_string(line_no) + ": unknown key '" + std::string(key) + "'");
    }
  }
  c.validate();
  return c;
}

std::vector<std::string> preset_names() {
  std::vector<std::string> names;
  for (const auto& [name, text] : builtin_presets()) names.push_back(name);
  return names;
}

std::optional<std::string> preset_text(std::string_view name) {
  const auto& p = builtin_presets();
  if (auto it = p.find(name); it != p.end()) return it->second;
  return std::nullopt;
}

ScenarioConfig load_config(const std::string& path_or_preset) {
  std::ifstream in(path_or_preset);
  if (in) {
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
  }
  // presets/<name> also resolves to the built-in copy when run outside the source tree.
  std::string_view name = path_or_preset;
  if (const auto slash = name.find_last_of('/'); slash != std::string_view::npos) name = name.substr(slash + 1);
  if (auto text = preset_text(name)) return parse_config(*text);
  throw Error(ErrorCode::IoError, "cannot open config '" + path_or_preset + "'");
}

std::string format_config(const ScenarioConfig& c) {
  std::ostringstream os;
  os << "name = " << c.name << '\n'
     << "spreading = " << (c.spreading == SpreadingKind::Equicorrelated ? "equicorrelated" : "random") << '\n';
  if (c.spreading == SpreadingKind::Random) os << "chips = " << c.chips << '\n';
  os << "users = " << c.users << '\n';
  if (c.spreading == SpreadingKind::Equicorrelated) os << "rho = " << fmt("%.17g", c.rho) << '\n';
  if (!c.power_offsets_db.empty()) os << "power_offsets_db = " << join(c.power_offsets_db) << '\n';
  os << "fixed_spreading = " << (c.fixed_spreading ? "true" : "false") << '\n'
     << "code = " << c.code << '\n'
     << "block_length = " << c.block_length << '\n'
     << "detector = " << to_string(c.detector) << '\n'
     << "schedule = " << to_string(c.schedule) << '\n'
     << "outer_iterations = " << c.outer_iterations << '\n'
     << "inner_iterations = " << c.inner_iterations << '\n'
     << "order = " << c.order << '\n';
  if (std::isinf(c.clip_lo) && std::isinf(c.clip_hi)) {
    os << "clip = none\n";
  } else {
    os << "clip = " << fmt("%.17g", c.clip_lo) << ',' << fmt("%.17g", c.clip_hi) << '\n';
  }
  os << "varsigma = " << fmt("%.17g", c.varsigma) << '\n'
     << "estimate_sigma2 = " << (c.estimate_sigma2 ? "true" : "false") << '\n'
     << "snr_db = " << join(c.snr_db) << '\n'
     << "seed = " << c.seed << '\n'
     << "trials = " << c.trials << '\n'
     << "max_trials = " << c.max_trials << '\n'
     << "min_errors = " << c.min_errors << '\n'
     << "batch = " << c.batch << '\n'
     << "threads = " << c.threads << '\n'
     << "per_user = " << (c.per_user ? "true" : "false") << '\n';
  return os.str();
}

double BerCounts::std_error() const noexcept {
  if (bits == 0) return 0.0;
  const double p = ber();
  return std::sqrt(p * (1.0 - p) / static_cast<double>(bits));
}

BerCounts SnrResult::total(std::size_t iteration) const {
  BerCounts c;
  for (const auto& u : cells.at(iteration)) c += u;
  return c;
}

BerReport run_scenario(const ScenarioConfig& cfg) {
  const Setup s = make_setup(cfg);
  const std::size_t cap = cfg.max_trials == 0 ? cfg.trials : cfg.max_trials;
  BerReport report;
  report.config = cfg;
  for (std::size_t i = 0; i < cfg.snr_db.size(); ++i) {
    const double snr = cfg.snr_db[i];
    const double sigma2 = std::isinf(snr) ? 0.0 : sigma2_for_snr_db(snr);
    SnrResult point;
    point.snr_db = snr;
    point.cells.assign(s.iterations, std::vector<BerCounts>(cfg.users));
    std::vector<EmPoint> em_sum;
    while (true) {
      const std::size_t goal = point.trials < cfg.trials ? cfg.trials : cap;
      const std::size_t count = std::min(cfg.batch, goal - point.trials);
      const auto batch = run_batch(s, i, sigma2, point.trials, count);
      for (const TrialOutcome& t : batch) {
        for (std::size_t j = 0; j < s.iterations; ++j) {
          for (std::size_t k = 0; k < cfg.users; ++k) point.cells[j][k] += BerCounts{cfg.block_length, t.errors[j][k]};
        }
        if (em_sum.size() < t.em.size()) em_sum.resize(t.em.size());
        for (std::size_t j = 0; j < t.em.size(); ++j) {
          em_sum[j].sigma2_hat += t.em[j].sigma2_hat;
          em_sum[j].a_hat_rmse += t.em[j].a_hat_rmse;
        }
      }
      point.trials += count;
      if (point.trials >= cap) break;
      if (point.trials < cfg.trials) continue;
      bool enough = true;
      for (std::size_t j = 0; j < s.iterations; ++j) enough = enough && point.total(j).errors >= cfg.min_errors;
      if (enough) break;
    }
    for (auto& e : em_sum) {
      e.sigma2_hat /= static_cast<double>(point.trials);
      e.a_hat_rmse /= static_cast<double>(point.trials);
    }
    point.em = std::move(em_sum);
    report.points.push_back(std::move(point));
  }
  return report;
}

BerReport single_user_bound(const ScenarioConfig& cfg) {
  ScenarioConfig su = cfg;
  su.name = cfg.name + "-single-user";
  su.spreading = SpreadingKind::Equicorrelated;
  su.users = 1;
  su.rho = 0.0;
  su.power_offsets_db.clear();
  su.detector = DetectorKind::Gaussian;
  su.schedule = Schedule::Flooding;
  // With one user the detector output never depends on the prior, so extra
  // outer iterations would repeat the first.
  su.outer_iterations = 1;
  su.inner_iterations = 1;
  su.order = "as-given";
  su.varsigma = 0.0;
  su.estimate_sigma2 = false;
  su.per_user = false;
  return run_scenario(su);
}

void write_ber_csv(std::ostream& os, const BerReport& report) {
  os << "snr_db,iteration,user,bits,errors,ber,ci95\n";
  auto row = [&](double snr, std::size_t j, const std::string& user, const BerCounts& c) {
    os << fmt("%g", snr) << ',' << j + 1 << ',' << user << ',' << c.bits << ',' << c.errors << ','
       << fmt("%.6e", c.ber()) << ',' << fmt("%.6e", c.ci95()) << '\n';
  };
  for (const auto& p : report.points) {
    for (std::size_t j = 0; j < p.cells.size(); ++j) {
      row(p.snr_db, j, "all", p.total(j));
      if (report.config.per_user) {
        for (std::size_t k = 0; k < p.cells[j].size(); ++k) row(p.snr_db, j, std::to_string(k + 1), p.cells[j][k]);
      }
    }
  }
}

void write_em_csv(std::ostream& os, const BerReport& report) {
  os << "snr_db,iteration,sigma2_hat,a_hat_rmse\n";
  for (const auto& p : report.points) {
    for (std::size_t j = 0; j < p.em.size(); ++j) {
      os << fmt("%g", p.snr_db) << ',' << j + 1 << ',' << fmt("%.9e", p.em[j].sigma2_hat) << ','
         << fmt("%.9e", p.em[j].a_hat_rmse) << '\n';
    }
  }
}

}  // namespace vfem
