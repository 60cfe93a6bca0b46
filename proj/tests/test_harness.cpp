#include <cmath>
#include <sstream>

#include "doctest.h"
#include "vfem/error.hpp"
#include "vfem/harness.hpp"

using namespace vfem;

namespace {

double q_function(double x) { return 0.5 * std::erfc(x / std::sqrt(2.0)); }

std::string csv(const BerReport& r) {
  std::ostringstream os;
  write_ber_csv(os, r);
  return os.str();
}

ScenarioConfig small_coded() {
  return parse_config(
      "name = small\n"
      "users = 3\nrho = 0.5\n"
      "code = 111,101\nblock_length = 64\n"
      "detector = gaussian\nschedule = flooding\nouter_iterations = 3\n"
      "snr_db = 3, 5\n"
      "seed = 11\ntrials = 6\nbatch = 2\nthreads = 1\nper_user = true\n");
}

}  // namespace

TEST_CASE("noiseless channel decodes without errors") {
  for (const char* det : {"gaussian", "discrete", "ddf", "mmse", "decorrelator", "sic"}) {
    // rho (K - 1) < 1 keeps the first mean-field sweep out of wrong corners
    ScenarioConfig c = parse_config("users = 3\nrho = 0.4\nblock_length = 100\nsnr_db = inf\ntrials = 3\nthreads = 1\n");
    c.detector = parse_detector(det);
    if (c.detector == DetectorKind::DdfAided) c.outer_iterations = 2;
    const BerReport r = run_scenario(c);
    for (std::size_t j = 0; j < r.points[0].cells.size(); ++j) CHECK(r.points[0].total(j).errors == 0);
  }
  ScenarioConfig coded = small_coded();
  coded.snr_db = {std::numeric_limits<double>::infinity()};
  const BerReport r = run_scenario(coded);
  for (std::size_t j = 0; j < 3; ++j) CHECK(r.points[0].total(j).errors == 0);
}

TEST_CASE("presets load with the scenario parameters") {
  const ScenarioConfig one = load_config("scenario-i");
  CHECK(one.users == 4);
  CHECK(one.rho == 0.7);
  CHECK(one.code == "10011,11101");
  CHECK(one.outer_iterations == 5);
  CHECK(one.block_length == 256);
  const ScenarioConfig two = load_config("scenario-ii");
  CHECK(two.spreading == SpreadingKind::Random);
  CHECK(two.chips == 32);
  CHECK(two.users == 32);
  CHECK(two.code == "111,101");
  CHECK(two.varsigma == 0.3);
  const ScenarioConfig ddf = load_config("ddf-two-user");
  CHECK(ddf.users == 2);
  CHECK(ddf.detector == DetectorKind::DdfAided);
  CHECK(preset_names() == std::vector<std::string>{"ddf-two-user", "scenario-i", "scenario-ii"});
  // formatting round-trips
  CHECK(format_config(parse_config(format_config(one))) == format_config(one));
}

TEST_CASE("config errors name the offending field") {
  auto message = [](const std::string& text) -> std::string {
    try {
      parse_config(text).validate();
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::ConfigError);
      return e.what();
    }
    return {};
  };
  CHECK(message("users = 2\nsnr_db = 1\nbogus = 3\n").find("bogus") != std::string::npos);
  CHECK(message("users = 2\n").find("snr_db") != std::string::npos);
  CHECK(message("users = two\nsnr_db = 1\n").find("users") != std::string::npos);
  CHECK(message("users = 2\nsnr_db = 1\nouter_iterations = 0\n").find("outer_iterations") != std::string::npos);
  CHECK(message("users = 2\nsnr_db = 1\ntrials = 0\n").find("trials") != std::string::npos);
  CHECK(message("users = 2\nsnr_db = 1\ncode = 1x1,101\n").find("code") != std::string::npos);
  CHECK(message("users = 2\nsnr_db = 1\nschedule = sideways\n").find("schedule") != std::string::npos);
  CHECK(message("users = 2\nsnr_db = 1\nrho = 1.5\n").find("rho") != std::string::npos);
  CHECK_THROWS_AS(load_config("/nonexistent/config"), Error);
}

TEST_CASE("uncoded single-user bound follows the Gaussian tail") {
  ScenarioConfig c = parse_config("users = 1\nblock_length = 1000\nsnr_db = 6\ntrials = 400\nthreads = 1\nseed = 3\n");
  const double snr9 = 10.0 * std::log10(2.0 * std::pow(10.0, 0.6));  // A^2/sigma^2 for Eb/N0 = 6 dB
  c.snr_db = {6.0, snr9};
  const BerReport r = single_user_bound(c);
  const double expected[] = {q_function(std::sqrt(std::pow(10.0, 0.6))), 0.00239};
  CHECK(q_function(std::sqrt(2.0 * std::pow(10.0, 0.6))) == doctest::Approx(0.00239).epsilon(0.01));
  for (std::size_t i = 0; i < 2; ++i) {
    const BerCounts t = r.points[i].final_total();
    CHECK(t.bits == 400000);
    MESSAGE("snr " << c.snr_db[i] << " ber " << t.ber() << " expected " << expected[i]);
    CHECK(std::abs(t.ber() - expected[i]) <= 1.5 * t.ci95());
  }
}

TEST_CASE("coded single-user bound is error free at high SNR") {
  ScenarioConfig c = load_config("scenario-i");
  c.snr_db = {12.0};
  c.trials = 20;
  c.max_trials = 20;
  c.threads = 1;
  const BerReport r = single_user_bound(c);
  CHECK(r.points[0].final_total().bits == 20 * 256);
  CHECK(r.points[0].final_total().errors == 0);
}

TEST_CASE("results do not depend on the worker count") {
  ScenarioConfig c = small_coded();
  const std::string one = csv(run_scenario(c));
  c.threads = 3;
  CHECK(csv(run_scenario(c)) == one);
  c.batch = 5;
  CHECK(csv(run_scenario(c)) == one);
  c.seed = 12;
  CHECK(csv(run_scenario(c)) != one);
}

TEST_CASE("bit accounting is exact") {
  const ScenarioConfig c = small_coded();
  const BerReport r = run_scenario(c);
  REQUIRE(r.points.size() == 2);
  for (const SnrResult& p : r.points) {
    CHECK(p.trials == c.trials);
    REQUIRE(p.cells.size() == 3);
    for (std::size_t j = 0; j < 3; ++j) {
      CHECK(p.total(j).bits == c.block_length * c.users * c.trials);
      for (const BerCounts& cell : p.cells[j]) {
        CHECK(cell.bits == c.block_length * c.trials);
        CHECK(cell.errors <= cell.bits);
      }
    }
  }
}

TEST_CASE("stopping rule extends runs until enough errors are seen") {
  ScenarioConfig c = parse_config(
      "users = 2\nrho = 0.3\nblock_length = 50\nsnr_db = 0\ntrials = 2\nmax_trials = 50\nmin_errors = 100\n"
      "batch = 4\nthreads = 1\n");
  const BerReport r = run_scenario(c);
  const SnrResult& p = r.points[0];
  CHECK(p.trials > 2);
  CHECK(p.trials <= 50);
  CHECK(p.final_total().errors >= 100);
  CHECK(p.final_total().bits == p.trials * 100);
}

TEST_CASE("EM runs write a trajectory per iteration") {
  ScenarioConfig c = small_coded();
  c.varsigma = 0.2;
  c.estimate_sigma2 = true;
  const BerReport r = run_scenario(c);
  for (const SnrResult& p : r.points) {
    REQUIRE(p.em.size() == 3);
    for (const EmPoint& e : p.em) {
      CHECK(e.sigma2_hat > 0.0);
      CHECK(e.a_hat_rmse >= 0.0);
    }
  }
  std::ostringstream os;
  write_em_csv(os, r);
  CHECK(os.str().rfind("snr_db,iteration,sigma2_hat,a_hat_rmse\n", 0) == 0);
}

TEST_CASE("CSV layout") {
  const BerReport r = run_scenario(small_coded());
  const std::string text = csv(r);
  CHECK(text.rfind("snr_db,iteration,user,bits,errors,ber,ci95\n", 0) == 0);
  // 2 SNR points x 3 iterations x (all + 3 users) rows plus header
  CHECK(std::count(text.begin(), text.end(), '\n') == 1 + 2 * 3 * 4);
  CHECK(text.find("\n3,1,all,") != std::string::npos);
  CHECK(text.find("\n5,3,2,") != std::string::npos);
}

TEST_CASE("BerCounts statistics") {
  BerCounts c{1000, 10};
  CHECK(c.ber() == 0.01);
  CHECK(c.std_error() == doctest::Approx(std::sqrt(0.01 * 0.99 / 1000.0)));
  CHECK(c.ci95() == doctest::Approx(1.96 * c.std_error()));
  c += BerCounts{1000, 30};
  CHECK(c.ber() == 0.02);
  CHECK(BerCounts{}.ber() == 0.0);
}
