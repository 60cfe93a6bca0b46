#include <limits>

#include "doctest.h"
#include "support.hpp"
#include "vfem/coding.hpp"
#include "vfem/error.hpp"

using namespace vfem;
using namespace vfem::testing;

namespace {

std::vector<std::uint8_t> bits_of(std::size_t value, std::size_t len) {
  std::vector<std::uint8_t> u(len);
  for (std::size_t i = 0; i < len; ++i) u[i] = (value >> i) & 1U;
  return u;
}

double log_add(double a, double b) {
  if (a == -std::numeric_limits<double>::infinity()) return b;
  const double hi = std::max(a, b);
  return hi + std::log(std::exp(a - hi) + std::exp(b - hi));
}

// Posterior LLRs of coded and info bits by summing over every message.
struct Exhaustive {
  std::vector<double> coded, info;
};

Exhaustive exhaustive_map(const ConvCode& code, std::size_t len, const std::vector<double>& ch,
                          const std::vector<double>& prior) {
  const double ninf = -std::numeric_limits<double>::infinity();
  const std::size_t n = code.coded_length(len);
  std::vector<double> cp(n, ninf), cm(n, ninf), ip(len, ninf), im(len, ninf);
  for (std::size_t v = 0; v < (std::size_t{1} << len); ++v) {
    const auto u = bits_of(v, len);
    const auto x = encode(code, u);
    double lp = 0.0;
    for (std::size_t i = 0; i < n; ++i) lp += 0.5 * x[i] * ch[i];
    for (std::size_t i = 0; i < len; ++i) lp += 0.5 * (u[i] ? -1.0 : 1.0) * prior[i];
    for (std::size_t i = 0; i < n; ++i) (x[i] > 0 ? cp[i] : cm[i]) = log_add(x[i] > 0 ? cp[i] : cm[i], lp);
    for (std::size_t i = 0; i < len; ++i) (u[i] ? im[i] : ip[i]) = log_add(u[i] ? im[i] : ip[i], lp);
  }
  Exhaustive e;
  for (std::size_t i = 0; i < n; ++i) e.coded.push_back(cp[i] - cm[i]);
  for (std::size_t i = 0; i < len; ++i) e.info.push_back(ip[i] - im[i]);
  return e;
}

std::vector<double> to_std(const Vector& v) { return {v.data(), v.data() + v.size()}; }

}  // namespace

TEST_CASE("ConvCode: parsing and validation") {
  const auto c = ConvCode::parse("10011,11101");
  CHECK(c.memory() == 4);
  CHECK(c.states() == 16);
  CHECK(c.coded_length(256) == 2 * 260);
  CHECK(ConvCode::parse("111, 101", Termination::Truncated).coded_length(10) == 20);
  for (const char* bad : {"111", "111,101,011", "111,10", "121,101", "000,101", ""}) {
    try {
      ConvCode::parse(bad);
      FAIL("expected ConfigError for " << bad);
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::ConfigError);
    }
  }
}

TEST_CASE("encode: zero message and a hand trace of the (7, 5) code") {
  const auto c = ConvCode::parse("111,101");
  for (double s : encode(c, std::vector<std::uint8_t>(6, 0))) CHECK(s == 1.0);
  // register trace for info 1 0 0 plus two tail zeros: 11 10 11 00 00
  const std::vector<double> expected{-1, -1, -1, 1, -1, -1, 1, 1, 1, 1};
  CHECK(encode(c, std::vector<std::uint8_t>{1, 0, 0}) == expected);
}

TEST_CASE("bcjr: zero input gives zero extrinsic") {
  const auto c = ConvCode::parse("10011,11101");
  const std::vector<double> zeros(c.coded_length(12), 0.0);
  const BcjrResult r = bcjr_decode(c, zeros, {});
  for (double v : r.extrinsic) CHECK(std::abs(v) < 1e-12);
  for (double v : r.info_posterior) CHECK(std::abs(v) < 1e-12);
}

TEST_CASE("bcjr: equals exhaustive MAP for both scenario codes") {
  Rng rng(1);
  for (const char* gens : {"111,101", "10011,11101"}) {
    const auto c = ConvCode::parse(gens);
    for (std::size_t len = 1; len <= 10; ++len) {
      for (int trial = 0; trial < 3; ++trial) {
        const auto n = static_cast<Eigen::Index>(c.coded_length(len));
        const auto ch = to_std(gaussian_vector(rng, n, 2.0));
        const auto prior = trial == 0 ? std::vector<double>(len, 0.0)
                                      : to_std(gaussian_vector(rng, static_cast<Eigen::Index>(len), 1.0));
        const BcjrResult r = bcjr_decode(c, ch, trial == 0 ? std::vector<double>{} : prior);
        const Exhaustive e = exhaustive_map(c, len, ch, prior);
        for (std::size_t i = 0; i < e.coded.size(); ++i) {
          // tail outputs that are fixed by the termination have infinite LLR
          if (std::isinf(e.coded[i])) {
            CHECK(r.coded_posterior[i] == e.coded[i]);
            continue;
          }
          CHECK(r.coded_posterior[i] == doctest::Approx(e.coded[i]).epsilon(1e-9).scale(1.0));
          CHECK(r.extrinsic[i] + ch[i] == doctest::Approx(r.coded_posterior[i]).epsilon(1e-12).scale(1.0));
        }
        for (std::size_t i = 0; i < len; ++i) {
          CHECK(r.info_posterior[i] == doctest::Approx(e.info[i]).epsilon(1e-9).scale(1.0));
        }
      }
    }
  }
}

TEST_CASE("bcjr: strong correct channel recovers the message") {
  Rng rng(2);
  const auto c = ConvCode::parse("10011,11101");
  std::vector<std::uint8_t> u(2000);
  for (auto& b : u) b = rng() & 1U;
  const auto x = encode(c, u);
  std::vector<double> llr(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) llr[i] = 1e6 * x[i];
  const BcjrResult r = bcjr_decode(c, llr, {});
  for (std::size_t i = 0; i < u.size(); ++i) {
    CHECK(std::isfinite(r.info_posterior[i]));
    CHECK((r.info_posterior[i] < 0.0) == (u[i] == 1));
  }
  std::vector<double> clamped(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) clamped[i] = kLlrClamp * x[i];
  const BcjrResult rc = bcjr_decode(c, clamped, {});
  for (std::size_t i = 0; i < u.size(); ++i) CHECK((rc.info_posterior[i] < 0.0) == (u[i] == 1));
}

TEST_CASE("bcjr: length mismatch") {
  const auto c = ConvCode::parse("111,101");
  try {
    bcjr_decode(c, std::vector<double>(7, 0.0), {});
    FAIL("expected LengthMismatch");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::LengthMismatch);
  }
  CHECK_THROWS_AS(bcjr_decode(c, std::vector<double>(c.coded_length(3), 0.0), std::vector<double>(2, 0.0)), Error);
}

TEST_CASE("interleaver: identity, inverse and seeding") {
  Rng rng(3);
  const auto data = to_std(gaussian_vector(rng, 50));
  Permutation id(50);
  for (std::size_t i = 0; i < 50; ++i) id[i] = i;
  CHECK(interleave(id, data) == data);
  const Permutation p = random_interleaver(50, 9);
  CHECK(deinterleave(p, interleave(p, data)) == data);
  CHECK(interleave(p, deinterleave(p, data)) == data);
  const auto out = interleave(p, data);
  for (std::size_t i = 0; i < 50; ++i) CHECK(out[i] == data[p[i]]);
  CHECK(random_interleaver(50, 9) == p);

  const ConvDecoderBank bank(ConvCode::parse("111,101"), 3, 20, 77);
  const ConvDecoderBank again(ConvCode::parse("111,101"), 3, 20, 77);
  CHECK(bank.interleaver(0) != bank.interleaver(1));
  CHECK(bank.interleaver(1) != bank.interleaver(2));
  for (std::size_t k = 0; k < 3; ++k) CHECK(bank.interleaver(k) == again.interleaver(k));

  for (const Permutation& bad : {Permutation{0, 0, 1}, Permutation{0, 3, 1}}) {
    try {
      validate_permutation(bad);
      FAIL("expected InvalidPermutation");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::InvalidPermutation);
    }
  }
  CHECK_THROWS_AS(interleave(p, std::vector<double>(49, 0.0)), Error);
}

TEST_CASE("ConvDecoderBank: noiseless round trip through the interleaver") {
  Rng rng(4);
  const ConvDecoderBank bank(ConvCode::parse("10011,11101"), 2, 64, 5);
  for (std::size_t k = 0; k < 2; ++k) {
    std::vector<std::uint8_t> u(64);
    for (auto& b : u) b = rng() & 1U;
    const auto sym = bank.transmit_symbols(k, u);
    CHECK(sym.size() == bank.frame_length());
    std::vector<double> llr(sym.size());
    for (std::size_t i = 0; i < sym.size(); ++i) llr[i] = 4.0 * sym[i];
    const DecodeOutput d = bank.decode(k, llr);
    CHECK(d.info_posterior.size() == 64);
    for (std::size_t i = 0; i < 64; ++i) CHECK((d.info_posterior[i] < 0.0) == (u[i] == 1));
    for (double e : d.extrinsic) CHECK(std::abs(e) <= kLlrClamp);
  }
  CHECK_THROWS_AS(bank.decode(0, std::vector<double>(10, 0.0)), Error);
}
