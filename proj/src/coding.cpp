#include "vfem/coding.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "vfem/error.hpp"
#include "vfem/rng.hpp"

namespace vfem {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Exact log(e^a + e^b).
inline double log_add(double a, double b) noexcept {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  return a > b ? a + std::log1p(std::exp(b - a)) : b + std::log1p(std::exp(a - b));
}

void renormalise(std::span<double> v) {
  const double top = *std::max_element(v.begin(), v.end());
  if (top == kNegInf) return;
  for (double& x : v) x -= top;
}

}  // namespace

ConvCode::ConvCode(std::vector<std::string> generators, Termination termination)
    : generators_(std::move(generators)), termination_(termination) {
  if (generators_.size() != 2) throw Error(ErrorCode::ConfigError, "code needs exactly two generators (rate 1/2)");
  const std::size_t len = generators_[0].size();
  if (len < 1 || len > 16) throw Error(ErrorCode::ConfigError, "generator length must be between 1 and 16");
  for (const std::string& g : generators_) {
    if (g.size() != len) throw Error(ErrorCode::ConfigError, "generators must have equal length");
    unsigned tap = 0;
    for (char c : g) {
      if (c != '0' && c != '1') throw Error(ErrorCode::ConfigError, "generator '" + g + "' is not binary");
      tap = (tap << 1) | static_cast<unsigned>(c - '0');
    }
    if (tap == 0) throw Error(ErrorCode::ConfigError, "generator must be nonzero");
    taps_.push_back(tap);
  }
  memory_ = static_cast<int>(len) - 1;
}

ConvCode ConvCode::parse(std::string_view generators, Termination termination) {
  std::vector<std::string> parts;
  std::string current;
  for (char c : generators) {
    if (c == ',') {
      parts.push_back(current);
      current.clear();
    } else if (c != ' ' && c != '\t') {
      current.push_back(c);
    }
  }
  parts.push_back(current);
  return ConvCode(std::move(parts), termination);
}

std::size_t ConvCode::steps(std::size_t info_length) const noexcept {
  return info_length + (termination_ == Termination::Terminated ? static_cast<std::size_t>(memory_) : 0);
}

// State holds the previous inputs, most recent in the top bit.
std::size_t ConvCode::next_state(std::size_t state, int input) const noexcept {
  if (memory_ == 0) return 0;
  return (static_cast<std::size_t>(input) << (memory_ - 1)) | (state >> 1);
}

int ConvCode::output(std::size_t state, int input, int j) const noexcept {
  const unsigned reg = (static_cast<unsigned>(input) << memory_) | static_cast<unsigned>(state);
  return std::popcount(reg & taps_[static_cast<std::size_t>(j)]) & 1;
}

std::vector<double> encode(const ConvCode& code, std::span<const std::uint8_t> info) {
  if (info.empty()) throw Error(ErrorCode::LengthMismatch, "message must have at least one bit");
  const std::size_t n = code.steps(info.size());
  std::vector<double> out;
  out.reserve(2 * n);
  std::size_t state = 0;
  for (std::size_t t = 0; t < n; ++t) {
    const int u = t < info.size() ? (info[t] & 1) : 0;
    for (int j = 0; j < 2; ++j) out.push_back(code.output(state, u, j) ? -1.0 : 1.0);
    state = code.next_state(state, u);
  }
  return out;
}

BcjrResult bcjr_decode(const ConvCode& code, std::span<const double> channel_llrs,
                       std::span<const double> prior_info_llrs) {
  if (channel_llrs.size() % 2 != 0 || channel_llrs.empty()) {
    throw Error(ErrorCode::LengthMismatch, "channel LLR count must be a positive multiple of 2");
  }
  const std::size_t n = channel_llrs.size() / 2;
  const std::size_t tail = code.termination() == Termination::Terminated ? static_cast<std::size_t>(code.memory()) : 0;
  if (n <= tail) throw Error(ErrorCode::LengthMismatch, "channel LLRs shorter than the tail");
  const std::size_t info_len = n - tail;
  if (!prior_info_llrs.empty() && prior_info_llrs.size() != info_len) {
    throw Error(ErrorCode::LengthMismatch, "prior LLR count must equal message length");
  }
  const std::size_t ns = code.states();

  auto gamma = [&](std::size_t t, std::size_t s, int u) {
    double g = 0.0;
    if (t < info_len) {
      if (!prior_info_llrs.empty()) g += (u ? -0.5 : 0.5) * prior_info_llrs[t];
    } else if (u) {
      return kNegInf;
    }
    for (int j = 0; j < 2; ++j) g += (code.output(s, u, j) ? -0.5 : 0.5) * channel_llrs[2 * t + static_cast<std::size_t>(j)];
    return g;
  };

  std::vector<double> alpha((n + 1) * ns, kNegInf);
  std::vector<double> beta((n + 1) * ns, kNegInf);
  alpha[0] = 0.0;
  for (std::size_t t = 0; t < n; ++t) {
    const double* a = &alpha[t * ns];
    double* next = &alpha[(t + 1) * ns];
    for (std::size_t s = 0; s < ns; ++s) {
      if (a[s] == kNegInf) continue;
      for (int u = 0; u < 2; ++u) {
        const double g = gamma(t, s, u);
        if (g == kNegInf) continue;
        double& dst = next[code.next_state(s, u)];
        dst = log_add(dst, a[s] + g);
      }
    }
    renormalise({next, ns});
  }
  if (tail > 0) {
    beta[n * ns] = 0.0;
  } else {
    std::fill(beta.begin() + static_cast<std::ptrdiff_t>(n * ns), beta.end(), 0.0);
  }
  for (std::size_t t = n; t-- > 0;) {
    double* b = &beta[t * ns];
    const double* later = &beta[(t + 1) * ns];
    for (std::size_t s = 0; s < ns; ++s) {
      for (int u = 0; u < 2; ++u) {
        const double g = gamma(t, s, u);
        if (g == kNegInf) continue;
        b[s] = log_add(b[s], g + later[code.next_state(s, u)]);
      }
    }
    renormalise({b, ns});
  }

  BcjrResult out;
  out.coded_posterior.assign(2 * n, 0.0);
  out.extrinsic.assign(2 * n, 0.0);
  out.info_posterior.assign(info_len, 0.0);
  for (std::size_t t = 0; t < n; ++t) {
    double info_num = kNegInf, info_den = kNegInf;
    double num[2] = {kNegInf, kNegInf}, den[2] = {kNegInf, kNegInf};
    for (std::size_t s = 0; s < ns; ++s) {
      const double a = alpha[t * ns + s];
      if (a == kNegInf) continue;
      for (int u = 0; u < 2; ++u) {
        const double g = gamma(t, s, u);
        if (g == kNegInf) continue;
        const double metric = a + g + beta[(t + 1) * ns + code.next_state(s, u)];
        if (u) {
          info_den = log_add(info_den, metric);
        } else {
          info_num = log_add(info_num, metric);
        }
        for (int j = 0; j < 2; ++j) {
          if (code.output(s, u, j)) {
            den[j] = log_add(den[j], metric);
          } else {
            num[j] = log_add(num[j], metric);
          }
        }
      }
    }
    if (t < info_len) out.info_posterior[t] = info_num - info_den;
    for (int j = 0; j < 2; ++j) {
      const std::size_t i = 2 * t + static_cast<std::size_t>(j);
      out.coded_posterior[i] = num[j] - den[j];
      out.extrinsic[i] = out.coded_posterior[i] - channel_llrs[i];
    }
  }
  return out;
}

void validate_permutation(const Permutation& perm) {
  std::vector<bool> seen(perm.size(), false);
  for (std::size_t p : perm) {
    if (p >= perm.size() || seen[p]) throw Error(ErrorCode::InvalidPermutation, "interleaver is not a permutation");
    seen[p] = true;
  }
}

std::vector<double> interleave(const Permutation& perm, std::span<const double> in) {
  if (perm.size() != in.size()) throw Error(ErrorCode::LengthMismatch, "interleaver length mismatch");
  validate_permutation(perm);
  std::vector<double> out(in.size());
  for (std::size_t i = 0; i < perm.size(); ++i) out[i] = in[perm[i]];
  return out;
}

std::vector<double> deinterleave(const Permutation& perm, std::span<const double> in) {
  if (perm.size() != in.size()) throw Error(ErrorCode::LengthMismatch, "interleaver length mismatch");
  validate_permutation(perm);
  std::vector<double> out(in.size());
  for (std::size_t i = 0; i < perm.size(); ++i) out[perm[i]] = in[i];
  return out;
}

Permutation random_interleaver(std::size_t length, std::uint64_t seed) {
  Permutation perm(length);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  Rng rng(seed);
  // Fisher-Yates with an explicit index draw so the result does not depend on
  // the standard library's shuffle.
  for (std::size_t i = length; i > 1; --i) {
    std::uniform_int_distribution<std::size_t> pick(0, i - 1);
    std::swap(perm[i - 1], perm[pick(rng)]);
  }
  return perm;
}

DecodeOutput PassThroughDecoder::decode(std::size_t user, std::span<const double> llr_mud) const {
  if (user >= users_ || llr_mud.size() != length_) throw Error(ErrorCode::LengthMismatch, "pass-through decode");
  DecodeOutput out;
  out.extrinsic.assign(llr_mud.begin(), llr_mud.end());
  for (double& v : out.extrinsic) v = clamp_llr(v);
  out.info_posterior = out.extrinsic;
  return out;
}

DecodeOutput UncodedDecoder::decode(std::size_t user, std::span<const double> llr_mud) const {
  if (user >= users_ || llr_mud.size() != length_) throw Error(ErrorCode::LengthMismatch, "uncoded decode");
  DecodeOutput out;
  out.extrinsic.assign(llr_mud.size(), 0.0);
  out.info_posterior.assign(llr_mud.begin(), llr_mud.end());
  return out;
}

ConvDecoderBank::ConvDecoderBank(ConvCode code, std::size_t users, std::size_t info_length,
                                 std::uint64_t interleaver_seed)
    : code_(std::move(code)), info_length_(info_length) {
  if (users == 0 || info_length == 0) throw Error(ErrorCode::ConfigError, "decoder bank needs users and a block length");
  const std::size_t len = code_.coded_length(info_length);
  for (std::size_t k = 0; k < users; ++k) perms_.push_back(random_interleaver(len, derive_seed(interleaver_seed, {k})));
}

std::vector<double> ConvDecoderBank::transmit_symbols(std::size_t user, std::span<const std::uint8_t> info) const {
  if (info.size() != info_length_) throw Error(ErrorCode::LengthMismatch, "message length differs from block length");
  return interleave(perms_.at(user), encode(code_, info));
}

DecodeOutput ConvDecoderBank::decode(std::size_t user, std::span<const double> llr_mud) const {
  const Permutation& perm = perms_.at(user);
  if (llr_mud.size() != perm.size()) throw Error(ErrorCode::LengthMismatch, "detector LLR count differs from frame");
  std::vector<double> channel = deinterleave(perm, llr_mud);
  for (double& v : channel) v = clamp_llr(v);
  BcjrResult r = bcjr_decode(code_, channel, {});
  for (double& v : r.extrinsic) v = clamp_llr(v);
  return {interleave(perm, r.extrinsic), std::move(r.info_posterior)};
}

}  // namespace vfem
