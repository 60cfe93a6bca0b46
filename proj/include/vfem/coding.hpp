#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "vfem/channel.hpp"

namespace vfem {

/// Largest magnitude any LLR exchanged in the turbo loop may take.
inline constexpr double kLlrClamp = 30.0;

inline double clamp_llr(double v) noexcept { return v > kLlrClamp ? kLlrClamp : (v < -kLlrClamp ? -kLlrClamp : v); }

enum class Termination { Terminated, Truncated };

/// Rate-1/2 feedforward convolutional code. Generators are binary strings,
/// most significant (first) character tapping the current input bit, so
/// "111" and "101" is the octal (7, 5) code.
class ConvCode {
 public:
  ConvCode(std::vector<std::string> generators, Termination termination = Termination::Terminated);

  /// Comma-separated generator list, e.g. "10011,11101".
  static ConvCode parse(std::string_view generators, Termination termination = Termination::Terminated);

  int memory() const noexcept { return memory_; }
  std::size_t states() const noexcept { return std::size_t{1} << memory_; }
  Termination termination() const noexcept { return termination_; }
  const std::vector<std::string>& generators() const noexcept { return generators_; }

  /// Trellis steps and coded bits for a message of `info_length` bits.
  std::size_t steps(std::size_t info_length) const noexcept;
  std::size_t coded_length(std::size_t info_length) const noexcept { return 2 * steps(info_length); }

  std::size_t next_state(std::size_t state, int input) const noexcept;
  /// Coded bit j (0 or 1) on the branch leaving `state` with `input`.
  int output(std::size_t state, int input, int j) const noexcept;

 private:
  std::vector<std::string> generators_;
  std::vector<unsigned> taps_;
  int memory_ = 0;
  Termination termination_;
};

/// Coded symbols in +/-1 form (bit 0 -> +1, bit 1 -> -1).
std::vector<double> encode(const ConvCode& code, std::span<const std::uint8_t> info);

struct BcjrResult {
  std::vector<double> extrinsic;        // coded-bit posterior minus channel LLR
  std::vector<double> coded_posterior;  // coded-bit APP LLRs
  std::vector<double> info_posterior;   // info-bit APP LLRs
};

/// Exact log-domain forward/backward APP decoding. LLRs are log p(+1)/p(-1)
/// in symbol terms. `prior_info_llrs` may be empty (uniform priors).
BcjrResult bcjr_decode(const ConvCode& code, std::span<const double> channel_llrs,
                       std::span<const double> prior_info_llrs);

using Permutation = std::vector<std::size_t>;

/// out[i] = in[perm[i]].
std::vector<double> interleave(const Permutation& perm, std::span<const double> in);
std::vector<double> deinterleave(const Permutation& perm, std::span<const double> in);

Permutation random_interleaver(std::size_t length, std::uint64_t seed);
void validate_permutation(const Permutation& perm);

/// LLRs exchanged between detector and decoders for one outer iteration.
/// Rows are channel symbols, columns users.
struct LlrFrame {
  RowMatrix mud;
  RowMatrix dec;
  std::vector<std::vector<double>> info_posterior;

  RowMatrix posterior() const { return mud + dec; }
};

struct DecodeOutput {
  std::vector<double> extrinsic;
  std::vector<double> info_posterior;
};

/// Per-user APP decoder as seen by the detector: channel-symbol LLRs in,
/// channel-symbol extrinsics out (interleaving is the decoder's business).
class SisoDecoder {
 public:
  virtual ~SisoDecoder() = default;
  virtual std::size_t users() const = 0;
  virtual std::size_t frame_length() const = 0;
  virtual DecodeOutput decode(std::size_t user, std::span<const double> llr_mud) const = 0;
};

/// Hands the detector output straight back as the decoder extrinsic.
class PassThroughDecoder final : public SisoDecoder {
 public:
  PassThroughDecoder(std::size_t users, std::size_t length) : users_(users), length_(length) {}
  std::size_t users() const override { return users_; }
  std::size_t frame_length() const override { return length_; }
  DecodeOutput decode(std::size_t user, std::span<const double> llr_mud) const override;

 private:
  std::size_t users_;
  std::size_t length_;
};

/// No code: zero feedback, hard decisions straight from the detector.
class UncodedDecoder final : public SisoDecoder {
 public:
  UncodedDecoder(std::size_t users, std::size_t length) : users_(users), length_(length) {}
  std::size_t users() const override { return users_; }
  std::size_t frame_length() const override { return length_; }
  DecodeOutput decode(std::size_t user, std::span<const double> llr_mud) const override;

 private:
  std::size_t users_;
  std::size_t length_;
};

/// One convolutional code shared by all users, each behind its own interleaver.
class ConvDecoderBank final : public SisoDecoder {
 public:
  ConvDecoderBank(ConvCode code, std::size_t users, std::size_t info_length, std::uint64_t interleaver_seed);

  std::size_t users() const override { return perms_.size(); }
  std::size_t frame_length() const override { return code_.coded_length(info_length_); }
  std::size_t info_length() const noexcept { return info_length_; }
  const ConvCode& code() const noexcept { return code_; }
  const Permutation& interleaver(std::size_t user) const { return perms_.at(user); }

  /// Encoded and interleaved +/-1 symbols for one user.
  std::vector<double> transmit_symbols(std::size_t user, std::span<const std::uint8_t> info) const;

  DecodeOutput decode(std::size_t user, std::span<const double> llr_mud) const override;

 private:
  ConvCode code_;
  std::size_t info_length_;
  std::vector<Permutation> perms_;
};

}  // namespace vfem
