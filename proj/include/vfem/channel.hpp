#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "vfem/linalg.hpp"

namespace vfem {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Synchronous CDMA channel r = S A b + n with unit-norm spreading columns.
///
/// Immutable once built. R = S^T S and the whitening factor F (R = F^T F, F lower
/// triangular) are derived at construction. sigma2 may be zero, which denotes a
/// noiseless link; detectors require a strictly positive value.
class ChannelInstance {
 public:
  /// Validates and normalises the columns of `spreading` (each must already be
  /// unit norm to 1e-9), then derives R and F.
  static ChannelInstance from_spreading(Matrix spreading, Vector amplitudes, double sigma2);

  std::size_t chips() const noexcept { return static_cast<std::size_t>(s_.rows()); }
  std::size_t users() const noexcept { return static_cast<std::size_t>(s_.cols()); }

  const Matrix& spreading() const noexcept { return s_; }
  const Vector& amplitudes() const noexcept { return a_; }
  double sigma2() const noexcept { return sigma2_; }
  const Matrix& correlation() const noexcept { return r_; }
  const Matrix& whitening() const noexcept { return f_; }
  const Matrix& correlation_inverse() const noexcept { return rinv_; }

  /// A^T R A, the Gram matrix of the amplitude-scaled signatures.
  const Matrix& gram() const noexcept { return gram_; }

  /// Same spreading codes with different amplitudes and noise level.
  ChannelInstance with_parameters(Vector amplitudes, double sigma2) const;

  /// Users reordered so that new user i is old user order[i].
  ChannelInstance permuted(std::span<const std::size_t> order) const;

 private:
  ChannelInstance() = default;

  Matrix s_;
  Vector a_;
  double sigma2_ = 0.0;
  Matrix r_;
  Matrix f_;
  Matrix rinv_;
  Matrix gram_;
};

/// Block of T channel uses; rows are symbol intervals, entries are +/-1.
struct SymbolBlock {
  RowMatrix b;  // T x K

  std::size_t length() const noexcept { return static_cast<std::size_t>(b.rows()); }
};

/// r (T x N), matched-filter output y = S^T r (T x K), whitened ybar = F^{-T} y (T x K).
struct Observation {
  RowMatrix r;
  RowMatrix y;
  RowMatrix ybar;

  std::size_t length() const noexcept { return static_cast<std::size_t>(r.rows()); }
};

/// Equicorrelated codes, R = (1 - rho) I + rho 11^T, realised as S = F with N = K.
ChannelInstance make_equicorrelated(std::size_t users, double rho, double sigma2 = 1.0,
                                    const Vector& amplitudes = Vector());

/// Random +/-1/sqrt(N) chip sequences; resamples until R is positive definite
/// (at most kMaxSpreadingDraws attempts).
ChannelInstance make_random_spreading(std::size_t chips, std::size_t users, std::uint64_t seed,
                                      double sigma2 = 1.0, const Vector& amplitudes = Vector());

inline constexpr int kMaxSpreadingDraws = 64;

/// r_t = S A b_t + n_t with n_t ~ N(0, sigma2 I); y and ybar derived from r.
Observation transmit(const ChannelInstance& ch, const SymbolBlock& block, std::uint64_t seed);

/// Derives y and ybar for an externally supplied received matrix.
Observation observe(const ChannelInstance& ch, RowMatrix r);

/// ybar = F^{-T} y for a single symbol interval.
Vector whiten(const ChannelInstance& ch, const Vector& y);

/// Noise variance that puts a unit-amplitude user at `snr_db` (SNR = A^2 / sigma2).
double sigma2_for_snr_db(double snr_db);

}  // namespace vfem
