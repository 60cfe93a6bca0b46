#pragma once

#include <cstddef>
#include <vector>

#include "vfem/coding.hpp"
#include "vfem/detect_linear.hpp"

namespace vfem {

/// Smallest prior variance 1 - btilde^2 admitted; soft bits are pulled inward to respect it.
inline constexpr double kPriorVarianceFloor = 1e-6;

/// Gaussian prior N(btilde, W) on the symbols, W = diag(1 - btilde^2).
class GaussianPrior {
 public:
  /// Zero-mean, unit-variance prior for `users` symbols.
  explicit GaussianPrior(std::size_t users);

  static GaussianPrior from_soft_bits(const Vector& btilde);
  static GaussianPrior from_llrs(const Vector& llr);

  const Vector& mean() const noexcept { return btilde_; }
  const Vector& variance() const noexcept { return w_; }
  std::size_t users() const noexcept { return static_cast<std::size_t>(btilde_.size()); }

  /// Prior with user k's own information removed (mean 0, variance 1).
  GaussianPrior without(std::size_t k) const;

 private:
  GaussianPrior() = default;
  Vector btilde_;
  Vector w_;
};

/// Extrinsic LLRs with the per-user quantities they were built from.
struct ExtResult {
  Vector llr;
  Vector mean;  // filter output (leave-one-out or shared)
  Vector gain;  // the alpha term of the extrinsic denominator
};

enum class Schedule { Sequential, Flooding, Hybrid };

/// Gaussian free energy for belief q under prior N(btilde, W), matched-filter
/// form y = S^T r. Constants independent of q are dropped.
double free_energy_gauss(const ChannelInstance& ch, const Vector& y, const GaussianPrior& prior,
                         const GaussianBelief& q);

/// Exact minimiser of free_energy_gauss.
GaussianBelief solve_gauss(const ChannelInstance& ch, const Vector& y, const GaussianPrior& prior);

/// Hybrid extrinsic: every user filtered with its own leave-one-out prior.
ExtResult ext_hybrid(const ChannelInstance& ch, const Vector& y, const GaussianPrior& prior);

/// Single-user slice of ext_hybrid (used by the sequential schedule).
double ext_hybrid_user(const ChannelInstance& ch, const Vector& y, const GaussianPrior& prior, std::size_t k);

/// Two-stage soft interference canceller followed by an MMSE filter on the
/// residual, written directly in terms of R^{-1}. Test reference for ext_hybrid.
ExtResult wang_poor_oracle(const ChannelInstance& ch, const Vector& y, const GaussianPrior& prior);

/// Flooding extrinsic from one shared filter with the full prior.
ExtResult ext_flooding(const ChannelInstance& ch, const Vector& y, const GaussianPrior& prior);

/// Same quantity by dividing the solve_gauss marginal by the prior.
ExtResult ext_flooding_division(const ChannelInstance& ch, const Vector& y, const GaussianPrior& prior);

/// Turbo loop state carried between outer iterations: the decoder extrinsics
/// that form the next priors. The channel model may change between
/// iterations (parameter estimation).
class GaussianTurbo {
 public:
  GaussianTurbo(const Observation& obs, const SisoDecoder& decoder, Schedule schedule);

  /// One outer iteration: detection and decoding of every user.
  LlrFrame iterate(const ChannelInstance& ch);

  const RowMatrix& decoder_llr() const noexcept { return dec_; }

 private:
  const Observation& obs_;
  const SisoDecoder& decoder_;
  Schedule schedule_;
  RowMatrix dec_;
};

/// Turbo loop over a frame of L symbols per user (obs rows), J outer iterations.
/// Returns one LlrFrame per outer iteration.
std::vector<LlrFrame> run_schedule_gauss(const ChannelInstance& ch, const Observation& obs,
                                         const SisoDecoder& decoder, Schedule schedule, int outer_iterations);

}  // namespace vfem
