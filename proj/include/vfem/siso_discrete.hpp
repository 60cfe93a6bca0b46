#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "vfem/coding.hpp"
#include "vfem/siso_gaussian.hpp"

namespace vfem {

/// Soft bits stay at least this far from +/-1.
inline constexpr double kMeanMargin = 1e-9;

/// Factorised binary belief; m_k is the posterior mean of b_k.
struct DiscreteBelief {
  Vector m;
};

double clamp_mean(double m) noexcept;

/// Mean-field free energy, matched-filter form. `energy` is r^T r. The
/// additive constant (N/2) log(2 pi) of the exact KL is dropped.
double free_energy_disc_mf(const ChannelInstance& ch, const Vector& y, double energy, const Vector& prior_llr,
                           const Vector& m);

double free_energy_disc(const ChannelInstance& ch, const Vector& r, const Vector& prior_llr, const DiscreteBelief& q);

using CoordinateObserver = std::function<void(std::size_t, const Vector&)>;

/// One sweep of exact coordinate updates over `order`, in place. llr_pos
/// receives the posterior LLR of every updated user.
void serial_sweep_mf(const ChannelInstance& ch, const Vector& y, const Vector& prior_llr, Vector& m,
                     Vector& llr_pos, std::span<const std::size_t> order, const CoordinateObserver& observer = {});

struct SerialResult {
  DiscreteBelief q;
  Vector posterior_llr;
};

SerialResult serial_update(const ChannelInstance& ch, const Vector& r, const Vector& prior_llr,
                           const DiscreteBelief& q, std::span<const std::size_t> order,
                           const CoordinateObserver& observer = {});

/// Per-user violation of the mean-field fixed-point equations m = tanh(field / 2),
/// in mean units and with the same clamp as the updates.
Vector stationarity_residual(const ChannelInstance& ch, const Vector& r, const Vector& prior_llr,
                             const DiscreteBelief& q);

/// Leave-one-out soft cancellation without iteration.
ExtResult ext_one_shot_mf(const ChannelInstance& ch, const Vector& y, const Vector& prior_llr);
ExtResult ext_one_shot(const ChannelInstance& ch, const Vector& r, const Vector& prior_llr);

/// Uncoded hyperbolic-tangent SIC: serial sweeps from m = 0 with zero priors.
DiscreteBelief tanh_sic(const ChannelInstance& ch, const Vector& r, int sweeps);

std::vector<std::size_t> cyclic_order(std::size_t users, std::size_t start = 0);

/// Replacement for the inner sweeps of the first outer iteration: given the
/// symbol index and priors, updates the means and writes posterior LLRs.
using InnerKernel = std::function<void(Eigen::Index, const Vector&, Vector&, Vector&)>;

struct DiscreteScheduleOptions {
  Schedule schedule = Schedule::Flooding;
  int outer_iterations = 1;
  int inner_iterations = 1;
  InnerKernel first_iteration;  // empty: serial sweeps throughout
};

/// Turbo loop state between outer iterations: decoder extrinsics and the
/// per-symbol soft bits, both persistent.
class DiscreteTurbo {
 public:
  DiscreteTurbo(const Observation& obs, const SisoDecoder& decoder, Schedule schedule, int inner_iterations);

  /// One outer iteration. A non-empty `kernel` replaces the inner sweeps.
  LlrFrame iterate(const ChannelInstance& ch, const InnerKernel& kernel = {});

  const RowMatrix& decoder_llr() const noexcept { return dec_; }
  const RowMatrix& means() const noexcept { return means_; }
  /// Overwrites the soft bits (clamped into the open interval).
  void set_means(const RowMatrix& m);

 private:
  const Observation& obs_;
  const SisoDecoder& decoder_;
  Schedule schedule_;
  int inner_;
  RowMatrix dec_;
  RowMatrix means_;
};

std::vector<LlrFrame> run_schedule_disc(const ChannelInstance& ch, const Observation& obs,
                                        const SisoDecoder& decoder, const DiscreteScheduleOptions& options);

inline std::vector<LlrFrame> run_schedule_disc(const ChannelInstance& ch, const Observation& obs,
                                               const SisoDecoder& decoder, Schedule schedule, int outer,
                                               int inner) {
  return run_schedule_disc(ch, obs, decoder, {schedule, outer, inner, {}});
}

}  // namespace vfem
