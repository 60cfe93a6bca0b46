#pragma once

#include <cstddef>
#include <vector>

#include "vfem/siso_discrete.hpp"

namespace vfem {

struct DetectionOrderPolicy {
  enum class Kind { AmplitudeDescending, AsGiven, Custom };
  Kind kind = Kind::AmplitudeDescending;
  std::vector<std::size_t> custom;

  static DetectionOrderPolicy strongest_first() { return {}; }
  static DetectionOrderPolicy as_given() { return {Kind::AsGiven, {}}; }
  static DetectionOrderPolicy fixed(std::vector<std::size_t> order) { return {Kind::Custom, std::move(order)}; }
};

/// order[i] is the user detected i-th. Ties keep ascending user index.
std::vector<std::size_t> detection_order(const ChannelInstance& ch, const DetectionOrderPolicy& policy);

/// Whitened model of the users taken in detection order: the triangular
/// factor of the reordered correlation, the direct gain A_i F_ii and the
/// feedback weights on earlier decisions.
class DdfPrecompute {
 public:
  DdfPrecompute(const ChannelInstance& ch, std::vector<std::size_t> order);

  const std::vector<std::size_t>& order() const noexcept { return order_; }
  std::size_t users() const noexcept { return order_.size(); }
  double sigma2() const noexcept { return sigma2_; }
  const Matrix& whitening() const noexcept { return f_; }
  const Vector& direct_gain() const noexcept { return gain_; }
  /// Row i holds the weights on m of detection positions 0..i-1 (zero elsewhere).
  const Matrix& feedback() const noexcept { return feedback_; }

  /// Whitened matched-filter output in detection order, from y in user order.
  Vector whiten(const Vector& y) const;

 private:
  std::vector<std::size_t> order_;
  double sigma2_;
  Matrix f_;
  Vector gain_;
  Matrix feedback_;
};

struct DdfResult {
  DiscreteBelief q;       // user order
  Vector posterior_llr;   // user order
  ExtResult ext;          // user order
};

/// One causal pass. `ybar` is in detection order (DdfPrecompute::whiten);
/// priors and all outputs are in user order.
DdfResult ddf_pass(const ChannelInstance& ch, const Vector& ybar, const Vector& prior_llr, const DdfPrecompute& pre);

/// Discrete turbo schedule whose first outer iteration is a DDF pass.
std::vector<LlrFrame> ddf_aided_discrete(const ChannelInstance& ch, const Observation& obs,
                                         const SisoDecoder& decoder, Schedule schedule, int outer, int inner,
                                         const DetectionOrderPolicy& policy = {});

}  // namespace vfem
