#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>

#include "vfem/channel.hpp"

namespace vfem {

/// Gaussian approximate posterior Q(b) = N(mu, Sigma).
struct GaussianBelief {
  Vector mu;
  Matrix sigma;
};

/// Box constraint for clipped SIC. Defaults to unbounded (linear SIC).
struct ClipBox {
  double lo = -std::numeric_limits<double>::infinity();
  double hi = std::numeric_limits<double>::infinity();

  static ClipBox unbounded() { return {}; }
  static ClipBox bpsk() { return {-1.0, 1.0}; }
  bool bounded() const noexcept { return std::isfinite(lo) || std::isfinite(hi); }
  double clip(double v) const noexcept { return v < lo ? lo : (v > hi ? hi : v); }
};

/// Which free energy the linear detector minimises: flat prior (decorrelator)
/// or N(0, I) prior (MMSE).
enum class LinearTarget { Mmse, Decorrelator };

enum class SweepOrder { Cyclic, AlmostCyclic, GaussSouthwell };

GaussianBelief decorrelate(const ChannelInstance& ch, const Vector& r);
GaussianBelief mmse(const ChannelInstance& ch, const Vector& r);

/// Posterior-mean estimator (A^T S^T S A + alpha2 I)^{-1} A^T S^T r.
Vector pme_alpha(const ChannelInstance& ch, const Vector& r, double alpha2);

/// Free energy of a Gaussian belief under the flat (decorrelator) or N(0, I)
/// (MMSE) prior. Terms independent of (mu, Sigma) are dropped.
double linear_free_energy(const ChannelInstance& ch, const Vector& r, const GaussianBelief& q, LinearTarget target);

struct SicOptions {
  ClipBox box;
  LinearTarget target = LinearTarget::Mmse;
  int sweeps = 200;
  SweepOrder order = SweepOrder::Cyclic;
  double tolerance = 1e-10;  // stop once a sweep moves no coordinate further than this
  std::uint64_t order_seed = 0;  // AlmostCyclic only
  /// Called after every single-coordinate update with the updated coordinate and mean.
  std::function<void(std::size_t, const Vector&)> on_update;
};

struct SicResult {
  Vector mu;
  int sweeps = 0;
};

/// Coordinate descent on the linear free energy, starting from mu = 0.
SicResult sic(const ChannelInstance& ch, const Vector& r, const SicOptions& options);

inline Vector sic(const ChannelInstance& ch, const Vector& r, ClipBox box, LinearTarget target, int sweeps) {
  SicOptions o;
  o.box = box;
  o.target = target;
  o.sweeps = sweeps;
  return sic(ch, r, o).mu;
}

}  // namespace vfem
