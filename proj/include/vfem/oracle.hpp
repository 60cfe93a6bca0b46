#pragma once

#include <cstddef>
#include <vector>

#include "vfem/detect_linear.hpp"
#include "vfem/siso_discrete.hpp"

namespace vfem {

inline constexpr std::size_t kMaxEnumerationUsers = 16;
inline constexpr std::size_t kMaxGridUsers = 3;

/// Joint and marginal posteriors over all 2^K symbol vectors. Configuration
/// c has b_k = -1 exactly when bit k of c is set.
struct ExactPosterior {
  std::vector<double> joint;
  Vector p_plus;  // p(b_k = +1 | r)

  Vector llr() const;
};

/// Symbol vector for enumeration index c.
Vector configuration(std::size_t users, std::size_t c);

ExactPosterior exact_posterior(const ChannelInstance& ch, const Vector& r, const Vector& prior_llr);

struct ExactExtrinsic {
  double marginalised;  // likelihood ratio summed over the other users under their priors
  double divided;       // posterior LLR minus own prior
};

ExactExtrinsic exact_ext(const ChannelInstance& ch, const Vector& r, const Vector& prior_llr, std::size_t k);

/// sum_b Q(b) log[Q(b) / p(b, r)] for the factorised belief with means m,
/// including every constant.
double exact_kl_disc(const ChannelInstance& ch, const Vector& r, const Vector& prior_llr, const Vector& m);

/// Brute-force minimiser of free_energy_disc over the grid {-1 + i step} strictly inside (-1, 1),
/// plus the clamp limits +/-(1 - kMeanMargin).
DiscreteBelief grid_min_fdisc(const ChannelInstance& ch, const Vector& r, const Vector& prior_llr, double step);

/// Posterior of b under the Gaussian prior N(mean, cov), by conditioning the
/// joint Gaussian of (b, r) directly.
GaussianBelief gaussian_conditioning(const ChannelInstance& ch, const Vector& r, const Vector& mean,
                                     const Matrix& cov);

}  // namespace vfem
