#pragma once

#include <limits>
#include <optional>
#include <vector>

#include "vfem/coding.hpp"
#include "vfem/siso_discrete.hpp"
#include "vfem/siso_gaussian.hpp"

namespace vfem {

inline constexpr double kSigma2Floor = 1e-9;
inline constexpr double kSigma2InitFloor = 1e-3;

/// Parameter estimates and the Gaussian prior N(a_tilde, varsigma2 I) on the amplitudes.
struct EmState {
  Vector a_hat;
  double sigma2_hat = 1.0;
  Vector a_tilde;
  double varsigma2 = std::numeric_limits<double>::infinity();  // infinity: flat prior
  bool estimate_sigma2 = true;
};

/// First and second moments of the symbol beliefs, one row per symbol interval.
struct PosteriorSummary {
  RowMatrix mean;
  RowMatrix var;                     // diagonal of each covariance
  std::vector<Matrix> covariance;    // full covariances; empty means diagonal

  static PosteriorSummary from_means(const RowMatrix& mean);
  std::size_t length() const noexcept { return static_cast<std::size_t>(mean.rows()); }
};

/// Start of the EM loop: a = a_tilde and a residual-energy noise estimate.
EmState initial_em_state(const Observation& obs, const Vector& a_tilde, double varsigma2, bool estimate_sigma2,
                         double known_sigma2 = 1.0);

/// Parameter-dependent part of the EM free energy, with the amplitude prior
/// counted once for the whole block.
double em_objective(const Matrix& spreading, const Observation& obs, const PosteriorSummary& post, const Vector& a,
                    double sigma2, const EmState& state);

/// Analytic gradient of em_objective with respect to a, and its derivative
/// with respect to the noise precision 1 / sigma2.
Vector em_gradient_a(const Matrix& spreading, const Observation& obs, const PosteriorSummary& post, const Vector& a,
                     double sigma2, const EmState& state);
double em_derivative_precision(const Matrix& spreading, const Observation& obs, const PosteriorSummary& post,
                               const Vector& a, double sigma2);

/// Amplitude update at the current noise level, then the noise update at the new amplitudes.
EmState mstep_gauss(const Matrix& spreading, const Observation& obs, const PosteriorSummary& post,
                    const EmState& state);

/// Same update for factorised binary beliefs (second moments 1 - m^2).
EmState mstep_disc(const Matrix& spreading, const Observation& obs, const RowMatrix& means, const EmState& state);

enum class DetectorFamily { Gaussian, Discrete };

struct VarEmResult {
  std::vector<LlrFrame> history;
  std::vector<EmState> trajectory;  // after each M-step
};

/// Joint detection and estimation: per outer iteration one E-step with the
/// current estimates, decoding, then one M-step on the decoder-informed
/// posterior soft bits. Only the spreading codes of `geometry` are used.
VarEmResult run_varem(const ChannelInstance& geometry, const Observation& obs, DetectorFamily family,
                      Schedule schedule, int outer, int inner, const SisoDecoder& decoder, const EmState& state0);

/// Channel seen by the detector for the given estimates.
ChannelInstance estimated_channel(const ChannelInstance& geometry, const EmState& state);

}  // namespace vfem
