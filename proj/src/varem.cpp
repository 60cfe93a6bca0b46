#include "vfem/varem.hpp"

#include <cmath>

#include "vfem/error.hpp"

namespace vfem {

namespace {

constexpr double kAmplitudeFloor = 1e-6;

// Sufficient statistics of the expected residual energy as a quadratic in a:
// sum_t E||r_t - S A b_t||^2 = energy - 2 g^T a + a^T h a.
struct Moments {
  Matrix h;
  Vector g;
  double energy = 0.0;
};

void check(const Matrix& s, const Observation& obs, std::size_t rows, Eigen::Index cols) {
  if (obs.r.cols() != s.rows() || obs.y.cols() != s.cols() || cols != s.cols()) {
    throw Error(ErrorCode::DimensionMismatch, "EM: spreading, observation and beliefs disagree");
  }
  if (rows != obs.length() || rows == 0) throw Error(ErrorCode::DimensionMismatch, "EM: belief count differs from T");
}

Moments moments(const Matrix& s, const Observation& obs, const PosteriorSummary& post) {
  check(s, obs, post.length(), post.mean.cols());
  const Matrix r = s.transpose() * s;
  const auto k = s.cols();
  Moments mo{Matrix::Zero(k, k), Vector::Zero(k), obs.r.squaredNorm()};
  const bool full = !post.covariance.empty();
  if (full && post.covariance.size() != post.length()) throw Error(ErrorCode::DimensionMismatch, "EM: covariance count");
  for (Eigen::Index t = 0; t < post.mean.rows(); ++t) {
    const Vector mu = post.mean.row(t).transpose();
    mo.h += mu.asDiagonal() * r * mu.asDiagonal();
    if (full) {
      mo.h += r.cwiseProduct(post.covariance[static_cast<std::size_t>(t)]);
    } else {
      mo.h.diagonal() += r.diagonal().cwiseProduct(post.var.row(t).transpose());
    }
    mo.g += mu.cwiseProduct(obs.y.row(t).transpose());
  }
  return mo;
}

double prior_weight(const EmState& state) {
  if (std::isinf(state.varsigma2)) return 0.0;
  return 1.0 / state.varsigma2;
}

}  // namespace

PosteriorSummary PosteriorSummary::from_means(const RowMatrix& mean) {
  PosteriorSummary p;
  p.mean = mean;
  p.var = (1.0 - mean.array().square()).max(0.0).matrix();
  return p;
}

EmState initial_em_state(const Observation& obs, const Vector& a_tilde, double varsigma2, bool estimate_sigma2,
                         double known_sigma2) {
  if (!(varsigma2 >= 0.0)) throw Error(ErrorCode::DomainError, "amplitude prior variance must be non-negative");
  EmState st;
  st.a_tilde = a_tilde;
  st.a_hat = a_tilde;
  st.varsigma2 = varsigma2;
  st.estimate_sigma2 = estimate_sigma2;
  if (estimate_sigma2) {
    const double n = static_cast<double>(obs.r.cols());
    const double per_chip = obs.r.squaredNorm() / (n * static_cast<double>(obs.length()));
    st.sigma2_hat = std::max(kSigma2InitFloor, per_chip - a_tilde.squaredNorm() / n);
  } else {
    st.sigma2_hat = known_sigma2;
  }
  return st;
}

double em_objective(const Matrix& spreading, const Observation& obs, const PosteriorSummary& post, const Vector& a,
                    double sigma2, const EmState& state) {
  const Moments mo = moments(spreading, obs, post);
  const double nt = static_cast<double>(spreading.rows()) * static_cast<double>(obs.length());
  double f = (mo.energy - 2.0 * mo.g.dot(a) + a.dot(mo.h * a)) / (2.0 * sigma2) + 0.5 * nt * std::log(sigma2);
  const double w = prior_weight(state);
  if (w > 0.0 && std::isfinite(w)) f += 0.5 * w * (a - state.a_tilde).squaredNorm();
  return f;
}

Vector em_gradient_a(const Matrix& spreading, const Observation& obs, const PosteriorSummary& post, const Vector& a,
                     double sigma2, const EmState& state) {
  const Moments mo = moments(spreading, obs, post);
  Vector grad = (mo.h * a - mo.g) / sigma2;
  const double w = prior_weight(state);
  if (w > 0.0 && std::isfinite(w)) grad += w * (a - state.a_tilde);
  return grad;
}

double em_derivative_precision(const Matrix& spreading, const Observation& obs, const PosteriorSummary& post,
                               const Vector& a, double sigma2) {
  const Moments mo = moments(spreading, obs, post);
  const double nt = static_cast<double>(spreading.rows()) * static_cast<double>(obs.length());
  return 0.5 * (mo.energy - 2.0 * mo.g.dot(a) + a.dot(mo.h * a)) - 0.5 * nt * sigma2;
}

EmState mstep_gauss(const Matrix& spreading, const Observation& obs, const PosteriorSummary& post,
                    const EmState& state) {
  const Moments mo = moments(spreading, obs, post);
  EmState next = state;
  if (state.varsigma2 == 0.0) {
    next.a_hat = state.a_tilde;
  } else {
    const double ratio = state.sigma2_hat * prior_weight(state);
    Matrix lhs = mo.h;
    lhs.diagonal().array() += ratio;
    next.a_hat = linalg::spd_solve(lhs, Vector(mo.g + ratio * state.a_tilde));
  }
  if (state.estimate_sigma2) {
    // Residual of the posterior means plus the covariance correction.
    const Matrix sa = spreading * next.a_hat.asDiagonal();
    const Matrix r = spreading.transpose() * spreading;
    double total = 0.0;
    for (Eigen::Index t = 0; t < post.mean.rows(); ++t) {
      total += (obs.r.row(t).transpose() - sa * post.mean.row(t).transpose()).squaredNorm();
      if (post.covariance.empty()) {
        total += next.a_hat.dot(r.diagonal().cwiseProduct(post.var.row(t).transpose()).cwiseProduct(next.a_hat));
      } else {
        total += linalg::schur_trace(next.a_hat, r, next.a_hat, post.covariance[static_cast<std::size_t>(t)]);
      }
    }
    const double nt = static_cast<double>(spreading.rows()) * static_cast<double>(obs.length());
    next.sigma2_hat = std::max(kSigma2Floor, total / nt);
  }
  return next;
}

EmState mstep_disc(const Matrix& spreading, const Observation& obs, const RowMatrix& means, const EmState& state) {
  check(spreading, obs, static_cast<std::size_t>(means.rows()), means.cols());
  const Matrix r = spreading.transpose() * spreading;
  Matrix off = r;
  off.diagonal().setZero();
  const auto k = spreading.cols();
  EmState next = state;
  if (state.varsigma2 == 0.0) {
    next.a_hat = state.a_tilde;
  } else {
    const double ratio = state.sigma2_hat * prior_weight(state);
    Matrix lhs = Matrix::Zero(k, k);
    Vector rhs = ratio * state.a_tilde;
    for (Eigen::Index t = 0; t < means.rows(); ++t) {
      const Vector m = means.row(t).transpose();
      lhs += m.asDiagonal() * off * m.asDiagonal();
      lhs.diagonal() += r.diagonal();
      rhs += m.cwiseProduct(obs.y.row(t).transpose());
    }
    lhs.diagonal().array() += ratio;
    next.a_hat = linalg::spd_solve(lhs, rhs);
  }
  if (state.estimate_sigma2) {
    const Matrix sa = spreading * next.a_hat.asDiagonal();
    double total = 0.0;
    for (Eigen::Index t = 0; t < means.rows(); ++t) {
      const Vector m = means.row(t).transpose();
      total += (obs.r.row(t).transpose() - sa * m).squaredNorm();
      for (Eigen::Index j = 0; j < k; ++j) total += (1.0 - m(j) * m(j)) * next.a_hat(j) * next.a_hat(j) * r(j, j);
    }
    const double nt = static_cast<double>(spreading.rows()) * static_cast<double>(obs.length());
    next.sigma2_hat = std::max(kSigma2Floor, total / nt);
  }
  return next;
}

ChannelInstance estimated_channel(const ChannelInstance& geometry, const EmState& state) {
  return geometry.with_parameters(state.a_hat.cwiseMax(kAmplitudeFloor), std::max(state.sigma2_hat, kSigma2Floor));
}

VarEmResult run_varem(const ChannelInstance& geometry, const Observation& obs, DetectorFamily family,
                      Schedule schedule, int outer, int inner, const SisoDecoder& decoder, const EmState& state0) {
  if (outer < 1) throw Error(ErrorCode::DomainError, "need at least one outer iteration");
  VarEmResult out;
  EmState state = state0;
  auto soft_posterior = [](const LlrFrame& f) {
    return RowMatrix(f.posterior().unaryExpr([](double v) { return std::tanh(0.5 * v); }));
  };
  if (family == DetectorFamily::Gaussian) {
    GaussianTurbo turbo(obs, decoder, schedule);
    for (int j = 0; j < outer; ++j) {
      out.history.push_back(turbo.iterate(estimated_channel(geometry, state)));
      state = mstep_gauss(geometry.spreading(), obs, PosteriorSummary::from_means(soft_posterior(out.history.back())),
                          state);
      out.trajectory.push_back(state);
    }
  } else {
    DiscreteTurbo turbo(obs, decoder, schedule, inner);
    for (int j = 0; j < outer; ++j) {
      out.history.push_back(turbo.iterate(estimated_channel(geometry, state)));
      const RowMatrix soft = soft_posterior(out.history.back());
      turbo.set_means(soft);
      state = mstep_disc(geometry.spreading(), obs, soft, state);
      out.trajectory.push_back(state);
    }
  }
  return out;
}

}  // namespace vfem
