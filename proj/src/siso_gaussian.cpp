#include "vfem/siso_gaussian.hpp"

#include <algorithm>
#include <cmath>

#include "vfem/error.hpp"

namespace vfem {

namespace {

constexpr double kMinExtrinsicVariance = 1e-12;

void check_inputs(const ChannelInstance& ch, const Vector& y, const GaussianPrior& prior) {
  if (static_cast<std::size_t>(y.size()) != ch.users() || prior.users() != ch.users()) {
    throw Error(ErrorCode::DimensionMismatch, "matched-filter vector and prior must have K entries");
  }
  if (!(ch.sigma2() > 0.0)) throw Error(ErrorCode::DomainError, "detector needs sigma2 > 0");
}

double extrinsic_llr(double mean, double variance) {
  if (variance < kMinExtrinsicVariance) throw Error(ErrorCode::DegeneratePrior, "extrinsic variance collapsed");
  return clamp_llr(2.0 * mean / variance);
}

}  // namespace

GaussianPrior::GaussianPrior(std::size_t users)
    : btilde_(Vector::Zero(static_cast<Eigen::Index>(users))), w_(Vector::Ones(static_cast<Eigen::Index>(users))) {}

GaussianPrior GaussianPrior::from_soft_bits(const Vector& btilde) {
  static const double limit = std::sqrt(1.0 - kPriorVarianceFloor);
  GaussianPrior p;
  p.btilde_ = btilde;
  for (Eigen::Index k = 0; k < btilde.size(); ++k) {
    if (!std::isfinite(btilde(k))) throw Error(ErrorCode::DomainError, "soft bit is not finite");
    p.btilde_(k) = std::clamp(btilde(k), -limit, limit);
  }
  p.w_ = (1.0 - p.btilde_.array().square()).max(kPriorVarianceFloor).matrix();
  return p;
}

GaussianPrior GaussianPrior::from_llrs(const Vector& llr) {
  Vector b(llr.size());
  for (Eigen::Index k = 0; k < llr.size(); ++k) b(k) = std::tanh(0.5 * clamp_llr(llr(k)));
  return from_soft_bits(b);
}

GaussianPrior GaussianPrior::without(std::size_t k) const {
  GaussianPrior p = *this;
  p.btilde_(static_cast<Eigen::Index>(k)) = 0.0;
  p.w_(static_cast<Eigen::Index>(k)) = 1.0;
  return p;
}

double free_energy_gauss(const ChannelInstance& ch, const Vector& y, const GaussianPrior& prior,
                         const GaussianBelief& q) {
  check_inputs(ch, y, prior);
  const double s2 = ch.sigma2();
  const Vector winv = prior.variance().cwiseInverse();
  const Matrix& g = ch.gram();
  Matrix m = g;
  m.diagonal() += s2 * winv;
  const Vector lin = ch.amplitudes().cwiseProduct(y) + s2 * winv.cwiseProduct(prior.mean());
  double logdet = 0.0;
  try {
    logdet = linalg::spd_logdet(q.sigma);
  } catch (const Error&) {
    throw Error(ErrorCode::SingularCovariance, "belief covariance is not positive definite");
  }
  return (q.mu.dot(m * q.mu) - 2.0 * lin.dot(q.mu)) / (2.0 * s2) - 0.5 * logdet +
         0.5 * winv.dot(q.sigma.diagonal()) + (g.cwiseProduct(q.sigma)).sum() / (2.0 * s2);
}

GaussianBelief solve_gauss(const ChannelInstance& ch, const Vector& y, const GaussianPrior& prior) {
  check_inputs(ch, y, prior);
  const double s2 = ch.sigma2();
  const Vector& a = ch.amplitudes();
  Matrix m = ch.gram();
  m.diagonal() += s2 * prior.variance().cwiseInverse();
  const Vector resid = a.cwiseProduct(y - ch.correlation() * a.cwiseProduct(prior.mean()));
  GaussianBelief q;
  q.mu = prior.mean() + linalg::spd_solve(m, resid);
  // (G / s2 + W^{-1})^{-1} = s2 (G + s2 W^{-1})^{-1}
  q.sigma = s2 * linalg::spd_inverse(m);
  return q;
}

double ext_hybrid_user(const ChannelInstance& ch, const Vector& y, const GaussianPrior& prior, std::size_t k) {
  check_inputs(ch, y, prior);
  if (k >= ch.users()) throw Error(ErrorCode::DimensionMismatch, "user index out of range");
  const GaussianPrior loo = prior.without(k);
  const auto kk = static_cast<Eigen::Index>(k);
  const double s2 = ch.sigma2();
  const Vector& a = ch.amplitudes();
  Matrix m = ch.gram();
  m.diagonal() += s2 * loo.variance().cwiseInverse();
  Matrix rhs(m.rows(), 2);
  rhs.col(0) = a.cwiseProduct(y - ch.correlation() * a.cwiseProduct(loo.mean()));
  rhs.col(1) = Vector::Unit(m.rows(), kk);
  const Matrix x = linalg::spd_solve(m, rhs);
  return extrinsic_llr(x(kk, 0), s2 * x(kk, 1));
}

ExtResult ext_hybrid(const ChannelInstance& ch, const Vector& y, const GaussianPrior& prior) {
  check_inputs(ch, y, prior);
  const std::size_t users = ch.users();
  const double s2 = ch.sigma2();
  const Vector& a = ch.amplitudes();
  ExtResult out;
  out.llr.resize(static_cast<Eigen::Index>(users));
  out.mean.resize(out.llr.size());
  out.gain.resize(out.llr.size());
  for (std::size_t k = 0; k < users; ++k) {
    const auto kk = static_cast<Eigen::Index>(k);
    const GaussianPrior loo = prior.without(k);
    Matrix m = ch.gram();
    m.diagonal() += s2 * loo.variance().cwiseInverse();
    Matrix rhs(m.rows(), 2);
    rhs.col(0) = a.cwiseProduct(y - ch.correlation() * a.cwiseProduct(loo.mean()));
    rhs.col(1) = Vector::Unit(m.rows(), kk);
    const Matrix x = linalg::spd_solve(m, rhs);
    const double var = s2 * x(kk, 1);  // marginal variance of the leave-one-out belief
    out.mean(kk) = x(kk, 0);
    out.gain(kk) = 1.0 - var;
    out.llr(kk) = extrinsic_llr(out.mean(kk), var);
  }
  return out;
}

ExtResult wang_poor_oracle(const ChannelInstance& ch, const Vector& y, const GaussianPrior& prior) {
  check_inputs(ch, y, prior);
  const Eigen::Index users = static_cast<Eigen::Index>(ch.users());
  const double s2 = ch.sigma2();
  const Vector& a = ch.amplitudes();
  const Matrix rinv = ch.correlation().partialPivLu().inverse();
  const Vector decorrelated = rinv * y;
  ExtResult out;
  out.llr.resize(users);
  out.mean.resize(users);
  out.gain.resize(users);
  for (Eigen::Index k = 0; k < users; ++k) {
    Vector soft = prior.mean();
    Vector var = prior.variance();
    soft(k) = 0.0;
    var(k) = 1.0;
    // Residual after cancelling the soft estimates of the other users, in the
    // decorrelated domain, then MMSE-filtered against residual interference.
    Matrix cov = s2 * rinv;
    cov.diagonal() += a.cwiseProduct(var).cwiseProduct(a);
    const Matrix cinv = cov.partialPivLu().inverse();
    const Vector residual = decorrelated - a.cwiseProduct(soft);
    const double z = a(k) * cinv.row(k).dot(residual);
    const double alpha = a(k) * a(k) * cinv(k, k);
    out.mean(k) = z;
    out.gain(k) = alpha;
    out.llr(k) = extrinsic_llr(z, 1.0 - alpha);
  }
  return out;
}

ExtResult ext_flooding(const ChannelInstance& ch, const Vector& y, const GaussianPrior& prior) {
  check_inputs(ch, y, prior);
  const Vector& a = ch.amplitudes();
  const Vector& w = prior.variance();
  const Vector& b = prior.mean();
  Matrix p = ch.sigma2() * ch.correlation_inverse();
  p.diagonal() += a.cwiseProduct(w).cwiseProduct(a);
  const Matrix pinv = linalg::spd_inverse(p);
  const Vector v = pinv * (ch.correlation_inverse() * y - a.cwiseProduct(b));
  ExtResult out;
  const Vector a2d = a.cwiseProduct(a).cwiseProduct(pinv.diagonal());
  out.mean = a.cwiseProduct(v) + b.cwiseProduct(a2d);
  out.gain = w.cwiseProduct(a2d);
  out.llr.resize(a.size());
  for (Eigen::Index k = 0; k < a.size(); ++k) out.llr(k) = extrinsic_llr(out.mean(k), 1.0 - out.gain(k));
  return out;
}

ExtResult ext_flooding_division(const ChannelInstance& ch, const Vector& y, const GaussianPrior& prior) {
  const GaussianBelief q = solve_gauss(ch, y, prior);
  const Vector& w = prior.variance();
  ExtResult out;
  out.mean = q.mu;
  out.gain = q.sigma.diagonal();
  out.llr.resize(q.mu.size());
  for (Eigen::Index k = 0; k < q.mu.size(); ++k) {
    const double ext_precision = 1.0 / q.sigma(k, k) - 1.0 / w(k);
    if (ext_precision < kMinExtrinsicVariance) throw Error(ErrorCode::DegeneratePrior, "extrinsic precision collapsed");
    out.llr(k) = clamp_llr(2.0 * q.mu(k) / q.sigma(k, k) - 2.0 * prior.mean()(k) / w(k));
  }
  return out;
}

GaussianTurbo::GaussianTurbo(const Observation& obs, const SisoDecoder& decoder, Schedule schedule)
    : obs_(obs), decoder_(decoder), schedule_(schedule) {
  if (decoder.frame_length() != obs.length()) {
    throw Error(ErrorCode::DimensionMismatch, "decoder frame length differs from the observation");
  }
  dec_ = RowMatrix::Zero(obs.y.rows(), static_cast<Eigen::Index>(decoder.users()));
}

LlrFrame GaussianTurbo::iterate(const ChannelInstance& ch) {
  const std::size_t users = ch.users();
  const std::size_t len = obs_.length();
  if (decoder_.users() != users || static_cast<std::size_t>(obs_.y.cols()) != users) {
    throw Error(ErrorCode::DimensionMismatch, "decoder does not match the observation frame");
  }
  const auto rows = static_cast<Eigen::Index>(len);
  const auto cols = static_cast<Eigen::Index>(users);

  auto prior_at = [&](Eigen::Index t) { return GaussianPrior::from_llrs(dec_.row(t).transpose()); };
  auto decode_user = [&](LlrFrame& frame, std::size_t k) {
    const auto kk = static_cast<Eigen::Index>(k);
    const Vector col = frame.mud.col(kk);
    DecodeOutput d = decoder_.decode(k, {col.data(), len});
    for (Eigen::Index t = 0; t < rows; ++t) dec_(t, kk) = d.extrinsic[static_cast<std::size_t>(t)];
    frame.info_posterior[k] = std::move(d.info_posterior);
  };

  LlrFrame frame;
  frame.mud = RowMatrix::Zero(rows, cols);
  frame.info_posterior.resize(users);
  if (schedule_ == Schedule::Sequential) {
    for (std::size_t k = 0; k < users; ++k) {
      for (Eigen::Index t = 0; t < rows; ++t) {
        frame.mud(t, static_cast<Eigen::Index>(k)) = ext_hybrid_user(ch, obs_.y.row(t).transpose(), prior_at(t), k);
      }
      decode_user(frame, k);
    }
  } else {
    for (Eigen::Index t = 0; t < rows; ++t) {
      const Vector y = obs_.y.row(t).transpose();
      const ExtResult e =
          schedule_ == Schedule::Flooding ? ext_flooding(ch, y, prior_at(t)) : ext_hybrid(ch, y, prior_at(t));
      frame.mud.row(t) = e.llr.transpose();
    }
    for (std::size_t k = 0; k < users; ++k) decode_user(frame, k);
  }
  frame.dec = dec_;
  return frame;
}

std::vector<LlrFrame> run_schedule_gauss(const ChannelInstance& ch, const Observation& obs,
                                         const SisoDecoder& decoder, Schedule schedule, int outer_iterations) {
  if (outer_iterations < 1) throw Error(ErrorCode::DomainError, "need at least one outer iteration");
  GaussianTurbo turbo(obs, decoder, schedule);
  std::vector<LlrFrame> history;
  for (int j = 0; j < outer_iterations; ++j) history.push_back(turbo.iterate(ch));
  return history;
}

}  // namespace vfem
