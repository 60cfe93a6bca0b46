#include "vfem/siso_ddf.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "vfem/error.hpp"

namespace vfem {

std::vector<std::size_t> detection_order(const ChannelInstance& ch, const DetectionOrderPolicy& policy) {
  const std::size_t users = ch.users();
  std::vector<std::size_t> order(users);
  std::iota(order.begin(), order.end(), std::size_t{0});
  switch (policy.kind) {
    case DetectionOrderPolicy::Kind::AsGiven:
      break;
    case DetectionOrderPolicy::Kind::AmplitudeDescending: {
      const Vector& a = ch.amplitudes();
      std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) {
        return a(static_cast<Eigen::Index>(i)) > a(static_cast<Eigen::Index>(j));
      });
      break;
    }
    case DetectionOrderPolicy::Kind::Custom: {
      if (policy.custom.size() != users) throw Error(ErrorCode::InvalidPermutation, "order length must equal K");
      std::vector<bool> seen(users, false);
      for (std::size_t u : policy.custom) {
        if (u >= users || seen[u]) throw Error(ErrorCode::InvalidPermutation, "detection order is not a permutation");
        seen[u] = true;
      }
      order = policy.custom;
      break;
    }
  }
  return order;
}

DdfPrecompute::DdfPrecompute(const ChannelInstance& ch, std::vector<std::size_t> order)
    : order_(std::move(order)), sigma2_(ch.sigma2()) {
  const ChannelInstance p = ch.permuted(order_);
  f_ = p.whitening();
  const Vector& a = p.amplitudes();
  const auto k = static_cast<Eigen::Index>(order_.size());
  gain_.resize(k);
  feedback_ = Matrix::Zero(k, k);
  for (Eigen::Index i = 0; i < k; ++i) {
    gain_(i) = a(i) * f_(i, i);
    for (Eigen::Index j = 0; j < i; ++j) feedback_(i, j) = gain_(i) * a(j) * f_(i, j);
  }
}

Vector DdfPrecompute::whiten(const Vector& y) const {
  if (static_cast<std::size_t>(y.size()) != users()) throw Error(ErrorCode::DimensionMismatch, "whiten: y size");
  Vector yp(y.size());
  for (std::size_t i = 0; i < order_.size(); ++i) yp(static_cast<Eigen::Index>(i)) = y(static_cast<Eigen::Index>(order_[i]));
  return f_.transpose().triangularView<Eigen::Upper>().solve(yp);
}

DdfResult ddf_pass(const ChannelInstance& ch, const Vector& ybar, const Vector& prior_llr, const DdfPrecompute& pre) {
  const std::size_t users = pre.users();
  if (ch.users() != users || static_cast<std::size_t>(ybar.size()) != users ||
      static_cast<std::size_t>(prior_llr.size()) != users) {
    throw Error(ErrorCode::DimensionMismatch, "ddf_pass: sizes disagree");
  }
  if (!(pre.sigma2() > 0.0)) throw Error(ErrorCode::DomainError, "detector needs sigma2 > 0");
  const double scale = 2.0 / pre.sigma2();
  const auto k = static_cast<Eigen::Index>(users);
  Vector m_det = Vector::Zero(k);  // detection order
  DdfResult out;
  out.q.m = Vector::Zero(k);
  out.posterior_llr = Vector::Zero(k);
  out.ext.llr = Vector::Zero(k);
  out.ext.mean = Vector::Zero(k);
  out.ext.gain = Vector::Zero(k);
  for (Eigen::Index i = 0; i < k; ++i) {
    const auto u = static_cast<Eigen::Index>(pre.order()[static_cast<std::size_t>(i)]);
    const double stat = pre.direct_gain()(i) * ybar(i) - pre.feedback().row(i).head(i).dot(m_det.head(i));
    const double pos = clamp_llr(prior_llr(u) + scale * stat);
    m_det(i) = clamp_mean(std::tanh(0.5 * pos));
    out.q.m(u) = m_det(i);
    out.posterior_llr(u) = pos;
    out.ext.mean(u) = stat;
    out.ext.llr(u) = clamp_llr(pos - prior_llr(u));
    out.ext.gain(u) = pre.direct_gain()(i);
  }
  return out;
}

std::vector<LlrFrame> ddf_aided_discrete(const ChannelInstance& ch, const Observation& obs,
                                         const SisoDecoder& decoder, Schedule schedule, int outer, int inner,
                                         const DetectionOrderPolicy& policy) {
  const DdfPrecompute pre(ch, detection_order(ch, policy));
  DiscreteScheduleOptions options;
  options.schedule = schedule;
  options.outer_iterations = outer;
  options.inner_iterations = inner;
  options.first_iteration = [&](Eigen::Index t, const Vector& prior, Vector& m, Vector& pos) {
    const DdfResult r = ddf_pass(ch, pre.whiten(obs.y.row(t).transpose()), prior, pre);
    m = r.q.m;
    pos = r.posterior_llr;
  };
  return run_schedule_disc(ch, obs, decoder, options);
}

}  // namespace vfem
