#include "vfem/siso_discrete.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "vfem/error.hpp"

namespace vfem {

namespace {

double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

void check_inputs(const ChannelInstance& ch, const Vector& y, const Vector& prior_llr) {
  if (static_cast<std::size_t>(y.size()) != ch.users() || static_cast<std::size_t>(prior_llr.size()) != ch.users()) {
    throw Error(ErrorCode::DimensionMismatch, "matched-filter vector and priors must have K entries");
  }
  if (!(ch.sigma2() > 0.0)) throw Error(ErrorCode::DomainError, "detector needs sigma2 > 0");
}

Vector matched(const ChannelInstance& ch, const Vector& r) {
  if (static_cast<std::size_t>(r.size()) != ch.chips()) {
    throw Error(ErrorCode::DimensionMismatch, "received vector must have N entries");
  }
  return ch.spreading().transpose() * r;
}

// A_k sum_{j != k} R_kj A_j m_j
double interference(const ChannelInstance& ch, const Vector& m, Eigen::Index k) {
  const Vector& a = ch.amplitudes();
  const auto row = ch.correlation().row(k);
  double s = 0.0;
  for (Eigen::Index j = 0; j < m.size(); ++j) {
    if (j != k) s += row(j) * a(j) * m(j);
  }
  return a(k) * s;
}

}  // namespace

double clamp_mean(double m) noexcept { return std::clamp(m, -1.0 + kMeanMargin, 1.0 - kMeanMargin); }

double free_energy_disc_mf(const ChannelInstance& ch, const Vector& y, double energy, const Vector& prior_llr,
                           const Vector& m) {
  check_inputs(ch, y, prior_llr);
  if (m.size() != y.size()) throw Error(ErrorCode::DimensionMismatch, "belief must have K entries");
  double entropy = 0.0;
  for (Eigen::Index k = 0; k < m.size(); ++k) {
    const double mk = m(k);
    if (!(std::abs(mk) < 1.0)) throw Error(ErrorCode::DomainError, "soft bit must lie strictly inside (-1, 1)");
    const double up = 0.5 * (1.0 + mk);
    const double down = 0.5 * (1.0 - mk);
    entropy += up * (std::log(up) + softplus(-prior_llr(k))) + down * (std::log(down) + softplus(prior_llr(k)));
  }
  const Vector& a = ch.amplitudes();
  const Matrix& g = ch.gram();
  const double cross = m.dot(g * m) - m.cwiseProduct(g.diagonal()).dot(m);
  const double s2 = ch.sigma2();
  const double data = energy - 2.0 * a.cwiseProduct(y).dot(m) + cross + g.trace();
  return entropy + data / (2.0 * s2) + 0.5 * static_cast<double>(ch.chips()) * std::log(s2);
}

double free_energy_disc(const ChannelInstance& ch, const Vector& r, const Vector& prior_llr, const DiscreteBelief& q) {
  return free_energy_disc_mf(ch, matched(ch, r), r.squaredNorm(), prior_llr, q.m);
}

void serial_sweep_mf(const ChannelInstance& ch, const Vector& y, const Vector& prior_llr, Vector& m,
                     Vector& llr_pos, std::span<const std::size_t> order, const CoordinateObserver& observer) {
  check_inputs(ch, y, prior_llr);
  if (m.size() != y.size()) throw Error(ErrorCode::DimensionMismatch, "belief must have K entries");
  if (llr_pos.size() != y.size()) llr_pos = Vector::Zero(y.size());
  const Vector& a = ch.amplitudes();
  const double scale = 2.0 / ch.sigma2();
  for (std::size_t idx : order) {
    const auto k = static_cast<Eigen::Index>(idx);
    if (idx >= ch.users()) throw Error(ErrorCode::InvalidPermutation, "update order names an unknown user");
    const double pos = clamp_llr(prior_llr(k) + scale * (a(k) * y(k) - interference(ch, m, k)));
    llr_pos(k) = pos;
    m(k) = clamp_mean(std::tanh(0.5 * pos));
    if (observer) observer(idx, m);
  }
}

SerialResult serial_update(const ChannelInstance& ch, const Vector& r, const Vector& prior_llr,
                           const DiscreteBelief& q, std::span<const std::size_t> order,
                           const CoordinateObserver& observer) {
  SerialResult out;
  out.q = q;
  out.posterior_llr = Vector::Zero(q.m.size());
  serial_sweep_mf(ch, matched(ch, r), prior_llr, out.q.m, out.posterior_llr, order, observer);
  return out;
}

Vector stationarity_residual(const ChannelInstance& ch, const Vector& r, const Vector& prior_llr,
                             const DiscreteBelief& q) {
  const Vector y = matched(ch, r);
  check_inputs(ch, y, prior_llr);
  const Vector& a = ch.amplitudes();
  Vector res(q.m.size());
  for (Eigen::Index k = 0; k < q.m.size(); ++k) {
    const double field = prior_llr(k) + 2.0 / ch.sigma2() * (a(k) * y(k) - interference(ch, q.m, k));
    res(k) = q.m(k) - clamp_mean(std::tanh(0.5 * field));
  }
  return res;
}

ExtResult ext_one_shot_mf(const ChannelInstance& ch, const Vector& y, const Vector& prior_llr) {
  check_inputs(ch, y, prior_llr);
  Vector soft(prior_llr.size());
  for (Eigen::Index k = 0; k < soft.size(); ++k) soft(k) = std::tanh(0.5 * clamp_llr(prior_llr(k)));
  const Vector& a = ch.amplitudes();
  ExtResult out;
  out.mean.resize(soft.size());
  out.gain = Vector::Zero(soft.size());
  out.llr.resize(soft.size());
  for (Eigen::Index k = 0; k < soft.size(); ++k) {
    out.mean(k) = a(k) * y(k) - interference(ch, soft, k);
    out.llr(k) = clamp_llr(2.0 / ch.sigma2() * out.mean(k));
  }
  return out;
}

ExtResult ext_one_shot(const ChannelInstance& ch, const Vector& r, const Vector& prior_llr) {
  return ext_one_shot_mf(ch, matched(ch, r), prior_llr);
}

std::vector<std::size_t> cyclic_order(std::size_t users, std::size_t start) {
  std::vector<std::size_t> order(users);
  for (std::size_t i = 0; i < users; ++i) order[i] = (start + i) % users;
  return order;
}

DiscreteBelief tanh_sic(const ChannelInstance& ch, const Vector& r, int sweeps) {
  if (sweeps < 1) throw Error(ErrorCode::DomainError, "tanh_sic needs at least one sweep");
  const Vector y = matched(ch, r);
  const Vector prior = Vector::Zero(y.size());
  const std::vector<std::size_t> order = cyclic_order(ch.users());
  DiscreteBelief q{Vector::Zero(y.size())};
  Vector pos;
  for (int i = 0; i < sweeps; ++i) serial_sweep_mf(ch, y, prior, q.m, pos, order);
  return q;
}

DiscreteTurbo::DiscreteTurbo(const Observation& obs, const SisoDecoder& decoder, Schedule schedule,
                             int inner_iterations)
    : obs_(obs), decoder_(decoder), schedule_(schedule), inner_(inner_iterations) {
  if (inner_iterations < 1) throw Error(ErrorCode::DomainError, "need at least one inner iteration");
  if (decoder.frame_length() != obs.length()) {
    throw Error(ErrorCode::DimensionMismatch, "decoder frame length differs from the observation");
  }
  const auto cols = static_cast<Eigen::Index>(decoder.users());
  dec_ = RowMatrix::Zero(obs.y.rows(), cols);
  means_ = RowMatrix::Zero(obs.y.rows(), cols);
}

void DiscreteTurbo::set_means(const RowMatrix& m) {
  if (m.rows() != means_.rows() || m.cols() != means_.cols()) {
    throw Error(ErrorCode::DimensionMismatch, "soft-bit matrix shape");
  }
  means_ = m.unaryExpr([](double v) { return clamp_mean(v); });
}

LlrFrame DiscreteTurbo::iterate(const ChannelInstance& ch, const InnerKernel& kernel) {
  const std::size_t users = ch.users();
  const std::size_t len = obs_.length();
  if (decoder_.users() != users || static_cast<std::size_t>(obs_.y.cols()) != users) {
    throw Error(ErrorCode::DimensionMismatch, "decoder does not match the observation frame");
  }
  const auto rows = static_cast<Eigen::Index>(len);
  const auto cols = static_cast<Eigen::Index>(users);
  std::vector<std::vector<std::size_t>> orders;
  for (std::size_t k = 0; k < users; ++k) orders.push_back(cyclic_order(users, k));

  auto decode_user = [&](LlrFrame& frame, std::size_t k) {
    const auto kk = static_cast<Eigen::Index>(k);
    const Vector col = frame.mud.col(kk);
    DecodeOutput d = decoder_.decode(k, {col.data(), len});
    for (Eigen::Index t = 0; t < rows; ++t) dec_(t, kk) = d.extrinsic[static_cast<std::size_t>(t)];
    frame.info_posterior[k] = std::move(d.info_posterior);
  };
  auto inner = [&](Eigen::Index t, const Vector& prior, std::size_t start, Vector& pos) {
    Vector m = means_.row(t).transpose();
    if (kernel) {
      kernel(t, prior, m, pos);
    } else {
      const Vector y = obs_.y.row(t).transpose();
      for (int i = 0; i < inner_; ++i) serial_sweep_mf(ch, y, prior, m, pos, orders[start]);
    }
    means_.row(t) = m.transpose();
  };

  LlrFrame frame;
  frame.mud = RowMatrix::Zero(rows, cols);
  frame.info_posterior.resize(users);
  Vector pos = Vector::Zero(cols);
  if (schedule_ == Schedule::Flooding) {
    for (Eigen::Index t = 0; t < rows; ++t) {
      const Vector prior = dec_.row(t).transpose();
      inner(t, prior, 0, pos);
      for (Eigen::Index k = 0; k < cols; ++k) frame.mud(t, k) = clamp_llr(pos(k) - prior(k));
    }
    for (std::size_t k = 0; k < users; ++k) decode_user(frame, k);
  } else {
    // The user's own decoder LLR is zeroed in a local copy of the priors.
    for (std::size_t k = 0; k < users; ++k) {
      const auto kk = static_cast<Eigen::Index>(k);
      for (Eigen::Index t = 0; t < rows; ++t) {
        Vector prior = dec_.row(t).transpose();
        prior(kk) = 0.0;
        inner(t, prior, k, pos);
        frame.mud(t, kk) = pos(kk);
      }
      if (schedule_ == Schedule::Sequential) decode_user(frame, k);
    }
    if (schedule_ == Schedule::Hybrid) {
      for (std::size_t k = 0; k < users; ++k) decode_user(frame, k);
    }
  }
  frame.dec = dec_;
  return frame;
}

std::vector<LlrFrame> run_schedule_disc(const ChannelInstance& ch, const Observation& obs,
                                        const SisoDecoder& decoder, const DiscreteScheduleOptions& options) {
  if (options.outer_iterations < 1) throw Error(ErrorCode::DomainError, "need at least one outer iteration");
  DiscreteTurbo turbo(obs, decoder, options.schedule, options.inner_iterations);
  std::vector<LlrFrame> history;
  for (int j = 0; j < options.outer_iterations; ++j) {
    history.push_back(turbo.iterate(ch, j == 0 ? options.first_iteration : InnerKernel{}));
  }
  return history;
}

}  // namespace vfem
