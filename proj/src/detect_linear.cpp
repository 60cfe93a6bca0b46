#include "vfem/detect_linear.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "vfem/error.hpp"
#include "vfem/rng.hpp"

namespace vfem {

namespace {

Vector matched_scaled(const ChannelInstance& ch, const Vector& r) {
  if (static_cast<std::size_t>(r.size()) != ch.chips()) {
    throw Error(ErrorCode::DimensionMismatch, "received vector must have N entries");
  }
  return ch.amplitudes().cwiseProduct(ch.spreading().transpose() * r);
}

void require_noise(const ChannelInstance& ch) {
  if (!(ch.sigma2() > 0.0)) throw Error(ErrorCode::DomainError, "detector needs sigma2 > 0");
}

double loading(const ChannelInstance& ch, LinearTarget target) {
  return target == LinearTarget::Mmse ? ch.sigma2() : 0.0;
}

}  // namespace

GaussianBelief decorrelate(const ChannelInstance& ch, const Vector& r) {
  const Vector ay = matched_scaled(ch, r);
  const Matrix inv = linalg::spd_inverse(ch.gram());
  return {inv * ay, ch.sigma2() * inv};
}

GaussianBelief mmse(const ChannelInstance& ch, const Vector& r) {
  require_noise(ch);
  const Vector ay = matched_scaled(ch, r);
  Matrix m = ch.gram();
  m.diagonal().array() += ch.sigma2();
  const Matrix inv = linalg::spd_inverse(m);
  return {inv * ay, ch.sigma2() * inv};
}

Vector pme_alpha(const ChannelInstance& ch, const Vector& r, double alpha2) {
  if (!(alpha2 >= 0.0)) throw Error(ErrorCode::DomainError, "alpha2 must be non-negative");
  const Vector ay = matched_scaled(ch, r);
  Matrix m = ch.gram();
  m.diagonal().array() += alpha2;
  return linalg::spd_solve(m, ay);
}

double linear_free_energy(const ChannelInstance& ch, const Vector& r, const GaussianBelief& q, LinearTarget target) {
  require_noise(ch);
  const Vector ay = matched_scaled(ch, r);
  Matrix m = ch.gram();
  m.diagonal().array() += loading(ch, target);
  const double quad = q.mu.dot(m * q.mu) + (m * q.sigma).trace() - 2.0 * ay.dot(q.mu);
  return -0.5 * linalg::spd_logdet(q.sigma) + quad / (2.0 * ch.sigma2());
}

SicResult sic(const ChannelInstance& ch, const Vector& r, const SicOptions& options) {
  if (options.sweeps < 1) throw Error(ErrorCode::DomainError, "sic needs at least one sweep");
  if (!(options.box.lo < options.box.hi)) throw Error(ErrorCode::DomainError, "clip box needs lo < hi");
  if (options.target == LinearTarget::Mmse) require_noise(ch);

  const std::size_t users = ch.users();
  const Vector y = ch.spreading().transpose() * r;
  const Matrix& rr = ch.correlation();
  const Vector& a = ch.amplitudes();
  const double load = loading(ch, options.target);

  Vector mu = Vector::Zero(static_cast<Eigen::Index>(users));

  // Exact minimiser along coordinate k, then projected onto the box.
  auto coordinate_min = [&](Eigen::Index k) {
    const double interference = rr.row(k).dot(a.cwiseProduct(mu)) - a(k) * mu(k);
    const double residual = y(k) - interference;
    const double unclipped = a(k) * residual / (a(k) * a(k) + load);
    return options.box.clip(unclipped);
  };

  std::vector<std::size_t> order(users);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(options.order_seed);

  SicResult out;
  for (int sweep = 1; sweep <= options.sweeps; ++sweep) {
    double max_step = 0.0;
    if (options.order == SweepOrder::AlmostCyclic) std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t step = 0; step < users; ++step) {
      Eigen::Index k = static_cast<Eigen::Index>(order[step]);
      if (options.order == SweepOrder::GaussSouthwell) {
        // Coordinate with the largest achievable move.
        double best = -1.0;
        for (Eigen::Index j = 0; j < static_cast<Eigen::Index>(users); ++j) {
          const double move = std::abs(coordinate_min(j) - mu(j));
          if (move > best) {
            best = move;
            k = j;
          }
        }
      }
      const double updated = coordinate_min(k);
      max_step = std::max(max_step, std::abs(updated - mu(k)));
      mu(k) = updated;
      if (options.on_update) options.on_update(static_cast<std::size_t>(k), mu);
    }
    out.sweeps = sweep;
    if (max_step < options.tolerance) break;
  }
  out.mu = std::move(mu);
  return out;
}

}  // namespace vfem
