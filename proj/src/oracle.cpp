#include "vfem/oracle.hpp"

#include <cmath>
#include <limits>
#include <numbers>

#include "vfem/error.hpp"

namespace vfem {

namespace {

void check(const ChannelInstance& ch, const Vector& r, const Vector& prior_llr, std::size_t limit) {
  if (ch.users() > limit) throw Error(ErrorCode::TooLarge, "too many users for enumeration");
  if (static_cast<std::size_t>(r.size()) != ch.chips()) throw Error(ErrorCode::DimensionMismatch, "r size");
  if (static_cast<std::size_t>(prior_llr.size()) != ch.users()) throw Error(ErrorCode::DimensionMismatch, "prior size");
  if (!(ch.sigma2() > 0.0)) throw Error(ErrorCode::DomainError, "enumeration needs sigma2 > 0");
}

// log p(b_k = s) for an LLR prior.
double log_prior(double llr, double s) {
  const double x = -s * llr;
  return -(x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)));
}

// log p(r | b) + log p(b) for every configuration.
std::vector<double> log_joint(const ChannelInstance& ch, const Vector& r, const Vector& prior_llr) {
  const std::size_t users = ch.users();
  const std::size_t count = std::size_t{1} << users;
  const Matrix sa = ch.spreading() * ch.amplitudes().asDiagonal();
  const double norm = -0.5 * static_cast<double>(ch.chips()) * std::log(2.0 * std::numbers::pi * ch.sigma2());
  std::vector<double> out(count);
  for (std::size_t c = 0; c < count; ++c) {
    const Vector b = configuration(users, c);
    double lp = norm - (r - sa * b).squaredNorm() / (2.0 * ch.sigma2());
    for (std::size_t k = 0; k < users; ++k) lp += log_prior(prior_llr(static_cast<Eigen::Index>(k)), b(static_cast<Eigen::Index>(k)));
    out[c] = lp;
  }
  return out;
}

double log_sum_exp(const std::vector<double>& v) {
  double top = -std::numeric_limits<double>::infinity();
  for (double x : v) top = std::max(top, x);
  double s = 0.0;
  for (double x : v) s += std::exp(x - top);
  return top + std::log(s);
}

}  // namespace

Vector configuration(std::size_t users, std::size_t c) {
  Vector b(static_cast<Eigen::Index>(users));
  for (std::size_t k = 0; k < users; ++k) b(static_cast<Eigen::Index>(k)) = ((c >> k) & 1U) ? -1.0 : 1.0;
  return b;
}

Vector ExactPosterior::llr() const {
  Vector out(p_plus.size());
  for (Eigen::Index k = 0; k < p_plus.size(); ++k) out(k) = std::log(p_plus(k)) - std::log1p(-p_plus(k));
  return out;
}

ExactPosterior exact_posterior(const ChannelInstance& ch, const Vector& r, const Vector& prior_llr) {
  check(ch, r, prior_llr, kMaxEnumerationUsers);
  std::vector<double> lj = log_joint(ch, r, prior_llr);
  const double lz = log_sum_exp(lj);
  ExactPosterior post;
  post.joint.resize(lj.size());
  post.p_plus = Vector::Zero(static_cast<Eigen::Index>(ch.users()));
  for (std::size_t c = 0; c < lj.size(); ++c) {
    post.joint[c] = std::exp(lj[c] - lz);
    for (std::size_t k = 0; k < ch.users(); ++k) {
      if (!((c >> k) & 1U)) post.p_plus(static_cast<Eigen::Index>(k)) += post.joint[c];
    }
  }
  return post;
}

ExactExtrinsic exact_ext(const ChannelInstance& ch, const Vector& r, const Vector& prior_llr, std::size_t k) {
  check(ch, r, prior_llr, kMaxEnumerationUsers);
  if (k >= ch.users()) throw Error(ErrorCode::DimensionMismatch, "user index out of range");
  const auto kk = static_cast<Eigen::Index>(k);

  // Own prior excluded from the start.
  Vector others = prior_llr;
  others(kk) = 0.0;
  const std::vector<double> lj = log_joint(ch, r, others);
  std::vector<double> plus, minus;
  for (std::size_t c = 0; c < lj.size(); ++c) ((c >> k) & 1U ? minus : plus).push_back(lj[c]);

  // Full posterior, then divided by the own prior.
  const std::vector<double> full = log_joint(ch, r, prior_llr);
  std::vector<double> fplus, fminus;
  for (std::size_t c = 0; c < full.size(); ++c) ((c >> k) & 1U ? fminus : fplus).push_back(full[c]);

  ExactExtrinsic out;
  out.marginalised = log_sum_exp(plus) - log_sum_exp(minus);
  out.divided = log_sum_exp(fplus) - log_sum_exp(fminus) - prior_llr(kk);
  return out;
}

double exact_kl_disc(const ChannelInstance& ch, const Vector& r, const Vector& prior_llr, const Vector& m) {
  check(ch, r, prior_llr, kMaxEnumerationUsers);
  if (m.size() != prior_llr.size()) throw Error(ErrorCode::DimensionMismatch, "belief size");
  const std::vector<double> lj = log_joint(ch, r, prior_llr);
  double kl = 0.0;
  for (std::size_t c = 0; c < lj.size(); ++c) {
    const Vector b = configuration(ch.users(), c);
    double lq = 0.0;
    for (Eigen::Index k = 0; k < m.size(); ++k) lq += std::log(0.5 * (1.0 + b(k) * m(k)));
    kl += std::exp(lq) * (lq - lj[c]);
  }
  return kl;
}

DiscreteBelief grid_min_fdisc(const ChannelInstance& ch, const Vector& r, const Vector& prior_llr, double step) {
  check(ch, r, prior_llr, kMaxGridUsers);
  if (!(step > 0.0 && step < 1.0)) throw Error(ErrorCode::DomainError, "grid step must lie in (0, 1)");
  const auto users = static_cast<Eigen::Index>(ch.users());
  const auto points = static_cast<std::size_t>(std::floor(2.0 / step - 1e-9));
  // the clamp limits of the updates close the grid at both ends
  std::vector<double> grid{-1.0 + kMeanMargin};
  for (std::size_t i = 1; i <= points; ++i) {
    const double v = -1.0 + static_cast<double>(i) * step;
    if (v < 1.0 - kMeanMargin) grid.push_back(v);
  }
  grid.push_back(1.0 - kMeanMargin);
  const std::size_t n = grid.size();

  // Only the m-dependent part of the free energy matters for the argmin:
  // entropy terms per coordinate plus the data terms.
  const Vector y = ch.spreading().transpose() * r;
  const Vector c = ch.amplitudes().cwiseProduct(y);
  const Matrix& g = ch.gram();
  const double inv2s2 = 1.0 / (2.0 * ch.sigma2());
  std::vector<std::vector<double>> unary(static_cast<std::size_t>(users), std::vector<double>(n));
  for (Eigen::Index k = 0; k < users; ++k) {
    const double l = prior_llr(k);
    for (std::size_t i = 0; i < n; ++i) {
      const double mk = grid[i];
      const double up = 0.5 * (1.0 + mk), down = 0.5 * (1.0 - mk);
      unary[static_cast<std::size_t>(k)][i] = up * (std::log(up) - log_prior(l, 1.0)) +
                                              down * (std::log(down) - log_prior(l, -1.0)) -
                                              2.0 * c(k) * mk * inv2s2;
    }
  }

  std::vector<std::size_t> idx(static_cast<std::size_t>(users), 0), best(static_cast<std::size_t>(users), 0);
  double best_val = std::numeric_limits<double>::infinity();
  while (true) {
    double f = 0.0;
    for (Eigen::Index k = 0; k < users; ++k) f += unary[static_cast<std::size_t>(k)][idx[static_cast<std::size_t>(k)]];
    for (Eigen::Index j = 0; j < users; ++j) {
      for (Eigen::Index k = j + 1; k < users; ++k) {
        f += 2.0 * g(j, k) * grid[idx[static_cast<std::size_t>(j)]] * grid[idx[static_cast<std::size_t>(k)]] * inv2s2;
      }
    }
    if (f < best_val) {
      best_val = f;
      best = idx;
    }
    std::size_t pos = 0;
    while (pos < idx.size() && ++idx[pos] == n) idx[pos++] = 0;
    if (pos == idx.size()) break;
  }
  DiscreteBelief q{Vector(users)};
  for (Eigen::Index k = 0; k < users; ++k) q.m(k) = grid[best[static_cast<std::size_t>(k)]];
  return q;
}

GaussianBelief gaussian_conditioning(const ChannelInstance& ch, const Vector& r, const Vector& mean,
                                     const Matrix& cov) {
  if (static_cast<std::size_t>(r.size()) != ch.chips() || mean.size() != cov.rows() ||
      static_cast<std::size_t>(mean.size()) != ch.users()) {
    throw Error(ErrorCode::DimensionMismatch, "gaussian_conditioning: sizes");
  }
  // (b, r) jointly Gaussian: Cov(r) = H P H^T + s2 I, Cov(b, r) = P H^T.
  const Matrix h = ch.spreading() * ch.amplitudes().asDiagonal();
  Matrix cr = h * cov * h.transpose();
  cr.diagonal().array() += ch.sigma2();
  const Eigen::LDLT<Matrix> ldlt(cr);
  const Matrix cross = cov * h.transpose();
  GaussianBelief q;
  q.mu = mean + cross * ldlt.solve(r - h * mean);
  q.sigma = cov - cross * ldlt.solve(cross.transpose());
  return q;
}

}  // namespace vfem
