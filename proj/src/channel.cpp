#include "vfem/channel.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include "vfem/error.hpp"
#include "vfem/rng.hpp"

namespace vfem {

namespace {

Vector default_amplitudes(const Vector& a, std::size_t users) {
  if (a.size() == 0) return Vector::Ones(static_cast<Eigen::Index>(users));
  if (static_cast<std::size_t>(a.size()) != users) {
    throw Error(ErrorCode::DimensionMismatch, "amplitude vector length must equal user count");
  }
  return a;
}

void validate_parameters(const Vector& a, double sigma2, std::size_t users) {
  if (static_cast<std::size_t>(a.size()) != users) {
    throw Error(ErrorCode::DimensionMismatch, "amplitude vector length must equal user count");
  }
  for (Eigen::Index k = 0; k < a.size(); ++k) {
    if (!(a(k) > 0.0) || !std::isfinite(a(k))) {
      std::ostringstream os;
      os << "amplitude " << k << " = " << a(k) << " must be positive";
      throw Error(ErrorCode::DomainError, os.str());
    }
  }
  if (!(sigma2 >= 0.0) || !std::isfinite(sigma2)) {
    throw Error(ErrorCode::DomainError, "noise variance must be finite and non-negative");
  }
}

}  // namespace

ChannelInstance ChannelInstance::from_spreading(Matrix spreading, Vector amplitudes, double sigma2) {
  if (spreading.rows() == 0 || spreading.cols() == 0) {
    throw Error(ErrorCode::DimensionMismatch, "spreading matrix must be non-empty");
  }
  if (spreading.cols() > spreading.rows()) {
    throw Error(ErrorCode::RankDeficient, "more users than chips");
  }
  const auto users = static_cast<std::size_t>(spreading.cols());
  amplitudes = default_amplitudes(amplitudes, users);
  validate_parameters(amplitudes, sigma2, users);
  for (Eigen::Index k = 0; k < spreading.cols(); ++k) {
    const double norm = spreading.col(k).norm();
    if (std::abs(norm - 1.0) > 1e-9) {
      std::ostringstream os;
      os << "spreading column " << k << " has norm " << norm;
      throw Error(ErrorCode::DomainError, os.str());
    }
    spreading.col(k) /= norm;
  }

  ChannelInstance ch;
  ch.s_ = std::move(spreading);
  ch.a_ = std::move(amplitudes);
  ch.sigma2_ = sigma2;
  Matrix r = ch.s_.transpose() * ch.s_;
  ch.r_ = 0.5 * (r + r.transpose());
  ch.r_.diagonal().setOnes();
  ch.f_ = linalg::factor_ftf(ch.r_);
  ch.rinv_ = linalg::spd_inverse(ch.r_);
  ch.gram_ = ch.a_.asDiagonal() * ch.r_ * ch.a_.asDiagonal();
  return ch;
}

ChannelInstance ChannelInstance::with_parameters(Vector amplitudes, double sigma2) const {
  validate_parameters(amplitudes, sigma2, users());
  ChannelInstance ch = *this;
  ch.a_ = std::move(amplitudes);
  ch.sigma2_ = sigma2;
  ch.gram_ = ch.a_.asDiagonal() * ch.r_ * ch.a_.asDiagonal();
  return ch;
}

ChannelInstance ChannelInstance::permuted(std::span<const std::size_t> order) const {
  const std::size_t k = users();
  if (order.size() != k) throw Error(ErrorCode::InvalidPermutation, "order length must equal user count");
  std::vector<bool> seen(k, false);
  Matrix s(s_.rows(), s_.cols());
  Vector a(a_.size());
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t src = order[i];
    if (src >= k || seen[src]) throw Error(ErrorCode::InvalidPermutation, "order is not a permutation");
    seen[src] = true;
    s.col(static_cast<Eigen::Index>(i)) = s_.col(static_cast<Eigen::Index>(src));
    a(static_cast<Eigen::Index>(i)) = a_(static_cast<Eigen::Index>(src));
  }
  return from_spreading(std::move(s), std::move(a), sigma2_);
}

ChannelInstance make_equicorrelated(std::size_t users, double rho, double sigma2, const Vector& amplitudes) {
  if (users == 0) throw Error(ErrorCode::DimensionMismatch, "at least one user required");
  if (!(rho >= 0.0 && rho < 1.0)) {
    std::ostringstream os;
    os << "rho = " << rho << " outside [0, 1)";
    throw Error(ErrorCode::InvalidCorrelation, os.str());
  }
  const auto n = static_cast<Eigen::Index>(users);
  Matrix r = Matrix::Constant(n, n, rho);
  r.diagonal().setOnes();
  // Any S = Q F with orthonormal Q reproduces R; take Q = I.
  Matrix s = linalg::factor_ftf(r);
  for (Eigen::Index k = 0; k < n; ++k) s.col(k).normalize();
  return ChannelInstance::from_spreading(std::move(s), default_amplitudes(amplitudes, users), sigma2);
}

ChannelInstance make_random_spreading(std::size_t chips, std::size_t users, std::uint64_t seed, double sigma2,
                                      const Vector& amplitudes) {
  if (chips == 0 || users == 0) throw Error(ErrorCode::DimensionMismatch, "chips and users must be positive");
  if (users > chips) throw Error(ErrorCode::RankDeficient, "random spreading needs K <= N");
  Rng rng(seed);
  std::bernoulli_distribution coin(0.5);
  const double chip = 1.0 / std::sqrt(static_cast<double>(chips));
  const auto n = static_cast<Eigen::Index>(chips);
  const auto k = static_cast<Eigen::Index>(users);
  for (int attempt = 0; attempt < kMaxSpreadingDraws; ++attempt) {
    Matrix s(n, k);
    for (Eigen::Index j = 0; j < k; ++j) {
      for (Eigen::Index i = 0; i < n; ++i) s(i, j) = coin(rng) ? chip : -chip;
    }
    try {
      return ChannelInstance::from_spreading(std::move(s), default_amplitudes(amplitudes, users), sigma2);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::NotPositiveDefinite) throw;
    }
  }
  throw Error(ErrorCode::RankDeficient, "could not draw linearly independent spreading codes");
}

Observation observe(const ChannelInstance& ch, RowMatrix r) {
  if (static_cast<std::size_t>(r.cols()) != ch.chips()) {
    throw Error(ErrorCode::DimensionMismatch, "received matrix must have N columns");
  }
  Observation obs;
  obs.r = std::move(r);
  obs.y = obs.r * ch.spreading();
  // Row form of ybar_t = F^{-T} y_t is ybar_t^T = y_t^T F^{-1}, i.e. solve ybar F = y.
  const Matrix f = ch.whitening();
  obs.ybar = f.transpose().triangularView<Eigen::Upper>().solve(obs.y.transpose()).transpose();
  return obs;
}

Observation transmit(const ChannelInstance& ch, const SymbolBlock& block, std::uint64_t seed) {
  if (static_cast<std::size_t>(block.b.cols()) != ch.users()) {
    throw Error(ErrorCode::DimensionMismatch, "symbol block must have K columns");
  }
  const Matrix sa = ch.spreading() * ch.amplitudes().asDiagonal();
  RowMatrix r = block.b * sa.transpose();
  if (ch.sigma2() > 0.0) {
    Rng rng(seed);
    std::normal_distribution<double> gauss(0.0, std::sqrt(ch.sigma2()));
    for (Eigen::Index t = 0; t < r.rows(); ++t) {
      for (Eigen::Index i = 0; i < r.cols(); ++i) r(t, i) += gauss(rng);
    }
  }
  return observe(ch, std::move(r));
}

Vector whiten(const ChannelInstance& ch, const Vector& y) {
  if (static_cast<std::size_t>(y.size()) != ch.users()) throw Error(ErrorCode::DimensionMismatch, "whiten: y size");
  return ch.whitening().transpose().triangularView<Eigen::Upper>().solve(y);
}

double sigma2_for_snr_db(double snr_db) {
  if (std::isinf(snr_db) && snr_db > 0) return 0.0;
  return std::pow(10.0, -snr_db / 10.0);
}

}  // namespace vfem
