#pragma once

#include <cmath>
#include <random>

#include "vfem/channel.hpp"
#include "vfem/rng.hpp"

namespace vfem::testing {

inline Vector gaussian_vector(Rng& rng, Eigen::Index n, double scale = 1.0) {
  std::normal_distribution<double> g(0.0, scale);
  Vector v(n);
  for (auto& x : v) x = g(rng);
  return v;
}

inline Vector uniform_vector(Rng& rng, Eigen::Index n, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  Vector v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

inline Vector random_bits(Rng& rng, Eigen::Index n) {
  std::bernoulli_distribution c(0.5);
  Vector v(n);
  for (auto& x : v) x = c(rng) ? 1.0 : -1.0;
  return v;
}

inline Matrix random_spd(Rng& rng, Eigen::Index n) {
  std::normal_distribution<double> g;
  Matrix a(n, n);
  for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = g(rng);
  Matrix m = a * a.transpose();
  m.diagonal().array() += 0.5;
  return m;
}

/// Equicorrelated or random-code channel with random amplitudes in [0.5, 2].
inline ChannelInstance random_channel(Rng& rng, std::size_t users, double sigma2) {
  const Vector a = uniform_vector(rng, static_cast<Eigen::Index>(users), 0.5, 2.0);
  if (std::bernoulli_distribution(0.5)(rng)) {
    return make_equicorrelated(users, std::uniform_real_distribution<double>(0.0, 0.8)(rng), sigma2, a);
  }
  return make_random_spreading(2 * users, users, rng(), sigma2, a);
}

/// Received vector for random bits plus noise.
inline Vector random_received(Rng& rng, const ChannelInstance& ch) {
  const Vector b = random_bits(rng, static_cast<Eigen::Index>(ch.users()));
  return ch.spreading() * ch.amplitudes().asDiagonal() * b +
         gaussian_vector(rng, static_cast<Eigen::Index>(ch.chips()), std::sqrt(ch.sigma2()));
}

inline double max_abs(const Matrix& m) { return m.cwiseAbs().maxCoeff(); }

}  // namespace vfem::testing
