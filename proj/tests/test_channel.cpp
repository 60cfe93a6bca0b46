#include "doctest.h"
#include "support.hpp"
#include "vfem/error.hpp"

using namespace vfem;
using namespace vfem::testing;

TEST_CASE("make_equicorrelated: zero correlation is orthonormal") {
  const auto ch = make_equicorrelated(2, 0.0);
  CHECK(max_abs(ch.correlation() - Matrix::Identity(2, 2)) < 1e-15);
  CHECK(max_abs(ch.spreading().transpose() * ch.spreading() - Matrix::Identity(2, 2)) < 1e-15);
}

TEST_CASE("make_equicorrelated: four users at 0.7") {
  const auto ch = make_equicorrelated(4, 0.7);
  const Matrix r = ch.spreading().transpose() * ch.spreading();
  CHECK(ch.chips() == 4);
  for (Eigen::Index i = 0; i < 4; ++i) {
    CHECK(r(i, i) == doctest::Approx(1.0).epsilon(1e-12));
    for (Eigen::Index j = 0; j < 4; ++j) {
      if (i != j) CHECK(std::abs(r(i, j) - 0.7) < 1e-12);
    }
  }
}

TEST_CASE("make_equicorrelated: two-user eigenvalues") {
  const auto ch = make_equicorrelated(2, 0.7);
  Eigen::SelfAdjointEigenSolver<Matrix> es(ch.correlation());
  CHECK(es.eigenvalues()(0) == doctest::Approx(0.3).epsilon(1e-12));
  CHECK(es.eigenvalues()(1) == doctest::Approx(1.7).epsilon(1e-12));
}

TEST_CASE("make_equicorrelated: rejects correlation outside [0, 1)") {
  for (double rho : {-0.1, 1.0, 1.5}) {
    try {
      make_equicorrelated(3, rho);
      FAIL("expected InvalidCorrelation");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::InvalidCorrelation);
    }
  }
}

TEST_CASE("make_random_spreading: unit columns, definiteness, determinism") {
  const auto ch = make_random_spreading(32, 32, 1);
  CHECK(ch.users() == 32);
  for (Eigen::Index k = 0; k < 32; ++k) CHECK(std::abs(ch.spreading().col(k).norm() - 1.0) < 1e-12);
  CHECK_NOTHROW(linalg::cholesky_lower(ch.correlation()));
  const auto again = make_random_spreading(32, 32, 1);
  CHECK(ch.spreading() == again.spreading());
  const auto single = make_random_spreading(4, 1, 9);
  CHECK(max_abs(single.correlation() - Matrix::Ones(1, 1)) < 1e-15);
}

TEST_CASE("make_random_spreading: more users than chips is rank deficient") {
  try {
    make_random_spreading(2, 3, 1);
    FAIL("expected RankDeficient");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::RankDeficient);
  }
}

TEST_CASE("from_spreading: validation") {
  Matrix s(2, 1);
  s << 1.0, 1.0;
  CHECK_THROWS_AS(ChannelInstance::from_spreading(s, Vector::Ones(1), 1.0), Error);
  CHECK_THROWS_AS(ChannelInstance::from_spreading(Matrix::Identity(2, 2), Vector::Ones(3), 1.0), Error);
  CHECK_THROWS_AS(ChannelInstance::from_spreading(Matrix::Identity(2, 2), -Vector::Ones(2), 1.0), Error);
  CHECK_THROWS_AS(ChannelInstance::from_spreading(Matrix::Identity(2, 2), Vector::Ones(2), -1.0), Error);
}

TEST_CASE("transmit: noiseless examples") {
  const auto id = ChannelInstance::from_spreading(Matrix::Identity(2, 2), Vector::Ones(2), 0.0);
  SymbolBlock blk{RowMatrix(1, 2)};
  blk.b << 1.0, -1.0;
  const Observation o = transmit(id, blk, 3);
  CHECK(o.r(0, 0) == 1.0);
  CHECK(o.r(0, 1) == -1.0);

  const auto ch = make_equicorrelated(2, 0.7, 0.0);
  blk.b << 1.0, 1.0;
  const Observation o2 = transmit(ch, blk, 3);
  CHECK(o2.y(0, 0) == doctest::Approx(1.7).epsilon(1e-12));
  CHECK(o2.y(0, 1) == doctest::Approx(1.7).epsilon(1e-12));
}

TEST_CASE("transmit: sufficiency relations and determinism") {
  Rng rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    const auto ch = random_channel(rng, 1 + rng() % 6, 0.3);
    SymbolBlock blk{RowMatrix(10, static_cast<Eigen::Index>(ch.users()))};
    for (Eigen::Index i = 0; i < blk.b.size(); ++i) blk.b.data()[i] = (rng() & 1U) ? 1.0 : -1.0;
    const Observation o = transmit(ch, blk, 99);
    for (Eigen::Index t = 0; t < 10; ++t) {
      const Vector r = o.r.row(t).transpose();
      CHECK(max_abs(o.y.row(t).transpose() - ch.spreading().transpose() * r) < 1e-10);
      CHECK(max_abs(ch.whitening().transpose() * o.ybar.row(t).transpose() - o.y.row(t).transpose()) < 1e-10);
      CHECK(max_abs(whiten(ch, o.y.row(t).transpose()) - o.ybar.row(t).transpose()) < 1e-12);
    }
    CHECK(max_abs(ch.whitening().transpose() * ch.whitening() - ch.correlation()) < 1e-10);
    const Observation again = transmit(ch, blk, 99);
    CHECK(o.r == again.r);
  }
}

TEST_CASE("transmit: whitened noise is white with variance sigma2") {
  const double s2 = 0.5;
  const auto ch = make_equicorrelated(3, 0.7, s2);
  const Eigen::Index t_len = 100000;
  SymbolBlock blk{RowMatrix::Ones(t_len, 3)};
  const Observation o = transmit(ch, blk, 17);
  const Vector clean = ch.whitening() * ch.amplitudes().asDiagonal() * Vector::Ones(3);
  const RowMatrix noise = o.ybar.rowwise() - clean.transpose();
  const Matrix cov = noise.transpose() * noise / static_cast<double>(t_len);
  for (Eigen::Index i = 0; i < 3; ++i) {
    CHECK(std::abs(cov(i, i) - s2) < 0.05 * s2);
    for (Eigen::Index j = 0; j < 3; ++j) {
      if (i != j) CHECK(std::abs(cov(i, j)) < 0.05 * s2);
    }
  }
}

TEST_CASE("permuted and with_parameters keep geometry consistent") {
  Rng rng(4);
  const auto ch = make_random_spreading(6, 4, 8, 0.2, uniform_vector(rng, 4, 0.5, 2.0));
  const std::vector<std::size_t> order{2, 0, 3, 1};
  const auto p = ch.permuted(order);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(p.amplitudes()(static_cast<Eigen::Index>(i)) == ch.amplitudes()(static_cast<Eigen::Index>(order[i])));
    CHECK(max_abs(p.spreading().col(static_cast<Eigen::Index>(i)) -
                  ch.spreading().col(static_cast<Eigen::Index>(order[i]))) == 0.0);
  }
  CHECK(max_abs(p.whitening().transpose() * p.whitening() - p.correlation()) < 1e-12);
  const auto q = ch.with_parameters(Vector::Ones(4), 0.7);
  CHECK(q.sigma2() == 0.7);
  CHECK(max_abs(q.gram() - q.correlation()) < 1e-15);
}

TEST_CASE("sigma2_for_snr_db") {
  CHECK(sigma2_for_snr_db(0.0) == doctest::Approx(1.0));
  CHECK(sigma2_for_snr_db(10.0) == doctest::Approx(0.1));
}
