#include "vfem/linalg.hpp"

#include <cmath>
#include <sstream>

#include "vfem/error.hpp"

namespace vfem {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::NotPositiveDefinite: return "NotPositiveDefinite";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::InvalidCorrelation: return "InvalidCorrelation";
    case ErrorCode::RankDeficient: return "RankDeficient";
    case ErrorCode::SingularCovariance: return "SingularCovariance";
    case ErrorCode::DegeneratePrior: return "DegeneratePrior";
    case ErrorCode::DomainError: return "DomainError";
    case ErrorCode::TooLarge: return "TooLarge";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::InvalidPermutation: return "InvalidPermutation";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

namespace linalg {

namespace {

void require_square(const Matrix& m, const char* what) {
  if (m.rows() != m.cols() || m.rows() == 0) {
    std::ostringstream os;
    os << what << ": expected a non-empty square matrix, got " << m.rows() << "x" << m.cols();
    throw Error(ErrorCode::DimensionMismatch, os.str());
  }
}

}  // namespace

Matrix cholesky_lower(const Matrix& m) {
  require_square(m, "cholesky_lower");
  const Eigen::Index n = m.rows();
  Matrix l = Matrix::Zero(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    double pivot = m(j, j);
    for (Eigen::Index p = 0; p < j; ++p) pivot -= l(j, p) * l(j, p);
    if (!(pivot > kMinPivot)) {
      std::ostringstream os;
      os << "pivot " << j << " = " << pivot;
      throw Error(ErrorCode::NotPositiveDefinite, os.str());
    }
    const double d = std::sqrt(pivot);
    l(j, j) = d;
    for (Eigen::Index i = j + 1; i < n; ++i) {
      double s = m(i, j);
      for (Eigen::Index p = 0; p < j; ++p) s -= l(i, p) * l(j, p);
      l(i, j) = s / d;
    }
  }
  return l;
}

Matrix factor_ftf(const Matrix& r) {
  require_square(r, "factor_ftf");
  // With J the exchange matrix, J R J = L L^T gives R = (J L J)(J L J)^T, and
  // J L J is upper triangular, so F = (J L J)^T is lower triangular.
  const Matrix reversed = r.reverse();
  const Matrix l = cholesky_lower(reversed);
  return l.reverse().transpose();
}

Vector spd_solve(const Matrix& m, const Vector& rhs) {
  if (rhs.size() != m.rows()) throw Error(ErrorCode::DimensionMismatch, "spd_solve: rhs size");
  const Matrix l = cholesky_lower(m);
  const auto tri = l.triangularView<Eigen::Lower>();
  return tri.transpose().solve(tri.solve(rhs));
}

Matrix spd_solve(const Matrix& m, const Matrix& rhs) {
  if (rhs.rows() != m.rows()) throw Error(ErrorCode::DimensionMismatch, "spd_solve: rhs rows");
  const Matrix l = cholesky_lower(m);
  const auto tri = l.triangularView<Eigen::Lower>();
  return tri.transpose().solve(tri.solve(rhs));
}

Matrix spd_inverse(const Matrix& m) {
  Matrix inv = spd_solve(m, Matrix(Matrix::Identity(m.rows(), m.cols())));
  return 0.5 * (inv + inv.transpose());
}

double spd_logdet(const Matrix& m) {
  return 2.0 * cholesky_lower(m).diagonal().array().log().sum();
}

double schur_trace(const Vector& x, const Matrix& a, const Vector& y, const Matrix& b) {
  const Eigen::Index n = x.size();
  if (y.size() != n || a.rows() != n || a.cols() != n || b.rows() != n || b.cols() != n) {
    throw Error(ErrorCode::DimensionMismatch, "schur_trace: all operands must share dimension");
  }
  return x.dot(a.cwiseProduct(b.transpose()) * y);
}

double symmetry_defect(const Matrix& m) {
  const double scale = std::max(m.cwiseAbs().maxCoeff(), 1e-300);
  return (m - m.transpose()).cwiseAbs().maxCoeff() / scale;
}

}  // namespace linalg
}  // namespace vfem
