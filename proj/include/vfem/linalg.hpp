#pragma once

#include <Eigen/Dense>

namespace vfem {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

namespace linalg {

/// Smallest admissible Cholesky pivot. Anything at or below fails; no jitter is added.
inline constexpr double kMinPivot = 1e-12;

/// Standard lower Cholesky factor L with M = L L^T.
/// Throws NotPositiveDefinite if a pivot is <= kMinPivot.
Matrix cholesky_lower(const Matrix& m);

/// Lower-triangular F with R = F^T F (note the transposed order relative to
/// the usual Cholesky). Computed by factoring the index-reversed matrix.
Matrix factor_ftf(const Matrix& r);

/// Solves M x = rhs for symmetric positive-definite M.
Vector spd_solve(const Matrix& m, const Vector& rhs);
Matrix spd_solve(const Matrix& m, const Matrix& rhs);

/// Inverse of a symmetric positive-definite matrix (symmetrised on output).
Matrix spd_inverse(const Matrix& m);

/// log det of a symmetric positive-definite matrix.
double spd_logdet(const Matrix& m);

/// tr[diag(x) A diag(y) B], evaluated as x^T (A o B^T) y.
double schur_trace(const Vector& x, const Matrix& a, const Vector& y, const Matrix& b);

/// Max-abs symmetry defect relative to the largest entry.
double symmetry_defect(const Matrix& m);

}  // namespace linalg
}  // namespace vfem
