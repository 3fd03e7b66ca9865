#pragma once

#include "skewtvb/common.hpp"

#include <vector>

namespace skewtvb {

inline void symmetrize(Matrix& m) { m = (0.5 * (m + m.transpose())).eval(); }

inline Matrix symmetrized(const Matrix& m) { return 0.5 * (m + m.transpose()); }

Matrix block_diag(const Matrix& a, const Matrix& b);

/// Moore-Penrose pseudo-inverse; singular values below rel_tol * sigma_max
/// are dropped.
Matrix pseudo_inverse(const Matrix& m, double rel_tol = 1e-12);

/// Inverse of a symmetric matrix. Cholesky first; on failure falls back to
/// the pseudo-inverse and sets *used_pinv when provided.
Matrix spd_inverse(const Matrix& m, bool* used_pinv = nullptr);

/// Solves X * m = rhs for X with m symmetric, same fallback as spd_inverse.
Matrix spd_right_solve(const Matrix& rhs, const Matrix& m, bool* used_pinv = nullptr);

/// Factor S with S S^T = m for symmetric PSD m (negative eigenvalues clamped).
Matrix psd_factor(const Matrix& m);

double min_eigenvalue(const Matrix& symmetric);
double max_eigenvalue(const Matrix& symmetric);

/// Lower Cholesky factor; throws InvalidParameter naming `what` on failure.
Matrix cholesky_lower(const Matrix& m, const char* what);

/// Row-major upper triangle, (0,0),(0,1),...,(0,n-1),(1,1),...
std::vector<double> pack_upper(const Matrix& m);
Matrix unpack_upper(const std::vector<double>& packed);

}  // namespace skewtvb
