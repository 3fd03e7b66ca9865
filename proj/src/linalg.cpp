#include "skewtvb/linalg.hpp"

#include <cmath>

namespace skewtvb {

Matrix block_diag(const Matrix& a, const Matrix& b) {
  Matrix out = Matrix::Zero(a.rows() + b.rows(), a.cols() + b.cols());
  out.topLeftCorner(a.rows(), a.cols()) = a;
  out.bottomRightCorner(b.rows(), b.cols()) = b;
  return out;
}

Matrix pseudo_inverse(const Matrix& m, double rel_tol) {
  Eigen::JacobiSVD<Matrix> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vector& s = svd.singularValues();
  const double cutoff = s.size() > 0 ? rel_tol * s(0) : 0.0;
  Vector inv = Vector::Zero(s.size());
  for (Index i = 0; i < s.size(); ++i) {
    if (s(i) > cutoff && s(i) > 0.0) inv(i) = 1.0 / s(i);
  }
  return svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose();
}

Matrix spd_inverse(const Matrix& m, bool* used_pinv) {
  Eigen::LLT<Matrix> llt(symmetrized(m));
  if (llt.info() == Eigen::Success) {
    Matrix inv = llt.solve(Matrix::Identity(m.rows(), m.cols()));
    symmetrize(inv);
    if (inv.allFinite()) return inv;
  }
  if (used_pinv) *used_pinv = true;
  return pseudo_inverse(symmetrized(m));
}

Matrix spd_right_solve(const Matrix& rhs, const Matrix& m, bool* used_pinv) {
  // X m = rhs  <=>  m X^T = rhs^T  (m symmetric)
  Eigen::LLT<Matrix> llt(symmetrized(m));
  if (llt.info() == Eigen::Success) {
    Matrix xt = llt.solve(rhs.transpose());
    if (xt.allFinite()) return xt.transpose();
  }
  if (used_pinv) *used_pinv = true;
  return rhs * pseudo_inverse(symmetrized(m));
}

Matrix psd_factor(const Matrix& m) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrized(m));
  const Vector ev = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * ev.asDiagonal();
}

double min_eigenvalue(const Matrix& symmetric) {
  if (symmetric.size() == 0) return 0.0;
  Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrized(symmetric), Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

double max_eigenvalue(const Matrix& symmetric) {
  if (symmetric.size() == 0) return 0.0;
  Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrized(symmetric), Eigen::EigenvaluesOnly);
  return es.eigenvalues().maxCoeff();
}

Matrix cholesky_lower(const Matrix& m, const char* what) {
  Eigen::LLT<Matrix> llt(symmetrized(m));
  if (llt.info() != Eigen::Success) {
    throw InvalidParameter(std::string("Cholesky factorization failed for ") + what);
  }
  return llt.matrixL();
}

std::vector<double> pack_upper(const Matrix& m) {
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(m.rows() * (m.rows() + 1) / 2));
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = i; j < m.cols(); ++j) out.push_back(m(i, j));
  }
  return out;
}

Matrix unpack_upper(const std::vector<double>& packed) {
  // n(n+1)/2 = size
  const auto size = static_cast<double>(packed.size());
  const auto n = static_cast<Index>(std::llround((std::sqrt(8.0 * size + 1.0) - 1.0) / 2.0));
  if (n * (n + 1) / 2 != static_cast<Index>(packed.size())) {
    throw InvalidParameter("packed upper triangle has invalid length " +
                           std::to_string(packed.size()));
  }
  Matrix m(n, n);
  std::size_t p = 0;
  for (Index i = 0; i < n; ++i) {
    for (Index j = i; j < n; ++j) {
      m(i, j) = packed[p];
      m(j, i) = packed[p];
      ++p;
    }
  }
  return m;
}

}  // namespace skewtvb
