#include "skewtvb/ssm.hpp"

#include "skewtvb/linalg.hpp"
#include "skewtvb/special.hpp"

#include <cmath>
#include <limits>
#include <string>

namespace skewtvb {

PseudorangeMeasurement::PseudorangeMeasurement(Matrix sat_positions, Index clock_index,
                                               Index state_dim)
    : sats_(std::move(sat_positions)), clock_index_(clock_index), state_dim_(state_dim) {
  if (sats_.cols() != 3) throw InvalidParameter("pseudorange: satellite positions must be n x 3");
  if (state_dim_ < 4 || clock_index_ < 3 || clock_index_ >= state_dim_) {
    throw InvalidParameter("pseudorange: state must hold 3 position components and a clock");
  }
}

Vector PseudorangeMeasurement::evaluate(std::size_t /*k*/, const Vector& x) const {
  Vector y(sats_.rows());
  const Eigen::Vector3d pos = x.head<3>();
  for (Index i = 0; i < sats_.rows(); ++i) {
    y(i) = (sats_.row(i).transpose() - pos).norm() + x(clock_index_);
  }
  return y;
}

Matrix MeasurementFunction::evaluate_rows(std::size_t k, const Matrix& states) const {
  Matrix out(states.rows(), output_dim());
  for (Index p = 0; p < states.rows(); ++p) {
    out.row(p) = evaluate(k, states.row(p).transpose()).transpose();
  }
  return out;
}

Matrix PseudorangeMeasurement::evaluate_rows(std::size_t /*k*/, const Matrix& states) const {
  Matrix out(states.rows(), sats_.rows());
  for (Index i = 0; i < sats_.rows(); ++i) {
    out.col(i) = (states.leftCols<3>().rowwise() - sats_.row(i)).rowwise().norm() +
                 states.col(clock_index_);
  }
  return out;
}

LinearizedMeasurement PseudorangeMeasurement::linearize(std::size_t /*k*/,
                                                        const Vector& x_lin) const {
  LinearizedMeasurement lin = linearize_pseudorange(sats_, clock_index_, x_lin);
  return lin;
}

LinearizedMeasurement linearize_pseudorange(const Matrix& sat_positions, Index clock_index,
                                            const Vector& x_lin) {
  const Index n_sat = sat_positions.rows();
  const Index n_x = x_lin.size();
  if (sat_positions.cols() != 3 || n_x < 4 || clock_index < 3 || clock_index >= n_x) {
    throw InvalidParameter("linearize_pseudorange: inconsistent dimensions");
  }
  LinearizedMeasurement lin;
  lin.C = Matrix::Zero(n_sat, n_x);
  Vector h(n_sat);
  const Eigen::Vector3d pos = x_lin.head<3>();
  for (Index i = 0; i < n_sat; ++i) {
    const Eigen::Vector3d d = sat_positions.row(i).transpose() - pos;
    const double range = d.norm();
    if (!(range > 0.0)) {
      throw DegenerateGeometry("linearize_pseudorange: satellite " + std::to_string(i) +
                               " coincides with the receiver");
    }
    lin.C.block<1, 3>(i, 0) = -d.transpose() / range;
    lin.C(i, clock_index) = 1.0;
    h(i) = range + x_lin(clock_index);
  }
  lin.offset = h - lin.C * x_lin;
  return lin;
}

LinearizedMeasurement StateSpaceModel::measurement_at(std::size_t k, const Vector& x_lin) const {
  if (measurement) return measurement->linearize(k, x_lin);
  LinearizedMeasurement lin;
  lin.C = k < C_steps.size() ? C_steps[k] : C;
  lin.offset = Vector::Zero(lin.C.rows());
  return lin;
}

Vector StateSpaceModel::predict_measurement(std::size_t k, const Vector& x) const {
  if (measurement) return measurement->evaluate(k, x);
  return (k < C_steps.size() ? C_steps[k] : C) * x;
}

void StateSpaceModel::validate() const {
  const Index n = A.rows();
  if (A.cols() != n || Q.rows() != n || Q.cols() != n) {
    throw InvalidParameter("model: A and Q must be n_x x n_x");
  }
  if (x0.size() != n || P0.rows() != n || P0.cols() != n) {
    throw InvalidParameter("model: prior has the wrong dimension");
  }
  noise.validate();
  if (measurement) {
    if (measurement->state_dim() != n || measurement->output_dim() != noise.dim()) {
      throw InvalidParameter("model: measurement function dimensions disagree with the model");
    }
  } else if (C.rows() != noise.dim() || C.cols() != n) {
    throw InvalidParameter("model: C must be n_y x n_x");
  }
  const double tol = 1e-10;
  if (min_eigenvalue(Q) < -tol * std::max(1.0, max_eigenvalue(Q))) {
    throw InvalidParameter("model: Q is not positive semidefinite");
  }
  if (min_eigenvalue(P0) < -tol * std::max(1.0, max_eigenvalue(P0))) {
    throw InvalidParameter("model: P0 is not positive semidefinite");
  }
}

GaussianBelief kf_predict(const GaussianBelief& belief, const Matrix& A, const Matrix& Q) {
  GaussianBelief out;
  out.mean = A * belief.mean;
  out.cov = A * belief.cov * A.transpose() + Q;
  symmetrize(out.cov);
  return out;
}

GaussianBelief kf_update(const GaussianBelief& belief, const Matrix& C, const Matrix& R,
                         const Vector& y) {
  const Matrix PCt = belief.cov * C.transpose();
  const Matrix S = symmetrized(C * PCt + R);
  const Matrix K = spd_right_solve(PCt, S);
  GaussianBelief out;
  out.mean = belief.mean + K * (y - C * belief.mean);
  out.cov = belief.cov - K * PCt.transpose();
  symmetrize(out.cov);
  return out;
}

GatedUpdate kf_update_gated(const GaussianBelief& belief, const Matrix& C, const Matrix& R,
                            const Vector& y, double gate_quantile) {
  for (Index i = 0; i < R.rows(); ++i) {
    for (Index j = 0; j < R.cols(); ++j) {
      if (i != j && R(i, j) != 0.0) {
        throw InvalidParameter("kf_update_gated: R must be diagonal");
      }
    }
  }
  const double threshold = gate_quantile >= 1.0 ? std::numeric_limits<double>::infinity()
                                                : chi2_quantile(gate_quantile, 1.0);
  GatedUpdate out{belief, {}};
  Vector& x = out.belief.mean;
  Matrix& P = out.belief.cov;
  for (Index i = 0; i < C.rows(); ++i) {
    const Vector c = C.row(i).transpose();
    const Vector Pc = P * c;
    const double s = c.dot(Pc) + R(i, i);
    const double innov = y(i) - c.dot(x);
    if (innov * innov / s > threshold) {
      out.rejected.push_back(i);
      continue;
    }
    const Vector gain = Pc / s;
    x += gain * innov;
    P.noalias() -= gain * Pc.transpose();
    symmetrize(P);
  }
  return out;
}

SmootherResult rtss_backward(std::span<const GaussianBelief> filtered, std::span<const Matrix> A,
                             std::span<const Matrix> Q) {
  SmootherResult out;
  const std::size_t K = filtered.size();
  if (K == 0) return out;
  if (A.size() + 1 < K || Q.size() + 1 < K) {
    throw InvalidParameter("rtss_backward: need K-1 transition matrices");
  }
  out.smoothed.assign(filtered.begin(), filtered.end());
  out.gains.resize(K - 1);
  for (std::size_t k = K - 1; k-- > 0;) {
    const GaussianBelief& f = filtered[k];
    const Matrix& Ak = A[k];
    Matrix P_pred = Ak * f.cov * Ak.transpose() + Q[k];
    symmetrize(P_pred);
    const Matrix cross = f.cov * Ak.transpose();
    bool pinv = false;
    const Matrix G = spd_right_solve(cross, P_pred, &pinv);
    out.used_pseudo_inverse = out.used_pseudo_inverse || pinv;
    const GaussianBelief& next = out.smoothed[k + 1];
    GaussianBelief s;
    s.mean = f.mean + G * (next.mean - Ak * f.mean);
    s.cov = f.cov + G * (next.cov - P_pred) * G.transpose();
    symmetrize(s.cov);
    out.smoothed[k] = std::move(s);
    out.gains[k] = G;
  }
  return out;
}

SmootherResult rtss_backward(std::span<const GaussianBelief> filtered, const Matrix& A,
                             const Matrix& Q) {
  const std::size_t n = filtered.empty() ? 0 : filtered.size() - 1;
  std::vector<Matrix> As(n, A);
  std::vector<Matrix> Qs(n, Q);
  return rtss_backward(filtered, As, Qs);
}

}  // namespace skewtvb
