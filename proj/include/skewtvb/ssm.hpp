#pragma once

// Linear state-space models, Kalman filtering with validation gating, the
// Rauch-Tung-Striebel backward pass, and pseudorange linearization.

#include "skewtvb/common.hpp"
#include "skewtvb/skewt.hpp"

#include <memory>
#include <optional>
#include <span>
#include <vector>

namespace skewtvb {

struct GaussianBelief {
  Vector mean;
  Matrix cov;
};

/// First-order expansion h(x) ~ offset + C x around a linearization point.
struct LinearizedMeasurement {
  Matrix C;
  Vector offset;

  /// Measurement expressed for the linear model y_eff = C x + e.
  Vector shifted(const Vector& y) const { return y - offset; }
};

class MeasurementFunction {
 public:
  virtual ~MeasurementFunction() = default;
  virtual Index state_dim() const = 0;
  virtual Index output_dim() const = 0;
  virtual Vector evaluate(std::size_t k, const Vector& x) const = 0;
  /// h_k applied to every row of `states` (n_p x n_x); returns n_p x n_y.
  virtual Matrix evaluate_rows(std::size_t k, const Matrix& states) const;
  virtual LinearizedMeasurement linearize(std::size_t k, const Vector& x_lin) const = 0;
};

/// Ranges to fixed satellites plus a clock-bias state:
/// y_i = ||s_i - x[0:3]|| + x[clock_index].
class PseudorangeMeasurement final : public MeasurementFunction {
 public:
  PseudorangeMeasurement(Matrix sat_positions, Index clock_index, Index state_dim);
  Index state_dim() const override { return state_dim_; }
  Index output_dim() const override { return sats_.rows(); }
  Vector evaluate(std::size_t k, const Vector& x) const override;
  Matrix evaluate_rows(std::size_t k, const Matrix& states) const override;
  LinearizedMeasurement linearize(std::size_t k, const Vector& x_lin) const override;
  const Matrix& satellites() const { return sats_; }

 private:
  Matrix sats_;  // n_sat x 3
  Index clock_index_;
  Index state_dim_;
};

/// Throws DegenerateGeometry when a satellite coincides with x_lin.
LinearizedMeasurement linearize_pseudorange(const Matrix& sat_positions, Index clock_index,
                                            const Vector& x_lin);

struct StateSpaceModel {
  Matrix A;
  Matrix Q;
  Matrix C;
  SkewTNoise noise;
  Vector x0;
  Matrix P0;
  /// Optional per-step overrides, indexed by k = 0..K-1 (A_k, Q_k map k to k+1).
  std::vector<Matrix> A_steps;
  std::vector<Matrix> Q_steps;
  std::vector<Matrix> C_steps;
  /// Optional nonlinear measurement; when set, C is taken from its
  /// linearization and filters shift y by the linearization offset.
  std::shared_ptr<const MeasurementFunction> measurement;

  Index state_dim() const { return A.rows(); }
  Index meas_dim() const { return noise.dim(); }
  const Matrix& A_at(std::size_t k) const { return k < A_steps.size() ? A_steps[k] : A; }
  const Matrix& Q_at(std::size_t k) const { return k < Q_steps.size() ? Q_steps[k] : Q; }
  /// Linear measurement for step k around x_lin (x_lin ignored for linear models).
  LinearizedMeasurement measurement_at(std::size_t k, const Vector& x_lin) const;
  /// Noise-free measurement h_k(x).
  Vector predict_measurement(std::size_t k, const Vector& x) const;
  GaussianBelief prior() const { return {x0, P0}; }

  void validate() const;
};

GaussianBelief kf_predict(const GaussianBelief& belief, const Matrix& A, const Matrix& Q);

/// Joint (textbook) Kalman update.
GaussianBelief kf_update(const GaussianBelief& belief, const Matrix& C, const Matrix& R,
                         const Vector& y);

struct GatedUpdate {
  GaussianBelief belief;
  std::vector<Index> rejected;
};

/// Sequential per-component update; a component whose normalized innovation
/// squared exceeds the chi-square(1) `gate_quantile` quantile is discarded.
/// gate_quantile >= 1 disables gating. R must be diagonal.
GatedUpdate kf_update_gated(const GaussianBelief& belief, const Matrix& C, const Matrix& R,
                            const Vector& y, double gate_quantile);

struct SmootherResult {
  std::vector<GaussianBelief> smoothed;
  /// Smoother gains G_k, k = 0..K-2.
  std::vector<Matrix> gains;
  bool used_pseudo_inverse = false;
};

/// RTS backward recursion over filtered beliefs; A[k], Q[k] map step k to k+1
/// (size K-1).
SmootherResult rtss_backward(std::span<const GaussianBelief> filtered,
                             std::span<const Matrix> A, std::span<const Matrix> Q);

SmootherResult rtss_backward(std::span<const GaussianBelief> filtered, const Matrix& A,
                             const Matrix& Q);

}  // namespace skewtvb
