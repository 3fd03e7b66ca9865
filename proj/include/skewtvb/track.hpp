#pragma once

#include "skewtvb/common.hpp"

#include <optional>
#include <vector>

namespace skewtvb {

struct StepDiagnostics {
  std::optional<int> vb_iterations;
  std::optional<Vector> lambda;
  std::optional<int> rejected_components;
  std::optional<int> underflow_hits;
  std::optional<double> ess;
};

/// Per-step posterior means and covariances of one estimator over a track.
struct EstimateTrack {
  std::vector<Vector> mean;
  std::vector<Matrix> cov;
  std::vector<StepDiagnostics> diagnostics;
  /// Global VB iterations for smoothers; per-iteration max state change.
  std::optional<int> global_iterations;
  std::vector<double> iteration_changes;

  std::size_t size() const { return mean.size(); }
};

}  // namespace skewtvb
