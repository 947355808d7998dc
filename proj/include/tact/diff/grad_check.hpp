#pragma once

#include "tact/diff/tape.hpp"

#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

namespace tact::diff {

/// Builds a scalar loss from the parameters on the given tape. Must be a
/// deterministic function of the parameter values.
using LossFn = std::function<Var(Tape&, const ParamSet&)>;

struct GradCheckOptions {
  double step = 1e-5;
  double tolerance = 1e-4;
  /// Denominator floor of the relative error, so coordinates whose true
  /// gradient is ~0 are judged by absolute error instead.
  double floor = 1e-6;
  /// Optional hook applied to the analytic tape before its forward pass.
  std::function<void(Tape&)> configure_tape;
};

struct TensorCheck {
  std::string name;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double max_rel_error = 0.0;
};

struct GradCheckReport {
  std::vector<TensorCheck> tensors;
  double max_rel_error = 0.0;
  bool passed = false;
};

/// Compares reverse-mode gradients of `loss` against central differences
/// for every coordinate of every tensor in `params`.
GradCheckReport grad_check(const LossFn& loss, const ParamSet& params, const GradCheckOptions& options = {});

std::ostream& operator<<(std::ostream& os, const GradCheckReport& report);

}  // namespace tact::diff
