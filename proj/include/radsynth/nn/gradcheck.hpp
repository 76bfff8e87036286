#pragma once

#include <functional>
#include <string>

#include "radsynth/nn/autograd.hpp"
#include "radsynth/rng.hpp"

namespace radsynth::nn {

struct GradCheckResult {
  double max_relative_error = 0.0;
  int checked = 0;
  std::string worst_parameter;
};

/// Relative error used by the checks: |a - n| / max(|a|, |n|, floor).
double relative_error(double analytic, double numeric, double floor = 1e-6);

/// Central finite differences on up to `samples` randomly chosen weights (drawn
/// uniformly over the parameters whose name starts with `prefix`) compared with
/// the tape gradient of `loss_fn`. loss_fn must be deterministic.
GradCheckResult finite_difference_check(const std::function<Var()>& loss_fn,
                                        const ParamList& params, int samples, double epsilon,
                                        Rng& rng, const std::string& prefix = "");

/// Numeric derivative of loss_fn with respect to one weight.
double numeric_derivative(const std::function<Var()>& loss_fn, Node& param, std::size_t index,
                          double epsilon);

}  // namespace radsynth::nn
