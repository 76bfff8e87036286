#include "radsynth/nn/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "radsynth/errors.hpp"

namespace radsynth::nn {

double relative_error(double analytic, double numeric, double floor) {
  return std::abs(analytic - numeric) /
         std::max({std::abs(analytic), std::abs(numeric), floor});
}

double numeric_derivative(const std::function<Var()>& loss_fn, Node& param, std::size_t index,
                          double epsilon) {
  NoGradGuard guard;
  const double orig = param.value[index];
  param.value[index] = orig + epsilon;
  const double up = loss_fn()->value[0];
  param.value[index] = orig - epsilon;
  const double down = loss_fn()->value[0];
  param.value[index] = orig;
  return (up - down) / (2.0 * epsilon);
}

GradCheckResult finite_difference_check(const std::function<Var()>& loss_fn,
                                        const ParamList& params, int samples, double epsilon,
                                        Rng& rng, const std::string& prefix) {
  std::vector<const NamedParam*> chosen;
  std::size_t total = 0;
  for (const auto& p : params) {
    if (p.name.rfind(prefix, 0) == 0) {
      chosen.push_back(&p);
      total += p.var->value.numel();
    }
  }
  if (chosen.empty() || total == 0) throw ArgumentError("gradcheck: no parameters match prefix");

  zero_grad(params);
  backward(loss_fn());

  GradCheckResult result;
  const int n = static_cast<int>(std::min<std::size_t>(samples, total));
  for (int s = 0; s < n; ++s) {
    std::size_t flat = rng.below(total);
    const NamedParam* target = nullptr;
    for (const NamedParam* p : chosen) {
      if (flat < p->var->value.numel()) {
        target = p;
        break;
      }
      flat -= p->var->value.numel();
    }
    Node& node = *target->var;
    const double analytic = node.has_grad() ? node.grad[flat] : 0.0;
    const double numeric = numeric_derivative(loss_fn, node, flat, epsilon);
    const double err = relative_error(analytic, numeric);
    ++result.checked;
    if (err > result.max_relative_error) {
      result.max_relative_error = err;
      result.worst_parameter = target->name + "[" + std::to_string(flat) + "]";
    }
  }
  zero_grad(params);
  return result;
}

}  // namespace radsynth::nn
