#include "radsynth/nn/optim.hpp"

#include <cmath>

#include "radsynth/errors.hpp"

namespace radsynth::nn {

double global_grad_norm(const ParamList& params) {
  double ss = 0.0;
  for (const auto& p : params) {
    if (!p.var->has_grad()) continue;
    for (double g : p.var->grad.values()) ss += g * g;
  }
  return std::sqrt(ss);
}

double clip_grad_norm(const ParamList& params, double max_norm) {
  if (max_norm < 0.0) throw ArgumentError("clip_grad_norm: threshold must be >= 0");
  const double norm = global_grad_norm(params);
  if (norm > max_norm) {
    const double factor = norm > 0.0 ? max_norm / norm : 0.0;
    for (const auto& p : params)
      if (p.var->has_grad()) p.var->grad *= factor;
  }
  return norm;
}

AdamW::AdamW(const ParamList& params, AdamWConfig config)
    : params_(params), config_(config) {
  m_.reserve(params.size());
  v_.reserve(params.size());
  for (const auto& p : params) {
    m_.emplace_back(p.var->value.shape(), 0.0);
    v_.emplace_back(p.var->value.shape(), 0.0);
  }
}

void AdamW::step() {
  if (global_grad_norm(params_) == 0.0) return;
  ++steps_;
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(steps_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Node& p = *params_[i].var;
    if (!p.has_grad()) continue;
    auto w = p.value.values();
    const auto g = p.grad.values();
    auto m = m_[i].values();
    auto v = v_[i].values();
    for (std::size_t j = 0; j < w.size(); ++j) {
      m[j] = b1 * m[j] + (1.0 - b1) * g[j];
      v[j] = b2 * v[j] + (1.0 - b2) * g[j] * g[j];
      w[j] -= config_.lr * config_.weight_decay * w[j];
      w[j] -= config_.lr * (m[j] / c1) / (std::sqrt(v[j] / c2) + config_.eps);
    }
  }
}

EmaShadow::EmaShadow(const ParamList& params) {
  shadow_.reserve(params.size());
  for (const auto& p : params) shadow_.push_back(p.var->value);
}

void EmaShadow::update(const ParamList& params, double gamma) {
  if (params.size() != shadow_.size()) throw ArgumentError("ema_update: parameter count mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i].var->value.same_shape(shadow_[i])) {
      throw ArgumentError("ema_update: shape mismatch for " + params[i].name);
    }
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto s = shadow_[i].values();
    const auto w = params[i].var->value.values();
    for (std::size_t j = 0; j < s.size(); ++j) s[j] = gamma * s[j] + (1.0 - gamma) * w[j];
  }
}

}  // namespace radsynth::nn
