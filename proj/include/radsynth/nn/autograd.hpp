#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "radsynth/nn/tensor.hpp"

namespace radsynth::nn {

/// One value on the tape. Leaves with requires_grad are trainable parameters;
/// interior nodes carry a backward closure that pushes their gradient into
/// their parents.
struct Node {
  Tensor value;
  Tensor grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  /// Gradient buffer, zero-initialised on first use.
  Tensor& grad_buffer();
  [[nodiscard]] bool has_grad() const noexcept { return !grad.empty(); }
};

using Var = std::shared_ptr<Node>;

Var constant(Tensor value);
Var parameter(Tensor value);

/// Builds an interior node. The closure is only retained when gradient
/// recording is on and some parent requires a gradient.
Var make_node(Tensor value, std::vector<Var> parents, std::function<void(Node&)> backward);

[[nodiscard]] bool grad_enabled() noexcept;

/// Disables tape recording on this thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard() noexcept;
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

/// Reverse sweep from a scalar root; gradients accumulate into every
/// reachable node that requires one.
void backward(const Var& root, double seed = 1.0);

struct NamedParam {
  std::string name;
  Var var;
};
using ParamList = std::vector<NamedParam>;

void zero_grad(const ParamList& params);
std::size_t parameter_count(const ParamList& params);

}  // namespace radsynth::nn
