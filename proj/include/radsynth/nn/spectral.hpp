#pragma once

#include <Eigen/Core>

#include "radsynth/nn/autograd.hpp"
#include "radsynth/rng.hpp"

namespace radsynth::nn {

/// Persistent power-iteration vectors for one weight matrix.
struct SpectralState {
  Eigen::VectorXd u;
  Eigen::VectorXd v;
  double sigma = 1.0;
};

/// Runs `iterations` power-iteration rounds on m (warm-started from `state`),
/// stores the refreshed u, v and sigma estimate, and returns m / sigma. A zero
/// matrix is returned unchanged with sigma treated as 1.
Eigen::MatrixXd spectral_normalize(const Eigen::MatrixXd& m, int iterations,
                                   SpectralState& state, std::uint64_t seed = 0);

/// Differentiable w / sigma(w) for a weight tensor viewed as [dim0, rest].
/// With update = true the state is refreshed by power iteration first; with
/// update = false the stored u, v are reused (needed for finite-difference checks).
/// The gradient treats u and v as constants: dL/dW = G/sigma - <G,W>/sigma^2 u v^T.
Var spectral_normalized(const Var& w, SpectralState& state, int iterations, bool update);

}  // namespace radsynth::nn
