#pragma once

#include "radsynth/nn/autograd.hpp"

namespace radsynth::nn {

// Elementwise arithmetic on equal shapes.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double s);

/// x[C,H,W] + b[C] broadcast over space (b may be [C] or [C,1,1]).
Var add_channel_bias(const Var& x, const Var& b);
/// x[C,H,W] * s[C] broadcast over space (s may be [C] or [C,1,1]).
Var mul_channel(const Var& x, const Var& s);

/// Same-padded 2-D convolution, stride 1. w: [O, C, k, k] with odd k; bias: [O] or null.
Var conv2d(const Var& x, const Var& w, const Var& bias);

Var relu(const Var& x);
Var leaky_relu(const Var& x, double slope = 0.2);
Var silu(const Var& x);
Var gelu(const Var& x);
Var sigmoid(const Var& x);

Var avg_pool2(const Var& x);
Var upsample_nearest2(const Var& x);
Var concat_channels(const Var& a, const Var& b);
/// [C,H,W] -> [C,1,1]
Var global_avg_pool(const Var& x);

/// Per-pixel normalisation across channels with learned gain/bias [C].
Var layer_norm_channels(const Var& x, const Var& gain, const Var& bias, double eps = 1e-5);

/// Row `index` of a [N, D] table as a [D,1,1] tensor.
Var embedding_row(const Var& table, int index);

/// (C*s*s, H, W) -> (C, s*H, s*W); input channel c*s*s + i*s + j lands at (h*s+i, w*s+j).
Var pixel_shuffle(const Var& x, int s);
Tensor pixel_shuffle(const Tensor& x, int s);
Tensor pixel_unshuffle(const Tensor& x, int s);

Var reshape(const Var& x, std::vector<int> shape);
/// Gradient flows through unchanged; value is clamped (straight-through).
Var clamp_st(const Var& x, double lo, double hi);

Var sum(const Var& x);
Var mean(const Var& x);

/// mean(|a - target|). delta > 0 uses sqrt(r^2 + delta^2) - delta (smooth surrogate);
/// delta == 0 uses subgradient 0 at r == 0.
Var l1_loss(const Var& a, const Var& target, double delta = 0.0);
Var mse_loss(const Var& a, const Var& target);
/// mean(softplus(x)) computed stably.
Var mean_softplus(const Var& x);

}  // namespace radsynth::nn
