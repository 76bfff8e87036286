#pragma once

#include <vector>

#include "radsynth/nn/autograd.hpp"

namespace radsynth::nn {

/// Tiling for windowed attention.
///
/// Queries come from non-overlapping win_h x win_w tiles of the (edge-padded)
/// feature grid. Keys and values come from the same tile enlarged by `pad`
/// pixels on every side, with out-of-grid positions clamped to the nearest
/// edge pixel. pad = 0 is plain window self-attention; a window covering the
/// whole grid is global attention. Queries that fall in the padding are
/// dropped, which is the same as pad-then-crop.
struct WindowSpec {
  int win_h = 4;
  int win_w = 4;
  int pad = 0;
};

/// Multi-head scaled dot-product attention over [C,H,W] maps q, k, v.
/// If `probs` is non-null it receives every softmax matrix (one per window and head,
/// rows = queries, cols = keys) in window-major order.
Tensor windowed_attention(const Tensor& q, const Tensor& k, const Tensor& v, int heads,
                          const WindowSpec& spec, std::vector<Tensor>* probs = nullptr);

Var windowed_attention(const Var& q, const Var& k, const Var& v, int heads,
                       const WindowSpec& spec);

}  // namespace radsynth::nn
