#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "radsynth/nn/autograd.hpp"

namespace radsynth::nn {

/// Single-file binary container shared by every model kind.
///
/// Layout (little-endian): magic "RSCKPT\0\0", u32 version, kind string,
/// u32 meta count + (key, value) strings, u32 tensor count + per tensor
/// (name, u32 rank, i32 dims[rank], f64 data[numel]). Strings are u32 length
/// followed by bytes. Live weights are stored as "live/<name>", EMA weights as
/// "ema/<name>".
struct Checkpoint {
  static constexpr std::uint32_t kVersion = 1;

  std::string kind;
  std::map<std::string, std::string> meta;
  std::vector<std::pair<std::string, Tensor>> tensors;

  [[nodiscard]] const Tensor* find(const std::string& name) const;
};

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

/// Appends params under "<prefix><name>".
void add_params(Checkpoint& ckpt, const std::string& prefix, const ParamList& params);
/// Copies "<prefix><name>" tensors into params; throws on missing names or shape mismatch.
void restore_params(const Checkpoint& ckpt, const std::string& prefix, const ParamList& params);

}  // namespace radsynth::nn
