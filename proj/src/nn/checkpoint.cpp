#include "radsynth/nn/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "radsynth/errors.hpp"

namespace radsynth::nn {

namespace {

constexpr char kMagic[8] = {'R', 'S', 'C', 'K', 'P', 'T', '\0', '\0'};

void put_u32(std::ostream& out, std::uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

void put_string(std::ostream& out, const std::string& s) {
  put_u32(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::uint32_t get_u32(std::istream& in) {
  std::uint32_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!in) throw DecodeError("checkpoint truncated");
  return v;
}

std::string get_string(std::istream& in) {
  const std::uint32_t n = get_u32(in);
  if (n > (1u << 24)) throw DecodeError("checkpoint string too long");
  std::string s(n, '\0');
  in.read(s.data(), n);
  if (!in) throw DecodeError("checkpoint truncated");
  return s;
}

}  // namespace

const Tensor* Checkpoint::find(const std::string& name) const {
  for (const auto& [n, t] : tensors)
    if (n == name) return &t;
  return nullptr;
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write checkpoint " + path);
  out.write(kMagic, sizeof kMagic);
  put_u32(out, Checkpoint::kVersion);
  put_string(out, ckpt.kind);
  put_u32(out, static_cast<std::uint32_t>(ckpt.meta.size()));
  for (const auto& [k, v] : ckpt.meta) {
    put_string(out, k);
    put_string(out, v);
  }
  put_u32(out, static_cast<std::uint32_t>(ckpt.tensors.size()));
  for (const auto& [name, t] : ckpt.tensors) {
    put_string(out, name);
    put_u32(out, static_cast<std::uint32_t>(t.rank()));
    for (int d : t.shape()) {
      const std::int32_t dd = d;
      out.write(reinterpret_cast<const char*>(&dd), sizeof dd);
    }
    out.write(reinterpret_cast<const char*>(t.data()),
              static_cast<std::streamsize>(t.numel() * sizeof(double)));
  }
  if (!out) throw IoError("checkpoint write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path);
  char magic[8];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kMagic, sizeof kMagic) != 0) {
    throw DecodeError("not a checkpoint file: " + path);
  }
  const std::uint32_t version = get_u32(in);
  if (version != Checkpoint::kVersion) {
    throw DecodeError("unsupported checkpoint version " + std::to_string(version));
  }
  Checkpoint ckpt;
  ckpt.kind = get_string(in);
  const std::uint32_t nmeta = get_u32(in);
  for (std::uint32_t i = 0; i < nmeta; ++i) {
    std::string k = get_string(in);
    ckpt.meta[k] = get_string(in);
  }
  const std::uint32_t ntensors = get_u32(in);
  for (std::uint32_t i = 0; i < ntensors; ++i) {
    std::string name = get_string(in);
    const std::uint32_t rank = get_u32(in);
    if (rank > 8) throw DecodeError("checkpoint tensor rank too large");
    std::vector<int> shape(rank);
    for (auto& d : shape) {
      std::int32_t dd = 0;
      in.read(reinterpret_cast<char*>(&dd), sizeof dd);
      if (!in || dd < 0) throw DecodeError("checkpoint truncated");
      d = dd;
    }
    Tensor t(shape);
    in.read(reinterpret_cast<char*>(t.data()),
            static_cast<std::streamsize>(t.numel() * sizeof(double)));
    if (!in) throw DecodeError("checkpoint truncated");
    ckpt.tensors.emplace_back(std::move(name), std::move(t));
  }
  return ckpt;
}

void add_params(Checkpoint& ckpt, const std::string& prefix, const ParamList& params) {
  for (const auto& p : params) ckpt.tensors.emplace_back(prefix + p.name, p.var->value);
}

void restore_params(const Checkpoint& ckpt, const std::string& prefix, const ParamList& params) {
  for (const auto& p : params) {
    const Tensor* t = ckpt.find(prefix + p.name);
    if (!t) throw DecodeError("checkpoint missing tensor " + prefix + p.name);
    if (!t->same_shape(p.var->value)) {
      throw DecodeError("checkpoint shape mismatch for " + prefix + p.name);
    }
    p.var->value = *t;
  }
}

}  // namespace radsynth::nn
