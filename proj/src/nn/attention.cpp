#include "radsynth/nn/attention.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <memory>

#include "radsynth/errors.hpp"

namespace radsynth::nn {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct Tile {
  std::vector<int> queries;  // flat y*W + x
  std::vector<int> keys;
};

std::vector<Tile> make_tiles(int h, int w, const WindowSpec& spec) {
  const int ny = (h + spec.win_h - 1) / spec.win_h;
  const int nx = (w + spec.win_w - 1) / spec.win_w;
  std::vector<Tile> tiles;
  tiles.reserve(static_cast<std::size_t>(ny) * nx);
  for (int ty = 0; ty < ny; ++ty)
    for (int tx = 0; tx < nx; ++tx) {
      Tile t;
      const int oy = ty * spec.win_h, ox = tx * spec.win_w;
      for (int y = oy; y < std::min(h, oy + spec.win_h); ++y)
        for (int x = ox; x < std::min(w, ox + spec.win_w); ++x) t.queries.push_back(y * w + x);
      for (int y = oy - spec.pad; y < oy + spec.win_h + spec.pad; ++y)
        for (int x = ox - spec.pad; x < ox + spec.win_w + spec.pad; ++x)
          t.keys.push_back(std::clamp(y, 0, h - 1) * w + std::clamp(x, 0, w - 1));
      tiles.push_back(std::move(t));
    }
  return tiles;
}

void validate(const Tensor& q, const Tensor& k, const Tensor& v, int heads,
              const WindowSpec& spec) {
  if (q.rank() != 3 || !q.same_shape(k) || !q.same_shape(v)) {
    throw ArgumentError("windowed_attention: q, k, v must share a [C,H,W] shape");
  }
  if (heads < 1 || q.channels() % heads != 0) {
    throw ArgumentError("windowed_attention: channels not divisible by heads");
  }
  if (spec.win_h < 1 || spec.win_w < 1 || spec.pad < 0) {
    throw ArgumentError("windowed_attention: invalid window spec");
  }
}

RowMat gather(const Tensor& t, const std::vector<int>& pos, int c0, int d) {
  const std::size_t plane = static_cast<std::size_t>(t.height()) * t.width();
  RowMat m(static_cast<Eigen::Index>(pos.size()), d);
  for (std::size_t i = 0; i < pos.size(); ++i)
    for (int j = 0; j < d; ++j) m(i, j) = t[(c0 + j) * plane + pos[i]];
  return m;
}

void scatter_add(Tensor& t, const std::vector<int>& pos, int c0, const RowMat& m) {
  const std::size_t plane = static_cast<std::size_t>(t.height()) * t.width();
  for (std::size_t i = 0; i < pos.size(); ++i)
    for (int j = 0; j < m.cols(); ++j) t[(c0 + j) * plane + pos[i]] += m(i, j);
}

void softmax_rows(RowMat& s) {
  for (Eigen::Index r = 0; r < s.rows(); ++r) {
    const double mx = s.row(r).maxCoeff();
    s.row(r) = (s.row(r).array() - mx).exp();
    s.row(r) /= s.row(r).sum();
  }
}

struct Forward {
  Tensor out;
  std::vector<RowMat> probs;
};

Forward run_forward(const Tensor& q, const Tensor& k, const Tensor& v, int heads,
                    const std::vector<Tile>& tiles) {
  const int d = q.channels() / heads;
  const double sc = 1.0 / std::sqrt(static_cast<double>(d));
  Forward f{Tensor(q.shape(), 0.0), {}};
  f.probs.reserve(tiles.size() * heads);
  for (const Tile& tile : tiles) {
    for (int hd = 0; hd < heads; ++hd) {
      const int c0 = hd * d;
      const RowMat qm = gather(q, tile.queries, c0, d);
      const RowMat km = gather(k, tile.keys, c0, d);
      const RowMat vm = gather(v, tile.keys, c0, d);
      RowMat p = (qm * km.transpose()) * sc;
      softmax_rows(p);
      const RowMat o = p * vm;
      scatter_add(f.out, tile.queries, c0, o);
      f.probs.push_back(std::move(p));
    }
  }
  return f;
}

}  // namespace

Tensor windowed_attention(const Tensor& q, const Tensor& k, const Tensor& v, int heads,
                          const WindowSpec& spec, std::vector<Tensor>* probs) {
  validate(q, k, v, heads, spec);
  const auto tiles = make_tiles(q.height(), q.width(), spec);
  Forward f = run_forward(q, k, v, heads, tiles);
  if (probs) {
    probs->clear();
    for (const RowMat& p : f.probs) {
      Tensor t({static_cast<int>(p.rows()), static_cast<int>(p.cols())});
      Eigen::Map<RowMat>(t.data(), p.rows(), p.cols()) = p;
      probs->push_back(std::move(t));
    }
  }
  return std::move(f.out);
}

Var windowed_attention(const Var& q, const Var& k, const Var& v, int heads,
                       const WindowSpec& spec) {
  validate(q->value, k->value, v->value, heads, spec);
  auto tiles = std::make_shared<std::vector<Tile>>(
      make_tiles(q->value.height(), q->value.width(), spec));
  Forward f = run_forward(q->value, k->value, v->value, heads, *tiles);
  auto probs = std::make_shared<std::vector<RowMat>>(std::move(f.probs));
  return make_node(std::move(f.out), {q, k, v}, [tiles, probs, heads](Node& self) {
    Node& pq = *self.parents[0];
    Node& pk = *self.parents[1];
    Node& pv = *self.parents[2];
    const int d = pq.value.channels() / heads;
    const double sc = 1.0 / std::sqrt(static_cast<double>(d));
    std::size_t idx = 0;
    for (const Tile& tile : *tiles) {
      for (int hd = 0; hd < heads; ++hd, ++idx) {
        const int c0 = hd * d;
        const RowMat& p = (*probs)[idx];
        const RowMat go = gather(self.grad, tile.queries, c0, d);
        const RowMat vm = gather(pv.value, tile.keys, c0, d);
        if (pv.requires_grad) scatter_add(pv.grad_buffer(), tile.keys, c0, p.transpose() * go);
        if (!pq.requires_grad && !pk.requires_grad) continue;
        const RowMat gp = go * vm.transpose();
        RowMat gs = p.cwiseProduct(gp);
        const Eigen::VectorXd row = gs.rowwise().sum();
        gs -= p.cwiseProduct(row.replicate(1, p.cols()));
        gs *= sc;
        if (pq.requires_grad) {
          const RowMat km = gather(pk.value, tile.keys, c0, d);
          scatter_add(pq.grad_buffer(), tile.queries, c0, gs * km);
        }
        if (pk.requires_grad) {
          const RowMat qm = gather(pq.value, tile.queries, c0, d);
          scatter_add(pk.grad_buffer(), tile.keys, c0, gs.transpose() * qm);
        }
      }
    }
  });
}

}  // namespace radsynth::nn
