#include "radsynth/nn/spectral.hpp"

#include "radsynth/errors.hpp"

namespace radsynth::nn {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

void normalize_or_reset(Eigen::VectorXd& x, Rng& rng) {
  const double n = x.norm();
  if (n > 0.0) {
    x /= n;
    return;
  }
  for (Eigen::Index i = 0; i < x.size(); ++i) x(i) = rng.normal();
  x.normalize();
}

template <typename M>
double power_iterate(const M& m, int iterations, SpectralState& st, std::uint64_t seed) {
  Rng rng(seed);
  if (st.u.size() != m.rows()) {
    st.u.resize(m.rows());
    for (Eigen::Index i = 0; i < st.u.size(); ++i) st.u(i) = rng.normal();
    st.u.normalize();
  }
  if (st.v.size() != m.cols()) st.v = Eigen::VectorXd::Zero(m.cols());
  for (int it = 0; it < iterations; ++it) {
    st.v = m.transpose() * st.u;
    if (st.v.norm() == 0.0) return 0.0;
    st.v.normalize();
    st.u = m * st.v;
    if (st.u.norm() == 0.0) return 0.0;
    normalize_or_reset(st.u, rng);
  }
  return st.u.dot(m * st.v);
}

}  // namespace

Eigen::MatrixXd spectral_normalize(const Eigen::MatrixXd& m, int iterations,
                                   SpectralState& state, std::uint64_t seed) {
  if (iterations < 1) throw ArgumentError("spectral_normalize: need >= 1 power iteration");
  if (m.size() == 0 || m.cwiseAbs().maxCoeff() == 0.0) {
    state.sigma = 1.0;
    return m;
  }
  double sigma = power_iterate(m, iterations, state, seed);
  if (!(sigma > 0.0)) sigma = 1.0;
  state.sigma = sigma;
  return m / sigma;
}

Var spectral_normalized(const Var& w, SpectralState& state, int iterations, bool update) {
  const Tensor& wt = w->value;
  if (wt.rank() < 2) throw ArgumentError("spectral_normalized: weight rank must be >= 2");
  const Eigen::Index rows = wt.dim(0);
  const Eigen::Index cols = static_cast<Eigen::Index>(wt.numel()) / rows;
  Eigen::Map<const RowMat> m(wt.data(), rows, cols);
  const bool zero = m.cwiseAbs().maxCoeff() == 0.0;

  double sigma = 1.0;
  if (!zero) {
    if (update || state.u.size() != rows || state.v.size() != cols) {
      if (iterations < 1) throw ArgumentError("spectral_normalized: need >= 1 iteration");
      sigma = power_iterate(m, iterations, state, 0);
    } else {
      sigma = state.u.dot(m * state.v);
    }
    if (!(sigma > 0.0)) sigma = 1.0;
  }
  state.sigma = sigma;

  Tensor out = wt;
  out *= 1.0 / sigma;
  const Eigen::VectorXd u = zero ? Eigen::VectorXd() : state.u;
  const Eigen::VectorXd v = zero ? Eigen::VectorXd() : state.v;
  return make_node(std::move(out), {w}, [sigma, u, v, rows, cols, zero](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    Eigen::Map<RowMat> g(p.grad_buffer().data(), rows, cols);
    Eigen::Map<const RowMat> gy(self.grad.data(), rows, cols);
    if (zero) {
      g += gy;
      return;
    }
    Eigen::Map<const RowMat> wm(p.value.data(), rows, cols);
    const double inner = (gy.array() * wm.array()).sum();
    g += gy / sigma;
    g.noalias() -= (inner / (sigma * sigma)) * (u * v.transpose());
  });
}

}  // namespace radsynth::nn
