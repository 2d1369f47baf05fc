#pragma once

// Fourier Neural Mapping (FNM): (vector input, function input on the torus)
// -> vector output, with exact reverse-mode gradients.
//
// Architecture: broadcast vector input as constant channels, append the
// coordinate channel, affine lift to `width` channels, T Fourier layers
// GELU(W u + spectral_conv(u) + b), band-limited function-to-vector read-out,
// affine projection. Complex spectral weights are stored as explicit
// (re, im) blocks; the DC block's imaginary part is identically zero.
//
// With only K+1 retained modes the transforms are direct truncated DFTs
// (precomputed twiddle matrices), so forward and adjoint match exactly.

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <vector>

#include "memlaw/errors.hpp"
#include "memlaw/rng.hpp"

namespace memlaw {

using MatRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using VecXd = Eigen::VectorXd;

struct FnmConfig {
  int d_in_f = 1;    // function input channels
  int d_in_v = 1;    // vector input length
  int d_out_v = 1;   // vector output length
  int width = 32;    // hidden channels
  int n_layers = 3;  // Fourier layers T
  int n_modes = 4;   // retained wavenumbers 0..K
  int d_proj_fv = 64;

  int c_in() const { return d_in_f + d_in_v + 1; }  // +1 coordinate channel

  void validate() const {
    if (d_in_f < 0 || d_in_v < 1 || d_out_v < 1 || width < 1 || n_layers < 1 || n_modes < 1 ||
        d_proj_fv < 1)
      throw ConfigError("FnmConfig: all counts must be positive");
  }
};

// Flat float64 parameter layout (row-major tensors, in declaration order).
struct FnmLayout {
  FnmConfig cfg;
  std::ptrdiff_t lift_W = 0, lift_b = 0;
  std::ptrdiff_t layer0 = 0, layer_stride = 0;
  std::ptrdiff_t off_W = 0, off_b = 0, off_Pre = 0, off_Pim = 0;  // within a layer
  std::ptrdiff_t pf_re = 0, pf_im = 0, proj_W = 0, proj_b = 0;
  std::ptrdiff_t total = 0;

  explicit FnmLayout(const FnmConfig& c) : cfg(c) {
    cfg.validate();
    const std::ptrdiff_t w = cfg.width, K1 = cfg.n_modes + 1, p = cfg.d_proj_fv;
    std::ptrdiff_t off = 0;
    lift_W = off; off += w * cfg.c_in();
    lift_b = off; off += w;
    off_W = 0;
    off_b = w * w;
    off_Pre = off_b + w;
    off_Pim = off_Pre + K1 * w * w;
    layer_stride = off_Pim + K1 * w * w;
    layer0 = off; off += cfg.n_layers * layer_stride;
    pf_re = off; off += K1 * p * w;
    pf_im = off; off += K1 * p * w;
    proj_W = off; off += cfg.d_out_v * p;
    proj_b = off; off += cfg.d_out_v;
    total = off;
  }

  std::ptrdiff_t layer(int t) const { return layer0 + t * layer_stride; }
};

// Typed view over a flat buffer (used for both parameters and gradients).
template <typename Scalar>
struct FnmView {
  Scalar* data;
  const FnmLayout* lay;

  using Map = Eigen::Map<std::conditional_t<std::is_const_v<Scalar>, const MatRM, MatRM>>;
  using VMap = Eigen::Map<std::conditional_t<std::is_const_v<Scalar>, const VecXd, VecXd>>;

  Map lift_W() const { return Map(data + lay->lift_W, lay->cfg.width, lay->cfg.c_in()); }
  VMap lift_b() const { return VMap(data + lay->lift_b, lay->cfg.width); }
  Map W(int t) const { return Map(data + lay->layer(t) + lay->off_W, lay->cfg.width, lay->cfg.width); }
  VMap b(int t) const { return VMap(data + lay->layer(t) + lay->off_b, lay->cfg.width); }
  Map Pre(int t, int k) const {
    const std::ptrdiff_t w = lay->cfg.width;
    return Map(data + lay->layer(t) + lay->off_Pre + k * w * w, w, w);
  }
  Map Pim(int t, int k) const {
    const std::ptrdiff_t w = lay->cfg.width;
    return Map(data + lay->layer(t) + lay->off_Pim + k * w * w, w, w);
  }
  Map Pf_re(int k) const {
    const std::ptrdiff_t w = lay->cfg.width, p = lay->cfg.d_proj_fv;
    return Map(data + lay->pf_re + k * p * w, p, w);
  }
  Map Pf_im(int k) const {
    const std::ptrdiff_t w = lay->cfg.width, p = lay->cfg.d_proj_fv;
    return Map(data + lay->pf_im + k * p * w, p, w);
  }
  Map proj_W() const { return Map(data + lay->proj_W, lay->cfg.d_out_v, lay->cfg.d_proj_fv); }
  VMap proj_b() const { return VMap(data + lay->proj_b, lay->cfg.d_out_v); }
};

struct FnmParams {
  FnmLayout layout;
  std::vector<double> data;

  explicit FnmParams(const FnmConfig& cfg)
      : layout(cfg), data(static_cast<std::size_t>(layout.total), 0.0) {}

  FnmView<double> view() { return {data.data(), &layout}; }
  FnmView<const double> view() const { return {data.data(), &layout}; }
};

// Zero the imaginary parts of all DC spectral blocks (layout invariant).
inline void fnm_enforce_real_dc(FnmParams& params) {
  auto v = params.view();
  for (int t = 0; t < params.layout.cfg.n_layers; ++t) v.Pim(t, 0).setZero();
  v.Pf_im(0).setZero();
}

// Precomputed twiddle matrices for one (m, K) pair.
//   forward:  u_hat = U * F,  F(j,k) = exp(-2 pi i k j / m) / m        (m x K+1)
//   inverse:  u = Re(u_hat * G), G(k,j) = c_k exp(+2 pi i k j / m)     (K+1 x m)
// with c_0 = 1, c_k = 2 accounting for the conjugate modes.
struct FnmDft {
  int m = 0, K = 0;
  MatRM F_re, F_im, G_re, G_im;

  void init(int m_in, int K_in) {
    if (m_in < 2 * (K_in + 1)) throw ConfigError("fnm: grid too coarse for n_modes");
    if (m == m_in && K == K_in) return;
    m = m_in;
    K = K_in;
    F_re.resize(m, K + 1);
    F_im.resize(m, K + 1);
    G_re.resize(K + 1, m);
    G_im.resize(K + 1, m);
    for (int k = 0; k <= K; ++k) {
      const double c = (k == 0) ? 1.0 : 2.0;
      for (int j = 0; j < m; ++j) {
        const double phase = 2.0 * M_PI * k * j / m;
        F_re(j, k) = std::cos(phase) / m;
        F_im(j, k) = -std::sin(phase) / m;
        G_re(k, j) = c * std::cos(phase);
        G_im(k, j) = c * std::sin(phase);
      }
    }
  }
};

namespace detail {

inline double gelu_phi(double z) { return 0.5 * (1.0 + std::erf(z * M_SQRT1_2)); }
inline double gelu_pdf(double z) {
  return std::exp(-0.5 * z * z) * 0.3989422804014326779;  // 1/sqrt(2 pi)
}

}  // namespace detail

// Per-layer intermediates cached during the forward pass.
struct FnmLayerTape {
  MatRM U_hat_re, U_hat_im;  // width x (K+1): spectrum of the layer input
  MatRM Z;                   // width x m: pre-activation
  MatRM Phi;                 // width x m: cached GELU CDF factor
};

struct FnmTape {
  MatRM X;                        // c_in x m: assembled input channels
  std::vector<MatRM> U;           // n_layers+1 entries: U[0] = lift output
  std::vector<FnmLayerTape> layers;
  MatRM H_hat_re, H_hat_im;       // width x (K+1): spectrum for func2vec
  VecXd fv;                       // d_proj_fv
  MatRM S_re, S_im;               // width x (K+1): spectral-multiply scratch
  int m = 0;

  void init(const FnmConfig& cfg, int m_in) {
    const int w = cfg.width, K1 = cfg.n_modes + 1;
    m = m_in;
    S_re.resize(w, K1);
    S_im.resize(w, K1);
    X.resize(cfg.c_in(), m);
    U.resize(static_cast<std::size_t>(cfg.n_layers) + 1);
    layers.resize(static_cast<std::size_t>(cfg.n_layers));
    for (auto& u : U) u.resize(w, m);
    for (auto& l : layers) {
      l.U_hat_re.resize(w, K1);
      l.U_hat_im.resize(w, K1);
      l.Z.resize(w, m);
      l.Phi.resize(w, m);
    }
    H_hat_re.resize(w, K1);
    H_hat_im.resize(w, K1);
    fv.resize(cfg.d_proj_fv);
  }
};

// Forward pass. func_in: d_in_f x m channel matrix on the periodic nodes
// (endpoint duplicate already dropped). The tape must be init'ed for (cfg, m).
inline VecXd fnm_forward(const FnmParams& params, const VecXd& vec_in, const MatRM& func_in,
                         const FnmDft& dft, FnmTape& tape) {
  const FnmConfig& cfg = params.layout.cfg;
  const auto v = params.view();
  const int m = static_cast<int>(func_in.cols());
  const int K1 = cfg.n_modes + 1;
  if (static_cast<int>(func_in.rows()) != cfg.d_in_f || vec_in.size() != cfg.d_in_v)
    throw ConfigError("fnm_forward: input dimension mismatch");
  if (dft.m != m || tape.m != m) throw ConfigError("fnm_forward: dft/tape not sized for grid");

  // Channel assembly: function channels, broadcast vector channels, coordinate.
  tape.X.topRows(cfg.d_in_f) = func_in;
  for (int i = 0; i < cfg.d_in_v; ++i) tape.X.row(cfg.d_in_f + i).setConstant(vec_in(i));
  for (int j = 0; j < m; ++j) tape.X(cfg.c_in() - 1, j) = static_cast<double>(j) / m;

  tape.U[0].noalias() = v.lift_W() * tape.X;
  tape.U[0].colwise() += v.lift_b();

  for (int t = 0; t < cfg.n_layers; ++t) {
    FnmLayerTape& lt = tape.layers[static_cast<std::size_t>(t)];
    const MatRM& Uin = tape.U[static_cast<std::size_t>(t)];

    lt.U_hat_re.noalias() = Uin * dft.F_re;
    lt.U_hat_im.noalias() = Uin * dft.F_im;

    // Spectral multiply per retained mode, then truncated inverse transform.
    for (int k = 0; k < K1; ++k) {
      tape.S_re.col(k).noalias() = v.Pre(t, k) * lt.U_hat_re.col(k);
      tape.S_re.col(k).noalias() -= v.Pim(t, k) * lt.U_hat_im.col(k);
      tape.S_im.col(k).noalias() = v.Pre(t, k) * lt.U_hat_im.col(k);
      tape.S_im.col(k).noalias() += v.Pim(t, k) * lt.U_hat_re.col(k);
    }

    lt.Z.noalias() = v.W(t) * Uin;
    lt.Z.noalias() += tape.S_re * dft.G_re;
    lt.Z.noalias() -= tape.S_im * dft.G_im;
    lt.Z.colwise() += v.b(t);

    MatRM& Uout = tape.U[static_cast<std::size_t>(t) + 1];
    const double* z = lt.Z.data();
    double* phi = lt.Phi.data();
    double* uo = Uout.data();
    const std::ptrdiff_t n = lt.Z.size();
    for (std::ptrdiff_t i = 0; i < n; ++i) {
      phi[i] = detail::gelu_phi(z[i]);
      uo[i] = z[i] * phi[i];
    }
  }

  // Function-to-vector read-out (band-limited kernel) and projection.
  const MatRM& H = tape.U[static_cast<std::size_t>(cfg.n_layers)];
  tape.H_hat_re.noalias() = H * dft.F_re;
  tape.H_hat_im.noalias() = H * dft.F_im;
  tape.fv.setZero();
  for (int k = 0; k < K1; ++k) {
    const double c = (k == 0) ? 1.0 : 2.0;
    tape.fv.noalias() += c * (v.Pf_re(k) * tape.H_hat_re.col(k));
    tape.fv.noalias() -= c * (v.Pf_im(k) * tape.H_hat_im.col(k));
  }

  VecXd out = v.proj_W() * tape.fv + v.proj_b();
  return out;
}

// Reverse pass. Accumulates parameter gradients into `grad` (same layout)
// and the vector-input gradient into `vec_grad` (+=). `scratch_*` live in
// the caller's workspace to avoid per-call allocation.
struct FnmBackwardWork {
  MatRM gU, gU2, gZ;         // width x m
  MatRM gX;                  // c_in x m
  MatRM gH_re, gH_im;        // width x (K+1)
  MatRM gU_hat_re, gU_hat_im;
  VecXd g_fv;

  void init(const FnmConfig& cfg, int m) {
    gU.resize(cfg.width, m);
    gU2.resize(cfg.width, m);
    gZ.resize(cfg.width, m);
    gX.resize(cfg.c_in(), m);
    gH_re.resize(cfg.width, cfg.n_modes + 1);
    gH_im.resize(cfg.width, cfg.n_modes + 1);
    gU_hat_re.resize(cfg.width, cfg.n_modes + 1);
    gU_hat_im.resize(cfg.width, cfg.n_modes + 1);
    g_fv.resize(cfg.d_proj_fv);
  }
};

inline void fnm_backward(const FnmParams& params, const FnmTape& tape, const VecXd& out_grad,
                         const FnmDft& dft, FnmBackwardWork& wk, FnmView<double> grad,
                         VecXd* vec_grad) {
  const FnmConfig& cfg = params.layout.cfg;
  const auto v = params.view();
  const int K1 = cfg.n_modes + 1;
  if (out_grad.size() != cfg.d_out_v) throw ConfigError("fnm_backward: out_grad size mismatch");

  // Projection.
  grad.proj_W().noalias() += out_grad * tape.fv.transpose();
  grad.proj_b() += out_grad;
  wk.g_fv.noalias() = v.proj_W().transpose() * out_grad;

  // Function-to-vector.
  for (int k = 0; k < K1; ++k) {
    const double c = (k == 0) ? 1.0 : 2.0;
    grad.Pf_re(k).noalias() += c * (wk.g_fv * tape.H_hat_re.col(k).transpose());
    grad.Pf_im(k).noalias() -= c * (wk.g_fv * tape.H_hat_im.col(k).transpose());
    wk.gH_re.col(k).noalias() = c * (v.Pf_re(k).transpose() * wk.g_fv);
    wk.gH_im.col(k).noalias() = -c * (v.Pf_im(k).transpose() * wk.g_fv);
  }
  wk.gU.noalias() = wk.gH_re * dft.F_re.transpose();
  wk.gU.noalias() += wk.gH_im * dft.F_im.transpose();

  // Fourier layers in reverse.
  for (int t = cfg.n_layers - 1; t >= 0; --t) {
    const FnmLayerTape& lt = tape.layers[static_cast<std::size_t>(t)];
    const MatRM& Uin = tape.U[static_cast<std::size_t>(t)];

    // GELU': Phi(z) + z pdf(z), with Phi cached from forward.
    {
      const double* z = lt.Z.data();
      const double* phi = lt.Phi.data();
      const double* gu = wk.gU.data();
      double* gz = wk.gZ.data();
      const std::ptrdiff_t n = lt.Z.size();
      for (std::ptrdiff_t i = 0; i < n; ++i)
        gz[i] = gu[i] * (phi[i] + z[i] * detail::gelu_pdf(z[i]));
    }

    grad.b(t) += wk.gZ.rowwise().sum();
    grad.W(t).noalias() += wk.gZ * Uin.transpose();

    // Inverse-transform adjoint.
    wk.gH_re.noalias() = wk.gZ * dft.G_re.transpose();
    wk.gH_im.noalias() = -(wk.gZ * dft.G_im.transpose());

    // Spectral-multiply adjoint.
    for (int k = 0; k < K1; ++k) {
      grad.Pre(t, k).noalias() += wk.gH_re.col(k) * lt.U_hat_re.col(k).transpose();
      grad.Pre(t, k).noalias() += wk.gH_im.col(k) * lt.U_hat_im.col(k).transpose();
      grad.Pim(t, k).noalias() -= wk.gH_re.col(k) * lt.U_hat_im.col(k).transpose();
      grad.Pim(t, k).noalias() += wk.gH_im.col(k) * lt.U_hat_re.col(k).transpose();
      wk.gU_hat_re.col(k).noalias() = v.Pre(t, k).transpose() * wk.gH_re.col(k);
      wk.gU_hat_re.col(k).noalias() += v.Pim(t, k).transpose() * wk.gH_im.col(k);
      wk.gU_hat_im.col(k).noalias() = v.Pre(t, k).transpose() * wk.gH_im.col(k);
      wk.gU_hat_im.col(k).noalias() -= v.Pim(t, k).transpose() * wk.gH_re.col(k);
    }

    // gU for the layer below: pointwise path + forward-transform adjoint.
    wk.gU2.noalias() = v.W(t).transpose() * wk.gZ;
    wk.gU2.noalias() += wk.gU_hat_re * dft.F_re.transpose();
    wk.gU2.noalias() += wk.gU_hat_im * dft.F_im.transpose();
    wk.gU.swap(wk.gU2);
  }

  // Lift.
  grad.lift_b() += wk.gU.rowwise().sum();
  grad.lift_W().noalias() += wk.gU * tape.X.transpose();
  if (vec_grad) {
    // Vector channels are broadcast constants: the adjoint sums over columns.
    wk.gX.noalias() = v.lift_W().transpose() * wk.gU;
    for (int i = 0; i < cfg.d_in_v; ++i) (*vec_grad)(i) += wk.gX.row(cfg.d_in_f + i).sum();
  }
}

// Initialization: spectral blocks ~ complex Gaussian with std 1/(width(K+1)),
// pointwise/affine weights ~ U(+-sqrt(1/fan_in)), biases zero. Deterministic
// per seed; the DC imaginary blocks stay zero.
inline FnmParams fnm_init(const FnmConfig& cfg, std::uint64_t seed) {
  FnmParams params(cfg);
  Rng rng(seed);
  auto v = params.view();

  const auto fill_uniform = [&](auto map, int fan_in) {
    // Uniform with variance 1/fan_in, so activations keep their scale through
    // the pointwise paths (LeCun-style fan-in normalization).
    const double bound = std::sqrt(3.0 / fan_in);
    for (Eigen::Index i = 0; i < map.rows(); ++i)
      for (Eigen::Index j = 0; j < map.cols(); ++j) map(i, j) = rng.uniform(-bound, bound);
  };
  const auto fill_spectral = [&](auto re, auto im, bool dc) {
    // Complex Gaussian with total variance 1/(width*(K+1)) per coefficient,
    // split evenly between the real and imaginary parts.
    const double s = M_SQRT1_2 / std::sqrt(static_cast<double>(cfg.width) * (cfg.n_modes + 1));
    for (Eigen::Index i = 0; i < re.rows(); ++i)
      for (Eigen::Index j = 0; j < re.cols(); ++j) {
        re(i, j) = s * rng.normal();
        im(i, j) = dc ? 0.0 : s * rng.normal();
      }
  };

  fill_uniform(v.lift_W(), cfg.c_in());
  for (int t = 0; t < cfg.n_layers; ++t) {
    fill_uniform(v.W(t), cfg.width);
    for (int k = 0; k <= cfg.n_modes; ++k) fill_spectral(v.Pre(t, k), v.Pim(t, k), k == 0);
  }
  for (int k = 0; k <= cfg.n_modes; ++k) fill_spectral(v.Pf_re(k), v.Pf_im(k), k == 0);
  fill_uniform(v.proj_W(), cfg.d_proj_fv);
  return params;
}

}  // namespace memlaw
