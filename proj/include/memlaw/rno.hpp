#pragma once

// Recurrent neural operator: forward-Euler rollout of an internal state
// driven by two FNMs (state dynamics G and stress read-out F), the training
// loss with its backprop-through-time gradients, and the Adam/cosine trainer.
//
//   KV :  xi_{k+1} = xi_k + dt G(eps_k, xi_k; E, nu),  sigma_k = F(eps_k, deps_k, xi_k; E, nu)
//   EVP:  same recursion with F(eps_k, xi_k; E, eps_p0, sigma_Y, n_exp)

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <vector>

#include "memlaw/errors.hpp"
#include "memlaw/fields.hpp"
#include "memlaw/fnm.hpp"
#include "memlaw/materials.hpp"
#include "memlaw/metrics.hpp"

namespace memlaw {

enum class RnoVariant { kv, evp };

struct RnoModel {
  RnoVariant variant = RnoVariant::kv;
  int L = 5;
  FnmParams f;  // stress read-out
  FnmParams g;  // state dynamics

  RnoModel(RnoVariant var, int L_in, const FnmParams& f_in, const FnmParams& g_in)
      : variant(var), L(L_in), f(f_in), g(g_in) {}

  int n_func_channels() const { return variant == RnoVariant::kv ? 2 : 4; }
  int f_vec_dim() const { return (variant == RnoVariant::kv ? 2 : 1) + L; }
  int g_vec_dim() const { return 1 + L; }
};

inline RnoModel make_rno(RnoVariant variant, int L, std::uint64_t seed, int width = 32,
                         int n_layers = 3, int d_proj_fv = 64, int n_modes = -1) {
  if (n_modes < 0) n_modes = (variant == RnoVariant::kv) ? 4 : 2;
  const int d_f = (variant == RnoVariant::kv) ? 2 : 4;

  FnmConfig f_cfg;
  f_cfg.d_in_f = d_f;
  f_cfg.d_in_v = (variant == RnoVariant::kv ? 2 : 1) + L;
  f_cfg.d_out_v = 1;
  f_cfg.width = width;
  f_cfg.n_layers = n_layers;
  f_cfg.n_modes = n_modes;
  f_cfg.d_proj_fv = d_proj_fv;

  FnmConfig g_cfg = f_cfg;
  g_cfg.d_in_v = 1 + L;
  g_cfg.d_out_v = L;

  Rng rng(seed);
  const std::uint64_t f_seed = rng.next_u64();
  const std::uint64_t g_seed = rng.next_u64();
  return RnoModel(variant, L, fnm_init(f_cfg, f_seed), fnm_init(g_cfg, g_seed));
}

// Function-input channel matrices (channels x m, endpoint dropped).
inline MatRM material_channels(const PiecewiseMaterialKV& mat, SpaceGrid grid) {
  const int m = grid.n_points - 1;
  MatRM X(2, m);
  const auto e = node_values(mat, grid, true);
  const auto v = node_values(mat, grid, false);
  for (int j = 0; j < m; ++j) {
    X(0, j) = e[static_cast<std::size_t>(j)];
    X(1, j) = v[static_cast<std::size_t>(j)];
  }
  return X;
}

inline MatRM material_channels(const ContinuousMaterialKV& mat, SpaceGrid grid) {
  const int m = grid.n_points - 1;
  MatRM X(2, m);
  const SampledField e = resample_linear(mat.E, grid);
  const SampledField v = resample_linear(mat.nu, grid);
  for (int j = 0; j < m; ++j) {
    X(0, j) = e.values[static_cast<std::size_t>(j)];
    X(1, j) = v.values[static_cast<std::size_t>(j)];
  }
  return X;
}

// Fixed affine maps taking the EVP sampling boxes [1,10]x[0.5,2]x[0.1,1]x[1,20]
// to [-1,1] per channel. Raw component magnitudes differ by up to 20x, which
// saturates the lifted activations and stalls training; network inputs are
// therefore normalized while datasets keep the physical values.
inline constexpr double kEvpChannelMid[MaterialEVP::kComponents] = {5.5, 1.25, 0.55, 10.5};
inline constexpr double kEvpChannelHalf[MaterialEVP::kComponents] = {4.5, 0.75, 0.45, 9.5};

inline void normalize_evp_channels(MatRM& X) {
  for (int c = 0; c < MaterialEVP::kComponents; ++c)
    X.row(c) = (X.row(c).array() - kEvpChannelMid[c]) / kEvpChannelHalf[c];
}

inline MatRM material_channels(const MaterialEVP& mat, SpaceGrid grid) {
  const int m = grid.n_points - 1;
  MatRM X(MaterialEVP::kComponents, m);
  if (mat.piecewise) {
    PiecewiseMaterialKV geom;  // reuse piece_index via a dummy KV wrapper
    geom.breaks = mat.breaks;
    for (int c = 0; c < MaterialEVP::kComponents; ++c)
      for (int j = 0; j < m; ++j)
        X(c, j) = mat.piece_vals[static_cast<std::size_t>(c)]
                               [static_cast<std::size_t>(geom.piece_index(grid.node(j)))];
  } else {
    for (int c = 0; c < MaterialEVP::kComponents; ++c) {
      const SampledField f = resample_linear(mat.fields[static_cast<std::size_t>(c)], grid);
      for (int j = 0; j < m; ++j) X(c, j) = f.values[static_cast<std::size_t>(j)];
    }
  }
  return X;
}

// Generic: raw per-channel node arrays (e.g. loaded from a dataset), linearly
// resampled onto the rollout grid.
inline MatRM material_channels(const std::vector<std::vector<double>>& channels, SpaceGrid grid) {
  const int m = grid.n_points - 1;
  MatRM X(static_cast<Eigen::Index>(channels.size()), m);
  for (std::size_t c = 0; c < channels.size(); ++c) {
    const auto r = resample_linear(channels[c], grid.n_points);
    for (int j = 0; j < m; ++j) X(static_cast<Eigen::Index>(c), j) = r[static_cast<std::size_t>(j)];
  }
  return X;
}

// ---------------------------------------------------------------------------
// Rollout.

struct RolloutResult {
  std::vector<double> sigma;
  MatRM xi;  // L x n_steps
};

// Reusable buffers; per-step tapes are only allocated in training mode.
struct RnoWork {
  FnmDft dft;
  FnmTape f_scratch, g_scratch;
  std::vector<FnmTape> f_tapes, g_tapes;  // training mode
  FnmBackwardWork f_bwk, g_bwk;
  VecXd f_vec, g_vec, f_vgrad, g_vgrad, a, a_next, g00_out;
  int n_tapes = 0;

  void init(const RnoModel& model, int m, int n_steps, bool training) {
    dft.init(m, model.f.layout.cfg.n_modes);
    f_scratch.init(model.f.layout.cfg, m);
    g_scratch.init(model.g.layout.cfg, m);
    f_vec.resize(model.f_vec_dim());
    g_vec.resize(model.g_vec_dim());
    if (training) {
      f_bwk.init(model.f.layout.cfg, m);
      g_bwk.init(model.g.layout.cfg, m);
      f_vgrad.resize(model.f_vec_dim());
      g_vgrad.resize(model.g_vec_dim());
      a.resize(model.L);
      a_next.resize(model.L);
      g00_out.resize(model.L);
      if (n_tapes < n_steps) {
        f_tapes.resize(static_cast<std::size_t>(n_steps));
        g_tapes.resize(static_cast<std::size_t>(n_steps));
        for (int k = 0; k < n_steps; ++k) {
          f_tapes[static_cast<std::size_t>(k)].init(model.f.layout.cfg, m);
          g_tapes[static_cast<std::size_t>(k)].init(model.g.layout.cfg, m);
        }
        n_tapes = n_steps;
      }
    }
  }
};

inline RolloutResult rno_rollout(const RnoModel& model, const MatRM& func_in,
                                 const StrainProgram& strain, RnoWork& work,
                                 bool keep_tapes = false) {
  const int n = strain.grid.n_steps;
  const double dt = strain.grid.dt();
  const bool kv = model.variant == RnoVariant::kv;

  RolloutResult out;
  out.sigma.resize(static_cast<std::size_t>(n));
  out.xi.resize(model.L, n);

  VecXd xi = VecXd::Zero(model.L);
  for (int k = 0; k < n; ++k) {
    out.xi.col(k) = xi;
    const double eps = strain.eps[static_cast<std::size_t>(k)];
    const double deps = strain.deps[static_cast<std::size_t>(k)];

    work.f_vec(0) = eps;
    if (kv) work.f_vec(1) = deps;
    work.f_vec.tail(model.L) = xi;
    FnmTape& ft = keep_tapes ? work.f_tapes[static_cast<std::size_t>(k)] : work.f_scratch;
    const VecXd s = fnm_forward(model.f, work.f_vec, func_in, work.dft, ft);
    out.sigma[static_cast<std::size_t>(k)] = s(0);
    if (!std::isfinite(s(0)))
      throw NumericalError("rno rollout: NaN stress at step " + std::to_string(k));

    if (k + 1 < n) {
      work.g_vec(0) = eps;
      work.g_vec.tail(model.L) = xi;
      FnmTape& gt = keep_tapes ? work.g_tapes[static_cast<std::size_t>(k)] : work.g_scratch;
      const VecXd dxi = fnm_forward(model.g, work.g_vec, func_in, work.dft, gt);
      xi += dt * dxi;
      if (!xi.allFinite())
        throw NumericalError("rno rollout: NaN state at step " + std::to_string(k + 1));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Loss and gradients (Eq. 5.1 style): per-sample squared relative L2 error
// (trapezoidal in time) plus, when enabled, the zero-state penalty
// ||G(0, 0; mat)||^2.

struct RnoGrads {
  FnmParams f, g;

  explicit RnoGrads(const RnoModel& model) : f(model.f.layout.cfg), g(model.g.layout.cfg) {}
  void zero() {
    std::fill(f.data.begin(), f.data.end(), 0.0);
    std::fill(g.data.begin(), g.data.end(), 0.0);
  }
};

struct TrainSample {
  MatRM func_in;           // channels x m on the rollout grid
  StrainProgram strain;    // on the rollout time grid
  std::vector<double> sigma_ref;
};

// Accumulates scale * d(sample loss)/d(params) into grads; returns the
// sample loss (unscaled).
inline double rno_sample_loss_grad(const RnoModel& model, const TrainSample& sample,
                                   bool penalty_on, double scale, RnoGrads& grads, RnoWork& work) {
  const int n = sample.strain.grid.n_steps;
  const double dt = sample.strain.grid.dt();
  const bool kv = model.variant == RnoVariant::kv;

  const RolloutResult roll = rno_rollout(model, sample.func_in, sample.strain, work, true);

  // Squared relative L2 with trapezoidal weights.
  std::vector<double> w(static_cast<std::size_t>(n), dt);
  w.front() = w.back() = 0.5 * dt;
  double num = 0.0, den = 0.0;
  for (int k = 0; k < n; ++k) {
    const double d = roll.sigma[static_cast<std::size_t>(k)] - sample.sigma_ref[static_cast<std::size_t>(k)];
    num += w[static_cast<std::size_t>(k)] * d * d;
    den += w[static_cast<std::size_t>(k)] * sample.sigma_ref[static_cast<std::size_t>(k)] *
           sample.sigma_ref[static_cast<std::size_t>(k)];
  }
  den = std::max(den, 1e-12);
  double loss = num / den;

  // BPTT. a = adjoint of xi_k; F contributes at every step, G couples k->k+1.
  // The adjoint carries the scale factor, so every fnm_backward call
  // accumulates already-scaled parameter gradients.
  auto f_grad = grads.f.view();
  auto g_grad = grads.g.view();
  VecXd gsigma(1);
  work.a_next.setZero();
  for (int k = n - 1; k >= 0; --k) {
    if (k + 1 < n) {
      work.g_vgrad.setZero();
      fnm_backward(model.g, work.g_tapes[static_cast<std::size_t>(k)], dt * work.a_next, work.dft,
                   work.g_bwk, g_grad, &work.g_vgrad);
      work.a = work.a_next + work.g_vgrad.tail(model.L);
    } else {
      work.a.setZero();
    }

    const double d = roll.sigma[static_cast<std::size_t>(k)] - sample.sigma_ref[static_cast<std::size_t>(k)];
    gsigma(0) = scale * 2.0 * w[static_cast<std::size_t>(k)] * d / den;
    work.f_vgrad.setZero();
    fnm_backward(model.f, work.f_tapes[static_cast<std::size_t>(k)], gsigma, work.dft, work.f_bwk,
                 f_grad, &work.f_vgrad);
    work.a += work.f_vgrad.tail(model.L);
    work.a_next = work.a;
  }

  if (penalty_on && kv) {
    work.g_vec.setZero();
    const VecXd g00 = fnm_forward(model.g, work.g_vec, sample.func_in, work.dft, work.g_scratch);
    loss += g00.squaredNorm();
    fnm_backward(model.g, work.g_scratch, (2.0 * scale) * g00, work.dft, work.g_bwk, g_grad,
                 nullptr);
  }
  return loss;
}

// Batch loss: mean over samples (matching the gradients accumulated with
// scale = 1/batch).
inline double rno_loss(const RnoModel& model, const std::vector<const TrainSample*>& batch,
                       bool penalty_on, RnoGrads& grads, RnoWork& work) {
  if (batch.empty()) throw ConfigError("rno_loss: empty batch");
  const double scale = 1.0 / static_cast<double>(batch.size());
  double total = 0.0;
  for (const TrainSample* s : batch)
    total += rno_sample_loss_grad(model, *s, penalty_on, scale, grads, work);
  return total * scale;
}

// ---------------------------------------------------------------------------
// Adam with cosine-annealed learning rate.

struct AdamState {
  std::vector<double> m, v;
  std::uint64_t step = 0;

  explicit AdamState(std::size_t n) : m(n, 0.0), v(n, 0.0) {}
};

struct TrainConfig {
  double lr0 = 1e-3;
  double lr_final = 1e-5;
  int batch = 32;
  int epochs = 500;
  bool penalty_on = true;
  double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;
  std::uint64_t seed = 0;
  int stop_epoch = -1;  // halt before `epochs` (schedule unchanged); -1 = run to the end

  double lr_at(int epoch) const {
    return lr_final + 0.5 * (lr0 - lr_final) *
                          (1.0 + std::cos(M_PI * static_cast<double>(epoch) / epochs));
  }
};

inline void adam_update(std::vector<double>& params, const std::vector<double>& grad,
                        AdamState& st, double lr, const TrainConfig& cfg) {
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(st.step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(st.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    st.m[i] = cfg.beta1 * st.m[i] + (1.0 - cfg.beta1) * grad[i];
    st.v[i] = cfg.beta2 * st.v[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
    params[i] -= lr * (st.m[i] / c1) / (std::sqrt(st.v[i] / c2) + cfg.adam_eps);
  }
}

struct EpochMetrics {
  int epoch;
  double lr, train_loss, val_rel_l2;
};

// Complete optimizer state (serialized in checkpoints so runs can resume).
struct TrainState {
  RnoModel model;
  AdamState adam_f, adam_g;
  int epoch = 0;

  explicit TrainState(RnoModel m)
      : model(std::move(m)), adam_f(model.f.data.size()), adam_g(model.g.data.size()) {}
};

struct TrainResult {
  TrainState state;        // final
  RnoModel best;           // best-validation parameters
  double best_val = std::numeric_limits<double>::infinity();
  std::vector<EpochMetrics> metrics;

  explicit TrainResult(TrainState s) : state(std::move(s)), best(state.model) {}
};

inline double rno_mean_val_error(const RnoModel& model, const std::vector<TrainSample>& samples,
                                 const std::vector<std::size_t>& idx, RnoWork& work) {
  if (idx.empty()) return 0.0;
  double acc = 0.0;
  for (std::size_t i : idx) {
    const RolloutResult r = rno_rollout(model, samples[i].func_in, samples[i].strain, work, false);
    acc += rel_l2(r.sigma, samples[i].sigma_ref);
  }
  return acc / static_cast<double>(idx.size());
}

// Trainer: seeded shuffles, Adam step per batch, 1/16 validation split fixed
// by seed, best-validation checkpointing. One NaN loss halves the learning
// rate and restarts the epoch; a second aborts.
template <typename EpochCallback>
inline TrainResult rno_train(TrainState state, const std::vector<TrainSample>& samples,
                             const TrainConfig& cfg, EpochCallback&& on_epoch) {
  if (static_cast<int>(samples.size()) < cfg.batch)
    throw ConfigError("rno_train: dataset smaller than batch size");

  // Validation split: permute indices with the seed-derived stream, hold out
  // the leading 1/16 (at least one sample).
  std::vector<std::size_t> perm(samples.size());
  std::iota(perm.begin(), perm.end(), 0);
  {
    Rng r = Rng(cfg.seed).split(0x76616c); // "val"
    for (std::size_t i = perm.size(); i > 1; --i)
      std::swap(perm[i - 1], perm[static_cast<std::size_t>(r.uniform_int(0, static_cast<std::int64_t>(i) - 1))]);
  }
  const std::size_t n_val = std::max<std::size_t>(1, samples.size() / 16);
  std::vector<std::size_t> val_idx(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_val));
  std::vector<std::size_t> train_idx(perm.begin() + static_cast<std::ptrdiff_t>(n_val), perm.end());
  if (static_cast<int>(train_idx.size()) < cfg.batch)
    throw ConfigError("rno_train: too few training samples after validation split");

  const int m = static_cast<int>(samples.front().func_in.cols());
  const int n_steps = samples.front().strain.grid.n_steps;
  RnoWork work;
  work.init(state.model, m, n_steps, true);
  RnoGrads grads(state.model);

  TrainResult result(std::move(state));

  double lr_scale = 1.0;
  bool nan_seen = false;

  const int last_epoch = cfg.stop_epoch >= 0 ? std::min(cfg.stop_epoch, cfg.epochs) : cfg.epochs;
  for (int epoch = result.state.epoch; epoch < last_epoch; ++epoch) {
    const double lr = lr_scale * cfg.lr_at(epoch);

    // Snapshot for NaN-restart.
    const RnoModel model_snapshot = result.state.model;
    const AdamState adam_f_snapshot = result.state.adam_f;
    const AdamState adam_g_snapshot = result.state.adam_g;

    // Seeded per-epoch shuffle of the training indices.
    std::vector<std::size_t> order = train_idx;
    {
      Rng r = Rng(cfg.seed).split(0x657030 + static_cast<std::uint64_t>(epoch));
      for (std::size_t i = order.size(); i > 1; --i)
        std::swap(order[i - 1], order[static_cast<std::size_t>(r.uniform_int(0, static_cast<std::int64_t>(i) - 1))]);
    }

    bool restart = false;
    double loss_acc = 0.0;
    int n_batches = 0;
    const std::size_t usable = (order.size() / static_cast<std::size_t>(cfg.batch)) *
                               static_cast<std::size_t>(cfg.batch);
    for (std::size_t start = 0; start < usable; start += static_cast<std::size_t>(cfg.batch)) {
      grads.zero();
      std::vector<const TrainSample*> batch;
      for (int b = 0; b < cfg.batch; ++b) batch.push_back(&samples[order[start + static_cast<std::size_t>(b)]]);
      double batch_loss;
      try {
        batch_loss = rno_loss(result.state.model, batch, cfg.penalty_on, grads, work);
      } catch (const NumericalError&) {
        batch_loss = std::numeric_limits<double>::quiet_NaN();
      }
      if (!std::isfinite(batch_loss)) {
        if (nan_seen) throw NumericalError("rno_train: NaN loss after learning-rate halving");
        nan_seen = true;
        lr_scale *= 0.5;
        restart = true;
        break;
      }
      loss_acc += batch_loss;
      ++n_batches;
      result.state.adam_f.step++;
      result.state.adam_g.step++;
      adam_update(result.state.model.f.data, grads.f.data, result.state.adam_f, lr, cfg);
      adam_update(result.state.model.g.data, grads.g.data, result.state.adam_g, lr, cfg);
      fnm_enforce_real_dc(result.state.model.f);
      fnm_enforce_real_dc(result.state.model.g);
    }

    if (restart) {
      result.state.model = model_snapshot;
      result.state.adam_f = adam_f_snapshot;
      result.state.adam_g = adam_g_snapshot;
      --epoch;  // redo this epoch at the halved rate
      continue;
    }

    const double val = rno_mean_val_error(result.state.model, samples, val_idx, work);
    if (val < result.best_val) {
      result.best_val = val;
      result.best = result.state.model;
    }
    EpochMetrics em{epoch, lr, n_batches > 0 ? loss_acc / n_batches : 0.0, val};
    result.metrics.push_back(em);
    result.state.epoch = epoch + 1;
    on_epoch(em);
  }
  return result;
}

inline TrainResult rno_train(TrainState state, const std::vector<TrainSample>& samples,
                             const TrainConfig& cfg) {
  return rno_train(std::move(state), samples, cfg, [](const EpochMetrics&) {});
}

}  // namespace memlaw
