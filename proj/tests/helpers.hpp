#pragma once

// Shared test utilities: hand-built FNM parameter sets and small fixtures.

#include <cmath>
#include <vector>

#include "memlaw/fnm.hpp"
#include "memlaw/materials.hpp"
#include "memlaw/rno.hpp"

namespace memlaw::testutil {

// F parameters that reproduce the affine law e' * eps + nu' * deps exactly.
// The two vector channels ride through every GELU layer shifted by a large
// positive constant C (erf saturates to 1.0 in double precision, so GELU is
// the exact identity there); the function-to-vector stage reads them back
// through the DC mode and the projection removes the shift.
inline FnmParams make_exact_linear_f(const FnmConfig& cfg, double e_prime, double nu_prime,
                                     double shift = 1000.0) {
  if (cfg.width < 2 || cfg.d_in_v < 2 || cfg.d_proj_fv < 2 || cfg.d_out_v != 1)
    throw ConfigError("make_exact_linear_f: config too small");
  FnmParams params(cfg);
  auto v = params.view();

  v.lift_W()(0, cfg.d_in_f + 0) = 1.0;  // eps channel
  v.lift_W()(1, cfg.d_in_f + 1) = 1.0;  // deps channel
  v.lift_b()(0) = shift;
  v.lift_b()(1) = shift;
  for (int t = 0; t < cfg.n_layers; ++t) v.W(t).setIdentity();
  v.Pf_re(0)(0, 0) = 1.0;
  v.Pf_re(0)(1, 1) = 1.0;
  v.proj_W()(0, 0) = e_prime;
  v.proj_W()(0, 1) = nu_prime;
  v.proj_b()(0) = -shift * (e_prime + nu_prime);
  return params;
}

// KV model with the exact affine F above and identically-zero G (so the
// internal state stays at zero and the rollout is the no-memory law).
inline RnoModel make_linear_kv_model(double e_prime, double nu_prime, int L = 1) {
  // Compact architecture: the construction only needs two live channels, and
  // small tensors keep the macro solver tests fast.
  RnoModel model = make_rno(RnoVariant::kv, L, 0, /*width=*/8, /*n_layers=*/2,
                            /*d_proj_fv=*/8, /*n_modes=*/2);
  model.f = make_exact_linear_f(model.f.layout.cfg, e_prime, nu_prime);
  std::fill(model.g.data.begin(), model.g.data.end(), 0.0);
  return model;
}

inline StrainProgram ramp_strain(TimeGrid grid) {
  StrainProgram sp;
  sp.grid = grid;
  sp.eps.resize(static_cast<std::size_t>(grid.n_steps));
  sp.deps.assign(static_cast<std::size_t>(grid.n_steps), 1.0);
  for (int k = 0; k < grid.n_steps; ++k) sp.eps[static_cast<std::size_t>(k)] = grid.node(k);
  return sp;
}

}  // namespace memlaw::testutil
