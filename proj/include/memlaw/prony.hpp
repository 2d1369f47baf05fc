#pragma once

// Exact homogenized constitutive law for layered Kelvin–Voigt materials:
// Markovian parameters (E', nu'), the Prony kernel K(t) = sum beta_l
// exp(-alpha_l t), and three interchangeable evaluators.
//
// Sign convention: betas are stored positive and the kernel enters the
// stress with a minus sign in BOTH evaluators,
//   sigma = E' eps + nu' deps - sum_l xi_l,   xi_l' = -alpha_l xi_l + beta_l eps.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <vector>

#include "memlaw/errors.hpp"
#include "memlaw/fields.hpp"
#include "memlaw/materials.hpp"

namespace memlaw {

struct PronyModel {
  double e_prime = 0.0;
  double nu_prime = 0.0;
  std::vector<double> alphas;  // sorted ascending
  std::vector<double> betas;   // aligned, nonnegative

  double kernel(double t) const {
    double k = 0.0;
    for (std::size_t l = 0; l < alphas.size(); ++l) k += betas[l] * std::exp(-alphas[l] * t);
    return k;
  }

  double kernel_mass() const {  // int_0^inf K = sum beta/alpha
    double m = 0.0;
    for (std::size_t l = 0; l < alphas.size(); ++l) m += betas[l] / alphas[l];
    return m;
  }
};

// ---------------------------------------------------------------------------
// Markovian parameters: E' = int(E/nu^2) / (int 1/nu)^2, nu' = 1 / int(1/nu).

struct MarkovianParams {
  double e_prime, nu_prime;
};

inline MarkovianParams markovian_params(const PiecewiseMaterialKV& mat) {
  mat.validate();
  double inv_nu = 0.0, e_over_nu2 = 0.0;
  for (int i = 0; i < mat.n_pieces(); ++i) {
    const double d = mat.piece_length(i);
    const double e = mat.E_vals[static_cast<std::size_t>(i)];
    const double v = mat.nu_vals[static_cast<std::size_t>(i)];
    inv_nu += d / v;
    e_over_nu2 += d * e / (v * v);
  }
  return {e_over_nu2 / (inv_nu * inv_nu), 1.0 / inv_nu};
}

inline MarkovianParams markovian_params(const ContinuousMaterialKV& mat) {
  const std::size_t n = mat.E.values.size();
  std::vector<double> inv_nu(n), e_over_nu2(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double e = mat.E.values[i];
    const double v = mat.nu.values[i];
    if (!(e > 0.0) || !(v > 0.0)) throw ConfigError("markovian_params: material must be positive");
    inv_nu[i] = 1.0 / v;
    e_over_nu2[i] = e / (v * v);
  }
  const double iv = trapz_unit(inv_nu);
  return {trapz_unit(e_over_nu2) / (iv * iv), 1.0 / iv};
}

// ---------------------------------------------------------------------------
// Kernel fit (closed form): after merging pieces of equal ratio r_i = E_i/nu_i,
// the exponents alpha_l are the roots of
//   Qt(s) = sum_i (d_i/nu_i) prod_{j != i} (r_j - s),
// one in each open interval (r_l, r_{l+1}); weights from Lemma 3.4's residue
// formula beta_l^{-1} = sum_i (d_i/nu_i) (r_i - alpha_l)^{-2}.

namespace detail {

inline double qtilde(std::span<const double> r, std::span<const double> w, double s) {
  double acc = 0.0;
  for (std::size_t i = 0; i < r.size(); ++i) {
    double prod = w[i];
    for (std::size_t j = 0; j < r.size(); ++j)
      if (j != i) prod *= (r[j] - s);
    acc += prod;
  }
  return acc;
}

// Pole form: Qt(s) = prod_j (r_j - s) * g(s) with g(s) = sum_i w_i/(r_i - s).
// On each open bracket (r_l, r_{l+1}) the product is sign-definite and g is
// strictly increasing from -inf to +inf, so bisecting g finds the same root
// without the overflow risk of the 250-factor product.
inline double pole_sum(std::span<const double> r, std::span<const double> w, double s) {
  double acc = 0.0;
  for (std::size_t i = 0; i < r.size(); ++i) acc += w[i] / (r[i] - s);
  return acc;
}

}  // namespace detail

inline PronyModel fit_prony(const PiecewiseMaterialKV& mat) {
  mat.validate();
  const auto mk = markovian_params(mat);

  // Sort pieces by ratio and merge equal ratios (relative tolerance 1e-12),
  // accumulating the d/nu weights.
  struct Entry { double r, w; };
  std::vector<Entry> entries;
  for (int i = 0; i < mat.n_pieces(); ++i) {
    const double e = mat.E_vals[static_cast<std::size_t>(i)];
    const double v = mat.nu_vals[static_cast<std::size_t>(i)];
    entries.push_back({e / v, mat.piece_length(i) / v});
  }
  std::sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) { return a.r < b.r; });
  std::vector<double> r, w;
  for (const Entry& en : entries) {
    if (!r.empty() && std::abs(en.r - r.back()) <= 1e-12 * std::max(std::abs(en.r), std::abs(r.back()))) {
      w.back() += en.w;
    } else {
      r.push_back(en.r);
      w.push_back(en.w);
    }
  }

  PronyModel model;
  model.e_prime = mk.e_prime;
  model.nu_prime = mk.nu_prime;
  const std::size_t n = r.size();
  if (n <= 1) return model;  // memoryless (all ratios equal)

  for (std::size_t l = 0; l + 1 < n; ++l) {
    // g(s) runs from -inf at r_l+ to +inf at r_{l+1}-, strictly increasing:
    // bisection with implicit endpoint signs.
    double lo = r[l], hi = r[l + 1];
    const double tol = 1e-14;
    while (hi - lo > tol * std::max(1.0, std::abs(lo))) {
      const double mid = 0.5 * (lo + hi);
      if (mid <= lo || mid >= hi) break;  // bracket at roundoff limit
      const double fm = detail::pole_sum(r, w, mid);
      if (fm == 0.0) { lo = hi = mid; break; }
      if (fm < 0.0) lo = mid; else hi = mid;
    }
    const double alpha = 0.5 * (lo + hi);
    double inv_beta = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double d = r[i] - alpha;
      inv_beta += w[i] / (d * d);
    }
    model.alphas.push_back(alpha);
    model.betas.push_back(1.0 / inv_beta);
  }
  return model;
}

// ---------------------------------------------------------------------------
// Evaluators. Both use the closed-form per-step update assuming eps is linear
// on each step, so they agree to roundoff with each other.

struct StateSpaceResult {
  std::vector<double> sigma;
  std::vector<double> xi;  // row-major (time, L)
};

// Exponential update coefficients for one step: with eps linear on [0, dt],
//   xi(dt) = exp(-a dt) xi(0) + beta (g0 * eps_0 + g1 * eps_1).
inline void exp_update_coeffs(double alpha, double dt, double& decay, double& g0, double& g1) {
  decay = std::exp(-alpha * dt);
  const double ad = alpha * dt;
  if (ad > 1e-4) {
    const double em = 1.0 - decay;
    g1 = (dt - em / alpha) / ad;
    g0 = em / alpha - g1;
  } else {
    // Series expansion for small alpha*dt (avoids cancellation).
    g1 = dt * (0.5 - ad / 6.0 + ad * ad / 24.0);
    g0 = dt * (0.5 - ad / 3.0 + ad * ad / 8.0) ;
  }
}

inline StateSpaceResult evaluate_state_space(const PronyModel& model, const StrainProgram& strain) {
  const int n = strain.grid.n_steps;
  const double dt = strain.grid.dt();
  const std::size_t L = model.alphas.size();

  std::vector<double> decay(L), g0(L), g1(L);
  for (std::size_t l = 0; l < L; ++l)
    exp_update_coeffs(model.alphas[l], dt, decay[l], g0[l], g1[l]);

  StateSpaceResult out;
  out.sigma.resize(static_cast<std::size_t>(n));
  out.xi.assign(static_cast<std::size_t>(n) * L, 0.0);
  std::vector<double> xi(L, 0.0);

  for (int k = 0; k < n; ++k) {
    if (k > 0) {
      const double e0 = strain.eps[static_cast<std::size_t>(k - 1)];
      const double e1 = strain.eps[static_cast<std::size_t>(k)];
      for (std::size_t l = 0; l < L; ++l)
        xi[l] = decay[l] * xi[l] + model.betas[l] * (g0[l] * e0 + g1[l] * e1);
    }
    double mem = 0.0;
    for (std::size_t l = 0; l < L; ++l) {
      out.xi[static_cast<std::size_t>(k) * L + l] = xi[l];
      mem += xi[l];
    }
    out.sigma[static_cast<std::size_t>(k)] = model.e_prime * strain.eps[static_cast<std::size_t>(k)] +
                                             model.nu_prime * strain.deps[static_cast<std::size_t>(k)] -
                                             mem;
  }
  return out;
}

inline std::vector<double> evaluate_volterra(const PronyModel& model, const StrainProgram& strain) {
  // Per-exponential recursive convolution: I_l(t_k) = int_0^{t_k}
  // beta_l exp(-alpha_l (t_k - s)) eps(s) ds with eps piecewise linear,
  //   I_l(t_k) = decay * I_l(t_{k-1}) + beta_l (g0 eps_{k-1} + g1 eps_k),
  // which is exactly the state-space update (the dual implementation differs
  // in bookkeeping, not in discretization).
  const int n = strain.grid.n_steps;
  const double dt = strain.grid.dt();
  const std::size_t L = model.alphas.size();

  std::vector<double> out(static_cast<std::size_t>(n));
  std::vector<double> conv(L, 0.0);
  std::vector<double> decay(L), g0(L), g1(L);
  for (std::size_t l = 0; l < L; ++l)
    exp_update_coeffs(model.alphas[l], dt, decay[l], g0[l], g1[l]);

  for (int k = 0; k < n; ++k) {
    if (k > 0) {
      const double e0 = strain.eps[static_cast<std::size_t>(k - 1)];
      const double e1 = strain.eps[static_cast<std::size_t>(k)];
      for (std::size_t l = 0; l < L; ++l)
        conv[l] = decay[l] * conv[l] + model.betas[l] * (g0[l] * e0 + g1[l] * e1);
    }
    const double mem = std::accumulate(conv.begin(), conv.end(), 0.0);
    out[static_cast<std::size_t>(k)] = model.e_prime * strain.eps[static_cast<std::size_t>(k)] +
                                       model.nu_prime * strain.deps[static_cast<std::size_t>(k)] - mem;
  }
  return out;
}

template <typename Material>
inline std::vector<double> no_memory(const Material& mat, const StrainProgram& strain) {
  const auto mk = markovian_params(mat);
  std::vector<double> out(strain.eps.size());
  for (std::size_t k = 0; k < out.size(); ++k)
    out[k] = mk.e_prime * strain.eps[k] + mk.nu_prime * strain.deps[k];
  return out;
}

// Psi^pc: piecewise-constant surrogate law for a continuous material.
inline std::vector<double> pc_constitutive(const ContinuousMaterialKV& mat, int n_pieces,
                                           const StrainProgram& strain) {
  const PronyModel model = fit_prony(pc_discretize(mat, n_pieces));
  return evaluate_state_space(model, strain).sigma;
}

}  // namespace memlaw
