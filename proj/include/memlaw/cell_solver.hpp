#pragma once

// Finite-element / time-stepping ground-truth solvers for the unit-cell
// problems: Kelvin–Voigt (Dirichlet and periodic variants, linear Lagrange
// elements + RK4) and the elasto-viscoplastic power-law model.

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "memlaw/errors.hpp"
#include "memlaw/fields.hpp"
#include "memlaw/materials.hpp"

namespace memlaw {

struct CellSolutionKV {
  SpaceGrid space;
  TimeGrid time;
  std::vector<double> u;          // displacement, row-major (time, space)
  std::vector<double> sigma_bar;  // averaged stress per time node
  std::vector<double> strain_bar; // imposed boundary strain (copied)

  double& u_at(int t, int y) { return u[static_cast<std::size_t>(t) * space.n_points + y]; }
  double u_at(int t, int y) const { return u[static_cast<std::size_t>(t) * space.n_points + y]; }
};

struct CellSolutionEVP {
  SpaceGrid space;
  TimeGrid time;
  std::vector<double> u;           // (time, space)
  std::vector<double> eps_p;       // plastic strain per element, (time, n_elems)
  std::vector<double> sigma_bar;
  std::vector<double> eps_p_bar;
  std::vector<double> strain_bar;
};

// ---------------------------------------------------------------------------
// Tridiagonal solver (Thomas algorithm). The KV viscosity matrix is SPD and
// diagonally dominant, so no pivoting is needed; the factorization is reused
// across all RK4 stages.

struct Tridiag {
  std::vector<double> lower, diag, upper;  // factorized in place by prepare()

  void prepare() {
    const std::size_t n = diag.size();
    for (std::size_t i = 1; i < n; ++i) {
      lower[i] /= diag[i - 1];
      diag[i] -= lower[i] * upper[i - 1];
    }
  }

  void solve(std::vector<double>& x) const {
    const std::size_t n = diag.size();
    for (std::size_t i = 1; i < n; ++i) x[i] -= lower[i] * x[i - 1];
    x[n - 1] /= diag[n - 1];
    for (std::size_t i = n - 1; i-- > 0;) x[i] = (x[i] - upper[i] * x[i + 1]) / diag[i];
  }
};

// Per-element material values for the KV solvers.
struct ElementMaterialKV {
  std::vector<double> E, nu;
};

inline ElementMaterialKV kv_element_material(const PiecewiseMaterialKV& mat, int n_elems) {
  mat.validate();
  return {element_values(mat.breaks, mat.E_vals, n_elems),
          element_values(mat.breaks, mat.nu_vals, n_elems)};
}

inline ElementMaterialKV kv_element_material(const ContinuousMaterialKV& mat, int n_elems) {
  return {element_values(mat.E, n_elems), element_values(mat.nu, n_elems)};
}

namespace detail {

// Stiffness-type matrix q_a(u, phi) on the interior nodes 1..n_nodes-2 of a
// Dirichlet mesh, or on nodes 1..m-1 of a periodic mesh with node 0 pinned
// (both cases are tridiagonal with the same entry pattern).
inline Tridiag assemble_stiffness(std::span<const double> a, double h, std::size_t n_unknowns) {
  Tridiag T;
  T.lower.assign(n_unknowns, 0.0);
  T.diag.assign(n_unknowns, 0.0);
  T.upper.assign(n_unknowns, 0.0);
  for (std::size_t i = 0; i < n_unknowns; ++i) {
    T.diag[i] = (a[i] + a[i + 1]) / h;
    if (i + 1 < n_unknowns) {
      T.upper[i] = -a[i + 1] / h;
      T.lower[i + 1] = -a[i + 1] / h;
    }
  }
  return T;
}

inline void apply_stiffness(std::span<const double> a, double h, std::span<const double> p,
                            std::vector<double>& out) {
  const std::size_t n = p.size();
  for (std::size_t i = 0; i < n; ++i) {
    double v = (a[i] + a[i + 1]) / h * p[i];
    if (i > 0) v -= a[i] / h * p[i - 1];
    if (i + 1 < n) v -= a[i + 1] / h * p[i + 1];
    out[i] = v;
  }
}

// Shared KV time-stepper. The detrended unknown p vanishes at node 0 (and at
// the last node for the Dirichlet variant); elements carry constant material
// values. Works for both variants because the pinned periodic system has the
// same tridiagonal structure with element count n_unknowns + 1.
struct KvCore {
  std::span<const double> E, nu;
  double h = 0.0;
  std::size_t n_unknowns = 0;
  Tridiag nu_factor;
  std::vector<double> rhs, k1, k2, k3, k4, tmp;

  void init(std::span<const double> E_in, std::span<const double> nu_in, double h_in,
            std::size_t n_unknowns_in) {
    E = E_in;
    nu = nu_in;
    h = h_in;
    n_unknowns = n_unknowns_in;
    for (double v : nu)
      if (!(v > 0.0)) throw NumericalError("kv solve: viscosity not bounded below");
    nu_factor = assemble_stiffness(nu, h, n_unknowns);
    nu_factor.prepare();
    rhs.resize(n_unknowns);
    k1.resize(n_unknowns);
    k2.resize(n_unknowns);
    k3.resize(n_unknowns);
    k4.resize(n_unknowns);
    tmp.resize(n_unknowns);
  }

  // dp/dt = K_nu^{-1} (-K_E p - deps <nu, dphi> - eps <E, dphi>).
  void deriv(std::span<const double> p, double eps, double deps, std::vector<double>& out) {
    apply_stiffness(E, h, p, out);
    for (std::size_t i = 0; i < n_unknowns; ++i) {
      const double load_nu = nu[i] - nu[i + 1];
      const double load_E = E[i] - E[i + 1];
      out[i] = -out[i] - deps * load_nu - eps * load_E;
    }
    nu_factor.solve(out);
  }

  void rk4_step(std::vector<double>& p, const StrainProgram& strain, double t, double dt) {
    double e0, de0, eh, deh, e1, de1;
    strain.eval(t, e0, de0);
    strain.eval(t + 0.5 * dt, eh, deh);
    strain.eval(t + dt, e1, de1);

    deriv(p, e0, de0, k1);
    for (std::size_t i = 0; i < n_unknowns; ++i) tmp[i] = p[i] + 0.5 * dt * k1[i];
    deriv(tmp, eh, deh, k2);
    for (std::size_t i = 0; i < n_unknowns; ++i) tmp[i] = p[i] + 0.5 * dt * k2[i];
    deriv(tmp, eh, deh, k3);
    for (std::size_t i = 0; i < n_unknowns; ++i) tmp[i] = p[i] + dt * k3[i];
    deriv(tmp, e1, de1, k4);
    for (std::size_t i = 0; i < n_unknowns; ++i)
      p[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
  }
};

}  // namespace detail

// ---------------------------------------------------------------------------
// Dirichlet Kelvin–Voigt cell solve. The detrended problem u = p + eps(t) y
// is integrated by RK4 with per-stage tridiagonal solves; sigma_bar is the
// element average of E du/dy + nu d2u/dydt.

inline CellSolutionKV solve_kv_dirichlet_elems(const ElementMaterialKV& mat,
                                               const StrainProgram& strain, SpaceGrid space,
                                               TimeGrid time) {
  const int n_nodes = space.n_points;
  const int n_elems = n_nodes - 1;
  const double h = space.spacing();
  const std::size_t n_unknowns = static_cast<std::size_t>(n_nodes - 2);

  detail::KvCore core;
  core.init(mat.E, mat.nu, h, n_unknowns);

  CellSolutionKV sol;
  sol.space = space;
  sol.time = time;
  sol.u.assign(static_cast<std::size_t>(time.n_steps) * n_nodes, 0.0);
  sol.sigma_bar.assign(static_cast<std::size_t>(time.n_steps), 0.0);
  sol.strain_bar.assign(static_cast<std::size_t>(time.n_steps), 0.0);

  std::vector<double> p(n_unknowns, 0.0);
  std::vector<double> pdot(n_unknowns, 0.0);

  const auto record = [&](int step) {
    double eps, deps;
    strain.eval(time.node(step), eps, deps);
    sol.strain_bar[static_cast<std::size_t>(step)] = eps;
    core.deriv(p, eps, deps, pdot);

    for (int j = 1; j < n_nodes - 1; ++j)
      sol.u_at(step, j) = p[static_cast<std::size_t>(j - 1)] + eps * space.node(j);
    sol.u_at(step, n_nodes - 1) = eps;

    // sigma is constant per element; its exact mean is the equal-weight
    // element average.
    double acc = 0.0;
    for (int e = 0; e < n_elems; ++e) {
      const double pl = (e == 0) ? 0.0 : p[static_cast<std::size_t>(e - 1)];
      const double pr = (e == n_elems - 1) ? 0.0 : p[static_cast<std::size_t>(e)];
      const double pdl = (e == 0) ? 0.0 : pdot[static_cast<std::size_t>(e - 1)];
      const double pdr = (e == n_elems - 1) ? 0.0 : pdot[static_cast<std::size_t>(e)];
      const double du = (pr - pl) / h + eps;
      const double dudot = (pdr - pdl) / h + deps;
      acc += mat.E[static_cast<std::size_t>(e)] * du + mat.nu[static_cast<std::size_t>(e)] * dudot;
    }
    sol.sigma_bar[static_cast<std::size_t>(step)] = acc / n_elems;
    if (!std::isfinite(sol.sigma_bar[static_cast<std::size_t>(step)]))
      throw NumericalError("kv solve: NaN at time step " + std::to_string(step));
  };

  record(0);
  for (int step = 0; step + 1 < time.n_steps; ++step) {
    core.rk4_step(p, strain, time.node(step), time.dt());
    record(step + 1);
  }
  return sol;
}

inline CellSolutionKV solve_kv_dirichlet(const PiecewiseMaterialKV& mat,
                                         const StrainProgram& strain, SpaceGrid space,
                                         TimeGrid time) {
  return solve_kv_dirichlet_elems(kv_element_material(mat, space.n_points - 1), strain, space,
                                  time);
}

inline CellSolutionKV solve_kv_dirichlet(const ContinuousMaterialKV& mat,
                                         const StrainProgram& strain, SpaceGrid space,
                                         TimeGrid time) {
  return solve_kv_dirichlet_elems(kv_element_material(mat, space.n_points - 1), strain, space,
                                  time);
}

// ---------------------------------------------------------------------------
// Periodic Kelvin–Voigt cell solve. Ansatz u = eps(t) y + w with w periodic;
// the gauge w(0) = 0 pins the constant mode (sigma_bar is gauge-invariant),
// leaving the same tridiagonal structure on nodes 1..m-1. Element m-1 wraps
// from node m-1 to node 0.

inline CellSolutionKV solve_kv_periodic_elems(const ElementMaterialKV& mat,
                                              const StrainProgram& strain, SpaceGrid space,
                                              TimeGrid time) {
  const int n_nodes = space.n_points;
  const int m = n_nodes - 1;  // periodic nodes / elements
  const double h = space.spacing();
  const std::size_t n_unknowns = static_cast<std::size_t>(m - 1);

  detail::KvCore core;
  core.init(mat.E, mat.nu, h, n_unknowns);

  CellSolutionKV sol;
  sol.space = space;
  sol.time = time;
  sol.u.assign(static_cast<std::size_t>(time.n_steps) * n_nodes, 0.0);
  sol.sigma_bar.assign(static_cast<std::size_t>(time.n_steps), 0.0);
  sol.strain_bar.assign(static_cast<std::size_t>(time.n_steps), 0.0);

  std::vector<double> w(n_unknowns, 0.0);
  std::vector<double> wdot(n_unknowns, 0.0);

  const auto record = [&](int step) {
    double eps, deps;
    strain.eval(time.node(step), eps, deps);
    sol.strain_bar[static_cast<std::size_t>(step)] = eps;
    core.deriv(w, eps, deps, wdot);

    for (int j = 1; j < m; ++j)
      sol.u_at(step, j) = w[static_cast<std::size_t>(j - 1)] + eps * space.node(j);
    sol.u_at(step, n_nodes - 1) = eps;  // w wraps to w(0) = 0

    double acc = 0.0;
    for (int e = 0; e < m; ++e) {
      const double wl = (e == 0) ? 0.0 : w[static_cast<std::size_t>(e - 1)];
      const double wr = (e == m - 1) ? 0.0 : w[static_cast<std::size_t>(e)];
      const double wdl = (e == 0) ? 0.0 : wdot[static_cast<std::size_t>(e - 1)];
      const double wdr = (e == m - 1) ? 0.0 : wdot[static_cast<std::size_t>(e)];
      const double du = (wr - wl) / h + eps;
      const double dudot = (wdr - wdl) / h + deps;
      acc += mat.E[static_cast<std::size_t>(e)] * du + mat.nu[static_cast<std::size_t>(e)] * dudot;
    }
    sol.sigma_bar[static_cast<std::size_t>(step)] = acc / m;
    if (!std::isfinite(sol.sigma_bar[static_cast<std::size_t>(step)]))
      throw NumericalError("kv periodic solve: NaN at time step " + std::to_string(step));
  };

  record(0);
  for (int step = 0; step + 1 < time.n_steps; ++step) {
    core.rk4_step(w, strain, time.node(step), time.dt());
    record(step + 1);
  }
  return sol;
}

inline CellSolutionKV solve_kv_periodic(const PiecewiseMaterialKV& mat,
                                        const StrainProgram& strain, SpaceGrid space,
                                        TimeGrid time) {
  // Periodic mesh has m = n_points - 1 elements of width 1/m.
  const int m = space.n_points - 1;
  ElementMaterialKV em{element_values(mat.breaks, mat.E_vals, m),
                       element_values(mat.breaks, mat.nu_vals, m)};
  return solve_kv_periodic_elems(em, strain, space, time);
}

inline CellSolutionKV solve_kv_periodic(const ContinuousMaterialKV& mat,
                                        const StrainProgram& strain, SpaceGrid space,
                                        TimeGrid time) {
  const int m = space.n_points - 1;
  ElementMaterialKV em{element_values(mat.E, m), element_values(mat.nu, m)};
  return solve_kv_periodic_elems(em, strain, space, time);
}

// Spatial stress profile at one time node (for the uniformity invariant).
inline std::vector<double> kv_stress_profile(const ElementMaterialKV& mat,
                                             const CellSolutionKV& sol, int step) {
  const int n_elems = static_cast<int>(mat.E.size());
  const double h = 1.0 / n_elems;
  const double dt = sol.time.dt();
  std::vector<double> sigma(static_cast<std::size_t>(n_elems));
  // du/dt by centered differences in time (one-sided at the ends).
  const int t0 = std::max(0, step - 1);
  const int t1 = std::min(sol.time.n_steps - 1, step + 1);
  const double denom = (t1 - t0) * dt;
  for (int e = 0; e < n_elems; ++e) {
    const double du = (sol.u_at(step, e + 1) - sol.u_at(step, e)) / h;
    const double dudot = ((sol.u_at(t1, e + 1) - sol.u_at(t1, e)) -
                          (sol.u_at(t0, e + 1) - sol.u_at(t0, e))) / (h * denom);
    sigma[static_cast<std::size_t>(e)] =
        mat.E[static_cast<std::size_t>(e)] * du + mat.nu[static_cast<std::size_t>(e)] * dudot;
  }
  return sigma;
}

// ---------------------------------------------------------------------------
// Elasto-viscoplastic cell solve. In 1D, balance of force makes sigma
// spatially uniform, so given eps_p the stress is
//   sigma(t) = (eps(t) - int eps_p) / int(1/E),
// and the flow rule advances eps_p per element by RK4 with sigma recomputed
// at every stage. Steps that overflow the power law are halved (up to 8x).

struct ElementMaterialEVP {
  std::vector<double> E, eps_p0, sigma_Y, n_exp;
};

inline ElementMaterialEVP evp_element_material(const MaterialEVP& mat, int n_elems) {
  ElementMaterialEVP em;
  std::array<std::vector<double>*, 4> dst{&em.E, &em.eps_p0, &em.sigma_Y, &em.n_exp};
  for (int c = 0; c < MaterialEVP::kComponents; ++c) {
    if (mat.piecewise)
      *dst[static_cast<std::size_t>(c)] =
          element_values(mat.breaks, mat.piece_vals[static_cast<std::size_t>(c)], n_elems);
    else
      *dst[static_cast<std::size_t>(c)] =
          element_values(mat.fields[static_cast<std::size_t>(c)], n_elems);
  }
  return em;
}

inline CellSolutionEVP solve_evp_elems(const ElementMaterialEVP& mat, const StrainProgram& strain,
                                       SpaceGrid space, TimeGrid time) {
  const int n_nodes = space.n_points;
  const int n_elems = n_nodes - 1;
  const double h = space.spacing();

  double inv_E_int = 0.0;  // int 1/E dy
  for (int e = 0; e < n_elems; ++e) {
    if (!(mat.E[static_cast<std::size_t>(e)] > 0.0))
      throw NumericalError("evp solve: stiffness not positive");
    inv_E_int += h / mat.E[static_cast<std::size_t>(e)];
  }

  CellSolutionEVP sol;
  sol.space = space;
  sol.time = time;
  sol.u.assign(static_cast<std::size_t>(time.n_steps) * n_nodes, 0.0);
  sol.eps_p.assign(static_cast<std::size_t>(time.n_steps) * n_elems, 0.0);
  sol.sigma_bar.assign(static_cast<std::size_t>(time.n_steps), 0.0);
  sol.eps_p_bar.assign(static_cast<std::size_t>(time.n_steps), 0.0);
  sol.strain_bar.assign(static_cast<std::size_t>(time.n_steps), 0.0);

  std::vector<double> ep(static_cast<std::size_t>(n_elems), 0.0);
  std::vector<double> k1(ep.size()), k2(ep.size()), k3(ep.size()), k4(ep.size()), tmp(ep.size());

  const auto sigma_of = [&](std::span<const double> ep_state, double eps) {
    double ep_int = 0.0;
    for (double v : ep_state) ep_int += v * h;
    return (eps - ep_int) / inv_E_int;
  };

  // Flow rule; returns false on overflow so the caller can halve the step.
  const auto flow = [&](std::span<const double> ep_state, double t, std::vector<double>& out) {
    double eps, deps;
    strain.eval(t, eps, deps);
    const double sigma = sigma_of(ep_state, eps);
    const double sgn = (sigma > 0.0) ? 1.0 : (sigma < 0.0 ? -1.0 : 0.0);
    for (std::size_t e = 0; e < ep_state.size(); ++e) {
      const double ratio = std::abs(sigma) / mat.sigma_Y[e];
      const double rate = mat.eps_p0[e] * sgn * std::pow(ratio, mat.n_exp[e]);
      if (!std::isfinite(rate) || std::abs(rate) > 1e12) return false;
      out[e] = rate;
    }
    return true;
  };

  const auto try_rk4 = [&](std::vector<double>& state, double t, double dt) {
    if (!flow(state, t, k1)) return false;
    for (std::size_t e = 0; e < state.size(); ++e) tmp[e] = state[e] + 0.5 * dt * k1[e];
    if (!flow(tmp, t + 0.5 * dt, k2)) return false;
    for (std::size_t e = 0; e < state.size(); ++e) tmp[e] = state[e] + 0.5 * dt * k2[e];
    if (!flow(tmp, t + 0.5 * dt, k3)) return false;
    for (std::size_t e = 0; e < state.size(); ++e) tmp[e] = state[e] + dt * k3[e];
    if (!flow(tmp, t + dt, k4)) return false;
    for (std::size_t e = 0; e < state.size(); ++e) {
      state[e] += dt / 6.0 * (k1[e] + 2.0 * k2[e] + 2.0 * k3[e] + k4[e]);
      if (!std::isfinite(state[e])) return false;
    }
    return true;
  };

  // Advance [t, t+dt] with recursive halving (depth-limited).
  const auto advance = [&](auto&& self, std::vector<double>& state, double t, double dt,
                           int depth) -> void {
    std::vector<double> save = state;
    if (try_rk4(state, t, dt)) return;
    if (depth >= 8)
      throw NumericalError("evp solve: power-law overflow persists after 8 step halvings");
    state = save;
    self(self, state, t, 0.5 * dt, depth + 1);
    self(self, state, t + 0.5 * dt, 0.5 * dt, depth + 1);
  };

  const auto record = [&](int step) {
    double eps, deps;
    strain.eval(time.node(step), eps, deps);
    sol.strain_bar[static_cast<std::size_t>(step)] = eps;
    const double sigma = sigma_of(ep, eps);
    sol.sigma_bar[static_cast<std::size_t>(step)] = sigma;
    double ep_int = 0.0;
    for (double v : ep) ep_int += v * h;
    sol.eps_p_bar[static_cast<std::size_t>(step)] = ep_int;
    double u = 0.0;
    for (int e = 0; e < n_elems; ++e) {
      sol.eps_p[static_cast<std::size_t>(step) * n_elems + e] = ep[static_cast<std::size_t>(e)];
      u += (sigma / mat.E[static_cast<std::size_t>(e)] + ep[static_cast<std::size_t>(e)]) * h;
      sol.u[static_cast<std::size_t>(step) * n_nodes + e + 1] = u;
    }
    if (!std::isfinite(sigma))
      throw NumericalError("evp solve: NaN at time step " + std::to_string(step));
  };

  record(0);
  for (int step = 0; step + 1 < time.n_steps; ++step) {
    advance(advance, ep, time.node(step), time.dt(), 0);
    record(step + 1);
  }
  return sol;
}

inline CellSolutionEVP solve_evp(const MaterialEVP& mat, const StrainProgram& strain,
                                 SpaceGrid space, TimeGrid time) {
  return solve_evp_elems(evp_element_material(mat, space.n_points - 1), strain, space, time);
}

}  // namespace memlaw
