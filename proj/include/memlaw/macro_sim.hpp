#pragma once

// Quasistatic macroscale simulation on [0,1] x [0,1] with interchangeable
// constitutive backends. Balance of force gives sigma(x,t) = c(t) - F(x,t)
// with F(x,t) = int_0^x f; the free constant c(t) is fixed by the zero
// end-to-end displacement constraint int_0^1 eps dx = 0.
//
// All history-dependent backends use the trapezoid-consistent strain rate
//   deps_n = 2 (eps_n - eps_{n-1}) / dt - deps_{n-1},
// so they are second order in time and comparable with the Crank-Nicolson
// multiscale FEM solver.

#include <cmath>
#include <cstddef>
#include <variant>
#include <vector>

#include "memlaw/cell_solver.hpp"
#include "memlaw/errors.hpp"
#include "memlaw/fields.hpp"
#include "memlaw/materials.hpp"
#include "memlaw/metrics.hpp"
#include "memlaw/prony.hpp"
#include "memlaw/rno.hpp"

namespace memlaw {

struct MacroProblem {
  double amplitude = 100.0;
  double wavenumber = 8.0 * M_PI;
  SpaceGrid space{201};
  TimeGrid time{501};

  double forcing(double x, double t) const { return amplitude * std::sin(wavenumber * (x + t)); }

  // F(x,t) = int_0^x f(s,t) ds, closed form for the sinusoidal family.
  double forcing_integral(double x, double t) const {
    return amplitude / wavenumber * (std::cos(wavenumber * t) - std::cos(wavenumber * (x + t)));
  }
};

struct MacroSolution {
  SpaceGrid space;
  TimeGrid time;
  std::vector<double> u, eps, sigma;  // row-major (time, space)

  double& at(std::vector<double>& f, int n, int i) {
    return f[static_cast<std::size_t>(n) * space.n_points + i];
  }
  double u_at(int n, int i) const { return u[static_cast<std::size_t>(n) * space.n_points + i]; }
};

struct BackendHomogenized {
  PronyModel model;
};
struct BackendNoMemory {
  double e_prime, nu_prime;
};
struct BackendMultiscale {
  ContinuousMaterialKV material;
  int eps_inv = 5;
  int elems_per_period = 25;
};
struct BackendRno {
  const RnoModel* model = nullptr;
  MatRM func_in;  // material channels on the model grid
};

using MacroBackend = std::variant<BackendHomogenized, BackendNoMemory, BackendMultiscale, BackendRno>;

namespace detail {

// Shared skeleton for the node-local backends: per time step, compute
// sigma(x) = c - F(x) with c from the displacement constraint, then recover
// u by cumulative trapezoid of eps.
inline MacroSolution macro_skeleton(const MacroProblem& pb) {
  MacroSolution sol;
  sol.space = pb.space;
  sol.time = pb.time;
  const std::size_t total = static_cast<std::size_t>(pb.time.n_steps) * pb.space.n_points;
  sol.u.assign(total, 0.0);
  sol.eps.assign(total, 0.0);
  sol.sigma.assign(total, 0.0);
  return sol;
}

inline void macro_fill_row(MacroSolution& sol, const MacroProblem& pb, int n, double c,
                           const std::vector<double>& eps_row) {
  const int nx = pb.space.n_points;
  const double h = pb.space.spacing();
  const double t = pb.time.node(n);
  double u = 0.0;
  for (int i = 0; i < nx; ++i) {
    sol.at(sol.eps, n, i) = eps_row[static_cast<std::size_t>(i)];
    sol.at(sol.sigma, n, i) = c - pb.forcing_integral(pb.space.node(i), t);
    if (i > 0) u += 0.5 * h * (eps_row[static_cast<std::size_t>(i - 1)] + eps_row[static_cast<std::size_t>(i)]);
    sol.at(sol.u, n, i) = u;
  }
}

inline double trapz_mean(const std::vector<double>& v) { return trapz_unit(v); }

}  // namespace detail

// ---------------------------------------------------------------------------
// Affine backends (Homogenized with Prony memory; NoMemory is the empty
// kernel special case). The per-node strain update is affine in eps_n, so
// c(t) has a closed form.

inline MacroSolution solve_macro(const MacroProblem& pb, const BackendHomogenized& bk) {
  const PronyModel& mdl = bk.model;
  const int nx = pb.space.n_points;
  const int nt = pb.time.n_steps;
  const double dt = pb.time.dt();
  const std::size_t L = mdl.alphas.size();
  if (!(mdl.nu_prime > 0.0)) throw ConfigError("macro: nu' must be positive");

  std::vector<double> decay(L), g0(L), g1(L);
  for (std::size_t l = 0; l < L; ++l) exp_update_coeffs(mdl.alphas[l], dt, decay[l], g0[l], g1[l]);
  double beta_g1 = 0.0;
  for (std::size_t l = 0; l < L; ++l) beta_g1 += mdl.betas[l] * g1[l];
  const double a = mdl.e_prime + 2.0 * mdl.nu_prime / dt - beta_g1;

  MacroSolution sol = detail::macro_skeleton(pb);

  std::vector<double> eps(static_cast<std::size_t>(nx), 0.0);
  std::vector<double> deps(static_cast<std::size_t>(nx), 0.0);
  std::vector<double> xi(static_cast<std::size_t>(nx) * L, 0.0);
  std::vector<double> Fx(static_cast<std::size_t>(nx)), r(static_cast<std::size_t>(nx));

  // t = 0: eps = 0; the rate profile balances the initial forcing.
  for (int i = 0; i < nx; ++i) Fx[static_cast<std::size_t>(i)] = pb.forcing_integral(pb.space.node(i), 0.0);
  double c = detail::trapz_mean(Fx);
  for (int i = 0; i < nx; ++i) deps[static_cast<std::size_t>(i)] = (c - Fx[static_cast<std::size_t>(i)]) / mdl.nu_prime;
  detail::macro_fill_row(sol, pb, 0, c, eps);

  std::vector<double> eps_new(static_cast<std::size_t>(nx));
  for (int n = 1; n < nt; ++n) {
    const double t = pb.time.node(n);
    for (int i = 0; i < nx; ++i) {
      const std::size_t ui = static_cast<std::size_t>(i);
      Fx[ui] = pb.forcing_integral(pb.space.node(i), t);
      double mem = 0.0;
      for (std::size_t l = 0; l < L; ++l)
        mem += decay[l] * xi[ui * L + l] + mdl.betas[l] * g0[l] * eps[ui];
      r[ui] = -2.0 * mdl.nu_prime * eps[ui] / dt - mdl.nu_prime * deps[ui] - mem;
    }
    // c from int eps dx = 0 with eps = (c - F - r)/a.
    std::vector<double> fr(static_cast<std::size_t>(nx));
    for (int i = 0; i < nx; ++i) fr[static_cast<std::size_t>(i)] = Fx[static_cast<std::size_t>(i)] + r[static_cast<std::size_t>(i)];
    c = detail::trapz_mean(fr);

    for (int i = 0; i < nx; ++i) {
      const std::size_t ui = static_cast<std::size_t>(i);
      eps_new[ui] = (c - Fx[ui] - r[ui]) / a;
      for (std::size_t l = 0; l < L; ++l)
        xi[ui * L + l] = decay[l] * xi[ui * L + l] +
                         mdl.betas[l] * (g0[l] * eps[ui] + g1[l] * eps_new[ui]);
      deps[ui] = 2.0 * (eps_new[ui] - eps[ui]) / dt - deps[ui];
    }
    eps.swap(eps_new);
    detail::macro_fill_row(sol, pb, n, c, eps);
  }
  return sol;
}

inline MacroSolution solve_macro(const MacroProblem& pb, const BackendNoMemory& bk) {
  PronyModel mdl;
  mdl.e_prime = bk.e_prime;
  mdl.nu_prime = bk.nu_prime;
  return solve_macro(pb, BackendHomogenized{std::move(mdl)});
}

// ---------------------------------------------------------------------------
// Multiscale backend: Crank-Nicolson FEM for d/dx (E_eps du/dx + nu_eps
// du/dx dt) = -f with the material evaluated at x/eps mod 1.

inline MacroSolution solve_macro(const MacroProblem& pb, const BackendMultiscale& bk) {
  const int per = bk.elems_per_period;
  if (per < 10) throw ConfigError("macro multiscale: need >= 10 elements per period");
  const int n_el = per * bk.eps_inv;
  const int n_un = n_el - 1;  // interior nodes
  const double h = 1.0 / n_el;
  const double dt = pb.time.dt();

  // Element midpoint material values E(x/eps mod 1).
  std::vector<double> Ee(static_cast<std::size_t>(n_el)), Ne(static_cast<std::size_t>(n_el));
  for (int e = 0; e < n_el; ++e) {
    const double x = (e + 0.5) * h;
    double y = x * bk.eps_inv;
    y -= std::floor(y);
    Ee[static_cast<std::size_t>(e)] = eval_linear(bk.material.E, y);
    Ne[static_cast<std::size_t>(e)] = eval_linear(bk.material.nu, y);
  }

  // A_plus u_{n+1} = A_minus u_n + (b_n + b_{n+1})/2 with
  // A_plus = K_nu/dt + K_E/2, A_minus = K_nu/dt - K_E/2.
  Tridiag Aplus, Ke, Knu;
  Knu = detail::assemble_stiffness(Ne, h, static_cast<std::size_t>(n_un));
  Ke = detail::assemble_stiffness(Ee, h, static_cast<std::size_t>(n_un));
  Aplus.lower.resize(static_cast<std::size_t>(n_un));
  Aplus.diag.resize(static_cast<std::size_t>(n_un));
  Aplus.upper.resize(static_cast<std::size_t>(n_un));
  for (int i = 0; i < n_un; ++i) {
    const std::size_t ui = static_cast<std::size_t>(i);
    Aplus.lower[ui] = Knu.lower[ui] / dt + 0.5 * Ke.lower[ui];
    Aplus.diag[ui] = Knu.diag[ui] / dt + 0.5 * Ke.diag[ui];
    Aplus.upper[ui] = Knu.upper[ui] / dt + 0.5 * Ke.upper[ui];
  }
  Aplus.prepare();

  // Load vector by 2-point Gauss per element.
  const auto load = [&](double t, std::vector<double>& b) {
    std::fill(b.begin(), b.end(), 0.0);
    const double gp = 0.5 / std::sqrt(3.0);
    for (int e = 0; e < n_el; ++e) {
      const double xm = (e + 0.5) * h;
      for (const double s : {-gp, gp}) {
        const double x = xm + s * h;
        const double fval = pb.forcing(x, t);
        const double phi_right = 0.5 + s;  // hat function of node e+1 at x
        if (e + 1 <= n_un) b[static_cast<std::size_t>(e)] += 0.5 * h * fval * phi_right;      // node e+1 -> unknown e
        if (e >= 1) b[static_cast<std::size_t>(e - 1)] += 0.5 * h * fval * (1.0 - phi_right); // node e -> unknown e-1
      }
    }
  };

  std::vector<double> u(static_cast<std::size_t>(n_un), 0.0);
  std::vector<double> u_prev(u), rhs(u), b0(u), b1(u), ku(u);

  MacroSolution sol = detail::macro_skeleton(pb);
  const int nx = pb.space.n_points;

  const auto record = [&](int n) {
    // Sample the fine-mesh solution (and element gradients) on the output grid.
    const auto u_node = [&](int j) {
      if (j <= 0 || j >= n_el) return 0.0;
      return u[static_cast<std::size_t>(j - 1)];
    };
    const auto up_node = [&](int j) {
      if (j <= 0 || j >= n_el) return 0.0;
      return u_prev[static_cast<std::size_t>(j - 1)];
    };
    for (int i = 0; i < nx; ++i) {
      const double x = pb.space.node(i);
      double pos = x / h;
      int e = static_cast<int>(pos);
      if (e >= n_el) e = n_el - 1;
      const double s = pos - e;
      const double ul = u_node(e), ur = u_node(e + 1);
      sol.at(sol.u, n, i) = (1.0 - s) * ul + s * ur;
      const double du = (ur - ul) / h;
      const double du_prev = (up_node(e + 1) - up_node(e)) / h;
      const double dudot = (n == 0) ? 0.0 : (du - du_prev) / dt;
      sol.at(sol.eps, n, i) = du;
      sol.at(sol.sigma, n, i) = Ee[static_cast<std::size_t>(e)] * du + Ne[static_cast<std::size_t>(e)] * dudot;
    }
  };

  record(0);
  load(pb.time.node(0), b0);
  for (int n = 1; n < pb.time.n_steps; ++n) {
    load(pb.time.node(n), b1);
    detail::apply_stiffness(Ne, h, u, ku);
    for (std::size_t i = 0; i < rhs.size(); ++i) rhs[i] = ku[i] / dt;
    detail::apply_stiffness(Ee, h, u, ku);
    for (std::size_t i = 0; i < rhs.size(); ++i) rhs[i] += -0.5 * ku[i] + 0.5 * (b0[i] + b1[i]);
    u_prev = u;
    u = rhs;
    Aplus.solve(u);
    record(n);
    b0.swap(b1);
  }
  return sol;
}

// ---------------------------------------------------------------------------
// RNO backend (KV variant): per-node internal state, inner safeguarded secant
// for the strain at given c, outer bisection on c for the constraint.

inline MacroSolution solve_macro(const MacroProblem& pb, const BackendRno& bk) {
  if (!bk.model || bk.model->variant != RnoVariant::kv)
    throw ConfigError("macro rno backend needs a KV model");
  const RnoModel& model = *bk.model;
  const int nx = pb.space.n_points;
  const double dt = pb.time.dt();
  const int m = static_cast<int>(bk.func_in.cols());

  RnoWork work;
  work.init(model, m, 2, false);

  const auto f_eval = [&](double eps, double deps, const VecXd& xi) {
    work.f_vec(0) = eps;
    work.f_vec(1) = deps;
    work.f_vec.tail(model.L) = xi;
    return fnm_forward(model.f, work.f_vec, bk.func_in, work.dft, work.f_scratch)(0);
  };
  const auto g_eval = [&](double eps, const VecXd& xi) -> VecXd {
    work.g_vec(0) = eps;
    work.g_vec.tail(model.L) = xi;
    return fnm_forward(model.g, work.g_vec, bk.func_in, work.dft, work.g_scratch);
  };

  // Safeguarded secant for r(z) = 0, monotone increasing r, warm start z0.
  const auto solve_scalar = [&](auto&& residual, double z0) {
    double a = z0, fa = residual(a);
    if (std::abs(fa) < 1e-10) return a;
    // Expand to bracket.
    double step = std::max(1e-3, 0.1 * std::abs(z0));
    double b = a, fb = fa;
    for (int it = 0; it < 80 && (fa > 0) == (fb > 0); ++it) {
      if (fa > 0) { a -= step; fa = residual(a); } else { b += step; fb = residual(b); }
      step *= 2.0;
    }
    if ((fa > 0) == (fb > 0)) throw NumericalError("macro rno: strain bracket not found");
    // Secant with bisection fallback.
    double x0 = a, f0 = fa, x1 = b, f1 = fb;
    for (int it = 0; it < 30; ++it) {
      double x2 = (std::abs(f1 - f0) > 1e-300)
                      ? x1 - f1 * (x1 - x0) / (f1 - f0)
                      : 0.5 * (a + b);
      if (!(x2 > std::min(a, b) && x2 < std::max(a, b))) x2 = 0.5 * (a + b);
      const double f2 = residual(x2);
      if (f2 > 0) b = x2; else a = x2;
      x0 = x1; f0 = f1; x1 = x2; f1 = f2;
      if (std::abs(f2) < 1e-10 || std::abs(b - a) < 1e-14 * (1.0 + std::abs(x2))) return x2;
    }
    return x1;
  };

  MacroSolution sol = detail::macro_skeleton(pb);

  std::vector<double> eps(static_cast<std::size_t>(nx), 0.0);
  std::vector<double> deps(static_cast<std::size_t>(nx), 0.0);
  std::vector<VecXd> xi(static_cast<std::size_t>(nx), VecXd::Zero(model.L));
  std::vector<double> Fx(static_cast<std::size_t>(nx)), row(static_cast<std::size_t>(nx));

  // Outer solve: find c such that the trapezoid mean of the per-node strain
  // (or rate at t=0) vanishes.
  const auto constraint = [&](double c, int /*n*/, bool rate_mode) {
    for (int i = 0; i < nx; ++i) {
      const std::size_t ui = static_cast<std::size_t>(i);
      const double target = c - Fx[ui];
      if (rate_mode) {
        row[ui] = solve_scalar(
            [&](double z) { return f_eval(0.0, z, xi[ui]) - target; }, deps[ui]);
      } else {
        row[ui] = solve_scalar(
            [&](double z) {
              const double dz = 2.0 * (z - eps[ui]) / dt - deps[ui];
              return f_eval(z, dz, xi[ui]) - target;
            },
            eps[ui]);
      }
    }
    return trapz_unit(row);
  };

  const auto outer_solve = [&](int n, bool rate_mode, double c0) {
    double lo = c0, hi = c0;
    double flo = constraint(lo, n, rate_mode), fhi = flo;
    double step = std::max(1e-3, 0.1 * std::abs(c0));
    for (int it = 0; it < 80 && (flo > 0) == (fhi > 0); ++it) {
      if (flo > 0) { lo -= step; flo = constraint(lo, n, rate_mode); }
      else { hi += step; fhi = constraint(hi, n, rate_mode); }
      step *= 2.0;
    }
    if ((flo > 0) == (fhi > 0)) throw NumericalError("macro rno: constraint bracket not found");
    while (hi - lo > 1e-12 * (1.0 + std::abs(lo))) {
      const double mid = 0.5 * (lo + hi);
      const double fm = constraint(mid, n, rate_mode);
      if (fm > 0) hi = mid; else lo = mid;
    }
    return 0.5 * (lo + hi);
  };

  // t = 0.
  for (int i = 0; i < nx; ++i) Fx[static_cast<std::size_t>(i)] = pb.forcing_integral(pb.space.node(i), 0.0);
  double c = outer_solve(0, true, detail::trapz_mean(Fx));
  constraint(c, 0, true);
  deps = row;
  std::fill(eps.begin(), eps.end(), 0.0);
  detail::macro_fill_row(sol, pb, 0, c, eps);

  for (int n = 1; n < pb.time.n_steps; ++n) {
    // Advance the internal states with the previous strain row.
    for (int i = 0; i < nx; ++i) {
      const std::size_t ui = static_cast<std::size_t>(i);
      xi[ui] += dt * g_eval(eps[ui], xi[ui]);
    }
    const double t = pb.time.node(n);
    for (int i = 0; i < nx; ++i) Fx[static_cast<std::size_t>(i)] = pb.forcing_integral(pb.space.node(i), t);
    c = outer_solve(n, false, c);
    constraint(c, n, false);
    for (int i = 0; i < nx; ++i) {
      const std::size_t ui = static_cast<std::size_t>(i);
      const double e_new = row[ui];
      deps[ui] = 2.0 * (e_new - eps[ui]) / dt - deps[ui];
      eps[ui] = e_new;
    }
    detail::macro_fill_row(sol, pb, n, c, eps);
  }
  return sol;
}

inline MacroSolution solve_macro(const MacroProblem& pb, const MacroBackend& backend) {
  return std::visit([&](const auto& bk) { return solve_macro(pb, bk); }, backend);
}

// ---------------------------------------------------------------------------
// Error map: pointwise |u - u_ref| plus the global relative L2 over the
// space-time domain. Grids are matched by bilinear resampling onto the
// reference grid.

struct ErrorMap {
  SpaceGrid space;
  TimeGrid time;
  std::vector<double> abs_err;  // (time, space)
  double rel_l2 = 0.0;
};

namespace detail {

inline double bilinear_u(const MacroSolution& s, double x, double t) {
  const double hx = s.space.spacing(), ht = s.time.dt();
  double px = x / hx, pt = t / ht;
  int i = std::min(static_cast<int>(px), s.space.n_points - 2);
  int n = std::min(static_cast<int>(pt), s.time.n_steps - 2);
  const double sx = px - i, st = pt - n;
  return (1 - st) * ((1 - sx) * s.u_at(n, i) + sx * s.u_at(n, i + 1)) +
         st * ((1 - sx) * s.u_at(n + 1, i) + sx * s.u_at(n + 1, i + 1));
}

}  // namespace detail

inline ErrorMap error_map(const MacroSolution& sol, const MacroSolution& ref) {
  ErrorMap em;
  em.space = ref.space;
  em.time = ref.time;
  em.abs_err.resize(static_cast<std::size_t>(ref.time.n_steps) * ref.space.n_points);

  const bool shared = (sol.space == ref.space) && (sol.time == ref.time);
  double num = 0.0, den = 0.0;
  for (int n = 0; n < ref.time.n_steps; ++n) {
    const double wt = (n == 0 || n == ref.time.n_steps - 1) ? 0.5 : 1.0;
    for (int i = 0; i < ref.space.n_points; ++i) {
      const double wx = (i == 0 || i == ref.space.n_points - 1) ? 0.5 : 1.0;
      const double uref = ref.u_at(n, i);
      const double usol = shared ? sol.u_at(n, i)
                                 : detail::bilinear_u(sol, ref.space.node(i), ref.time.node(n));
      const double d = std::abs(usol - uref);
      em.abs_err[static_cast<std::size_t>(n) * ref.space.n_points + i] = d;
      num += wt * wx * d * d;
      den += wt * wx * uref * uref;
    }
  }
  if (den <= 0.0) throw ConfigError("error_map: reference displacement is identically zero");
  em.rel_l2 = std::sqrt(num / den);
  return em;
}

}  // namespace memlaw
