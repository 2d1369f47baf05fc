#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <vector>

#include "helpers.hpp"
#include "memlaw/macro_sim.hpp"
#include "memlaw/materials.hpp"
#include "memlaw/metrics.hpp"
#include "memlaw/prony.hpp"

using namespace memlaw;

namespace {

// Homogenized law for a continuous microstructure: discretize onto a fine
// piecewise-constant grid and fit the exact memory kernel.
PronyModel homogenize(const ContinuousMaterialKV& mat) {
  return fit_prony(pc_discretize(mat, 250));
}

double max_abs(const std::vector<double>& v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

}  // namespace

TEST_CASE("zero forcing leaves every backend at rest", "[macro_sim]") {
  MacroProblem pb;
  pb.amplitude = 0.0;
  pb.space = SpaceGrid{33};
  pb.time = TimeGrid{101};

  const ContinuousMaterialKV hmc = sample_hmc_kv(11, SpaceGrid{257});
  const RnoModel lin = testutil::make_linear_kv_model(0.9, 0.6);
  std::vector<MacroBackend> backends;
  backends.emplace_back(BackendHomogenized{homogenize(hmc)});
  backends.emplace_back(BackendNoMemory{0.9, 0.6});
  backends.emplace_back(BackendMultiscale{hmc, 5, 25});
  backends.emplace_back(BackendRno{&lin, material_channels(hmc, SpaceGrid{33})});

  for (const MacroBackend& bk : backends) {
    const MacroSolution sol = solve_macro(pb, bk);
    // The direct backends return exact zeros; the neural backend's nested
    // root-finders stop at their tolerance.
    CHECK(max_abs(sol.u) < 1e-10);
    CHECK(max_abs(sol.eps) < 1e-10);
    CHECK(max_abs(sol.sigma) < 1e-8);
  }
}

TEST_CASE("no-memory backend matches the per-node closed-form ODE", "[macro_sim]") {
  MacroProblem pb;  // defaults: A = 100, w = 8 pi, 201 x 501
  const double e = 0.8, nu = 0.5;
  const MacroSolution sol = solve_macro(pb, BackendNoMemory{e, nu});

  // w spans an integer number of spatial periods, so the mean of the forcing
  // integral vanishes and sigma(x,t) = (A/w) cos(w(x+t)). The strain then
  // solves nu eps' + E eps = sigma with eps(x,0) = 0.
  const double A = pb.amplitude, w = pb.wavenumber;
  const double denom = e * e + nu * nu * w * w;
  double worst = 0.0;
  for (int n = 0; n < pb.time.n_steps; n += 25) {
    const double t = pb.time.node(n);
    for (int i = 0; i < pb.space.n_points; i += 10) {
      const double x = pb.space.node(i);
      const double part = (A / w) / denom *
                          (e * std::cos(w * (x + t)) + nu * w * std::sin(w * (x + t)));
      const double hom = -(A / w) / denom * (e * std::cos(w * x) + nu * w * std::sin(w * x)) *
                         std::exp(-e * t / nu);
      worst = std::max(worst, std::abs(sol.eps[static_cast<std::size_t>(n) * pb.space.n_points +
                                               static_cast<std::size_t>(i)] -
                                       (part + hom)));
    }
  }
  CHECK(worst < 1e-3 * A / w);

  // The integral constraint holds at every recorded step.
  for (int n = 0; n < pb.time.n_steps; n += 50) {
    std::vector<double> row(static_cast<std::size_t>(pb.space.n_points));
    for (int i = 0; i < pb.space.n_points; ++i)
      row[static_cast<std::size_t>(i)] =
          sol.eps[static_cast<std::size_t>(n) * pb.space.n_points + static_cast<std::size_t>(i)];
    CHECK(std::abs(trapz_unit(row)) < 1e-10 * A / w);
  }
}

TEST_CASE("stress balances the body force pointwise", "[macro_sim]") {
  MacroProblem pb;
  pb.space = SpaceGrid{101};
  pb.time = TimeGrid{201};
  const ContinuousMaterialKV hmc = sample_hmc_kv(21, SpaceGrid{257});
  const PronyModel prony = homogenize(hmc);

  std::vector<MacroBackend> backends;
  backends.emplace_back(BackendHomogenized{prony});
  backends.emplace_back(BackendNoMemory{prony.e_prime, prony.nu_prime});

  const double fmax = pb.amplitude / pb.wavenumber;
  for (const MacroBackend& bk : backends) {
    const MacroSolution sol = solve_macro(pb, bk);
    // sigma(x,t) + F(x,t) must be constant in x (it equals the Lagrange
    // multiplier of the displacement constraint).
    double worst = 0.0;
    for (int n = 0; n < pb.time.n_steps; n += 20) {
      const double t = pb.time.node(n);
      const double ref = sol.sigma[static_cast<std::size_t>(n) * pb.space.n_points] +
                         pb.forcing_integral(0.0, t);
      for (int i = 1; i < pb.space.n_points; ++i) {
        const double v = sol.sigma[static_cast<std::size_t>(n) * pb.space.n_points +
                                   static_cast<std::size_t>(i)] +
                         pb.forcing_integral(pb.space.node(i), t);
        worst = std::max(worst, std::abs(v - ref));
      }
    }
    CHECK(worst < 1e-8 * fmax);

    // Both ends of the bar stay pinned.
    double edge = 0.0;
    for (int n = 0; n < pb.time.n_steps; ++n) {
      edge = std::max(edge, std::abs(sol.u[static_cast<std::size_t>(n) * pb.space.n_points]));
      edge = std::max(edge, std::abs(sol.u[static_cast<std::size_t>(n + 1) * pb.space.n_points - 1]));
    }
    CHECK(edge < 1e-8 * fmax);
  }
}

TEST_CASE("multiscale solution converges to the homogenized one", "[macro_sim]") {
  MacroProblem pb;
  pb.space = SpaceGrid{101};
  pb.time = TimeGrid{201};
  const ContinuousMaterialKV hmc = sample_hmc_kv(31, SpaceGrid{257});
  const MacroSolution ref = solve_macro(pb, MacroBackend{BackendHomogenized{homogenize(hmc)}});

  std::vector<double> inv_eps, errs;
  for (int inv : {5, 10, 20, 40}) {
    const MacroSolution ms = solve_macro(pb, MacroBackend{BackendMultiscale{hmc, inv, 40}});
    inv_eps.push_back(static_cast<double>(inv));
    errs.push_back(error_map(ms, ref).rel_l2);
  }
  const double slope = loglog_slope(inv_eps, errs);
  CHECK(slope > -1.5);
  CHECK(slope < -0.5);
}

TEST_CASE("ignoring memory costs more for materials with heavier kernels", "[macro_sim]") {
  MacroProblem pb;
  pb.space = SpaceGrid{101};
  pb.time = TimeGrid{201};

  std::vector<double> masses, errs;
  for (std::uint64_t seed = 700; seed < 710; ++seed) {
    const PronyModel prony = fit_prony(sample_pc_kv(seed));
    const MacroSolution hom = solve_macro(pb, MacroBackend{BackendHomogenized{prony}});
    const MacroSolution nom =
        solve_macro(pb, MacroBackend{BackendNoMemory{prony.e_prime, prony.nu_prime}});
    masses.push_back(prony.kernel_mass());
    errs.push_back(error_map(nom, hom).rel_l2);
  }
  // Pearson correlation between kernel mass and the no-memory error.
  double mm = 0.0, me = 0.0;
  for (std::size_t i = 0; i < masses.size(); ++i) {
    mm += masses[i];
    me += errs[i];
  }
  mm /= static_cast<double>(masses.size());
  me /= static_cast<double>(errs.size());
  double num = 0.0, dm = 0.0, de = 0.0;
  for (std::size_t i = 0; i < masses.size(); ++i) {
    num += (masses[i] - mm) * (errs[i] - me);
    dm += (masses[i] - mm) * (masses[i] - mm);
    de += (errs[i] - me) * (errs[i] - me);
  }
  const double corr = num / std::sqrt(dm * de);
  INFO("kernel-mass/error correlation: " << corr);
  CHECK(corr > 0.5);
  // Every memoryless run shows some error.
  CHECK(*std::min_element(errs.begin(), errs.end()) > 0.0);
}

TEST_CASE("rno backend with an embedded affine law matches the no-memory solve", "[macro_sim]") {
  MacroProblem pb;
  pb.space = SpaceGrid{33};
  pb.time = TimeGrid{101};
  const double e = 1.2, nu = 0.7;
  const RnoModel lin = testutil::make_linear_kv_model(e, nu, 2);
  const MatRM channels = material_channels(sample_pc_kv(41), SpaceGrid{33});

  const MacroSolution a = solve_macro(pb, MacroBackend{BackendRno{&lin, channels}});
  const MacroSolution b = solve_macro(pb, MacroBackend{BackendNoMemory{e, nu}});
  CHECK(error_map(a, b).rel_l2 < 1e-6);
}

TEST_CASE("error map basics", "[macro_sim]") {
  MacroProblem pb;
  pb.space = SpaceGrid{33};
  pb.time = TimeGrid{51};
  const MacroSolution sol = solve_macro(pb, MacroBackend{BackendNoMemory{1.0, 0.5}});

  const ErrorMap self = error_map(sol, sol);
  CHECK(self.rel_l2 == 0.0);
  CHECK(max_abs(self.abs_err) == 0.0);

  MacroSolution zero = sol;
  std::fill(zero.u.begin(), zero.u.end(), 0.0);
  CHECK_THROWS_AS(error_map(sol, zero), ConfigError);
}
