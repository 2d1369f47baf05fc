#pragma once

// Microstructure and strain-program samplers for the four dataset families
// (PC, HMC, PC-EVP, C-EVP), plus piecewise-constant discretization and total
// variation diagnostics.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "memlaw/errors.hpp"
#include "memlaw/fields.hpp"
#include "memlaw/rng.hpp"

namespace memlaw {

// ---------------------------------------------------------------------------
// Kelvin–Voigt materials.

struct PiecewiseMaterialKV {
  std::vector<double> breaks;  // strictly increasing interior breakpoints in (0,1)
  std::vector<double> E_vals;  // per-piece stiffness
  std::vector<double> nu_vals; // per-piece viscosity

  int n_pieces() const { return static_cast<int>(E_vals.size()); }

  // Piece edges {0, breaks..., 1}.
  std::vector<double> edges() const {
    std::vector<double> e;
    e.reserve(breaks.size() + 2);
    e.push_back(0.0);
    e.insert(e.end(), breaks.begin(), breaks.end());
    e.push_back(1.0);
    return e;
  }

  double piece_length(int i) const {
    const int L = n_pieces();
    const double lo = (i == 0) ? 0.0 : breaks[static_cast<std::size_t>(i - 1)];
    const double hi = (i == L - 1) ? 1.0 : breaks[static_cast<std::size_t>(i)];
    return hi - lo;
  }

  int piece_index(double y) const {
    const auto it = std::upper_bound(breaks.begin(), breaks.end(), y);
    return static_cast<int>(it - breaks.begin());
  }

  void validate() const {
    if (E_vals.empty() || nu_vals.size() != E_vals.size() ||
        breaks.size() + 1 != E_vals.size())
      throw ConfigError("PiecewiseMaterialKV: inconsistent piece arrays");
    double prev = 0.0;
    for (double b : breaks) {
      if (!(b > prev && b < 1.0)) throw ConfigError("PiecewiseMaterialKV: breaks must be strictly increasing in (0,1)");
      prev = b;
    }
    for (std::size_t i = 0; i < E_vals.size(); ++i)
      if (!(E_vals[i] > 0.0) || !(nu_vals[i] > 0.0))
        throw ConfigError("PiecewiseMaterialKV: values must be positive");
  }
};

struct ContinuousMaterialKV {
  SampledField E;
  SampledField nu;
};

// Elasto-viscoplastic material: either per-piece values or sampled fields for
// the four parameters (E, eps_p0, sigma_Y, n_exp), in that component order.
struct MaterialEVP {
  static constexpr int kComponents = 4;
  bool piecewise = true;

  // Piecewise representation.
  std::vector<double> breaks;
  std::array<std::vector<double>, kComponents> piece_vals;

  // Continuous representation.
  std::array<SampledField, kComponents> fields;
};

// Strain program on a uniform time grid with the analytic interpolant
// derivative carried alongside. eval() reconstructs the cubic exactly between
// grid nodes (Hermite data determines the cubic on every subinterval), which
// the RK4 cell solvers use for half-step values.
struct StrainProgram {
  TimeGrid grid;
  std::vector<double> eps;
  std::vector<double> deps;

  void eval(double t, double& e, double& de) const {
    const double dt = grid.dt();
    double pos = t / dt;
    int i = static_cast<int>(pos);
    if (i >= grid.n_steps - 1) i = grid.n_steps - 2;
    if (i < 0) i = 0;
    const double s = pos - i;
    const double h00 = (1 + 2 * s) * (1 - s) * (1 - s);
    const double h10 = s * (1 - s) * (1 - s);
    const double h01 = s * s * (3 - 2 * s);
    const double h11 = s * s * (s - 1);
    const std::size_t j = static_cast<std::size_t>(i);
    e = h00 * eps[j] + h10 * dt * deps[j] + h01 * eps[j + 1] + h11 * dt * deps[j + 1];
    const double d00 = 6 * s * (s - 1) / dt;
    const double d10 = (1 - s) * (1 - 3 * s);
    const double d11 = s * (3 * s - 2);
    de = d00 * (eps[j] - eps[j + 1]) + d10 * deps[j] + d11 * deps[j + 1];
  }

  StrainProgram resampled(TimeGrid target) const {
    if (target == grid) return *this;
    StrainProgram out;
    out.grid = target;
    out.eps = resample_linear(eps, target.n_steps);
    out.deps = resample_linear(deps, target.n_steps);
    return out;
  }
};

// ---------------------------------------------------------------------------
// Samplers. Every sampler is a pure function of (seed, config); the draw
// order below is part of the on-disk determinism contract.

inline PiecewiseMaterialKV sample_pc_kv(std::uint64_t seed) {
  Rng rng(seed);
  const int L = static_cast<int>(rng.uniform_int(5, 20));
  std::vector<double> breaks;
  breaks.reserve(static_cast<std::size_t>(L - 1));
  for (int i = 0; i < L - 1; ++i) {
    const double b = 0.02 * static_cast<double>(rng.uniform_int(0, 50));
    if (b > 0.0 && b < 1.0) breaks.push_back(b);
  }
  std::sort(breaks.begin(), breaks.end());
  breaks.erase(std::unique(breaks.begin(), breaks.end()), breaks.end());

  PiecewiseMaterialKV mat;
  mat.breaks = std::move(breaks);
  const std::size_t pieces = mat.breaks.size() + 1;
  mat.E_vals.resize(pieces);
  mat.nu_vals.resize(pieces);
  for (std::size_t i = 0; i < pieces; ++i) {
    mat.E_vals[i] = rng.uniform(0.1, 1.0);
    mat.nu_vals[i] = rng.uniform(0.1, 1.0);
  }
  return mat;
}

// Discrete periodic Gaussian smoothing (std dev in physical units) of the
// first n_points-1 nodes; the duplicate endpoint is restored afterwards.
inline std::vector<double> smooth_periodic(std::span<const double> values, SpaceGrid grid,
                                           double stddev) {
  const int m = grid.n_points - 1;
  const double h = grid.spacing();
  const int radius = std::min(m / 2, static_cast<int>(std::ceil(6.0 * stddev / h)));
  std::vector<double> kernel(static_cast<std::size_t>(2 * radius + 1));
  double norm = 0.0;
  for (int r = -radius; r <= radius; ++r) {
    const double x = r * h;
    kernel[static_cast<std::size_t>(r + radius)] = std::exp(-0.5 * x * x / (stddev * stddev));
    norm += kernel[static_cast<std::size_t>(r + radius)];
  }
  for (double& k : kernel) k /= norm;

  std::vector<double> out(static_cast<std::size_t>(grid.n_points));
  for (int j = 0; j < m; ++j) {
    double acc = 0.0;
    for (int r = -radius; r <= radius; ++r) {
      const int idx = ((j + r) % m + m) % m;
      acc += kernel[static_cast<std::size_t>(r + radius)] * values[static_cast<std::size_t>(idx)];
    }
    out[static_cast<std::size_t>(j)] = acc;
  }
  out[static_cast<std::size_t>(m)] = out[0];
  return out;
}

// Two-piece constant field on the torus with a single interior breakpoint.
inline std::vector<double> two_piece_field(SpaceGrid grid, double breakpoint, double v_left,
                                           double v_right) {
  std::vector<double> f(static_cast<std::size_t>(grid.n_points));
  for (int j = 0; j < grid.n_points; ++j)
    f[static_cast<std::size_t>(j)] = grid.node(j) < breakpoint ? v_left : v_right;
  f.back() = f.front();
  return f;
}

namespace detail {
constexpr double kMeanSmoothStd = 0.01;

// One draw from the two-mode mixture N([-1,1], 0.06 I) / N([1,-1], 0.06 I).
inline std::array<double, 2> draw_mixture_pair(Rng& rng) {
  const bool first = (rng.next_u64() & 1ull) == 0;
  const double sd = std::sqrt(0.06);
  const double cx = first ? -1.0 : 1.0;
  return {cx + sd * rng.normal(), -cx + sd * rng.normal()};
}
}  // namespace detail

inline ContinuousMaterialKV sample_hmc_kv(std::uint64_t seed, SpaceGrid grid) {
  Rng rng(seed);
  const double bp = rng.uniform(0.25, 0.75);
  const auto left = detail::draw_mixture_pair(rng);
  const auto right = detail::draw_mixture_pair(rng);

  ContinuousMaterialKV mat;
  for (int comp = 0; comp < 2; ++comp) {
    const auto raw = two_piece_field(grid, bp, left[static_cast<std::size_t>(comp)],
                                     right[static_cast<std::size_t>(comp)]);
    const auto m_shift = smooth_periodic(raw, grid, detail::kMeanSmoothStd);

    GrfSpec spec;
    spec.rho = std::exp(rng.uniform(std::log(0.01), std::log(0.3)));
    spec.sigma = rng.uniform(0.1, 0.3);
    const SampledField g = sample_grf(spec, grid, rng);

    std::vector<double> vals(static_cast<std::size_t>(grid.n_points));
    for (int j = 0; j < grid.n_points; ++j) {
      const std::size_t u = static_cast<std::size_t>(j);
      vals[u] = 0.45 * (std::erf(m_shift[u] + g.values[u]) + 1.0) + 0.1;
    }
    (comp == 0 ? mat.E : mat.nu) = SampledField(grid, std::move(vals));
  }
  return mat;
}

// Optional introspection record for property tests on the strain recursion.
struct StrainKnots {
  std::vector<double> t;
  std::vector<double> v;
};

inline StrainProgram sample_strain(std::uint64_t seed, TimeGrid grid,
                                   StrainKnots* knots_out = nullptr) {
  Rng rng(seed);
  const int n = static_cast<int>(rng.uniform_int(3, 21));

  std::vector<double> t;
  for (;;) {
    t.assign(1, 0.0);
    for (int i = 0; i < n - 2; ++i) t.push_back(rng.uniform());
    t.push_back(1.0);
    std::sort(t.begin(), t.end());
    bool ok = true;
    for (std::size_t i = 0; i + 1 < t.size(); ++i)
      if (t[i + 1] - t[i] < 1e-9) { ok = false; break; }
    if (ok) break;
  }

  std::vector<double> v(static_cast<std::size_t>(n), 0.0);
  for (int k = 1; k < n; ++k) {
    const double step = rng.sign() * std::sqrt(t[static_cast<std::size_t>(k)] -
                                               t[static_cast<std::size_t>(k - 1)]);
    const double prev = v[static_cast<std::size_t>(k - 1)];
    v[static_cast<std::size_t>(k)] = prev + (0.5 - prev) * step;
  }

  const PchipCurve c = pchip_fit(t, v);
  StrainProgram sp;
  sp.grid = grid;
  sp.eps.resize(static_cast<std::size_t>(grid.n_steps));
  sp.deps.resize(static_cast<std::size_t>(grid.n_steps));
  for (int i = 0; i < grid.n_steps; ++i) {
    sp.eps[static_cast<std::size_t>(i)] = c.value(grid.node(i));
    sp.deps[static_cast<std::size_t>(i)] = c.deriv(grid.node(i));
  }
  sp.eps[0] = 0.0;  // exact by construction; pin against roundoff
  if (knots_out) *knots_out = StrainKnots{std::move(t), std::move(v)};
  return sp;
}

enum class EvpKind { pc, continuous };

// Sampling boxes for (E, eps_p0, sigma_Y, n_exp).
inline constexpr std::array<std::array<double, 2>, 4> kEvpBoxes{{
    {1.0, 10.0}, {0.5, 2.0}, {0.1, 1.0}, {1.0, 20.0}}};

inline MaterialEVP sample_evp(std::uint64_t seed, EvpKind kind, SpaceGrid grid) {
  Rng rng(seed);
  MaterialEVP mat;
  if (kind == EvpKind::pc) {
    mat.piecewise = true;
    const int L = static_cast<int>(rng.uniform_int(5, 20));
    std::vector<double> breaks;
    for (int i = 0; i < L - 1; ++i) {
      const double b = 0.02 * static_cast<double>(rng.uniform_int(0, 50));
      if (b > 0.0 && b < 1.0) breaks.push_back(b);
    }
    std::sort(breaks.begin(), breaks.end());
    breaks.erase(std::unique(breaks.begin(), breaks.end()), breaks.end());
    mat.breaks = std::move(breaks);
    const std::size_t pieces = mat.breaks.size() + 1;
    for (auto& vals : mat.piece_vals) vals.resize(pieces);
    for (std::size_t i = 0; i < pieces; ++i)
      for (int c = 0; c < MaterialEVP::kComponents; ++c)
        mat.piece_vals[static_cast<std::size_t>(c)][i] =
            rng.uniform(kEvpBoxes[static_cast<std::size_t>(c)][0],
                        kEvpBoxes[static_cast<std::size_t>(c)][1]);
  } else {
    mat.piecewise = false;
    const double bp = rng.uniform(0.25, 0.75);
    for (int c = 0; c < MaterialEVP::kComponents; ++c) {
      const double lo = kEvpBoxes[static_cast<std::size_t>(c)][0];
      const double hi = kEvpBoxes[static_cast<std::size_t>(c)][1];
      const double v_left = rng.uniform(lo, hi);
      const double v_right = rng.uniform(lo, hi);
      const auto raw = two_piece_field(grid, bp, v_left, v_right);
      mat.fields[static_cast<std::size_t>(c)] =
          SampledField(grid, smooth_periodic(raw, grid, detail::kMeanSmoothStd));
    }
  }
  return mat;
}

// ---------------------------------------------------------------------------
// Piecewise-constant discretization and total variation.

// Integral over [a,b] of the piecewise-linear interpolant of a SampledField.
inline double integrate_linear(const SampledField& f, double a, double b) {
  const double h = f.grid.spacing();
  const auto value_at = [&](double x) {
    double pos = x / h;
    int j = static_cast<int>(pos);
    if (j >= f.grid.n_points - 1) j = f.grid.n_points - 2;
    if (j < 0) j = 0;
    const double s = pos - j;
    const std::size_t u = static_cast<std::size_t>(j);
    return (1.0 - s) * f.values[u] + s * f.values[u + 1];
  };
  // Split at interior grid nodes so each segment is exactly linear.
  double acc = 0.0;
  int j0 = static_cast<int>(std::ceil(a / h - 1e-12));
  int j1 = static_cast<int>(std::floor(b / h + 1e-12));
  j0 = std::clamp(j0, 0, f.grid.n_points - 1);
  j1 = std::clamp(j1, 0, f.grid.n_points - 1);
  double x = a;
  for (int j = j0; j <= j1; ++j) {
    const double node = f.grid.node(j);
    if (node > x + 1e-15 && node < b - 1e-15) {
      acc += 0.5 * (value_at(x) + value_at(node)) * (node - x);
      x = node;
    }
  }
  acc += 0.5 * (value_at(x) + value_at(b)) * (b - x);
  return acc;
}

inline PiecewiseMaterialKV pc_discretize(const ContinuousMaterialKV& mat, int n_pieces) {
  if (n_pieces < 1) throw ConfigError("pc_discretize: n_pieces >= 1 required");
  PiecewiseMaterialKV out;
  out.E_vals.resize(static_cast<std::size_t>(n_pieces));
  out.nu_vals.resize(static_cast<std::size_t>(n_pieces));
  const double w = 1.0 / n_pieces;
  for (int i = 0; i < n_pieces; ++i) {
    const double a = i * w;
    const double b = (i + 1) * w;
    if (i > 0) out.breaks.push_back(a);
    out.E_vals[static_cast<std::size_t>(i)] = integrate_linear(mat.E, a, b) / w;
    out.nu_vals[static_cast<std::size_t>(i)] = integrate_linear(mat.nu, a, b) / w;
  }
  return out;
}

inline double total_variation(const SampledField& f) {
  double tv = 0.0;
  for (std::size_t i = 0; i + 1 < f.values.size(); ++i)
    tv += std::abs(f.values[i + 1] - f.values[i]);
  tv += std::abs(f.values.front() - f.values.back());  // wrap (zero if endpoint duplicated)
  return tv;
}

inline double total_variation(std::span<const double> piece_vals) {
  if (piece_vals.empty()) return 0.0;
  double tv = 0.0;
  for (std::size_t i = 0; i + 1 < piece_vals.size(); ++i)
    tv += std::abs(piece_vals[i + 1] - piece_vals[i]);
  tv += std::abs(piece_vals.front() - piece_vals.back());
  return tv;
}

// ---------------------------------------------------------------------------
// Per-element material values for the FEM solvers: midpoint evaluation for
// continuous fields, exact element averages for piecewise materials.

inline double eval_linear(const SampledField& f, double x) {
  const double h = f.grid.spacing();
  double pos = x / h;
  int j = static_cast<int>(pos);
  if (j >= f.grid.n_points - 1) j = f.grid.n_points - 2;
  if (j < 0) j = 0;
  const double s = pos - j;
  const std::size_t u = static_cast<std::size_t>(j);
  return (1.0 - s) * f.values[u] + s * f.values[u + 1];
}

inline std::vector<double> element_values(const SampledField& f, int n_elems) {
  std::vector<double> out(static_cast<std::size_t>(n_elems));
  const double h = 1.0 / n_elems;
  for (int e = 0; e < n_elems; ++e)
    out[static_cast<std::size_t>(e)] = eval_linear(f, (e + 0.5) * h);
  return out;
}

inline double piecewise_average(const std::vector<double>& breaks, std::span<const double> vals,
                                double a, double b) {
  // Average of a piecewise-constant function over [a,b].
  double acc = 0.0;
  double x = a;
  std::size_t i = static_cast<std::size_t>(
      std::upper_bound(breaks.begin(), breaks.end(), a + 1e-15) - breaks.begin());
  while (x < b - 1e-15) {
    const double next = (i < breaks.size()) ? std::min(breaks[i], b) : b;
    acc += vals[std::min(i, vals.size() - 1)] * (next - x);
    x = next;
    ++i;
  }
  return acc / (b - a);
}

inline std::vector<double> element_values(const std::vector<double>& breaks,
                                          std::span<const double> vals, int n_elems) {
  std::vector<double> out(static_cast<std::size_t>(n_elems));
  const double h = 1.0 / n_elems;
  for (int e = 0; e < n_elems; ++e)
    out[static_cast<std::size_t>(e)] = piecewise_average(breaks, vals, e * h, (e + 1) * h);
  return out;
}

// Node samples of a material component on a grid (used to build the RNO's
// function-input channels from either representation).
inline std::vector<double> node_values(const PiecewiseMaterialKV& mat, SpaceGrid grid,
                                       bool stiffness) {
  const auto& vals = stiffness ? mat.E_vals : mat.nu_vals;
  std::vector<double> out(static_cast<std::size_t>(grid.n_points));
  for (int j = 0; j < grid.n_points; ++j)
    out[static_cast<std::size_t>(j)] = vals[static_cast<std::size_t>(mat.piece_index(grid.node(j)))];
  out.back() = out.front();  // periodic identification for torus transforms
  return out;
}

}  // namespace memlaw
