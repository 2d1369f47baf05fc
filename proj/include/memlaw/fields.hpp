#pragma once

// Grids, sampled fields on [0,1], shape-preserving cubic interpolation and
// periodic Gaussian random fields: the substrate the rest of the library
// builds on.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "memlaw/errors.hpp"
#include "memlaw/rng.hpp"

namespace memlaw {

struct SpaceGrid {
  int n_points = 2;

  explicit SpaceGrid(int n = 2) : n_points(n) {
    if (n_points < 2) throw ConfigError("SpaceGrid needs at least 2 points");
  }
  double spacing() const { return 1.0 / (n_points - 1); }
  double node(int i) const { return static_cast<double>(i) / (n_points - 1); }
  bool operator==(const SpaceGrid&) const = default;
};

struct TimeGrid {
  int n_steps = 2;

  explicit TimeGrid(int n = 2) : n_steps(n) {
    if (n_steps < 2) throw ConfigError("TimeGrid needs at least 2 nodes");
  }
  double dt() const { return 1.0 / (n_steps - 1); }
  double node(int i) const { return static_cast<double>(i) / (n_steps - 1); }
  bool operator==(const TimeGrid&) const = default;
};

struct SampledField {
  SpaceGrid grid;
  std::vector<double> values;

  SampledField() = default;
  SampledField(SpaceGrid g, std::vector<double> v) : grid(g), values(std::move(v)) {
    if (static_cast<int>(values.size()) != grid.n_points)
      throw ConfigError("SampledField value count does not match grid");
  }
};

struct GrfSpec {
  double rho = 0.1;    // correlation length
  double sigma = 0.2;  // pointwise standard deviation
  int n_modes = 0;     // Fourier truncation; 0 means Nyquist default

  void validate() const {
    if (!(rho > 0.0) || !(sigma >= 0.0)) throw ConfigError("GrfSpec: rho > 0 and sigma >= 0 required");
  }
};

// ---------------------------------------------------------------------------
// Quadrature helpers (uniform grids on [0,1]).

inline double trapz(std::span<const double> v, double h) {
  if (v.size() < 2) return 0.0;
  double s = 0.5 * (v.front() + v.back());
  for (std::size_t i = 1; i + 1 < v.size(); ++i) s += v[i];
  return s * h;
}

inline double trapz_unit(std::span<const double> v) {
  return trapz(v, 1.0 / (static_cast<double>(v.size()) - 1.0));
}

// ---------------------------------------------------------------------------
// PCHIP (Fritsch–Carlson shape-preserving cubic Hermite interpolation).

struct PchipCurve {
  std::vector<double> t;      // knot abscissae, strictly increasing
  std::vector<double> v;      // knot ordinates
  std::vector<double> slope;  // knot derivatives

  // Index of the interval containing x (clamped to the knot range).
  std::size_t interval(double x) const {
    const auto it = std::upper_bound(t.begin(), t.end(), x);
    std::size_t i = static_cast<std::size_t>(it - t.begin());
    if (i == 0) return 0;
    if (i >= t.size()) return t.size() - 2;
    return i - 1;
  }

  double value(double x) const {
    const std::size_t i = interval(x);
    const double h = t[i + 1] - t[i];
    const double s = (x - t[i]) / h;
    const double h00 = (1 + 2 * s) * (1 - s) * (1 - s);
    const double h10 = s * (1 - s) * (1 - s);
    const double h01 = s * s * (3 - 2 * s);
    const double h11 = s * s * (s - 1);
    return h00 * v[i] + h10 * h * slope[i] + h01 * v[i + 1] + h11 * h * slope[i + 1];
  }

  double deriv(double x) const {
    const std::size_t i = interval(x);
    const double h = t[i + 1] - t[i];
    const double s = (x - t[i]) / h;
    const double d00 = 6 * s * (s - 1) / h;
    const double d10 = (1 - s) * (1 - 3 * s);
    const double d01 = -d00;
    const double d11 = s * (3 * s - 2);
    return d00 * v[i] + d10 * slope[i] + d01 * v[i + 1] + d11 * slope[i + 1];
  }
};

inline PchipCurve pchip_fit(std::span<const double> knots_t, std::span<const double> knots_v) {
  const std::size_t n = knots_t.size();
  if (n < 2 || knots_v.size() != n) throw ConfigError("pchip: need >= 2 knots with matching values");
  for (std::size_t i = 0; i + 1 < n; ++i)
    if (!(knots_t[i] < knots_t[i + 1])) throw ConfigError("pchip: knot abscissae must be strictly increasing");

  PchipCurve c;
  c.t.assign(knots_t.begin(), knots_t.end());
  c.v.assign(knots_v.begin(), knots_v.end());
  c.slope.assign(n, 0.0);

  std::vector<double> h(n - 1), delta(n - 1);
  for (std::size_t i = 0; i + 1 < n; ++i) {
    h[i] = c.t[i + 1] - c.t[i];
    delta[i] = (c.v[i + 1] - c.v[i]) / h[i];
  }

  if (n == 2) {
    c.slope[0] = c.slope[1] = delta[0];
    return c;
  }

  // Interior: weighted harmonic mean when secants share a sign, else zero
  // (local extremum gets a flat tangent).
  for (std::size_t i = 1; i + 1 < n; ++i) {
    if (delta[i - 1] == 0.0 || delta[i] == 0.0 || (delta[i - 1] > 0) != (delta[i] > 0)) {
      c.slope[i] = 0.0;
    } else {
      const double w1 = 2 * h[i] + h[i - 1];
      const double w2 = h[i] + 2 * h[i - 1];
      c.slope[i] = (w1 + w2) / (w1 / delta[i - 1] + w2 / delta[i]);
    }
  }

  // One-sided three-point end slopes, clamped for shape preservation.
  const auto end_slope = [](double h0, double h1, double d0, double d1) {
    double d = ((2 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
    if (d * d0 <= 0.0)
      d = 0.0;
    else if (d0 * d1 <= 0.0 && std::abs(d) > 3.0 * std::abs(d0))
      d = 3.0 * d0;
    return d;
  };
  c.slope[0] = end_slope(h[0], h[1], delta[0], delta[1]);
  c.slope[n - 1] = end_slope(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
  return c;
}

inline std::vector<double> pchip_interpolate(std::span<const double> knots_t,
                                             std::span<const double> knots_v, TimeGrid grid) {
  const PchipCurve c = pchip_fit(knots_t, knots_v);
  std::vector<double> out(grid.n_steps);
  for (int i = 0; i < grid.n_steps; ++i) out[i] = c.value(grid.node(i));
  return out;
}

// ---------------------------------------------------------------------------
// Gaussian random field on the torus, sampled spectrally.
//
// Coefficient at wavenumber k has variance rho*sigma^2*(1 + rho^2(2 pi k)^2)^-2;
// conjugate symmetry is enforced by construction so realizations are exactly
// real. The returned field duplicates the first node at y = 1.

inline SampledField sample_grf(const GrfSpec& spec, SpaceGrid grid, Rng& rng) {
  spec.validate();
  const int m = grid.n_points - 1;  // periodic points
  int K = spec.n_modes > 0 ? spec.n_modes : grid.n_points / 2;
  K = std::min(K, m / 2);

  const auto mode_var = [&](int k) {
    const double w = 2.0 * M_PI * k * spec.rho;
    const double q = 1.0 + w * w;
    return spec.rho * spec.sigma * spec.sigma / (q * q);
  };

  std::vector<double> values(grid.n_points, 0.0);
  // DC component.
  const double a0 = std::sqrt(mode_var(0)) * rng.normal();
  for (int j = 0; j < m; ++j) values[j] = a0;
  // Each k >= 1 contributes sqrt(2 v_k) (a cos + b sin), giving pointwise
  // variance 2 v_k, i.e. the +-k pair of the complex expansion.
  for (int k = 1; k <= K; ++k) {
    const double amp = std::sqrt(2.0 * mode_var(k));
    const double a = amp * rng.normal();
    const double b = amp * rng.normal();
    for (int j = 0; j < m; ++j) {
      const double phase = 2.0 * M_PI * k * j / m;
      values[j] += a * std::cos(phase) + b * std::sin(phase);
    }
  }
  values[m] = values[0];
  return SampledField(grid, std::move(values));
}

inline SampledField sample_grf(const GrfSpec& spec, SpaceGrid grid, std::uint64_t seed) {
  Rng rng(seed);
  return sample_grf(spec, grid, rng);
}

inline double grf_pointwise_variance(const GrfSpec& spec, SpaceGrid grid) {
  const int m = grid.n_points - 1;
  int K = spec.n_modes > 0 ? spec.n_modes : grid.n_points / 2;
  K = std::min(K, m / 2);
  double var = 0.0;
  for (int k = 0; k <= K; ++k) {
    const double w = 2.0 * M_PI * k * spec.rho;
    const double q = 1.0 + w * w;
    var += (k == 0 ? 1.0 : 2.0) * spec.rho * spec.sigma * spec.sigma / (q * q);
  }
  return var;
}

// ---------------------------------------------------------------------------
// Piecewise-linear resampling between uniform grids on [0,1].

inline std::vector<double> resample_linear(std::span<const double> src, int n_target) {
  const std::size_t n = src.size();
  if (n < 2) throw ConfigError("resample_linear: source needs >= 2 nodes");
  if (n_target < 2) throw ConfigError("resample_linear: target needs >= 2 nodes");
  if (static_cast<std::size_t>(n_target) == n) return {src.begin(), src.end()};
  std::vector<double> out(static_cast<std::size_t>(n_target));
  const double src_h = 1.0 / (static_cast<double>(n) - 1.0);
  for (int i = 0; i < n_target; ++i) {
    const double x = static_cast<double>(i) / (n_target - 1);
    double pos = x / src_h;
    std::size_t j = static_cast<std::size_t>(pos);
    if (j >= n - 1) j = n - 2;
    const double s = pos - static_cast<double>(j);
    out[static_cast<std::size_t>(i)] = (1.0 - s) * src[j] + s * src[j + 1];
  }
  return out;
}

inline SampledField resample_linear(const SampledField& f, SpaceGrid target) {
  return SampledField(target, resample_linear(f.values, target.n_points));
}

}  // namespace memlaw
