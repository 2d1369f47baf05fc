#pragma once

// Error metrics shared by evaluation, training and the acceptance suite.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "memlaw/errors.hpp"
#include "memlaw/fields.hpp"

namespace memlaw {

// Relative L2 error over [0,1] with trapezoidal quadrature; the reference
// norm is floored so an identically-zero reference yields a finite value.
inline double rel_l2(std::span<const double> pred, std::span<const double> ref) {
  if (pred.size() != ref.size() || ref.size() < 2)
    throw ConfigError("rel_l2: arrays must share a length >= 2");
  std::vector<double> num(ref.size()), den(ref.size());
  for (std::size_t i = 0; i < ref.size(); ++i) {
    const double d = pred[i] - ref[i];
    num[i] = d * d;
    den[i] = ref[i] * ref[i];
  }
  return std::sqrt(trapz_unit(num) / std::max(trapz_unit(den), 1e-12));
}

inline double rel_linf(std::span<const double> pred, std::span<const double> ref) {
  if (pred.size() != ref.size() || ref.empty())
    throw ConfigError("rel_linf: arrays must share a nonzero length");
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < ref.size(); ++i) {
    num = std::max(num, std::abs(pred[i] - ref[i]));
    den = std::max(den, std::abs(ref[i]));
  }
  return num / std::max(den, 1e-12);
}

// Least-squares slope of log(y) vs log(x).
inline double loglog_slope(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw ConfigError("loglog_slope: need >= 2 points");
  const double n = static_cast<double>(x.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double lx = std::log(x[i]);
    const double ly = std::log(y[i]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

inline double mean(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

}  // namespace memlaw
