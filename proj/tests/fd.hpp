#pragma once

// Finite-difference oracles shared by the gradient tests.

#include <algorithm>
#include <cmath>
#include <limits>

namespace lpfs::testing {

// Ridders' extrapolation of central differences. Returns the derivative of
// f at x; `h` is the initial (largest) step.
template <class F>
double ridders_derivative(F&& f, double x, double h) {
  constexpr int kSize = 10;
  constexpr double kShrink = 1.4;
  constexpr double kShrink2 = kShrink * kShrink;
  double a[kSize][kSize];
  a[0][0] = (f(x + h) - f(x - h)) / (2.0 * h);
  double best = a[0][0];
  double err = std::numeric_limits<double>::max();
  for (int i = 1; i < kSize; ++i) {
    h /= kShrink;
    a[0][i] = (f(x + h) - f(x - h)) / (2.0 * h);
    double fac = kShrink2;
    for (int j = 1; j <= i; ++j) {
      a[j][i] = (a[j - 1][i] * fac - a[j - 1][i - 1]) / (fac - 1.0);
      fac *= kShrink2;
      const double e = std::max(std::fabs(a[j][i] - a[j - 1][i]), std::fabs(a[j][i] - a[j - 1][i - 1]));
      if (e <= err) {
        err = e;
        best = a[j][i];
      }
    }
    if (std::fabs(a[i][i] - a[i - 1][i - 1]) >= 2.0 * err) break;
  }
  return best;
}

// |a - b| / max(|a|, |b|, floor). Differences of O(1) doubles cannot resolve
// slopes much below 1e-8 to five digits, so smaller values compare against
// the floor instead.
inline double relative_error(double a, double b, double floor = 1e-8) {
  const double scale = std::max({std::fabs(a), std::fabs(b), floor});
  return std::fabs(a - b) / scale;
}

}  // namespace lpfs::testing
