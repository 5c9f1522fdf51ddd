#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <stdexcept>

namespace harrisdiff {

// Gauss-Legendre nodes/weights on [-1,1], computed once by Newton iteration
// on the Legendre recurrence.
template <std::size_t N>
struct GaussLegendre {
  std::array<double, N> node;
  std::array<double, N> weight;

  GaussLegendre() {
    for (std::size_t i = 0; i < N; ++i) {
      double x = std::cos(std::numbers::pi * (static_cast<double>(i) + 0.75) /
                          (static_cast<double>(N) + 0.5));
      double dp = 0.0;
      for (int it = 0; it < 100; ++it) {
        double p0 = 1.0, p1 = x;
        for (std::size_t k = 2; k <= N; ++k) {
          const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
          p0 = p1;
          p1 = p2;
        }
        dp = N * (x * p1 - p0) / (x * x - 1.0);
        const double dx = p1 / dp;
        x -= dx;
        if (std::abs(dx) < 1e-16) break;
      }
      node[i] = x;
      weight[i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
  }

  template <typename Fn>
  double integrate(Fn&& fn, double a, double b) const {
    const double c = 0.5 * (a + b), h = 0.5 * (b - a);
    double acc = 0.0;
    for (std::size_t i = 0; i < N; ++i) acc += weight[i] * fn(c + h * node[i]);
    return acc * h;
  }
};

inline const GaussLegendre<64>& gl64() {
  static const GaussLegendre<64> table;
  return table;
}

// Panel-doubling Gauss-Legendre: split [a,b] into 1,2,4,... panels until two
// successive levels agree to rel_tol. Suited to smooth integrands.
template <typename Fn>
double integrate_refined(Fn&& fn, double a, double b, double rel_tol = 1e-10,
                         int max_level = 12) {
  if (!(a <= b)) throw std::invalid_argument("integrate_refined: a > b");
  if (a == b) return 0.0;
  double prev = gl64().integrate(fn, a, b);
  for (int level = 1; level <= max_level; ++level) {
    const int panels = 1 << level;
    const double h = (b - a) / panels;
    double cur = 0.0;
    for (int p = 0; p < panels; ++p) cur += gl64().integrate(fn, a + p * h, a + (p + 1) * h);
    const double scale = std::max({std::abs(cur), std::abs(prev), 1e-300});
    if (std::abs(cur - prev) <= rel_tol * scale) return cur;
    prev = cur;
  }
  return prev;
}

namespace detail {
template <typename Fn>
double adaptive_simpson_rec(Fn& fn, double a, double b, double fa, double fm, double fb,
                            double whole, double tol, int depth) {
  const double m = 0.5 * (a + b);
  const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
  const double flm = fn(lm), frm = fn(rm);
  const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
  const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
  const double delta = left + right - whole;
  if (depth <= 0 || std::abs(delta) <= 15.0 * tol) return left + right + delta / 15.0;
  return adaptive_simpson_rec(fn, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) +
         adaptive_simpson_rec(fn, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
}
}  // namespace detail

// Adaptive Simpson with absolute tolerance; handles integrands with kinks.
template <typename Fn>
double adaptive_simpson(Fn&& fn, double a, double b, double abs_tol, int max_depth = 40) {
  if (a == b) return 0.0;
  const double fa = fn(a), fb = fn(b), fm = fn(0.5 * (a + b));
  const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
  return detail::adaptive_simpson_rec(fn, a, b, fa, fm, fb, whole, abs_tol, max_depth);
}

}  // namespace harrisdiff
