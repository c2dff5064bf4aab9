#pragma once

#include <cmath>
#include <concepts>
#include <vector>

namespace riskswitch::quad {

/// Nodes and weights on [-1, 1].
struct GaussLegendre {
  std::vector<double> nodes;
  std::vector<double> weights;
};

/// Rule of the given order, computed once by Newton iteration on the
/// Legendre recurrence and cached. Nodes are accurate to ~1 ulp.
const GaussLegendre& gauss_legendre(int n);

/// Fixed-order Gauss-Legendre integral of f over [a, b].
template <std::invocable<double> F>
double integrate_gl(F&& f, double a, double b, int n = 64) {
  const GaussLegendre& rule = gauss_legendre(n);
  const double mid = 0.5 * (a + b);
  const double hw = 0.5 * (b - a);
  double s = 0.0;
  for (int i = 0; i < n; ++i) s += rule.weights[i] * f(mid + hw * rule.nodes[i]);
  return hw * s;
}

namespace detail {

template <class F>
double simpson_step(F& f, double a, double fa, double b, double fb, double m, double fm,
                    double whole, double eps, int depth) {
  const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
  const double flm = f(lm), frm = f(rm);
  const double h = b - a;
  const double left = h / 12.0 * (fa + 4.0 * flm + fm);
  const double right = h / 12.0 * (fm + 4.0 * frm + fb);
  const double delta = left + right - whole;
  if (depth <= 0 || std::fabs(delta) <= 15.0 * eps) return left + right + delta / 15.0;
  return simpson_step(f, a, fa, m, fm, lm, flm, left, 0.5 * eps, depth - 1) +
         simpson_step(f, m, fm, b, fb, rm, frm, right, 0.5 * eps, depth - 1);
}

}  // namespace detail

/// Adaptive Simpson with Richardson acceptance. The tolerance is
/// max(abs_tol, rel_tol * |coarse estimate|); recursion depth is bounded, and
/// on hitting the bound the local estimate is accepted as is.
template <std::invocable<double> F>
double adaptive_simpson(F&& f, double a, double b, double rel_tol = 1e-9, double abs_tol = 0.0,
                        int max_depth = 48) {
  if (a == b) return 0.0;
  const double m = 0.5 * (a + b);
  const double fa = f(a), fb = f(b), fm = f(m);
  const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
  const double eps = std::fmax(abs_tol, rel_tol * std::fabs(whole));
  return detail::simpson_step(f, a, fa, b, fb, m, fm, whole,
                              eps > 0.0 ? eps : 1e-300, max_depth);
}

/// Composite Simpson with a fixed even number of panels; used where the
/// integrand is evaluated on a shared cache and adaptivity is not wanted.
template <std::invocable<double> F>
double composite_simpson(F&& f, double a, double b, int panels) {
  if (panels < 2) panels = 2;
  if (panels % 2 != 0) ++panels;
  const double h = (b - a) / panels;
  double s = f(a) + f(b);
  for (int i = 1; i < panels; ++i) s += f(a + i * h) * (i % 2 == 1 ? 4.0 : 2.0);
  return s * h / 3.0;
}

}  // namespace riskswitch::quad
