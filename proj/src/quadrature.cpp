#include "riskswitch/quadrature.hpp"

#include <map>
#include <mutex>

namespace riskswitch::quad {

namespace {

// Legendre P_n and P_n' at x via the three-term recurrence.
void legendre(int n, double x, double& p, double& dp) {
  double p0 = 1.0, p1 = x;
  for (int k = 2; k <= n; ++k) {
    double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
    p0 = p1;
    p1 = p2;
  }
  p = p1;
  dp = n * (x * p1 - p0) / (x * x - 1.0);
}

GaussLegendre build_rule(int n) {
  GaussLegendre rule;
  rule.nodes.resize(n);
  rule.weights.resize(n);
  for (int i = 0; i < (n + 1) / 2; ++i) {
    // Tricomi initial guess, then Newton; converges in < 6 steps.
    double x = std::cos(M_PI * (i + 0.75) / (n + 0.5));
    double p = 0.0, dp = 1.0;
    for (int it = 0; it < 100; ++it) {
      legendre(n, x, p, dp);
      double dx = p / dp;
      x -= dx;
      if (std::fabs(dx) < 1e-15) break;
    }
    legendre(n, x, p, dp);
    double w = 2.0 / ((1.0 - x * x) * dp * dp);
    rule.nodes[i] = -x;  // ascending order
    rule.weights[i] = w;
    rule.nodes[n - 1 - i] = x;
    rule.weights[n - 1 - i] = w;
  }
  if (n % 2 == 1) {
    double p, dp;
    legendre(n, 0.0, p, dp);
    rule.nodes[n / 2] = 0.0;
    rule.weights[n / 2] = 2.0 / (dp * dp);
  }
  return rule;
}

std::map<int, GaussLegendre> g_rules;
std::mutex g_rules_mutex;

}  // namespace

const GaussLegendre& gauss_legendre(int n) {
  std::lock_guard<std::mutex> lock(g_rules_mutex);
  auto it = g_rules.find(n);
  if (it == g_rules.end()) it = g_rules.emplace(n, build_rule(n)).first;
  return it->second;
}

}  // namespace riskswitch::quad
