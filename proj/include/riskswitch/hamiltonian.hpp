#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <map>
#include <mutex>
#include <utility>

#include "riskswitch/market.hpp"

namespace riskswitch {

struct HamiltonianResult {
  double value = 0.0;            // h(t,x) = inf_u g(t,x,u)
  Eigen::VectorXd minimizer;     // argmin over the admissible set
  int iterations = 0;
  double grad_norm = 0.0;        // projected-gradient norm at the minimizer
  bool converged = false;
};

/// Risk-sensitivity objective at portfolio fraction u:
///
///   g(t,x,u) = -q [r + b.u] + q(q+1)/2 [u.a u]
///            + sum_j int ((1 + w_j(z))^{-q} - 1) nu_j(dz),   q = theta/2,
///
/// with w_j(z) = sum_l u_l eta_lj(z). Strictly convex in u (the quadratic
/// coefficient is q(q+1)/2 * a > 0); continuous densities integrate on a
/// 64-node Gauss-Legendre rule, atoms sum exactly. Throws std::domain_error
/// if some 1 + w_j(z) fails the jump-safety margin.
double g_objective(const MarketSpec& spec, double t, int xflat, const Eigen::VectorXd& u);

/// Minimize g over the admissible set. One asset: the feasible interval is
/// assembled exactly from the box, the total cap, and the affine jump-safety
/// cuts, then golden-section plus a Newton polish. Several assets: projected
/// Newton on the box with central-difference derivatives (step 1e-5 scaled)
/// and a ratio test against the affine cuts; projected-gradient tolerance
/// 1e-9, at most 200 iterations.
HamiltonianResult minimize_g(const MarketSpec& spec, double t, int xflat);

/// Analytic lower bound on h from the coefficient bound M, the ellipticity
/// floor, and the total jump intensity; h >= bound for every (t,x).
double h_lower_bound(const MarketSpec& spec, double T);

/// Memoizing wrapper: h and the minimizer per (t,x), keyed by the exact time
/// bits. Values are pure functions of the key, so concurrent fills agree.
class HamiltonianTable {
 public:
  explicit HamiltonianTable(const MarketSpec& spec) : spec_(&spec) {}
  const HamiltonianResult& at(double t, int xflat) const;
  const MarketSpec& spec() const { return *spec_; }

 private:
  const MarketSpec* spec_;
  mutable std::map<std::pair<std::uint64_t, int>, HamiltonianResult> cache_;
  mutable std::mutex mutex_;
};

/// H(t1,t2,x) = int_t1^t2 h(s,x) ds; exact single product when the market is
/// time-homogeneous, composite Simpson with `panels` panels otherwise.
double big_h(const HamiltonianTable& table, double t1, double t2, int xflat, int panels = 64);

/// Closed form of the jump term for one asset with eta(z) = z against a
/// uniform measure of mass w on [a,b]:
///
///   w * [ ((1+ub)^{1-q} - (1+ua)^{1-q}) / (u (1-q) (b-a)) - 1 ]
///
/// with the removable singularities at u -> 0 and q = 1 (theta = 2) handled
/// explicitly. Used as an independent cross-check of the quadrature path.
double uniform_jump_term(double u, double theta, double a, double b, double w);

}  // namespace riskswitch
