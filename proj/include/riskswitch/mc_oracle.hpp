#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "riskswitch/market.hpp"
#include "riskswitch/semi_markov.hpp"
#include "riskswitch/volterra.hpp"

namespace riskswitch {

/// Sample mean with its standard error (sample std / sqrt(n)). Bitwise
/// reproducible for a fixed seed regardless of the thread count: every path
/// owns a counter-based stream keyed by (seed, path index) and the reduction
/// runs over a fixed pairwise tree.
struct McEstimate {
  double mean = 0.0;
  double std_error = 0.0;
  long long n_paths = 0;
  std::uint64_t seed = 0;
};

/// {"mean": ..., "se": ..., "n": ..., "seed": ...}
std::string to_json(const McEstimate& e);

/// One holding interval of the joint regime process along a simulated path.
struct RegimeSegment {
  double t_begin = 0.0;
  double t_end = 0.0;
  int xflat = 0;
};

/// A simulated wealth trajectory. `times` is strictly increasing from 0 to
/// the horizon and contains every regime-switch and asset-jump epoch (plus a
/// uniform reporting grid); `values[i]` is the wealth at `times[i]`, after
/// any jump landing there. All values are strictly positive: the jump-safety
/// margin delta keeps every multiplicative factor above zero.
struct WealthPath {
  std::vector<double> times;
  std::vector<double> values;
  std::vector<RegimeSegment> segments;

  /// Columns t,v,state with state the flat regime index in force.
  void write_csv(std::ostream& os) const;
};

/// Path-expectation estimate of the reduced value factor,
///
///   psi(t, x, y) = E[ exp( int_t^T h(s, X_s) ds ) | X_t = x, ages = y ],
///
/// by simulating the joint regime chain and accumulating the integral
/// exactly on each holding interval (time-homogeneous coefficients) or by
/// composite Simpson (time-dependent ones). Independent of the integral-
/// equation solver except for sharing the Hamiltonian minimizer.
/// Requires n_paths >= 100.
McEstimate estimate_psi(const MarketSpec& spec, std::span<const RegimeChain> chains, double t,
                        double horizon, int xflat, std::span<const double> ages,
                        long long n_paths, std::uint64_t seed);

/// Antithetic variant: each path pairs the plain stream with its mirrored
/// companion and averages the two exponentials. Same estimand, lower
/// variance; kept separate as a debugging cross-check.
McEstimate estimate_psi_antithetic(const MarketSpec& spec, std::span<const RegimeChain> chains,
                                   double t, double horizon, int xflat,
                                   std::span<const double> ages, long long n_paths,
                                   std::uint64_t seed);

/// Feedback control table lookup: row of the most recent time node <= t
/// (the first row before any node), i.e. piecewise-constant values held from
/// each node onward. Returns the vector for flat regime x.
const Eigen::VectorXd& control_at(const ControlCurve& control, double t, int xflat);

/// Constant feedback table: the same fraction vector at every time and in
/// every regime.
ControlCurve constant_control(const MarketSpec& spec, const Eigen::VectorXd& u);

/// Simulate one wealth path on [0, horizon] under a feedback control, by the
/// closed-form solution on each interval where the regime and the control
/// row are constant: the drift and quadratic terms integrate in closed form
/// (quadrature when coefficients depend on time), the Brownian term is one
/// Gaussian increment with the interval's variance, and asset jumps arrive
/// as compound Poisson events (total-mass exponential interarrivals, marks
/// from the normalized measure) applying the factor 1 + u . eta(z). No Euler
/// discretization anywhere, so the law at every grid time is exact.
/// `n_steps` only adds a uniform reporting grid. Throws std::domain_error if
/// the control leaves the admissible set at any queried (t, x).
WealthPath simulate_wealth(const MarketSpec& spec, std::span<const RegimeChain> chains,
                           const ChainState& start, double v0, const ControlCurve& control,
                           double horizon, int n_steps, std::uint64_t seed);

/// Mean and standard error of the terminal cost (V_T)^(-theta/2) under the
/// given feedback control.
McEstimate estimate_cost(const MarketSpec& spec, std::span<const RegimeChain> chains,
                         const ChainState& start, double v0, const ControlCurve& control,
                         double horizon, long long n_paths, std::uint64_t seed);

/// Cost comparison of the tabulated optimal control against rival controls.
/// `consistent[i]` records whether rival i failed to beat the optimum by
/// more than twice the combined standard error; the minimization property
/// says every admissible rival must be consistent up to noise. All runs
/// share the seed, so the comparison uses common random numbers.
struct SuboptimalityReport {
  McEstimate optimal;
  std::vector<McEstimate> rivals;
  std::vector<bool> consistent;
  bool all_consistent = true;
};

SuboptimalityReport verify_suboptimality(const MarketSpec& spec,
                                         std::span<const RegimeChain> chains,
                                         const ChainState& start, double v0,
                                         std::span<const ControlCurve> rivals, double horizon,
                                         long long n_paths, std::uint64_t seed);

}  // namespace riskswitch
