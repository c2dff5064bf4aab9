#pragma once

#include <Eigen/Dense>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "riskswitch/hamiltonian.hpp"
#include "riskswitch/market.hpp"
#include "riskswitch/semi_markov.hpp"

namespace riskswitch {

enum class PsiMode { Reduced, General };

/// Fixed-point and grid diagnostics attached to a solve.
struct SolveDiagnostics {
  int sweeps = 0;                    // Picard sweeps run (general mode)
  std::vector<double> sweep_deltas;  // sup-norm change per sweep
  double contraction = 0.0;          // median delta ratio over the last sweeps
  bool contraction_stalled = false;  // a late ratio reached 1 or more
  long long clamp_count = 0;         // age reads clamped at the top grid node
};

/// Expected-exponential surface psi^m(x, y) on a step grid, m counting
/// steps of time-to-go: psi^0 is the terminal slice, identically one, and
/// psi^M sits at time zero. Reduced mode stores the y = 0 march for a
/// single driving chain and evaluates positive ages exactly from that
/// history; general mode stores a full age tensor per joint regime and
/// interpolates multilinearly in the ages.
class PsiGrid {
 public:
  PsiMode mode() const { return mode_; }
  double dt() const { return dt_; }
  int steps() const { return steps_; }
  double horizon() const { return dt_ * steps_; }
  double theta() const { return theta_; }
  int components() const { return static_cast<int>(counts_.size()); }
  const std::vector<int>& regime_counts() const { return counts_; }
  int regime_combos() const { return combos_; }
  double y_step() const { return y_step_; }
  int y_nodes() const { return y_count_; }

  /// psi^m at joint regime xflat and one age per component. Reduced mode
  /// accepts any age >= 0; general mode clamps ages at the top grid node.
  double at_step(int m, int xflat, std::span<const double> ages) const;

  /// Calendar-time lookup, linear between step slices; t must lie in [0, T].
  double at_time(double t, int xflat, std::span<const double> ages) const;

  const SolveDiagnostics& diagnostics() const { return diag_; }

  /// Rows (m, t, state, y, psi); multi-component state and y cells join
  /// their entries with '|'. Reduced mode emits the y = 0 march.
  void write_csv(std::ostream& os) const;

  /// Little-endian binary checkpoint ("PSIG" magic). `load` re-attaches the
  /// chains the surface was solved with; reduced mode needs them to
  /// evaluate positive ages.
  void save(const std::string& path) const;
  static PsiGrid load(const std::string& path, std::vector<RegimeChain> chains);

 private:
  PsiGrid() = default;

  double reduced_eval(int m, int state, double age) const;
  double general_eval(int m, int xflat, std::span<const double> ages) const;

  PsiMode mode_ = PsiMode::Reduced;
  double dt_ = 0.0;
  int steps_ = 0;
  double theta_ = 0.0;
  std::vector<int> counts_;  // regime count per component
  int combos_ = 1;
  double y_step_ = 0.0;  // general mode age-grid spacing
  int y_count_ = 1;      // general mode nodes per component
  // Reduced: values_[m * k + i] is psi^m(i, 0). General: slice m holds
  // combos_ blocks of y_count_^components ages, first component slowest.
  std::vector<double> values_;
  std::vector<double> hhat_;  // exp of integrated h, [m * combos + x]
  std::vector<RegimeChain> chains_;
  SolveDiagnostics diag_;

  friend PsiGrid solve_reduced(const MarketSpec&, const RegimeChain&, double, double);
  friend PsiGrid solve_general(const MarketSpec&, std::span<const RegimeChain>, double, double,
                               double, double);
};

/// Implicit step-by-step quadrature march for a single driving chain whose
/// regime feeds every asset. dt must divide the horizon T. Each step solves
/// the k x k linear coupling of the age-zero unknowns exactly.
PsiGrid solve_reduced(const MarketSpec& spec, const RegimeChain& chain, double dt, double T);

/// Picard iteration on the full (step, joint regime, age tensor) grid for
/// up to three driving components. The age grid is uniform with spacing
/// y_step (a multiple of dt keeps shifted reads cheap) up to y_max; reads
/// past the top node clamp and are counted in the diagnostics.
PsiGrid solve_general(const MarketSpec& spec, std::span<const RegimeChain> chains, double dt,
                      double T, double y_step, double y_max);

/// Certainty-equivalent growth of terminal wealth: ln v - (2/theta) ln
/// psi(0, x, y). Throws std::invalid_argument when v <= 0.
double optimal_wealth(const PsiGrid& psi, double v, int xflat, std::span<const double> ages);

/// Forward-difference transport residual of the solved surface at an
/// interior point: [psi(t+eps, x, y+eps) - psi(t, x, y)]/eps plus the
/// switching flux sum_j rate_xj(y)(psi(t, j, 0) - psi(t, x, y)) and the
/// h psi source. Vanishes at rate O(eps + dt) as the grids refine.
double pde_residual(const PsiGrid& psi, const MarketSpec& spec,
                    std::span<const RegimeChain> chains, double t, int xflat,
                    std::span<const double> ages, double eps);

/// Minimizing portfolio per (time node, joint regime). The tabulation
/// consults only the market coefficients, never the switching rates.
struct ControlCurve {
  std::vector<double> times;
  std::vector<std::vector<Eigen::VectorXd>> u;  // [time index][joint regime]
};
ControlCurve optimal_control_curve(const MarketSpec& spec, std::span<const double> t_grid);

}  // namespace riskswitch
