#pragma once

#include <Eigen/Dense>
#include <optional>
#include <span>
#include <vector>

#include "riskswitch/rng.hpp"

namespace riskswitch {

/// Joint configuration of all driving chains: regime index and elapsed
/// holding age per component.
struct ChainState {
  std::vector<int> regime;
  std::vector<double> age;
};

/// One holding interval of a simulated joint path. `state` is the
/// configuration at t_begin; the component `jump_component` switches to
/// `jump_target` at t_end (-1/-1 when the horizon cuts the interval first).
struct PathSegment {
  double t_begin = 0.0;
  double t_end = 0.0;
  ChainState state;
  int jump_component = -1;
  int jump_target = -1;
};

/// Age-dependent semi-Markov regime process. Transition rates lambda_ij(y)
/// (i != j) determine the per-state holding-time law through the cumulative
/// hazard Lambda_i(y) = int_0^y sum_{j!=i} lambda_ij(v) dv:
///
///   holding cdf   F(y|i) = 1 - exp(-Lambda_i(y))
///   holding pdf   f(y|i) = (sum_{j!=i} lambda_ij(y)) exp(-Lambda_i(y))
///   switch law    p_ij(y) = lambda_ij(y) / sum_{j'!=i} lambda_ij'(y)
///
/// Rates come from a registered closed-form family or from per-pair tables
/// on a uniform age grid with monotone-cubic (Fritsch-Carlson) interpolation.
/// All survival ratios are computed through hazard differences, never through
/// 1-F quotients, so large ages stay stable.
class RegimeChain {
 public:
  /// Constant rates: any square matrix with nonnegative off-diagonal entries
  /// and at least one positive entry per row (zero diagonal enforced).
  static RegimeChain constant(const Eigen::MatrixXd& rates);

  /// lambda_ij(y) = scale_i * y/(1+y) * p_ij. Holding density per unit scale
  /// is y e^{-y}; cumulative hazard scale_i * (y - ln(1+y)).
  static RegimeChain age_weighted(const Eigen::MatrixXd& switch_matrix,
                                  std::vector<double> scale = {});

  /// lambda_ij(y) = scale_i * (y - ln(1+y)) * p_ij. Companion reading of the
  /// age_weighted family with the cumulative hazard taken literally as the
  /// rate; cumulative hazard scale_i * (y^2/2 - (1+y)ln(1+y) + y).
  static RegimeChain age_weighted_literal(const Eigen::MatrixXd& switch_matrix,
                                          std::vector<double> scale = {});

  /// Total hazard of state i is the polynomial sum_d coeffs[i][d] y^d
  /// (nonnegative on the validated range, positive somewhere); switching
  /// splits by the constant row-stochastic matrix.
  static RegimeChain polynomial(std::vector<std::vector<double>> coeffs,
                                const Eigen::MatrixXd& switch_matrix);

  /// Per-pair rate tables on the uniform grid y = 0, dy, ..., dy*(G-1);
  /// table[g](i,j) = lambda_ij(g*dy). Monotone-cubic in between, constant
  /// beyond the last node.
  static RegimeChain tabulated(double dy, std::vector<Eigen::MatrixXd> table);

  /// Single absorbing state with zero hazard: never jumps. Degenerate but
  /// legal; supports frozen-regime checks.
  static RegimeChain frozen();

  int states() const { return k_; }

  double rate(int i, int j, double y) const;
  double total_rate(int i, double y) const;
  double cumulative_hazard(int i, double y) const;

  double survival(int i, double y) const;     // 1 - F(y|i)
  double holding_cdf(int i, double y) const;  // F(y|i)
  double holding_pdf(int i, double y) const;  // f(y|i)

  /// exp(-(Lambda(age+s) - Lambda(age))): survival of the residual life.
  double survival_ratio(int i, double age, double s) const;

  /// P(residual <= s | held for `age`), via hazard differences.
  double residual_cdf(int i, double age, double s) const;

  /// Inverse-transform draw of the residual holding time given `age`:
  /// solves Lambda(age+s) = Lambda(age) + E, E ~ Exp(1), by bracket doubling
  /// and bisection to 1e-12*(1+s). Returns +infinity when state i has zero
  /// hazard; throws if the hazard is bounded (Lambda plateaus).
  double sample_residual(int i, double age, PathRng& rng) const;

  /// p_ij(y); at ages where all rates vanish, the right limit of the ratio
  /// (for separable families the constant switch row).
  double switch_prob(int i, int j, double y) const;
  int sample_switch(int i, double y, PathRng& rng) const;

  /// Embedded jump matrix p_hat_ij = int_0^inf p_ij(y) f(y|i) dy.
  Eigen::MatrixXd embedded_matrix() const;

  bool zero_hazard(int i) const;
  bool age_dependent_switching() const { return family_ == Family::Tabulated; }

  /// Smallest age with joint survival below the tail cutoff; doubling search.
  double survival_horizon(int i, double age, double tail = 1e-12) const;

 private:
  enum class Family { Constant, AgeWeighted, AgeWeightedLiteral, Polynomial, Tabulated };

  RegimeChain() = default;
  static RegimeChain separable(Family fam, const Eigen::MatrixXd& switch_matrix,
                               std::vector<double> scale);
  double hazard_shape(double y) const;          // family shape before per-state scale
  double hazard_shape_integral(double y) const; // its exact antiderivative at y
  void build_tabulated_cache();

  int k_ = 0;
  Family family_ = Family::Constant;
  Eigen::MatrixXd p_;                        // constant switch matrix (separable families)
  std::vector<double> scale_;                // per-state hazard scale
  std::vector<std::vector<double>> poly_;    // Polynomial: per-state coefficients

  // Tabulated representation
  double tab_dy_ = 0.0;
  std::vector<Eigen::MatrixXd> tab_;         // node values
  std::vector<Eigen::MatrixXd> tab_slope_;   // monotone-cubic node slopes
  std::vector<std::vector<double>> tab_cum_; // per state: Lambda at nodes
};

/// Strong connectivity of a nonnegative matrix read as adjacency (> tol).
bool irreducible(const Eigen::MatrixXd& m, double tol = 1e-12);

// Joint quantities for independent components. Ages and regimes are taken
// from `state`; chains.size() == state.regime.size().

/// Product over components of the residual survival at horizon s.
double joint_survival_ratio(std::span<const RegimeChain> chains, const ChainState& state,
                            double s);

/// Distribution of which component jumps first. Renormalized after the
/// quadrature; `raw_sum` (if given) receives the un-normalized total, which
/// equals 1 up to quadrature error. Throws when no component can ever jump.
std::vector<double> next_component_prob(std::span<const RegimeChain> chains,
                                        const ChainState& state, double* raw_sum = nullptr);

/// CDF of the first-jump time conditional on component l jumping first.
double conditional_jump_cdf(std::span<const RegimeChain> chains, const ChainState& state, int l,
                            double r);

/// Density of the first-jump time conditional on component l jumping first.
double conditional_jump_pdf(std::span<const RegimeChain> chains, const ChainState& state, int l,
                            double r);

/// Simulate the joint chain over [t0, T]. Segment boundaries are the
/// component jump epochs; residual clocks are kept and shifted between
/// events (exact for age-dependent hazards by conditional consistency).
std::vector<PathSegment> simulate_chain(std::span<const RegimeChain> chains, ChainState state,
                                        double t0, double T, PathRng& rng);

}  // namespace riskswitch
