#pragma once

#include <Eigen/Dense>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "riskswitch/rng.hpp"
#include "riskswitch/semi_markov.hpp"

namespace riskswitch {

/// Scalar polynomial in t, c[0] + c[1] t + ...; degree 0 covers the
/// time-homogeneous case.
struct Poly {
  std::vector<double> c{0.0};
  double at(double t) const {
    double v = 0.0;
    for (std::size_t d = c.size(); d-- > 0;) v = v * t + c[d];
    return v;
  }
  bool constant() const { return c.size() <= 1; }
};

/// Finite jump-size measure: optional uniform density of the given total
/// mass on [lo, hi], plus point atoms. Marks are asset-jump sizes z.
struct JumpMeasure {
  double lo = 0.0, hi = 0.0, mass = 0.0;
  std::vector<double> atom_z, atom_w;
  bool has_density() const { return mass > 0.0; }
  double total_mass() const {
    double m = mass;
    for (double w : atom_w) m += w;
    return m;
  }
};

/// Jump response of one asset to one source, affine in the mark:
/// eta(z) = shift + slope * z.
struct EtaMap {
  double slope = 0.0, shift = 0.0;
  double at(double z) const { return shift + slope * z; }
};

/// Admissible-fraction set: a box containing the origin, an optional cap on
/// the total invested fraction, and the jump-safety margin delta demanding
/// 1 + sum_l u_l eta_lj(z) >= delta for every source j and mark z.
struct PortfolioSet {
  Eigen::VectorXd lower, upper;
  double max_total = std::numeric_limits<double>::infinity();
  double delta = 1e-3;
};

/// Market coefficient tables keyed by the joint regime of the driving
/// chains, polynomial in time. `regime_counts` gives the state count of
/// each chain; coefficient arrays are indexed by the row-major flattening
/// of the joint regime vector (first chain slowest).
class MarketSpec {
 public:
  MarketSpec(int assets, int brownian_dim, double theta, std::vector<int> regime_counts,
             std::vector<Poly> rate, std::vector<std::vector<Poly>> drift,
             std::vector<std::vector<Eigen::MatrixXd>> vol_coeffs,
             std::vector<JumpMeasure> measures, std::vector<std::vector<EtaMap>> eta,
             PortfolioSet constraint);

  int assets() const { return n_; }
  int brownian_dim() const { return m1_; }
  int jump_sources() const { return static_cast<int>(measures_.size()); }
  double theta() const { return theta_; }

  const std::vector<int>& regime_counts() const { return regime_counts_; }
  int regime_combos() const { return combos_; }
  int flatten(std::span<const int> regimes) const;
  std::vector<int> unflatten(int flat) const;

  double rate(double t, int xflat) const;
  Eigen::VectorXd drift(double t, int xflat) const;
  Eigen::VectorXd excess(double t, int xflat) const;     // drift - rate * 1
  Eigen::MatrixXd vol(double t, int xflat) const;        // sigma, n x m1
  Eigen::MatrixXd diffusion(double t, int xflat) const;  // sigma sigma^T

  const JumpMeasure& measure(int j) const { return measures_[j]; }
  const EtaMap& eta(int l, int j) const { return eta_[l][j]; }

  const PortfolioSet& constraint() const { return constraint_; }
  bool time_homogeneous() const { return homogeneous_; }

  /// max over [0,T] x regimes of |r|, |b|_inf, |a|_inf; scale bound used by
  /// the Hamiltonian lower-bound check.
  double coefficient_bound(double T) const;
  /// min eigenvalue of the diffusion matrix over [0,T] x regimes.
  double min_ellipticity(double T) const;

 private:
  int n_, m1_, combos_;
  double theta_;
  std::vector<int> regime_counts_;
  std::vector<Poly> r_;
  std::vector<std::vector<Poly>> mu_;
  std::vector<std::vector<Eigen::MatrixXd>> sigma_;  // per combo: coefficient matrices by power
  std::vector<JumpMeasure> measures_;
  std::vector<std::vector<EtaMap>> eta_;  // [asset][source]
  PortfolioSet constraint_;
  bool homogeneous_;
};

/// min over the support of nu_j of 1 + sum_l u_l eta_lj(z); affine response
/// makes interval endpoints and atoms exact.
double worst_jump_factor(const MarketSpec& spec, const Eigen::VectorXd& u, int j);

/// u in the box, under the total cap, and jump-safe with margin delta.
bool admissible(const MarketSpec& spec, const Eigen::VectorXd& u);

/// Draw one mark from the normalized measure: atom selection is exact, the
/// continuous part inverts a 4096-knot cdf table (exact for uniform density).
double sample_mark(const JumpMeasure& m, PathRng& rng);

struct ValidationIssue {
  std::string check;
  bool pass = true;
  std::string message;
};

/// Structural checks over a horizon: square-integrable jump responses
/// (affine + finite measure, with eta > -1 on supports), uniform ellipticity
/// of sigma sigma^T, brownian dimension >= assets, embedded-chain
/// irreducibility, origin-containing constraint set, measure finiteness.
std::vector<ValidationIssue> validate(const MarketSpec& spec,
                                      std::span<const RegimeChain> chains, double T);

}  // namespace riskswitch
