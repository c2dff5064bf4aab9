#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "riskswitch/market.hpp"
#include "riskswitch/semi_markov.hpp"

namespace riskswitch {

/// A point the oracle comparison evaluates: joint regime plus ages.
struct ProbePoint {
  std::vector<int> regimes;
  std::vector<double> ages;
};

/// Parsed run configuration. Market coefficients are kept in constructor
/// form so the spec can be rebuilt with an overridden risk sensitivity for
/// theta sweeps. All indices in the file are 0-based.
struct RunConfig {
  double theta = 1.0;
  int assets = 1;
  int brownian_dim = 1;
  std::vector<Poly> rate;
  std::vector<std::vector<Poly>> drift;
  std::vector<std::vector<Eigen::MatrixXd>> vol;
  std::vector<JumpMeasure> jumps;
  std::vector<std::vector<EtaMap>> eta;
  PortfolioSet constraint;

  std::vector<RegimeChain> chains;
  std::vector<int> regime_counts;

  double horizon = 1.0;
  double dt = 0.01;
  double y_step = 0.01;
  double y_max = 2.0;
  long long n_paths = 10000;
  std::uint64_t seed = 1;

  double v0 = 1.0;
  std::vector<int> x0;
  std::vector<double> ages0;

  std::vector<ProbePoint> probes;
  std::vector<double> sweep_v, sweep_horizon, sweep_theta;

  std::string hash;  // FNV-1a of the file bytes, hex

  /// Rebuild the market tables; NaN keeps the configured theta.
  MarketSpec spec(double theta_override = std::numeric_limits<double>::quiet_NaN()) const;
};

/// Parse and structurally load a JSON config. Malformed JSON or missing or
/// mistyped fields throw ConfigParseError; values the constructors reject
/// propagate their std::invalid_argument.
struct ConfigParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

RunConfig load_config(const std::string& path);

/// FNV-1a 64-bit digest as 16 hex digits.
std::string fnv1a_hex(const std::string& bytes);

}  // namespace riskswitch
