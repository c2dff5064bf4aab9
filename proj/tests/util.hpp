#pragma once

// Shared fixtures for tests: the canonical three-regime single-asset system
// with age-weighted switching and uniform jump marks on [-0.4, 0.4].

#include <Eigen/Dense>
#include <vector>

#include "riskswitch/market.hpp"
#include "riskswitch/semi_markov.hpp"

namespace testutil {

inline Eigen::MatrixXd reference_switch_matrix() {
  Eigen::MatrixXd p(3, 3);
  p << 0.0, 2.0 / 3.0, 1.0 / 3.0,
       0.5, 0.0, 0.5,
       1.0 / 3.0, 2.0 / 3.0, 0.0;
  return p;
}

inline riskswitch::RegimeChain reference_chain() {
  return riskswitch::RegimeChain::age_weighted(reference_switch_matrix());
}

/// Single risky asset, one brownian factor, one jump source; regime-keyed
/// coefficients (r, mu, sigma) = (.2,.3,.2), (.5,.6,.4), (.7,.8,.3).
inline riskswitch::MarketSpec reference_market(double theta = 1.0) {
  using namespace riskswitch;
  std::vector<Poly> r{{{0.2}}, {{0.5}}, {{0.7}}};
  std::vector<std::vector<Poly>> mu{{{{0.3}}}, {{{0.6}}}, {{{0.8}}}};
  std::vector<std::vector<Eigen::MatrixXd>> sigma;
  for (double s : {0.2, 0.4, 0.3})
    sigma.push_back({Eigen::MatrixXd::Constant(1, 1, s)});
  JumpMeasure nu;
  nu.lo = -0.4;
  nu.hi = 0.4;
  nu.mass = 1.0;
  PortfolioSet box;
  box.lower = Eigen::VectorXd::Constant(1, -5.0);
  box.upper = Eigen::VectorXd::Constant(1, 5.0);
  return MarketSpec(1, 1, theta, {3}, std::move(r), std::move(mu), std::move(sigma), {nu},
                    {{EtaMap{1.0, 0.0}}}, box);
}

/// Same coefficients, no jump source: pure diffusion with regime switching.
inline riskswitch::MarketSpec diffusion_market(double theta = 1.0) {
  using namespace riskswitch;
  std::vector<Poly> r{{{0.2}}, {{0.5}}, {{0.7}}};
  std::vector<std::vector<Poly>> mu{{{{0.3}}}, {{{0.6}}}, {{{0.8}}}};
  std::vector<std::vector<Eigen::MatrixXd>> sigma;
  for (double s : {0.2, 0.4, 0.3})
    sigma.push_back({Eigen::MatrixXd::Constant(1, 1, s)});
  PortfolioSet box;
  box.lower = Eigen::VectorXd::Constant(1, -5.0);
  box.upper = Eigen::VectorXd::Constant(1, 5.0);
  return MarketSpec(1, 1, theta, {3}, std::move(r), std::move(mu), std::move(sigma), {}, {{}},
                    box);
}

}  // namespace testutil
