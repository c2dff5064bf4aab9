// Path-simulation tests against closed forms: frozen-regime exponentials,
// the riskless account, lognormal terminal moments, and the identity
// E[(V_T)^(-theta/2)] = v0^(-theta/2) exp(T g(u)) for any constant control
// in a frozen regime, which exercises drift, diffusion, and jump factors in
// one formula. Cross-checks against the integral-equation solver close the
// loop in both directions.

#include <cmath>
#include <cstdlib>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "doctest.h"
#include "riskswitch/hamiltonian.hpp"
#include "riskswitch/mc_oracle.hpp"
#include "riskswitch/rng.hpp"
#include "riskswitch/semi_markov.hpp"
#include "riskswitch/volterra.hpp"
#include "util.hpp"

using namespace riskswitch;

namespace {

MarketSpec frozen_spec(bool with_jumps, double theta = 1.0) {
  std::vector<Poly> r{Poly{{0.2}}};
  std::vector<std::vector<Poly>> mu{{Poly{{0.3}}}};
  std::vector<std::vector<Eigen::MatrixXd>> sg{{Eigen::MatrixXd::Constant(1, 1, 0.2)}};
  PortfolioSet box;
  box.lower = Eigen::VectorXd::Constant(1, -5.0);
  box.upper = Eigen::VectorXd::Constant(1, 5.0);
  std::vector<JumpMeasure> measures;
  std::vector<std::vector<EtaMap>> eta{{}};
  if (with_jumps) {
    JumpMeasure m;
    m.lo = -0.4;
    m.hi = 0.4;
    m.mass = 1.0;
    measures.push_back(m);
    eta = {{EtaMap{1.0, 0.0}}};
  }
  return MarketSpec(1, 1, theta, {1}, r, mu, sg, measures, eta, box);
}

const ChainState kStart0{{0}, {0.0}};

}  // namespace

TEST_SUITE("mc_oracle") {

TEST_CASE("frozen regime collapses every path to one exponential") {
  const MarketSpec spec = frozen_spec(false);
  const RegimeChain chains[1] = {RegimeChain::frozen()};
  const double ages[1] = {0.0};
  const double h = minimize_g(spec, 0.0, 0).value;
  const McEstimate e = estimate_psi(spec, chains, 0.25, 1.0, 0, ages, 200, 7);
  CHECK(e.mean == doctest::Approx(std::exp(0.75 * h)).epsilon(1e-14));
  CHECK(e.std_error <= 1e-15);  // identical paths; only summation rounding
  CHECK(e.n_paths == 200);
  CHECK(e.seed == 7);

  const McEstimate anti = estimate_psi_antithetic(spec, chains, 0.25, 1.0, 0, ages, 200, 7);
  CHECK(anti.mean == doctest::Approx(e.mean).epsilon(1e-14));

  const McEstimate flat = estimate_psi(spec, chains, 1.0, 1.0, 0, ages, 100, 7);
  CHECK(flat.mean == 1.0);
  CHECK(flat.std_error == 0.0);
}

TEST_CASE("switching estimate agrees with the integral-equation solver") {
  const MarketSpec spec = testutil::reference_market();
  const RegimeChain chain = testutil::reference_chain();
  const RegimeChain chains[1] = {chain};
  const PsiGrid psi = solve_reduced(spec, chain, 0.002, 1.0);
  for (int i = 0; i < 3; ++i)
    for (double y : {0.0, 0.5}) {
      const double ages[1] = {y};
      const McEstimate e = estimate_psi(spec, chains, 0.0, 1.0, i, ages, 20000, 20260815);
      const double ref = psi.at_step(psi.steps(), i, ages);
      CHECK(std::fabs(e.mean - ref) <= 3.0 * e.std_error);
      CHECK(e.std_error > 0.0);
      CHECK(e.mean > 0.0);
      CHECK(e.mean <= 1.0 + e.std_error);
    }
}

TEST_CASE("fixed seeds reproduce bitwise, independent of the thread budget") {
  const MarketSpec spec = testutil::reference_market();
  const RegimeChain chains[1] = {testutil::reference_chain()};
  const double ages[1] = {0.0};
  const McEstimate a = estimate_psi(spec, chains, 0.0, 1.0, 0, ages, 5000, 42);
  const McEstimate b = estimate_psi(spec, chains, 0.0, 1.0, 0, ages, 5000, 42);
  CHECK(a.mean == b.mean);
  CHECK(a.std_error == b.std_error);

  const char* old = std::getenv("RISKSWITCH_THREADS");
  const std::string saved = old ? old : "";
  setenv("RISKSWITCH_THREADS", "4", 1);
  const McEstimate c = estimate_psi(spec, chains, 0.0, 1.0, 0, ages, 5000, 42);
  if (old)
    setenv("RISKSWITCH_THREADS", saved.c_str(), 1);
  else
    unsetenv("RISKSWITCH_THREADS");
  CHECK(c.mean == a.mean);
  CHECK(c.std_error == a.std_error);

  const McEstimate d = estimate_psi(spec, chains, 0.0, 1.0, 0, ages, 5000, 43);
  CHECK(d.mean != a.mean);
}

TEST_CASE("standard error shrinks like the square root of the path count") {
  const MarketSpec spec = testutil::reference_market();
  const RegimeChain chains[1] = {testutil::reference_chain()};
  const double ages[1] = {0.0};
  std::vector<double> scaled;
  for (long long n : {1000LL, 10000LL, 100000LL}) {
    const McEstimate e = estimate_psi(spec, chains, 0.0, 1.0, 1, ages, n, 99);
    scaled.push_back(e.std_error * std::sqrt(static_cast<double>(n)));
  }
  for (double s : scaled) {
    CHECK(s / scaled[0] >= 0.8);
    CHECK(s / scaled[0] <= 1.2);
  }
}

TEST_CASE("antithetic variant matches the plain estimator") {
  const MarketSpec spec = testutil::reference_market();
  const RegimeChain chains[1] = {testutil::reference_chain()};
  const double ages[1] = {0.0};
  const McEstimate plain = estimate_psi(spec, chains, 0.0, 1.0, 0, ages, 20000, 5);
  const McEstimate anti = estimate_psi_antithetic(spec, chains, 0.0, 1.0, 0, ages, 20000, 5);
  const double combined = std::hypot(plain.std_error, anti.std_error);
  CHECK(std::fabs(plain.mean - anti.mean) <= 3.0 * combined);
}

TEST_CASE("zero control grows wealth at the riskless rate exactly") {
  const MarketSpec spec = frozen_spec(true);  // jump sources present, u=0 ignores them
  const RegimeChain chains[1] = {RegimeChain::frozen()};
  const ControlCurve u0 = constant_control(spec, Eigen::VectorXd::Zero(1));
  const WealthPath path = simulate_wealth(spec, chains, kStart0, 2.0, u0, 1.0, 8, 11);
  CHECK(path.values.back() == doctest::Approx(2.0 * std::exp(0.2)).epsilon(1e-14));
  CHECK(path.values.front() == 2.0);
  REQUIRE(path.times.size() >= 9);  // reporting grid plus any jump epochs
  for (std::size_t i = 1; i < path.times.size(); ++i) {
    CHECK(path.times[i] > path.times[i - 1]);
    CHECK(path.values[i] > 0.0);
  }
  CHECK(path.times.front() == 0.0);
  CHECK(path.times.back() == 1.0);
  REQUIRE(path.segments.size() == 1);
  CHECK(path.segments[0].t_begin == 0.0);
  CHECK(path.segments[0].t_end == 1.0);
}

TEST_CASE("terminal log-wealth is Gaussian with the closed-form moments") {
  std::vector<Poly> r{Poly{{0.5}}};
  std::vector<std::vector<Poly>> mu{{Poly{{0.6}}}};
  std::vector<std::vector<Eigen::MatrixXd>> sg{{Eigen::MatrixXd::Constant(1, 1, 0.4)}};
  PortfolioSet box;
  box.lower = Eigen::VectorXd::Constant(1, -5.0);
  box.upper = Eigen::VectorXd::Constant(1, 5.0);
  const MarketSpec spec(1, 1, 1.0, {1}, r, mu, sg, {}, {{}}, box);
  const RegimeChain chains[1] = {RegimeChain::frozen()};
  const ControlCurve tab = constant_control(spec, Eigen::VectorXd::Constant(1, 0.7));

  const double a = 0.16, b = 0.1;
  const double want_mean = 0.5 + 0.7 * b - 0.5 * 0.49 * a;
  const double want_var = 0.49 * a;
  const long long n = 20000;
  double s1 = 0.0, s2 = 0.0;
  for (long long p = 0; p < n; ++p) {
    const WealthPath path = simulate_wealth(spec, chains, kStart0, 1.0, tab, 1.0, 1, 300 + p);
    const double lv = std::log(path.values.back());
    s1 += lv;
    s2 += lv * lv;
  }
  const double m = s1 / n;
  const double v = (s2 - n * m * m) / (n - 1);
  CHECK(std::fabs(m - want_mean) <= 3.0 * std::sqrt(v / n));
  // sample variance of a Gaussian has relative sd sqrt(2/n)
  CHECK(std::fabs(v / want_var - 1.0) <= 4.0 * std::sqrt(2.0 / n));
}

TEST_CASE("terminal cost of any constant control matches exp(T g(u))") {
  // frozen regime with jumps: ln V_T has independent Gaussian and compound
  // Poisson parts, so E[(V_T)^(-q)] factorizes into exactly exp(T g(u))
  const MarketSpec spec = frozen_spec(true, 1.0);
  const RegimeChain chains[1] = {RegimeChain::frozen()};
  for (double u : {0.0, 0.9, 1.8, -1.2}) {
    const Eigen::VectorXd uv = Eigen::VectorXd::Constant(1, u);
    const ControlCurve tab = constant_control(spec, uv);
    const McEstimate cost = estimate_cost(spec, chains, kStart0, 1.3, tab, 1.0, 20000, 613);
    const double want = std::pow(1.3, -0.5) * std::exp(g_objective(spec, 0.0, 0, uv));
    if (u == 0.0)
      CHECK(cost.mean == doctest::Approx(want).epsilon(1e-13));  // deterministic path
    else
      CHECK(std::fabs(cost.mean - want) <= 3.0 * cost.std_error);
  }
}

TEST_CASE("optimal control attains the solver value") {
  const MarketSpec spec = testutil::reference_market();
  const RegimeChain chain = testutil::reference_chain();
  const RegimeChain chains[1] = {chain};
  const PsiGrid psi = solve_reduced(spec, chain, 0.002, 1.0);
  const double ages[1] = {0.0};
  const double ref = psi.at_step(psi.steps(), 0, ages);

  const std::vector<double> nodes{0.0, 1.0};
  const ControlCurve best = optimal_control_curve(spec, nodes);
  const McEstimate cost = estimate_cost(spec, chains, kStart0, 1.0, best, 1.0, 20000, 17);
  CHECK(std::fabs(cost.mean - ref) <= 3.0 * cost.std_error);

  // optimal terminal wealth ties the two layers together at v0 = 1
  const double phi = optimal_wealth(psi, 1.0, 0, ages);
  CHECK(phi == doctest::Approx(-2.0 * std::log(ref)).epsilon(1e-12));
}

TEST_CASE("no admissible rival beats the optimum") {
  const MarketSpec spec = testutil::reference_market();
  const RegimeChain chains[1] = {testutil::reference_chain()};

  SUBCASE("empty rival set passes trivially") {
    const SuboptimalityReport rep =
        verify_suboptimality(spec, chains, kStart0, 1.0, {}, 1.0, 1000, 31);
    CHECK(rep.all_consistent);
    CHECK(rep.rivals.empty());
    CHECK(rep.optimal.mean > 0.0);
  }

  SUBCASE("random constants and the half-scaled optimum stay above") {
    std::vector<ControlCurve> rivals;
    PathRng prng(424242, 0);
    for (int k = 0; k < 5; ++k) {
      Eigen::VectorXd u = Eigen::VectorXd::Constant(1, -2.0 + 4.0 * prng.uniform());
      if (!admissible(spec, u)) u *= 0.5;
      rivals.push_back(constant_control(spec, u));
    }
    const ControlCurve best = optimal_control_curve(spec, std::vector<double>{0.0});
    rivals.push_back(constant_control(spec, 0.5 * best.u[0][0]));
    const SuboptimalityReport rep =
        verify_suboptimality(spec, chains, kStart0, 1.0, rivals, 1.0, 10000, 31);
    REQUIRE(rep.rivals.size() == 6);
    REQUIRE(rep.consistent.size() == 6);
    CHECK(rep.all_consistent);
    for (const McEstimate& r : rep.rivals) CHECK(r.mean > 0.0);
  }
}

TEST_CASE("control table lookup holds each row from its node onward") {
  ControlCurve c;
  c.times = {0.0, 0.5};
  c.u = {{Eigen::VectorXd::Constant(1, 1.0)}, {Eigen::VectorXd::Constant(1, 2.0)}};
  CHECK(control_at(c, 0.0, 0)[0] == 1.0);
  CHECK(control_at(c, 0.49, 0)[0] == 1.0);
  CHECK(control_at(c, 0.5, 0)[0] == 2.0);
  CHECK(control_at(c, 0.51, 0)[0] == 2.0);
  CHECK(control_at(c, 9.0, 0)[0] == 2.0);
  CHECK_THROWS_AS(control_at(c, 0.1, 3), std::out_of_range);
}

TEST_CASE("estimates serialize as json records and paths as csv") {
  McEstimate e;
  e.mean = 0.5;
  e.std_error = 0.25;
  e.n_paths = 10;
  e.seed = 7;
  CHECK(to_json(e) == "{\"mean\": 0.5, \"se\": 0.25, \"n\": 10, \"seed\": 7}");

  const MarketSpec spec = testutil::reference_market();
  const RegimeChain chains[1] = {testutil::reference_chain()};
  const ControlCurve u0 = constant_control(spec, Eigen::VectorXd::Zero(1));
  const WealthPath path = simulate_wealth(spec, chains, kStart0, 1.0, u0, 1.0, 4, 3);
  std::ostringstream os;
  path.write_csv(os);
  std::istringstream is(os.str());
  std::string line;
  REQUIRE(std::getline(is, line));
  CHECK(line == "t,v,state");
  int rows = 0;
  while (std::getline(is, line)) ++rows;
  CHECK(rows == static_cast<int>(path.times.size()));
}

TEST_CASE("invalid inputs are rejected") {
  const MarketSpec spec = testutil::reference_market();
  const RegimeChain chains[1] = {testutil::reference_chain()};
  const double ages[1] = {0.0};
  CHECK_THROWS_AS(estimate_psi(spec, chains, 0.0, 1.0, 0, ages, 50, 1),
                  std::invalid_argument);  // too few paths
  CHECK_THROWS_AS(estimate_psi(spec, chains, 1.5, 1.0, 0, ages, 1000, 1),
                  std::invalid_argument);  // horizon precedes t
  CHECK_THROWS_AS(estimate_psi(spec, {}, 0.0, 1.0, 0, ages, 1000, 1), std::invalid_argument);
  const double bad_ages[1] = {-0.1};
  CHECK_THROWS_AS(estimate_psi(spec, chains, 0.0, 1.0, 0, bad_ages, 1000, 1),
                  std::invalid_argument);

  const ControlCurve u0 = constant_control(spec, Eigen::VectorXd::Zero(1));
  CHECK_THROWS_AS(simulate_wealth(spec, chains, kStart0, 0.0, u0, 1.0, 4, 3),
                  std::invalid_argument);  // wealth must start positive
  CHECK_THROWS_AS(simulate_wealth(spec, chains, kStart0, 1.0, u0, 1.0, 0, 3),
                  std::invalid_argument);  // no reporting grid

  // |u| = 3 violates the jump-safety margin 1 + u z >= delta on [-0.4, 0.4]
  const ControlCurve hot = constant_control(spec, Eigen::VectorXd::Constant(1, 3.0));
  CHECK_THROWS_AS(simulate_wealth(spec, chains, kStart0, 1.0, hot, 1.0, 4, 3),
                  std::domain_error);
  CHECK_THROWS_AS(estimate_cost(spec, chains, kStart0, 1.0, hot, 1.0, 1000, 3),
                  std::domain_error);
}

}  // TEST_SUITE
