// Solver tests against independent oracles: matrix exponentials for
// constant-rate chains, the scalar exponential for frozen or
// equal-coefficient regimes, and cross-component factorization for
// independent drivers feeding disjoint assets.

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include "doctest.h"
#include "riskswitch/hamiltonian.hpp"
#include "riskswitch/market.hpp"
#include "riskswitch/semi_markov.hpp"
#include "riskswitch/volterra.hpp"
#include "util.hpp"

using namespace riskswitch;

namespace {

MarketSpec single_asset_spec(std::vector<double> r, std::vector<double> mu,
                             std::vector<double> sigma, double theta = 1.0) {
  std::vector<Poly> rp;
  std::vector<std::vector<Poly>> mup;
  std::vector<std::vector<Eigen::MatrixXd>> sp;
  for (std::size_t i = 0; i < r.size(); ++i) {
    rp.push_back(Poly{{r[i]}});
    mup.push_back({Poly{{mu[i]}}});
    sp.push_back({Eigen::MatrixXd::Constant(1, 1, sigma[i])});
  }
  PortfolioSet box;
  box.lower = Eigen::VectorXd::Constant(1, -5.0);
  box.upper = Eigen::VectorXd::Constant(1, 5.0);
  return MarketSpec(1, 1, theta, {static_cast<int>(r.size())}, std::move(rp), std::move(mup),
                    std::move(sp), {}, {{}}, box);
}

// psi(tau) = exp(tau (Q + diag(h))) 1 for a constant-rate Markov chain
Eigen::VectorXd markov_psi(const Eigen::MatrixXd& QH, double tau) {
  Eigen::EigenSolver<Eigen::MatrixXd> es(QH);
  const Eigen::VectorXcd lam = es.eigenvalues();
  const Eigen::MatrixXcd V = es.eigenvectors();
  const Eigen::VectorXcd c = V.partialPivLu().solve(Eigen::VectorXcd::Ones(QH.rows()));
  Eigen::VectorXcd out = Eigen::VectorXcd::Zero(QH.rows());
  for (int i = 0; i < QH.rows(); ++i) out += c[i] * std::exp(lam[i] * tau) * V.col(i);
  return out.real();
}

double age0(const PsiGrid& g, int m, int x) {
  const double a[1] = {0.0};
  return g.at_step(m, x, a);
}

}  // namespace

TEST_SUITE("volterra") {

TEST_CASE("zero-step horizon returns the terminal slice") {
  const MarketSpec spec = testutil::reference_market();
  const PsiGrid psi = solve_reduced(spec, testutil::reference_chain(), 0.01, 0.0);
  CHECK(psi.steps() == 0);
  for (int i = 0; i < 3; ++i) CHECK(age0(psi, 0, i) == 1.0);
  const double a[1] = {0.7};
  CHECK(psi.at_step(0, 1, a) == 1.0);
}

TEST_CASE("frozen single regime reproduces the scalar exponential") {
  const MarketSpec spec = single_asset_spec({0.2}, {0.3}, {0.2});
  const double h = minimize_g(spec, 0.0, 0).value;
  const PsiGrid psi = solve_reduced(spec, RegimeChain::frozen(), 0.002, 1.0);
  for (int m = 0; m <= psi.steps(); ++m) {
    const double want = std::exp(h * m * 0.002);
    CHECK(std::fabs(age0(psi, m, 0) - want) <= 1e-13);
  }
  const double a[1] = {2.3};  // no switching: age cannot matter
  CHECK(psi.at_step(psi.steps(), 0, a) == doctest::Approx(std::exp(h)).epsilon(1e-12));
}

TEST_CASE("equal coefficients across regimes collapse to one exponential") {
  // identical h in every regime makes switching irrelevant; the march error
  // is pure trapezoid truncation, second order in dt
  const MarketSpec spec = single_asset_spec({0.2, 0.2, 0.2}, {0.3, 0.3, 0.3}, {0.2, 0.2, 0.2});
  const double h = minimize_g(spec, 0.0, 0).value;
  double prev_worst = 0.0;
  for (double dt : {0.01, 0.005}) {
    const PsiGrid psi = solve_reduced(spec, testutil::reference_chain(), dt, 1.0);
    double worst = 0.0;
    for (int m = 0; m <= psi.steps(); ++m)
      for (int i = 0; i < 3; ++i)
        worst = std::fmax(worst, std::fabs(age0(psi, m, i) - std::exp(h * m * dt)));
    CHECK(worst <= 3e-5 * (dt / 0.01) * (dt / 0.01) * 4.0);
    if (prev_worst > 0.0) {
      const double ratio = prev_worst / worst;
      CHECK(ratio >= 3.3);
      CHECK(ratio <= 4.7);
    }
    prev_worst = worst;
  }
}

TEST_CASE("constant-rate chain matches the matrix-exponential solution") {
  const MarketSpec spec = single_asset_spec({0.2, 0.5}, {0.3, 0.6}, {0.2, 0.4});
  Eigen::MatrixXd rates(2, 2);
  rates << 0.0, 1.2, 0.7, 0.0;
  const RegimeChain chain = RegimeChain::constant(rates);
  Eigen::MatrixXd QH(2, 2);
  QH << -1.2 + minimize_g(spec, 0.0, 0).value, 1.2, 0.7, -0.7 + minimize_g(spec, 0.0, 1).value;
  const Eigen::VectorXd exact = markov_psi(QH, 1.0);

  double err_prev = 0.0;
  for (double dt : {0.005, 0.0025}) {
    const PsiGrid psi = solve_reduced(spec, chain, dt, 1.0);
    const double err = std::fmax(std::fabs(age0(psi, psi.steps(), 0) - exact[0]),
                                 std::fabs(age0(psi, psi.steps(), 1) - exact[1]));
    CHECK(err <= 8e-6 * (dt / 0.005) * (dt / 0.005) * 4.0);
    if (err_prev > 0.0) {
      CHECK(err_prev / err >= 3.3);
      CHECK(err_prev / err <= 4.7);
    }
    err_prev = err;
  }
}

TEST_CASE("surface respects positivity, the exponential floor, and decay") {
  const MarketSpec spec = testutil::reference_market();
  const PsiGrid psi = solve_reduced(spec, testutil::reference_chain(), 0.01, 1.0);
  double hmin = 0.0;
  for (int i = 0; i < 3; ++i) hmin = std::fmin(hmin, minimize_g(spec, 0.0, i).value);
  for (int i = 0; i < 3; ++i) {
    CHECK(age0(psi, 0, i) == 1.0);
    for (int m = 1; m <= psi.steps(); ++m) {
      const double v = age0(psi, m, i);
      CHECK(v > 0.0);
      CHECK(v <= 1.0);
      CHECK(v >= std::exp(hmin * m * 0.01) - 1e-5);  // floor up to O(dt^2) truncation
      CHECK(v < age0(psi, m - 1, i) + 1e-15);  // more time to go, smaller psi
    }
    for (double y : {0.25, 0.5, 1.0}) {
      const double a[1] = {y};
      const double v = psi.at_step(psi.steps(), i, a);
      CHECK(v > 0.0);
      CHECK(v <= 1.0);
      CHECK(v >= std::exp(hmin) - 1e-12);
    }
    const double tiny[1] = {1e-9};
    CHECK(psi.at_step(psi.steps(), i, tiny) ==
          doctest::Approx(age0(psi, psi.steps(), i)).epsilon(1e-8));
  }
}

TEST_CASE("general solve on one component equals the reduced march") {
  const MarketSpec spec = testutil::reference_market();
  const RegimeChain chain = testutil::reference_chain();
  const PsiGrid red = solve_reduced(spec, chain, 0.01, 1.0);
  const RegimeChain chains[1] = {chain};
  const PsiGrid gen = solve_general(spec, chains, 0.01, 1.0, 0.02, 1.6);

  // one component resets its age inside every integral read, so the two
  // discrete schemes share a fixed point; only the Picard tolerance is left
  for (int i = 0; i < 3; ++i)
    for (double y : {0.0, 0.3, 0.5, 1.02}) {
      const double a[1] = {y};
      CHECK(std::fabs(gen.at_step(gen.steps(), i, a) - red.at_step(red.steps(), i, a)) <=
            1e-9);
    }

  const SolveDiagnostics& d = gen.diagnostics();
  CHECK(d.sweeps < 50);
  CHECK_FALSE(d.contraction_stalled);
  CHECK(d.contraction < 1.0);
  CHECK(d.contraction > 0.0);
  CHECK(d.clamp_count == 0);  // a lone component never reads shifted ages
  REQUIRE(d.sweep_deltas.size() >= 3);
  for (std::size_t s = 1; s < d.sweep_deltas.size(); ++s)
    CHECK(d.sweep_deltas[s] < d.sweep_deltas[s - 1]);
  CHECK(d.sweep_deltas.back() <= 1e-10);
}

TEST_CASE("independent components factorize the surface") {
  const double ra[2] = {0.10, 0.30}, rb[2] = {0.05, 0.20};
  const double c1[2] = {0.15, 0.05}, c2[2] = {0.10, 0.20};
  const double s1 = 0.25, s2 = 0.35;

  PortfolioSet box2;
  box2.lower = Eigen::VectorXd::Constant(2, -5.0);
  box2.upper = Eigen::VectorXd::Constant(2, 5.0);
  std::vector<Poly> r;
  std::vector<std::vector<Poly>> mu;
  std::vector<std::vector<Eigen::MatrixXd>> sg;
  for (int x1 = 0; x1 < 2; ++x1)
    for (int x2 = 0; x2 < 2; ++x2) {
      const double rr = ra[x1] + rb[x2];
      r.push_back(Poly{{rr}});
      mu.push_back({Poly{{rr + c1[x1]}}, Poly{{rr + c2[x2]}}});
      Eigen::MatrixXd s = Eigen::MatrixXd::Zero(2, 2);
      s(0, 0) = s1;
      s(1, 1) = s2;
      sg.push_back({s});
    }
  const MarketSpec joint(2, 2, 1.0, {2, 2}, r, mu, sg, {}, {{}, {}}, box2);
  const MarketSpec spec1 = single_asset_spec({ra[0], ra[1]}, {ra[0] + c1[0], ra[1] + c1[1]},
                                             {s1, s1});
  const MarketSpec spec2 = single_asset_spec({rb[0], rb[1]}, {rb[0] + c2[0], rb[1] + c2[1]},
                                             {s2, s2});

  // disjoint assets split the Hamiltonian across components
  for (int x1 = 0; x1 < 2; ++x1)
    for (int x2 = 0; x2 < 2; ++x2)
      CHECK(minimize_g(joint, 0.0, x1 * 2 + x2).value ==
            doctest::Approx(minimize_g(spec1, 0.0, x1).value +
                            minimize_g(spec2, 0.0, x2).value)
                .epsilon(1e-12));

  Eigen::MatrixXd p2(2, 2);
  p2 << 0.0, 1.0, 1.0, 0.0;
  const RegimeChain aw = RegimeChain::age_weighted(p2);
  Eigen::MatrixXd rates(2, 2);
  rates << 0.0, 0.8, 1.1, 0.0;
  const RegimeChain cr = RegimeChain::constant(rates);

  const double dt = 0.02, T = 1.0;
  const PsiGrid f1 = solve_reduced(spec1, aw, dt, T);
  const PsiGrid f2 = solve_reduced(spec2, cr, dt, T);
  const RegimeChain chains[2] = {aw, cr};
  const PsiGrid gen = solve_general(joint, chains, dt, T, 0.04, 1.3);

  double worst = 0.0;
  for (int x1 = 0; x1 < 2; ++x1)
    for (int x2 = 0; x2 < 2; ++x2)
      for (double y1 : {0.0, 0.24})
        for (double y2 : {0.0, 0.16}) {
          const std::vector<double> aj{y1, y2};
          const double a1[1] = {y1}, a2[1] = {y2};
          const double want =
              f1.at_step(f1.steps(), x1, a1) * f2.at_step(f2.steps(), x2, a2);
          worst = std::fmax(worst,
                            std::fabs(gen.at_step(gen.steps(), x1 * 2 + x2, aj) - want));
        }
  CHECK(worst <= 2e-4);

  CHECK(gen.diagnostics().clamp_count > 0);  // shifted reads hit the grid top
  CHECK_FALSE(gen.diagnostics().contraction_stalled);
  CHECK(gen.diagnostics().contraction < 1.0);
}

TEST_CASE("transport residual shrinks with the grids") {
  SUBCASE("frozen regime: residual is first order in eps") {
    const MarketSpec spec = single_asset_spec({0.2}, {0.3}, {0.2});
    const PsiGrid psi = solve_reduced(spec, RegimeChain::frozen(), 0.002, 1.0);
    const RegimeChain chains[1] = {RegimeChain::frozen()};
    const double a[1] = {0.0};
    const double r1 = std::fabs(pde_residual(psi, spec, chains, 0.3, 0, a, 0.02));
    const double r2 = std::fabs(pde_residual(psi, spec, chains, 0.3, 0, a, 0.01));
    CHECK(r1 <= 0.02);  // O(eps) with a curvature constant near h^2/2
    CHECK(r1 / r2 >= 1.5);
    CHECK(r1 / r2 <= 2.5);
  }

  SUBCASE("reference system: residual drops when eps and dt halve together") {
    const MarketSpec spec = testutil::reference_market();
    const RegimeChain chains[1] = {testutil::reference_chain()};
    const struct {
      double t, y;
      int x;
    } probes[] = {{0.25, 0.1, 0}, {0.5, 0.0, 1}, {0.7, 0.4, 2}};
    double coarse = 0.0, fine = 0.0;
    {
      const PsiGrid psi = solve_reduced(spec, chains[0], 0.01, 1.0);
      for (const auto& p : probes) {
        const double a[1] = {p.y};
        coarse = std::fmax(coarse, std::fabs(pde_residual(psi, spec, chains, p.t, p.x, a, 0.02)));
      }
    }
    {
      const PsiGrid psi = solve_reduced(spec, chains[0], 0.005, 1.0);
      for (const auto& p : probes) {
        const double a[1] = {p.y};
        fine = std::fmax(fine, std::fabs(pde_residual(psi, spec, chains, p.t, p.x, a, 0.01)));
      }
    }
    CHECK(coarse < 0.05);
    CHECK(fine < coarse);
    CHECK(coarse / fine >= 1.5);
  }
}

TEST_CASE("terminal wealth formula and its guards") {
  const MarketSpec spec = single_asset_spec({0.2}, {0.3}, {0.2}, 1.5);
  const double h = minimize_g(spec, 0.0, 0).value;
  const PsiGrid psi = solve_reduced(spec, RegimeChain::frozen(), 0.01, 2.0);
  const double a[1] = {0.0};
  CHECK(optimal_wealth(psi, 1.0, 0, a) ==
        doctest::Approx(-(2.0 / 1.5) * 2.0 * h).epsilon(1e-10));
  CHECK(optimal_wealth(psi, 3.7, 0, a) ==
        doctest::Approx(std::log(3.7) - (2.0 / 1.5) * 2.0 * h).epsilon(1e-10));
  CHECK_THROWS_AS(optimal_wealth(psi, 0.0, 0, a), std::invalid_argument);
  CHECK_THROWS_AS(optimal_wealth(psi, -1.0, 0, a), std::invalid_argument);

  const PsiGrid flat = solve_reduced(spec, RegimeChain::frozen(), 0.01, 0.0);
  CHECK(optimal_wealth(flat, 2.5, 0, a) == doctest::Approx(std::log(2.5)).epsilon(1e-14));
}

TEST_CASE("csv export carries the march") {
  const MarketSpec spec = testutil::reference_market();
  const PsiGrid psi = solve_reduced(spec, testutil::reference_chain(), 0.25, 1.0);
  std::ostringstream os;
  psi.write_csv(os);
  std::istringstream is(os.str());
  std::string line;
  REQUIRE(std::getline(is, line));
  CHECK(line == "m,t,state,y,psi");
  int rows = 0;
  std::string last;
  while (std::getline(is, line)) {
    ++rows;
    last = line;
  }
  CHECK(rows == (psi.steps() + 1) * 3);
  // last row is (m=M, t=0, state=2, y=0, psi^M(2,0))
  std::istringstream row(last);
  std::string cell;
  std::getline(row, cell, ',');
  CHECK(cell == "4");
  std::getline(row, cell, ',');
  CHECK(std::stod(cell) == 0.0);
  std::getline(row, cell, ',');
  CHECK(cell == "2");
  std::getline(row, cell, ',');
  CHECK(std::stod(cell) == 0.0);
  std::getline(row, cell, ',');
  CHECK(std::stod(cell) == doctest::Approx(age0(psi, 4, 2)).epsilon(1e-15));
}

TEST_CASE("binary checkpoints round-trip bitwise") {
  const MarketSpec spec = testutil::reference_market();
  const RegimeChain chain = testutil::reference_chain();
  const PsiGrid psi = solve_reduced(spec, chain, 0.01, 1.0);
  const std::string path = "psig_roundtrip.tmp";
  psi.save(path);
  const PsiGrid back = PsiGrid::load(path, {chain});
  CHECK(back.mode() == PsiMode::Reduced);
  CHECK(back.dt() == psi.dt());
  CHECK(back.steps() == psi.steps());
  CHECK(back.theta() == psi.theta());
  for (int i = 0; i < 3; ++i)
    for (double y : {0.0, 0.37, 1.1}) {
      const double a[1] = {y};
      CHECK(back.at_step(psi.steps(), i, a) == psi.at_step(psi.steps(), i, a));
      CHECK(back.at_step(1, i, a) == psi.at_step(1, i, a));
    }
  CHECK_THROWS_AS(PsiGrid::load(path, {}), std::invalid_argument);

  SUBCASE("general surfaces reload too") {
    const RegimeChain chains[1] = {chain};
    const PsiGrid gen = solve_general(spec, chains, 0.05, 0.5, 0.05, 0.8);
    gen.save(path);
    const PsiGrid gback = PsiGrid::load(path, {chain});
    CHECK(gback.mode() == PsiMode::General);
    CHECK(gback.y_step() == gen.y_step());
    for (int i = 0; i < 3; ++i)
      for (double y : {0.0, 0.13, 0.62}) {
        const double a[1] = {y};
        CHECK(gback.at_step(gen.steps(), i, a) == gen.at_step(gen.steps(), i, a));
      }
  }

  SUBCASE("corrupt magic is rejected") {
    std::ofstream bad(path, std::ios::binary);
    bad << "nope definitely not a checkpoint";
    bad.close();
    CHECK_THROWS_AS(PsiGrid::load(path, {chain}), std::runtime_error);
  }
  std::remove(path.c_str());
}

TEST_CASE("control tabulation is constant in time and rate-free") {
  const MarketSpec spec = testutil::reference_market();
  const std::vector<double> times{0.0, 0.25, 0.5, 1.0};
  const ControlCurve curve = optimal_control_curve(spec, times);
  REQUIRE(curve.times.size() == 4);
  REQUIRE(curve.u.size() == 4);
  for (int x = 0; x < 3; ++x) {
    const Eigen::VectorXd want = minimize_g(spec, 0.0, x).minimizer;
    for (std::size_t ti = 0; ti < curve.times.size(); ++ti) {
      REQUIRE(curve.u[ti][x].size() == 1);
      // time-homogeneous coefficients: identical minimizer at every node,
      // and the tabulation consumed no chain at all
      CHECK(curve.u[ti][x][0] == want[0]);
    }
  }
}

TEST_CASE("solver input validation") {
  const MarketSpec spec = testutil::reference_market();
  const RegimeChain chain = testutil::reference_chain();
  CHECK_THROWS_AS(solve_reduced(spec, chain, -0.01, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(solve_reduced(spec, chain, 0.3, 1.0), std::invalid_argument);  // no divide
  CHECK_THROWS_AS(solve_reduced(spec, RegimeChain::frozen(), 0.01, 1.0),
                  std::invalid_argument);  // state-count mismatch
  const RegimeChain chains[1] = {chain};
  CHECK_THROWS_AS(solve_general(spec, chains, 0.01, 1.0, 0.015, 1.0),
                  std::invalid_argument);  // y_step not a multiple of dt
  const PsiGrid psi = solve_reduced(spec, chain, 0.25, 1.0);
  const double a[1] = {0.0};
  CHECK_THROWS_AS(psi.at_step(5, 0, a), std::out_of_range);
  CHECK_THROWS_AS(psi.at_step(1, 7, a), std::out_of_range);
  CHECK_THROWS_AS(psi.at_time(1.7, 0, a), std::out_of_range);
  const double neg[1] = {-0.5};
  CHECK_THROWS_AS(psi.at_step(1, 0, neg), std::invalid_argument);
  CHECK_THROWS_AS(pde_residual(psi, spec, chains, 0.9, 0, a, 0.2), std::out_of_range);
}

}  // TEST_SUITE
