#include "riskswitch/cli_app.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "riskswitch/config.hpp"
#include "riskswitch/hamiltonian.hpp"
#include "riskswitch/market.hpp"
#include "riskswitch/mc_oracle.hpp"
#include "riskswitch/version.hpp"
#include "riskswitch/volterra.hpp"

namespace riskswitch {

namespace {

void write_metadata(std::ostream& os, const RunConfig& cfg, std::uint64_t seed) {
  os << "# " << kToolName << ' ' << kToolVersion << " config " << cfg.hash << " seed " << seed
     << '\n';
}

/// Stream to --out, or stdout when no path was given.
struct OutStream {
  explicit OutStream(const std::string& path) {
    if (!path.empty()) {
      file.emplace(path, std::ios::trunc);
      if (!*file) throw std::runtime_error("cannot open output file: " + path);
    }
  }
  std::ostream& get() { return file ? *file : std::cout; }
  std::optional<std::ofstream> file;
};

int flat_regime(const MarketSpec& spec, const std::vector<int>& regimes) {
  return spec.flatten(regimes);
}

int run_validate(const std::string& config_path) {
  const RunConfig cfg = load_config(config_path);
  const MarketSpec spec = cfg.spec();
  const auto issues = validate(spec, cfg.chains, cfg.horizon);
  bool ok = true;
  for (const auto& issue : issues) {
    ok = ok && issue.pass;
    std::cout << "{\"check\": \"" << issue.check << "\", \"pass\": " << (issue.pass ? "true" : "false");
    if (!issue.message.empty()) std::cout << ", \"message\": \"" << issue.message << "\"";
    std::cout << "}\n";
  }
  std::cout << "{\"config\": \"" << cfg.hash << "\", \"result\": \"" << (ok ? "pass" : "fail")
            << "\"}\n";
  return ok ? 0 : 1;
}

PsiGrid solve_for(const RunConfig& cfg, const MarketSpec& spec, const std::string& mode,
                  double dt, double horizon) {
  if (mode == "reduced") {
    if (cfg.chains.size() != 1)
      throw std::runtime_error("reduced mode requires exactly one regime chain");
    return solve_reduced(spec, cfg.chains[0], dt, horizon);
  }
  return solve_general(spec, cfg.chains, dt, horizon, cfg.y_step, cfg.y_max);
}

int run_solve(const std::string& config_path, const std::string& mode, double dt_override,
              const std::string& out_path) {
  const RunConfig cfg = load_config(config_path);
  const MarketSpec spec = cfg.spec();
  const double dt = dt_override > 0.0 ? dt_override : cfg.dt;
  const PsiGrid psi = solve_for(cfg, spec, mode, dt, cfg.horizon);

  OutStream out(out_path);
  write_metadata(out.get(), cfg, cfg.seed);
  psi.write_csv(out.get());

  std::cout << "# regime table: h and minimizing fraction\n";
  for (int x = 0; x < spec.regime_combos(); ++x) {
    const HamiltonianResult& hr = minimize_g(spec, 0.0, x);
    std::cout << "x=" << x << " h=" << hr.value << " u*=[";
    for (int l = 0; l < hr.minimizer.size(); ++l)
      std::cout << (l ? "," : "") << hr.minimizer[l];
    std::cout << "]\n";
  }
  const double phi = optimal_wealth(psi, cfg.v0, flat_regime(spec, cfg.x0), cfg.ages0);
  std::cout << "phi(" << cfg.v0 << ") = " << phi << '\n';

  if (mode == "general" && cfg.chains.size() == 1) {
    const PsiGrid red = solve_reduced(spec, cfg.chains[0], dt, cfg.horizon);
    double worst = 0.0;
    for (int x = 0; x < spec.regime_combos(); ++x) {
      const double a[1] = {0.0};
      worst = std::fmax(worst, std::fabs(psi.at_step(psi.steps(), x, a) -
                                         red.at_step(red.steps(), x, a)));
    }
    std::cout << "cross-check vs reduced: max|diff| = " << worst << '\n';
  }
  return 0;
}

int run_oracle(const std::string& config_path, long long paths_override,
               std::uint64_t seed_override, bool have_seed, const std::string& out_path) {
  const RunConfig cfg = load_config(config_path);
  const MarketSpec spec = cfg.spec();
  const long long n = paths_override > 0 ? paths_override : cfg.n_paths;
  const std::uint64_t seed = have_seed ? seed_override : cfg.seed;

  const std::string mode = cfg.chains.size() == 1 ? "reduced" : "general";
  const PsiGrid psi = solve_for(cfg, spec, mode, cfg.dt, cfg.horizon);

  OutStream out(out_path);
  write_metadata(out.get(), cfg, seed);
  out.get().precision(17);
  out.get() << "point,psi_solver,psi_mc,se,z\n";
  bool low_precision = false;
  for (std::size_t p = 0; p < cfg.probes.size(); ++p) {
    const auto& probe = cfg.probes[p];
    const int x = flat_regime(spec, probe.regimes);
    const double solver = psi.at_step(psi.steps(), x, probe.ages);
    const McEstimate mc =
        estimate_psi(spec, cfg.chains, 0.0, cfg.horizon, x, probe.ages, n, seed);
    const double diff = mc.mean - solver;
    const double z = mc.std_error > 0.0
                         ? diff / mc.std_error
                         : (diff == 0.0 ? 0.0 : std::numeric_limits<double>::infinity());
    low_precision = low_precision || mc.std_error > 1e-2;
    out.get() << p << ',' << solver << ',' << mc.mean << ',' << mc.std_error << ',' << z << '\n';
    std::cout << "point " << p << ": z = " << z << '\n';
  }
  if (low_precision)
    std::cout << "warning: standard error above 1e-2; raise --paths for a sharper comparison\n";
  return 0;
}

int run_sweep(const std::string& config_path, const std::string& axis,
              const std::string& out_path) {
  const RunConfig cfg = load_config(config_path);
  std::vector<double> values;
  if (axis == "v")
    values = cfg.sweep_v;
  else if (axis == "T")
    values = cfg.sweep_horizon;
  else
    values = cfg.sweep_theta;
  if (values.size() < 2) throw std::runtime_error("sweep needs at least two axis values");
  std::sort(values.begin(), values.end());

  const MarketSpec base = cfg.spec();
  const int x0 = flat_regime(base, cfg.x0);
  std::vector<double> phi(values.size());
  if (axis == "v") {
    const PsiGrid psi = solve_for(cfg, base, "reduced", cfg.dt, cfg.horizon);
    for (std::size_t i = 0; i < values.size(); ++i)
      phi[i] = optimal_wealth(psi, values[i], x0, cfg.ages0);
  } else if (axis == "T") {
    for (std::size_t i = 0; i < values.size(); ++i) {
      const PsiGrid psi = solve_for(cfg, base, "reduced", cfg.dt, values[i]);
      phi[i] = optimal_wealth(psi, cfg.v0, x0, cfg.ages0);
    }
  } else {
    for (std::size_t i = 0; i < values.size(); ++i) {
      const MarketSpec spec = cfg.spec(values[i]);
      const PsiGrid psi = solve_for(cfg, spec, "reduced", cfg.dt, cfg.horizon);
      phi[i] = optimal_wealth(psi, cfg.v0, x0, cfg.ages0);
    }
  }

  OutStream out(out_path);
  write_metadata(out.get(), cfg, cfg.seed);
  out.get().precision(17);
  out.get() << "axis,value,phi\n";
  for (std::size_t i = 0; i < values.size(); ++i)
    out.get() << axis << ',' << values[i] << ',' << phi[i] << '\n';

  // the optimal terminal wealth grows with capital and horizon and shrinks
  // with the risk sensitivity; any violation is a solver defect
  const bool increasing = axis == "v" || axis == "T";
  for (std::size_t i = 1; i < values.size(); ++i) {
    const bool ok = increasing ? phi[i] > phi[i - 1] : phi[i] < phi[i - 1];
    if (!ok) {
      std::cerr << "{\"error\": \"monotonicity\", \"axis\": \"" << axis << "\", \"at\": "
                << values[i] << "}\n";
      return 3;
    }
  }
  return 0;
}

int run_residual(const std::string& config_path, double dt_override,
                 const std::string& out_path) {
  const RunConfig cfg = load_config(config_path);
  const MarketSpec spec = cfg.spec();
  const double dt = dt_override > 0.0 ? dt_override : cfg.dt;
  const std::string mode = cfg.chains.size() == 1 ? "reduced" : "general";
  const PsiGrid psi = solve_for(cfg, spec, mode, dt, cfg.horizon);

  OutStream out(out_path);
  write_metadata(out.get(), cfg, cfg.seed);
  out.get().precision(17);
  out.get() << "t,state,y,eps,residual\n";
  double worst = 0.0;
  for (const auto& probe : cfg.probes) {
    const int x = flat_regime(spec, probe.regimes);
    for (double frac : {0.25, 0.5, 0.75}) {
      const double t = frac * cfg.horizon;
      const double r = pde_residual(psi, spec, cfg.chains, t, x, probe.ages, dt);
      worst = std::fmax(worst, std::fabs(r));
      out.get() << t << ',' << x << ',' << probe.ages[0] << ',' << dt << ',' << r << '\n';
    }
  }
  std::cout << "max |residual| = " << worst << '\n';
  return 0;
}

}  // namespace

int cli_main(int argc, const char* const* argv) {
  CLI::App app{"risk-sensitive portfolio solver under semi-Markov regime switching"};
  app.require_subcommand(1);

  std::string config_path, mode = "reduced", out_path, axis;
  long long paths = 0;
  std::uint64_t seed = 0;
  bool have_seed = false;
  double dt = 0.0;

  auto add_config = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "JSON run configuration")->required();
  };
  CLI::App* validate_cmd = app.add_subcommand("validate", "check a configuration");
  add_config(validate_cmd);

  CLI::App* solve_cmd = app.add_subcommand("solve", "solve the value surface");
  add_config(solve_cmd);
  solve_cmd->add_option("--mode", mode)->check(CLI::IsMember({"reduced", "general"}));
  solve_cmd->add_option("--dt", dt, "time step override");
  solve_cmd->add_option("--out", out_path, "CSV output path (default stdout)");

  CLI::App* oracle_cmd = app.add_subcommand("oracle", "compare against path simulation");
  add_config(oracle_cmd);
  oracle_cmd->add_option("--paths", paths, "Monte-Carlo path count override");
  oracle_cmd->add_option("--seed", seed)->each([&](const std::string&) { have_seed = true; });
  oracle_cmd->add_option("--out", out_path, "CSV output path (default stdout)");

  CLI::App* sweep_cmd = app.add_subcommand("sweep", "terminal wealth across one axis");
  add_config(sweep_cmd);
  sweep_cmd->add_option("--axis", axis)->required()->check(CLI::IsMember({"v", "T", "theta"}));
  sweep_cmd->add_option("--out", out_path, "CSV output path (default stdout)");

  CLI::App* residual_cmd = app.add_subcommand("residual", "transport residual at probe points");
  add_config(residual_cmd);
  residual_cmd->add_option("--dt", dt, "time step override");
  residual_cmd->add_option("--out", out_path, "CSV output path (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (validate_cmd->parsed()) return run_validate(config_path);
    if (solve_cmd->parsed()) return run_solve(config_path, mode, dt, out_path);
    if (oracle_cmd->parsed()) return run_oracle(config_path, paths, seed, have_seed, out_path);
    if (sweep_cmd->parsed()) return run_sweep(config_path, axis, out_path);
    return run_residual(config_path, dt, out_path);
  } catch (const ConfigParseError& e) {
    std::cerr << "{\"error\": \"parse\", \"what\": \"" << e.what() << "\"}\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "{\"error\": \"runtime\", \"what\": \"" << e.what() << "\"}\n";
    return 1;
  }
}

}  // namespace riskswitch
