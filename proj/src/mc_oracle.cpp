#include "riskswitch/mc_oracle.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <ostream>
#include <stdexcept>
#include <thread>
#include <tuple>

#include "riskswitch/hamiltonian.hpp"
#include "riskswitch/kernels.hpp"
#include "riskswitch/quadrature.hpp"
#include "riskswitch/rng.hpp"

namespace riskswitch {

namespace {

int thread_budget(long long n_paths) {
  long long cap = 0;
  if (const char* s = std::getenv("RISKSWITCH_THREADS")) {
    const long v = std::strtol(s, nullptr, 10);
    if (v >= 1) cap = v;
  }
  if (cap == 0) {
    const unsigned hc = std::thread::hardware_concurrency();
    cap = hc ? hc : 1;
  }
  return static_cast<int>(std::min<long long>(cap, std::max<long long>(n_paths, 1)));
}

/// Run body(p) for p in [0, n). Threads take disjoint contiguous blocks;
/// results must be written to per-path slots so the schedule cannot matter.
template <class Body>
void for_each_path(long long n, Body&& body) {
  const int nt = thread_budget(n);
  if (nt <= 1) {
    for (long long p = 0; p < n; ++p) body(p);
    return;
  }
  std::vector<std::thread> workers;
  std::exception_ptr first_error;
  std::mutex error_mutex;
  const long long chunk = (n + nt - 1) / nt;
  for (int w = 0; w < nt; ++w) {
    const long long lo = w * chunk, hi = std::min(n, lo + chunk);
    if (lo >= hi) break;
    workers.emplace_back([&, lo, hi] {
      try {
        for (long long p = lo; p < hi; ++p) body(p);
      } catch (...) {
        std::lock_guard<std::mutex> g(error_mutex);
        if (!first_error) first_error = std::current_exception();
      }
    });
  }
  for (auto& t : workers) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

/// Pairwise-tree mean and standard error over per-path values.
McEstimate reduce(std::vector<double>& vals, std::uint64_t seed) {
  McEstimate e;
  e.n_paths = static_cast<long long>(vals.size());
  e.seed = seed;
  e.mean = kernels::sum(vals.data(), vals.size()) / static_cast<double>(vals.size());
  for (double& v : vals) {
    const double d = v - e.mean;
    v = d * d;
  }
  if (vals.size() > 1) {
    const double ss = kernels::sum(vals.data(), vals.size());
    e.std_error = std::sqrt(ss / (static_cast<double>(vals.size()) - 1.0) /
                            static_cast<double>(vals.size()));
  }
  return e;
}

void check_chain_setup(const MarketSpec& spec, std::span<const RegimeChain> chains) {
  const auto& counts = spec.regime_counts();
  if (chains.size() != counts.size())
    throw std::invalid_argument("chain count does not match the market components");
  for (std::size_t c = 0; c < chains.size(); ++c)
    if (chains[c].states() != counts[c])
      throw std::invalid_argument("chain state count does not match the market");
}

ChainState make_state(const MarketSpec& spec, int xflat, std::span<const double> ages) {
  ChainState st;
  st.regime = spec.unflatten(xflat);
  if (ages.size() != st.regime.size())
    throw std::invalid_argument("one age per regime component is required");
  for (double a : ages)
    if (!(a >= 0.0)) throw std::invalid_argument("ages must be nonnegative");
  st.age.assign(ages.begin(), ages.end());
  return st;
}

McEstimate run_psi(const MarketSpec& spec, std::span<const RegimeChain> chains, double t,
                   double horizon, int xflat, std::span<const double> ages, long long n_paths,
                   std::uint64_t seed, bool antithetic) {
  check_chain_setup(spec, chains);
  if (n_paths < 100) throw std::invalid_argument("at least 100 paths are required");
  if (!(horizon >= t)) throw std::invalid_argument("horizon precedes the start time");
  const ChainState start = make_state(spec, xflat, ages);

  const HamiltonianTable table(spec);
  const bool homog = spec.time_homogeneous();
  std::vector<double> h_of(homog ? spec.regime_combos() : 0);
  for (int x = 0; x < static_cast<int>(h_of.size()); ++x) h_of[x] = table.at(0.0, x).value;

  const auto one_exponential = [&](PathRng& rng) {
    const auto segs = simulate_chain(chains, start, t, horizon, rng);
    double integral = 0.0;
    for (const auto& s : segs) {
      const int x = spec.flatten(s.state.regime);
      integral += homog ? h_of[x] * (s.t_end - s.t_begin)
                        : big_h(table, s.t_begin, s.t_end, x);
    }
    return std::exp(integral);
  };

  std::vector<double> vals(static_cast<std::size_t>(n_paths));
  for_each_path(n_paths, [&](long long p) {
    PathRng rng(seed, static_cast<std::uint64_t>(p));
    double v = one_exponential(rng);
    if (antithetic) {
      PathRng mirrored(seed, static_cast<std::uint64_t>(p), true);
      v = 0.5 * (v + one_exponential(mirrored));
    }
    vals[static_cast<std::size_t>(p)] = v;
  });
  return reduce(vals, seed);
}

struct JumpEvent {
  double t = 0.0;
  int source = 0;
  double mark = 0.0;
};

const Eigen::VectorXd& lookup_control(const ControlCurve& control, double t, int xflat) {
  if (control.times.empty() || control.u.size() != control.times.size())
    throw std::invalid_argument("malformed control table");
  auto it = std::upper_bound(control.times.begin(), control.times.end(), t);
  const std::size_t row =
      it == control.times.begin() ? 0 : static_cast<std::size_t>(it - control.times.begin()) - 1;
  const auto& nodes = control.u[row];
  if (xflat < 0 || static_cast<std::size_t>(xflat) >= nodes.size())
    throw std::out_of_range("regime index outside the control table");
  return nodes[static_cast<std::size_t>(xflat)];
}

WealthPath simulate_path(const MarketSpec& spec, std::span<const RegimeChain> chains,
                         const ChainState& start, double v0, const ControlCurve& control,
                         double horizon, int n_steps, PathRng& rng) {
  WealthPath out;
  if (horizon == 0.0) {
    out.times = {0.0};
    out.values = {v0};
    out.segments = {{0.0, 0.0, spec.flatten(start.regime)}};
    return out;
  }

  const auto segs = simulate_chain(chains, start, 0.0, horizon, rng);
  out.segments.reserve(segs.size());
  for (const auto& s : segs)
    out.segments.push_back({s.t_begin, s.t_end, spec.flatten(s.state.regime)});

  std::vector<JumpEvent> events;
  for (int j = 0; j < spec.jump_sources(); ++j) {
    const JumpMeasure& nu = spec.measure(j);
    const double mass = nu.total_mass();
    if (mass <= 0.0) continue;
    for (double tj = rng.exponential(mass); tj < horizon; tj += rng.exponential(mass))
      events.push_back({tj, j, sample_mark(nu, rng)});
  }
  std::sort(events.begin(), events.end(), [](const JumpEvent& a, const JumpEvent& b) {
    return std::tie(a.t, a.source) < std::tie(b.t, b.source);
  });

  std::vector<double>& grid = out.times;
  grid.push_back(0.0);
  for (int i = 1; i < n_steps; ++i) grid.push_back(horizon * i / n_steps);
  grid.push_back(horizon);
  for (const auto& s : out.segments)
    if (s.t_begin > 0.0) grid.push_back(s.t_begin);
  for (const auto& ev : events) grid.push_back(ev.t);
  for (double tn : control.times)
    if (tn > 0.0 && tn < horizon) grid.push_back(tn);
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());

  const bool homog = spec.time_homogeneous();
  out.values.assign(grid.size(), 0.0);
  out.values[0] = v0;
  double lnv = std::log(v0);
  std::size_t seg = 0, evi = 0;
  for (std::size_t i = 1; i < grid.size(); ++i) {
    const double ta = grid[i - 1], tb = grid[i];
    while (seg + 1 < out.segments.size() && out.segments[seg].t_end <= ta) ++seg;
    const int x = out.segments[seg].xflat;
    const Eigen::VectorXd& u = lookup_control(control, ta, x);
    if (!admissible(spec, u))
      throw std::domain_error("control leaves the admissible set along the path");

    double drift, var;
    if (homog) {
      const double quad = u.dot(spec.diffusion(0.0, x) * u);
      drift = (spec.rate(0.0, x) + u.dot(spec.excess(0.0, x)) - 0.5 * quad) * (tb - ta);
      var = quad * (tb - ta);
    } else {
      drift = quad::adaptive_simpson(
          [&](double s) {
            return spec.rate(s, x) + u.dot(spec.excess(s, x)) -
                   0.5 * u.dot(spec.diffusion(s, x) * u);
          },
          ta, tb);
      var = quad::adaptive_simpson([&](double s) { return u.dot(spec.diffusion(s, x) * u); }, ta, tb);
    }
    lnv += drift;
    if (var > 0.0) lnv += std::sqrt(var) * rng.gaussian();

    while (evi < events.size() && events[evi].t == tb) {
      double w = 0.0;
      for (int l = 0; l < spec.assets(); ++l)
        w += u[l] * spec.eta(l, events[evi].source).at(events[evi].mark);
      lnv += std::log1p(w);  // admissibility keeps 1 + w >= delta > 0
      ++evi;
    }
    out.values[i] = std::exp(lnv);
    if (!(out.values[i] > 0.0) || !std::isfinite(out.values[i]))
      throw std::runtime_error("wealth path left the positive cone");
  }
  return out;
}

void check_wealth_inputs(const MarketSpec& spec, std::span<const RegimeChain> chains,
                         const ChainState& start, double v0, double horizon, int n_steps) {
  check_chain_setup(spec, chains);
  if (!(v0 > 0.0)) throw std::invalid_argument("initial wealth must be positive");
  if (!(horizon >= 0.0)) throw std::invalid_argument("horizon must be nonnegative");
  if (n_steps < 1) throw std::invalid_argument("at least one reporting step is required");
  if (start.regime.size() != chains.size() || start.age.size() != chains.size())
    throw std::invalid_argument("start state size does not match the chain count");
  for (double a : start.age)
    if (!(a >= 0.0)) throw std::invalid_argument("ages must be nonnegative");
}

}  // namespace

std::string to_json(const McEstimate& e) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "{\"mean\": %.17g, \"se\": %.17g, \"n\": %lld, \"seed\": %llu}",
                e.mean, e.std_error, e.n_paths, static_cast<unsigned long long>(e.seed));
  return buf;
}

void WealthPath::write_csv(std::ostream& os) const {
  os.precision(17);
  os << "t,v,state\n";
  std::size_t seg = 0;
  for (std::size_t i = 0; i < times.size(); ++i) {
    while (seg + 1 < segments.size() && segments[seg].t_end <= times[i]) ++seg;
    os << times[i] << ',' << values[i] << ',' << segments[seg].xflat << '\n';
  }
}

McEstimate estimate_psi(const MarketSpec& spec, std::span<const RegimeChain> chains, double t,
                        double horizon, int xflat, std::span<const double> ages,
                        long long n_paths, std::uint64_t seed) {
  return run_psi(spec, chains, t, horizon, xflat, ages, n_paths, seed, false);
}

McEstimate estimate_psi_antithetic(const MarketSpec& spec, std::span<const RegimeChain> chains,
                                   double t, double horizon, int xflat,
                                   std::span<const double> ages, long long n_paths,
                                   std::uint64_t seed) {
  return run_psi(spec, chains, t, horizon, xflat, ages, n_paths, seed, true);
}

const Eigen::VectorXd& control_at(const ControlCurve& control, double t, int xflat) {
  return lookup_control(control, t, xflat);
}

ControlCurve constant_control(const MarketSpec& spec, const Eigen::VectorXd& u) {
  if (u.size() != spec.assets())
    throw std::invalid_argument("control dimension does not match the asset count");
  ControlCurve c;
  c.times = {0.0};
  c.u = {std::vector<Eigen::VectorXd>(static_cast<std::size_t>(spec.regime_combos()), u)};
  return c;
}

WealthPath simulate_wealth(const MarketSpec& spec, std::span<const RegimeChain> chains,
                           const ChainState& start, double v0, const ControlCurve& control,
                           double horizon, int n_steps, std::uint64_t seed) {
  check_wealth_inputs(spec, chains, start, v0, horizon, n_steps);
  PathRng rng(seed, 0);
  return simulate_path(spec, chains, start, v0, control, horizon, n_steps, rng);
}

McEstimate estimate_cost(const MarketSpec& spec, std::span<const RegimeChain> chains,
                         const ChainState& start, double v0, const ControlCurve& control,
                         double horizon, long long n_paths, std::uint64_t seed) {
  check_wealth_inputs(spec, chains, start, v0, horizon, 1);
  if (n_paths < 100) throw std::invalid_argument("at least 100 paths are required");
  const double q = spec.theta() / 2.0;
  std::vector<double> vals(static_cast<std::size_t>(n_paths));
  for_each_path(n_paths, [&](long long p) {
    PathRng rng(seed, static_cast<std::uint64_t>(p));
    const WealthPath path = simulate_path(spec, chains, start, v0, control, horizon, 1, rng);
    vals[static_cast<std::size_t>(p)] = std::pow(path.values.back(), -q);
  });
  return reduce(vals, seed);
}

SuboptimalityReport verify_suboptimality(const MarketSpec& spec,
                                         std::span<const RegimeChain> chains,
                                         const ChainState& start, double v0,
                                         std::span<const ControlCurve> rivals, double horizon,
                                         long long n_paths, std::uint64_t seed) {
  std::vector<double> nodes;
  const int panels = spec.time_homogeneous() ? 1 : 64;
  for (int i = 0; i <= panels; ++i) nodes.push_back(horizon * i / panels);
  const ControlCurve best = optimal_control_curve(spec, nodes);

  SuboptimalityReport report;
  report.optimal = estimate_cost(spec, chains, start, v0, best, horizon, n_paths, seed);
  for (const auto& rival : rivals) {
    report.rivals.push_back(estimate_cost(spec, chains, start, v0, rival, horizon, n_paths, seed));
    const McEstimate& r = report.rivals.back();
    const double slack =
        2.0 * std::sqrt(r.std_error * r.std_error +
                        report.optimal.std_error * report.optimal.std_error);
    const bool ok = r.mean >= report.optimal.mean - slack;
    report.consistent.push_back(ok);
    report.all_consistent = report.all_consistent && ok;
  }
  return report;
}

}  // namespace riskswitch
