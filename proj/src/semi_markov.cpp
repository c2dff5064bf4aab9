#include "riskswitch/semi_markov.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "riskswitch/quadrature.hpp"

namespace riskswitch {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
// -ln(1e-12): hazard mass beyond which joint survival is below the tail cutoff
constexpr double kTailHazard = 27.631021115928547;

void check_switch_matrix(const Eigen::MatrixXd& p) {
  const int k = static_cast<int>(p.rows());
  if (p.cols() != k || k < 2) throw std::invalid_argument("switch matrix must be square, k >= 2");
  for (int i = 0; i < k; ++i) {
    if (p(i, i) != 0.0) throw std::invalid_argument("switch matrix diagonal must be zero");
    double row = 0.0;
    for (int j = 0; j < k; ++j) {
      if (!(p(i, j) >= 0.0)) throw std::invalid_argument("switch matrix entries must be >= 0");
      row += p(i, j);
    }
    if (std::fabs(row - 1.0) > 1e-9)
      throw std::invalid_argument("switch matrix rows must sum to 1");
  }
}

// Integral over a full Hermite cell: h * ((v0+v1)/2 + h*(d0-d1)/12).
double hermite_cell_integral(double h, double v0, double d0, double v1, double d1) {
  return h * (0.5 * (v0 + v1) + h * (d0 - d1) / 12.0);
}

// Integral of the Hermite cubic from the cell start to parameter tau in [0,1].
double hermite_partial_integral(double h, double v0, double d0, double v1, double d1,
                                double tau) {
  const double t2 = tau * tau, t3 = t2 * tau, t4 = t3 * tau;
  return h * (v0 * (0.5 * t4 - t3 + tau) + h * d0 * (0.25 * t4 - 2.0 / 3.0 * t3 + 0.5 * t2) +
              v1 * (t3 - 0.5 * t4) + h * d1 * (0.25 * t4 - t3 / 3.0));
}

double hermite_eval(double v0, double d0, double v1, double d1, double h, double tau) {
  const double t2 = tau * tau, t3 = t2 * tau;
  return v0 * (2.0 * t3 - 3.0 * t2 + 1.0) + h * d0 * (t3 - 2.0 * t2 + tau) +
         v1 * (3.0 * t2 - 2.0 * t3) + h * d1 * (t3 - t2);
}

// Fritsch-Carlson slopes on a uniform grid: shape-preserving, and for
// nonnegative data the interpolant stays nonnegative.
std::vector<double> monotone_slopes(const std::vector<double>& v, double h) {
  const int g = static_cast<int>(v.size());
  std::vector<double> d(g, 0.0);
  if (g == 2) {
    d[0] = d[1] = (v[1] - v[0]) / h;
    return d;
  }
  std::vector<double> del(g - 1);
  for (int i = 0; i + 1 < g; ++i) del[i] = (v[i + 1] - v[i]) / h;
  for (int i = 1; i + 1 < g; ++i) {
    if (del[i - 1] * del[i] <= 0.0)
      d[i] = 0.0;
    else
      d[i] = 2.0 * del[i - 1] * del[i] / (del[i - 1] + del[i]);
  }
  // One-sided endpoint slopes, clamped to keep the shape-preserving property.
  auto endpoint = [](double del_near, double del_far) {
    double s = (3.0 * del_near - del_far) / 2.0;
    if (s * del_near <= 0.0) return 0.0;
    if (std::fabs(s) > 3.0 * std::fabs(del_near)) return 3.0 * del_near;
    return s;
  };
  d[0] = endpoint(del[0], del[1]);
  d[g - 1] = endpoint(del[g - 2], del[g - 3]);
  return d;
}

}  // namespace

// ---------------------------------------------------------------------------
// Factories

RegimeChain RegimeChain::separable(Family fam, const Eigen::MatrixXd& p,
                                   std::vector<double> scale) {
  check_switch_matrix(p);
  const int k = static_cast<int>(p.rows());
  if (scale.empty()) scale.assign(k, 1.0);
  if (static_cast<int>(scale.size()) != k)
    throw std::invalid_argument("scale size must match state count");
  for (double s : scale)
    if (!(s > 0.0)) throw std::invalid_argument("hazard scale must be > 0");
  RegimeChain c;
  c.k_ = k;
  c.family_ = fam;
  c.p_ = p;
  c.scale_ = std::move(scale);
  return c;
}

RegimeChain RegimeChain::constant(const Eigen::MatrixXd& rates) {
  const int k = static_cast<int>(rates.rows());
  if (rates.cols() != k || k < 2) throw std::invalid_argument("rate matrix must be square, k >= 2");
  Eigen::MatrixXd p = Eigen::MatrixXd::Zero(k, k);
  std::vector<double> scale(k);
  for (int i = 0; i < k; ++i) {
    if (rates(i, i) != 0.0) throw std::invalid_argument("rate matrix diagonal must be zero");
    double total = 0.0;
    for (int j = 0; j < k; ++j) {
      if (!(rates(i, j) >= 0.0)) throw std::invalid_argument("rates must be >= 0");
      total += rates(i, j);
    }
    if (!(total > 0.0)) throw std::invalid_argument("each state needs positive total rate");
    scale[i] = total;
    for (int j = 0; j < k; ++j) p(i, j) = rates(i, j) / total;
  }
  RegimeChain c;
  c.k_ = k;
  c.family_ = Family::Constant;
  c.p_ = p;
  c.scale_ = std::move(scale);
  return c;
}

RegimeChain RegimeChain::age_weighted(const Eigen::MatrixXd& p, std::vector<double> scale) {
  return separable(Family::AgeWeighted, p, std::move(scale));
}

RegimeChain RegimeChain::age_weighted_literal(const Eigen::MatrixXd& p,
                                              std::vector<double> scale) {
  return separable(Family::AgeWeightedLiteral, p, std::move(scale));
}

RegimeChain RegimeChain::polynomial(std::vector<std::vector<double>> coeffs,
                                    const Eigen::MatrixXd& p) {
  check_switch_matrix(p);
  const int k = static_cast<int>(p.rows());
  if (static_cast<int>(coeffs.size()) != k)
    throw std::invalid_argument("one coefficient row per state required");
  RegimeChain c;
  c.k_ = k;
  c.family_ = Family::Polynomial;
  c.p_ = p;
  c.scale_.assign(k, 1.0);
  c.poly_ = std::move(coeffs);
  for (int i = 0; i < k; ++i) {
    bool positive = false;
    for (int s = 0; s <= 400; ++s) {
      double y = s * 0.5;
      double v = c.total_rate(i, y);
      if (!(v >= 0.0)) throw std::invalid_argument("polynomial hazard must be >= 0");
      if (v > 0.0) positive = true;
    }
    if (!positive || c.cumulative_hazard(i, 1e6) < 50.0)
      throw std::invalid_argument("polynomial hazard must accumulate without bound");
  }
  return c;
}

RegimeChain RegimeChain::tabulated(double dy, std::vector<Eigen::MatrixXd> table) {
  if (!(dy > 0.0) || table.size() < 2)
    throw std::invalid_argument("tabulated rates need dy > 0 and at least two nodes");
  const int k = static_cast<int>(table.front().rows());
  if (k < 2) throw std::invalid_argument("tabulated chain needs k >= 2");
  for (const auto& m : table) {
    if (m.rows() != k || m.cols() != k) throw std::invalid_argument("inconsistent table shapes");
    for (int i = 0; i < k; ++i) {
      if (m(i, i) != 0.0) throw std::invalid_argument("table diagonals must be zero");
      for (int j = 0; j < k; ++j)
        if (!(m(i, j) >= 0.0) || !std::isfinite(m(i, j)))
          throw std::invalid_argument("table rates must be finite and >= 0");
    }
  }
  for (int i = 0; i < k; ++i)
    if (!(table.back().row(i).sum() > 0.0))
      throw std::invalid_argument(
          "last table node needs positive total rate (hazard must keep accumulating)");
  RegimeChain c;
  c.k_ = k;
  c.family_ = Family::Tabulated;
  c.scale_.assign(k, 1.0);
  c.tab_dy_ = dy;
  c.tab_ = std::move(table);
  c.build_tabulated_cache();
  return c;
}

RegimeChain RegimeChain::frozen() {
  RegimeChain c;
  c.k_ = 1;
  c.family_ = Family::Constant;
  c.p_ = Eigen::MatrixXd::Zero(1, 1);
  c.scale_ = {0.0};
  return c;
}

void RegimeChain::build_tabulated_cache() {
  const int g = static_cast<int>(tab_.size());
  tab_slope_.assign(g, Eigen::MatrixXd::Zero(k_, k_));
  std::vector<double> col(g);
  for (int i = 0; i < k_; ++i)
    for (int j = 0; j < k_; ++j) {
      if (i == j) continue;
      for (int n = 0; n < g; ++n) col[n] = tab_[n](i, j);
      auto d = monotone_slopes(col, tab_dy_);
      for (int n = 0; n < g; ++n) tab_slope_[n](i, j) = d[n];
    }
  tab_cum_.assign(k_, std::vector<double>(g, 0.0));
  for (int i = 0; i < k_; ++i)
    for (int n = 1; n < g; ++n) {
      double v0 = tab_[n - 1].row(i).sum(), v1 = tab_[n].row(i).sum();
      double d0 = tab_slope_[n - 1].row(i).sum(), d1 = tab_slope_[n].row(i).sum();
      tab_cum_[i][n] = tab_cum_[i][n - 1] + hermite_cell_integral(tab_dy_, v0, d0, v1, d1);
    }
}

// ---------------------------------------------------------------------------
// Rates and hazards

double RegimeChain::hazard_shape(double y) const {
  switch (family_) {
    case Family::Constant: return 1.0;
    case Family::AgeWeighted: return y / (1.0 + y);
    case Family::AgeWeightedLiteral: return y - std::log1p(y);
    default: return 0.0;  // Polynomial/Tabulated handled by callers
  }
}

double RegimeChain::hazard_shape_integral(double y) const {
  switch (family_) {
    case Family::Constant: return y;
    case Family::AgeWeighted: return y - std::log1p(y);
    case Family::AgeWeightedLiteral:
      return 0.5 * y * y - (1.0 + y) * std::log1p(y) + y;
    default: return 0.0;
  }
}

double RegimeChain::rate(int i, int j, double y) const {
  if (i == j) return 0.0;
  y = std::fmax(y, 0.0);
  switch (family_) {
    case Family::Tabulated: {
      const int g = static_cast<int>(tab_.size());
      const double yn = y / tab_dy_;
      if (yn >= g - 1) return tab_.back()(i, j);
      const int c = static_cast<int>(yn);
      return std::fmax(0.0, hermite_eval(tab_[c](i, j), tab_slope_[c](i, j), tab_[c + 1](i, j),
                                         tab_slope_[c + 1](i, j), tab_dy_, yn - c));
    }
    case Family::Polynomial: return total_rate(i, y) * p_(i, j);
    default: return scale_[i] * hazard_shape(y) * p_(i, j);
  }
}

double RegimeChain::total_rate(int i, double y) const {
  y = std::fmax(y, 0.0);
  switch (family_) {
    case Family::Tabulated: {
      double s = 0.0;
      for (int j = 0; j < k_; ++j) s += rate(i, j, y);
      return s;
    }
    case Family::Polynomial: {
      double s = 0.0;
      for (int d = static_cast<int>(poly_[i].size()) - 1; d >= 0; --d)
        s = s * y + poly_[i][d];
      return std::fmax(0.0, s);
    }
    default: return scale_[i] * hazard_shape(y);
  }
}

double RegimeChain::cumulative_hazard(int i, double y) const {
  y = std::fmax(y, 0.0);
  switch (family_) {
    case Family::Tabulated: {
      const int g = static_cast<int>(tab_.size());
      const double y_end = (g - 1) * tab_dy_;
      if (y >= y_end) {
        double v_end = 0.0;
        for (int j = 0; j < k_; ++j) v_end += tab_.back()(i, j);
        return tab_cum_[i][g - 1] + v_end * (y - y_end);
      }
      const int c = static_cast<int>(y / tab_dy_);
      double v0 = tab_[c].row(i).sum(), v1 = tab_[c + 1].row(i).sum();
      double d0 = tab_slope_[c].row(i).sum(), d1 = tab_slope_[c + 1].row(i).sum();
      return tab_cum_[i][c] +
             hermite_partial_integral(tab_dy_, v0, d0, v1, d1, y / tab_dy_ - c);
    }
    case Family::Polynomial: {
      double s = 0.0;
      const int deg = static_cast<int>(poly_[i].size());
      for (int d = deg - 1; d >= 0; --d) s = s * y + poly_[i][d] / (d + 1.0);
      return s * y;
    }
    default: return scale_[i] * hazard_shape_integral(y);
  }
}

double RegimeChain::survival(int i, double y) const { return std::exp(-cumulative_hazard(i, y)); }

double RegimeChain::holding_cdf(int i, double y) const {
  return -std::expm1(-cumulative_hazard(i, y));
}

double RegimeChain::holding_pdf(int i, double y) const { return total_rate(i, y) * survival(i, y); }

double RegimeChain::survival_ratio(int i, double age, double s) const {
  return std::exp(-(cumulative_hazard(i, age + s) - cumulative_hazard(i, age)));
}

double RegimeChain::residual_cdf(int i, double age, double s) const {
  return -std::expm1(-(cumulative_hazard(i, age + s) - cumulative_hazard(i, age)));
}

bool RegimeChain::zero_hazard(int i) const {
  if (family_ == Family::Polynomial) {
    for (double c : poly_[i])
      if (c != 0.0) return false;
    return true;
  }
  if (family_ == Family::Tabulated) return false;  // construction requires accumulation
  return scale_[i] == 0.0;
}

double RegimeChain::survival_horizon(int i, double age, double tail) const {
  if (zero_hazard(i)) return kInf;
  const double target = cumulative_hazard(i, age) - std::log(tail);
  double s = 1.0;
  for (int it = 0; it < 300; ++it) {
    if (cumulative_hazard(i, age + s) >= target) return s;
    s *= 2.0;
  }
  throw std::runtime_error("hazard does not accumulate past the tail cutoff");
}

double RegimeChain::sample_residual(int i, double age, PathRng& rng) const {
  const double e = rng.exponential(1.0);
  if (zero_hazard(i)) return kInf;
  age = std::fmax(age, 0.0);
  const double target = cumulative_hazard(i, age) + e;
  double lo = 0.0, hi = 1.0;
  bool bracketed = false;
  for (int it = 0; it < 200; ++it) {
    if (cumulative_hazard(i, age + hi) >= target) {
      bracketed = true;
      break;
    }
    lo = hi;
    hi *= 2.0;
  }
  if (!bracketed) throw std::runtime_error("residual sampling: cumulative hazard plateaus");
  while (hi - lo > 1e-12 * (1.0 + hi)) {
    const double mid = 0.5 * (lo + hi);
    if (cumulative_hazard(i, age + mid) >= target)
      hi = mid;
    else
      lo = mid;
  }
  return 0.5 * (lo + hi);
}

// ---------------------------------------------------------------------------
// Switching

double RegimeChain::switch_prob(int i, int j, double y) const {
  if (k_ == 1) throw std::domain_error("frozen chain has no switch law");
  if (family_ != Family::Tabulated) return i == j ? 0.0 : p_(i, j);
  const double t = total_rate(i, y);
  if (t > 1e-14) return rate(i, j, y) / t;
  // All rates vanish here; take the ratio at the first grid node with mass.
  const int g = static_cast<int>(tab_.size());
  for (int n = static_cast<int>(std::ceil(y / tab_dy_)); n < g; ++n) {
    const double tn = tab_[n].row(i).sum();
    if (tn > 1e-14) return tab_[n](i, j) / tn;
  }
  throw std::runtime_error("switch law undefined: no rate mass above this age");
}

int RegimeChain::sample_switch(int i, double y, PathRng& rng) const {
  const double u = rng.uniform();
  double acc = 0.0;
  int last = -1;
  for (int j = 0; j < k_; ++j) {
    if (j == i) continue;
    acc += switch_prob(i, j, y);
    last = j;
    if (u < acc) return j;
  }
  return last;  // guard against rounding in the cumulative walk
}

Eigen::MatrixXd RegimeChain::embedded_matrix() const {
  if (k_ == 1) return Eigen::MatrixXd::Identity(1, 1);  // never jumps: conventional
  if (family_ != Family::Tabulated) return p_;
  Eigen::MatrixXd ph = Eigen::MatrixXd::Zero(k_, k_);
  for (int i = 0; i < k_; ++i) {
    const double end = survival_horizon(i, 0.0);
    double row = 0.0;
    for (int j = 0; j < k_; ++j) {
      if (j == i) continue;
      ph(i, j) = quad::adaptive_simpson(
          [&](double y) { return switch_prob(i, j, y) * holding_pdf(i, y); }, 0.0, end, 1e-9,
          1e-14);
      row += ph(i, j);
    }
    ph.row(i) /= row;
  }
  return ph;
}

bool irreducible(const Eigen::MatrixXd& m, double tol) {
  const int k = static_cast<int>(m.rows());
  std::vector<std::vector<bool>> reach(k, std::vector<bool>(k, false));
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < k; ++j) reach[i][j] = (i == j) || m(i, j) > tol;
  for (int mid = 0; mid < k; ++mid)
    for (int i = 0; i < k; ++i)
      if (reach[i][mid])
        for (int j = 0; j < k; ++j)
          if (reach[mid][j]) reach[i][j] = true;
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < k; ++j)
      if (!reach[i][j]) return false;
  return true;
}

// ---------------------------------------------------------------------------
// Joint quantities

namespace {

void check_state(std::span<const RegimeChain> chains, const ChainState& state) {
  if (chains.size() != state.regime.size() || chains.size() != state.age.size())
    throw std::invalid_argument("state arity must match chain count");
  for (std::size_t m = 0; m < chains.size(); ++m)
    if (state.regime[m] < 0 || state.regime[m] >= chains[m].states())
      throw std::invalid_argument("regime index out of range");
}

// Joint hazard accumulated over [0, s] from each component's current age.
double joint_delta_hazard(std::span<const RegimeChain> chains, const ChainState& state,
                          double s) {
  double sum = 0.0;
  for (std::size_t m = 0; m < chains.size(); ++m) {
    const int x = state.regime[m];
    sum += chains[m].cumulative_hazard(x, state.age[m] + s) -
           chains[m].cumulative_hazard(x, state.age[m]);
  }
  return sum;
}

double first_jump_horizon(std::span<const RegimeChain> chains, const ChainState& state) {
  double s = 1.0;
  for (int it = 0; it < 300; ++it) {
    if (joint_delta_hazard(chains, state, s) >= kTailHazard) return s;
    s *= 2.0;
  }
  throw std::runtime_error("joint hazard does not accumulate past the tail cutoff");
}

}  // namespace

double joint_survival_ratio(std::span<const RegimeChain> chains, const ChainState& state,
                            double s) {
  check_state(chains, state);
  return std::exp(-joint_delta_hazard(chains, state, s));
}

std::vector<double> next_component_prob(std::span<const RegimeChain> chains,
                                        const ChainState& state, double* raw_sum) {
  check_state(chains, state);
  const std::size_t c = chains.size();
  bool any = false;
  for (std::size_t m = 0; m < c; ++m) any = any || !chains[m].zero_hazard(state.regime[m]);
  if (!any) throw std::domain_error("no component has positive hazard");
  const double end = first_jump_horizon(chains, state);
  std::vector<double> p(c, 0.0);
  for (std::size_t l = 0; l < c; ++l) {
    if (chains[l].zero_hazard(state.regime[l])) continue;
    p[l] = quad::adaptive_simpson(
        [&](double s) {
          return std::exp(-joint_delta_hazard(chains, state, s)) *
                 chains[l].total_rate(state.regime[l], state.age[l] + s);
        },
        0.0, end, 1e-9, 1e-14);
  }
  double total = 0.0;
  for (double v : p) total += v;
  if (raw_sum != nullptr) *raw_sum = total;
  for (double& v : p) v /= total;
  return p;
}

double conditional_jump_cdf(std::span<const RegimeChain> chains, const ChainState& state, int l,
                            double r) {
  check_state(chains, state);
  if (chains[l].zero_hazard(state.regime[l]))
    throw std::domain_error("component cannot jump from this state");
  const double end = first_jump_horizon(chains, state);
  auto integrand = [&](double s) {
    return std::exp(-joint_delta_hazard(chains, state, s)) *
           chains[l].total_rate(state.regime[l], state.age[l] + s);
  };
  const double den = quad::adaptive_simpson(integrand, 0.0, end, 1e-9, 1e-14);
  if (r <= 0.0) return 0.0;
  const double num = quad::adaptive_simpson(integrand, 0.0, std::fmin(r, end), 1e-9, 1e-14);
  return std::fmin(num / den, 1.0);
}

double conditional_jump_pdf(std::span<const RegimeChain> chains, const ChainState& state, int l,
                            double r) {
  check_state(chains, state);
  if (chains[l].zero_hazard(state.regime[l]))
    throw std::domain_error("component cannot jump from this state");
  const double end = first_jump_horizon(chains, state);
  auto integrand = [&](double s) {
    return std::exp(-joint_delta_hazard(chains, state, s)) *
           chains[l].total_rate(state.regime[l], state.age[l] + s);
  };
  const double den = quad::adaptive_simpson(integrand, 0.0, end, 1e-9, 1e-14);
  return integrand(std::fmax(r, 0.0)) / den;
}

std::vector<PathSegment> simulate_chain(std::span<const RegimeChain> chains, ChainState state,
                                        double t0, double T, PathRng& rng) {
  check_state(chains, state);
  const std::size_t c = chains.size();
  std::vector<double> residual(c);
  for (std::size_t m = 0; m < c; ++m)
    residual[m] = chains[m].sample_residual(state.regime[m], state.age[m], rng);

  std::vector<PathSegment> path;
  double t = t0;
  while (t < T) {
    std::size_t l = 0;
    for (std::size_t m = 1; m < c; ++m)
      if (residual[m] < residual[l]) l = m;
    const double s = residual[l];
    if (t + s >= T || s == kInf) {
      path.push_back({t, T, state, -1, -1});
      break;
    }
    const double jump_age = state.age[l] + s;
    const int target = chains[l].sample_switch(state.regime[l], jump_age, rng);
    path.push_back({t, t + s, state, static_cast<int>(l), target});
    t += s;
    for (std::size_t m = 0; m < c; ++m) {
      state.age[m] += s;
      if (m != l) residual[m] -= s;
    }
    state.regime[l] = target;
    state.age[l] = 0.0;
    residual[l] = chains[l].sample_residual(target, 0.0, rng);
  }
  if (path.empty()) path.push_back({t0, T, state, -1, -1});
  return path;
}

}  // namespace riskswitch
