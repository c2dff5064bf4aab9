#include "riskswitch/market.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace riskswitch {

MarketSpec::MarketSpec(int assets, int brownian_dim, double theta,
                       std::vector<int> regime_counts, std::vector<Poly> rate,
                       std::vector<std::vector<Poly>> drift,
                       std::vector<std::vector<Eigen::MatrixXd>> vol_coeffs,
                       std::vector<JumpMeasure> measures, std::vector<std::vector<EtaMap>> eta,
                       PortfolioSet constraint)
    : n_(assets),
      m1_(brownian_dim),
      theta_(theta),
      regime_counts_(std::move(regime_counts)),
      r_(std::move(rate)),
      mu_(std::move(drift)),
      sigma_(std::move(vol_coeffs)),
      measures_(std::move(measures)),
      eta_(std::move(eta)),
      constraint_(std::move(constraint)) {
  if (n_ < 1 || m1_ < 1) throw std::invalid_argument("need at least one asset and one factor");
  if (!(theta_ > 0.0)) throw std::invalid_argument("risk sensitivity theta must be > 0");
  combos_ = 1;
  for (int k : regime_counts_) {
    if (k < 1) throw std::invalid_argument("regime counts must be >= 1");
    combos_ *= k;
  }
  auto combo_sized = [&](std::size_t s) { return s == static_cast<std::size_t>(combos_); };
  if (!combo_sized(r_.size()) || !combo_sized(mu_.size()) || !combo_sized(sigma_.size()))
    throw std::invalid_argument("coefficient tables must cover every regime combination");
  for (const auto& m : mu_)
    if (m.size() != static_cast<std::size_t>(n_))
      throw std::invalid_argument("drift rows must have one entry per asset");
  for (const auto& s : sigma_) {
    if (s.empty()) throw std::invalid_argument("volatility needs at least the constant term");
    for (const auto& coeff : s)
      if (coeff.rows() != n_ || coeff.cols() != m1_)
        throw std::invalid_argument("volatility blocks must be assets x brownian_dim");
  }
  if (eta_.size() != static_cast<std::size_t>(n_))
    throw std::invalid_argument("eta needs one row per asset");
  for (const auto& row : eta_)
    if (row.size() != measures_.size())
      throw std::invalid_argument("eta rows must have one entry per jump source");
  for (const auto& m : measures_) {
    if (m.has_density() && !(m.hi > m.lo))
      throw std::invalid_argument("density support must be a nonempty interval");
    if (m.mass < 0.0) throw std::invalid_argument("density mass must be >= 0");
    if (m.atom_z.size() != m.atom_w.size())
      throw std::invalid_argument("atom lists must pair up");
    for (double w : m.atom_w)
      if (!(w > 0.0)) throw std::invalid_argument("atom weights must be > 0");
    if (!(m.total_mass() > 0.0)) throw std::invalid_argument("jump measures must carry mass");
  }
  if (constraint_.lower.size() != n_ || constraint_.upper.size() != n_)
    throw std::invalid_argument("constraint box must match asset count");
  homogeneous_ = true;
  for (const auto& p : r_) homogeneous_ = homogeneous_ && p.constant();
  for (const auto& row : mu_)
    for (const auto& p : row) homogeneous_ = homogeneous_ && p.constant();
  for (const auto& s : sigma_) homogeneous_ = homogeneous_ && s.size() <= 1;
}

int MarketSpec::flatten(std::span<const int> regimes) const {
  if (regimes.size() != regime_counts_.size())
    throw std::invalid_argument("regime vector arity mismatch");
  int flat = 0;
  for (std::size_t c = 0; c < regimes.size(); ++c) {
    if (regimes[c] < 0 || regimes[c] >= regime_counts_[c])
      throw std::invalid_argument("regime index out of range");
    flat = flat * regime_counts_[c] + regimes[c];
  }
  return flat;
}

std::vector<int> MarketSpec::unflatten(int flat) const {
  std::vector<int> x(regime_counts_.size());
  for (std::size_t c = regime_counts_.size(); c-- > 0;) {
    x[c] = flat % regime_counts_[c];
    flat /= regime_counts_[c];
  }
  return x;
}

double MarketSpec::rate(double t, int xflat) const { return r_[xflat].at(t); }

Eigen::VectorXd MarketSpec::drift(double t, int xflat) const {
  Eigen::VectorXd mu(n_);
  for (int l = 0; l < n_; ++l) mu[l] = mu_[xflat][l].at(t);
  return mu;
}

Eigen::VectorXd MarketSpec::excess(double t, int xflat) const {
  return drift(t, xflat).array() - rate(t, xflat);
}

Eigen::MatrixXd MarketSpec::vol(double t, int xflat) const {
  const auto& coeffs = sigma_[xflat];
  Eigen::MatrixXd s = Eigen::MatrixXd::Zero(n_, m1_);
  for (std::size_t d = coeffs.size(); d-- > 0;) s = s * t + coeffs[d];
  return s;
}

Eigen::MatrixXd MarketSpec::diffusion(double t, int xflat) const {
  Eigen::MatrixXd s = vol(t, xflat);
  return s * s.transpose();
}

namespace {
constexpr int kScanPoints = 33;  // time-grid resolution for bound scans
}

double MarketSpec::coefficient_bound(double T) const {
  double m = 0.0;
  const int steps = time_homogeneous() ? 1 : kScanPoints;
  for (int x = 0; x < combos_; ++x)
    for (int s = 0; s < steps; ++s) {
      double t = steps == 1 ? 0.0 : T * s / (steps - 1.0);
      m = std::fmax(m, std::fabs(rate(t, x)));
      m = std::fmax(m, excess(t, x).cwiseAbs().maxCoeff());
      m = std::fmax(m, diffusion(t, x).cwiseAbs().maxCoeff());
    }
  return m;
}

double MarketSpec::min_ellipticity(double T) const {
  double m = std::numeric_limits<double>::infinity();
  const int steps = time_homogeneous() ? 1 : kScanPoints;
  for (int x = 0; x < combos_; ++x)
    for (int s = 0; s < steps; ++s) {
      double t = steps == 1 ? 0.0 : T * s / (steps - 1.0);
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(diffusion(t, x));
      m = std::fmin(m, es.eigenvalues().minCoeff());
    }
  return m;
}

double worst_jump_factor(const MarketSpec& spec, const Eigen::VectorXd& u, int j) {
  const JumpMeasure& m = spec.measure(j);
  // w_j(z) = sum_l u_l (shift_l + slope_l z) is affine in z.
  double shift = 0.0, slope = 0.0;
  for (int l = 0; l < spec.assets(); ++l) {
    shift += u[l] * spec.eta(l, j).shift;
    slope += u[l] * spec.eta(l, j).slope;
  }
  double worst = std::numeric_limits<double>::infinity();
  if (m.has_density())
    worst = std::fmin(1.0 + shift + slope * m.lo, 1.0 + shift + slope * m.hi);
  for (double z : m.atom_z) worst = std::fmin(worst, 1.0 + shift + slope * z);
  return worst;
}

bool admissible(const MarketSpec& spec, const Eigen::VectorXd& u) {
  const PortfolioSet& c = spec.constraint();
  if (u.size() != spec.assets()) return false;
  for (int l = 0; l < u.size(); ++l)
    if (u[l] < c.lower[l] || u[l] > c.upper[l]) return false;
  if (u.sum() > c.max_total) return false;
  for (int j = 0; j < spec.jump_sources(); ++j)
    if (worst_jump_factor(spec, u, j) < c.delta) return false;
  return true;
}

double sample_mark(const JumpMeasure& m, PathRng& rng) {
  const double total = m.total_mass();
  double pick = rng.uniform() * total;
  for (std::size_t a = 0; a < m.atom_z.size(); ++a) {
    if (pick < m.atom_w[a]) return m.atom_z[a];
    pick -= m.atom_w[a];
  }
  // Continuous part. The density is uniform, so the 4096-knot inverse-cdf
  // table is an exact linear map; kept as a table so other density shapes
  // slot in without touching call sites.
  static constexpr int kKnots = 4096;
  const double u = std::fmin(pick / m.mass, 1.0);
  const double pos = u * (kKnots - 1);
  const int cell = std::fmin(static_cast<double>(kKnots - 2), std::floor(pos));
  auto knot = [&](int i) { return m.lo + (m.hi - m.lo) * i / (kKnots - 1.0); };
  return knot(cell) + (pos - cell) * (knot(cell + 1) - knot(cell));
}

namespace {

void push(std::vector<ValidationIssue>& out, const std::string& check, bool pass,
          const std::string& msg) {
  out.push_back({check, pass, msg});
}

}  // namespace

std::vector<ValidationIssue> validate(const MarketSpec& spec,
                                      std::span<const RegimeChain> chains, double T) {
  std::vector<ValidationIssue> out;
  std::ostringstream msg;

  // Chain arity against the coefficient tables.
  bool arity = chains.size() == spec.regime_counts().size();
  if (arity)
    for (std::size_t c = 0; c < chains.size(); ++c)
      arity = arity && chains[c].states() == spec.regime_counts()[c];
  push(out, "chain-arity", arity, arity ? "" : "chain count/state counts disagree with tables");

  // Jump-response integrability: affine responses against finite measures
  // are square-integrable iff finite; the log response needs eta > -1 on
  // every support.
  bool eta_ok = true;
  std::string eta_msg;
  for (int l = 0; l < spec.assets() && eta_ok; ++l)
    for (int j = 0; j < spec.jump_sources() && eta_ok; ++j) {
      const auto& m = spec.measure(j);
      const auto& e = spec.eta(l, j);
      double worst = std::numeric_limits<double>::infinity();
      if (m.has_density()) worst = std::fmin(e.at(m.lo), e.at(m.hi));
      for (double z : m.atom_z) worst = std::fmin(worst, e.at(z));
      if (!(worst > -1.0)) {
        eta_ok = false;
        msg.str("");
        msg << "eta(" << l << "," << j << ") reaches " << worst << " <= -1 on the support";
        eta_msg = msg.str();
      }
    }
  push(out, "jump-response", eta_ok, eta_msg);

  // Factor dimension and uniform ellipticity.
  bool dims = spec.brownian_dim() >= spec.assets();
  push(out, "factor-dimension", dims, dims ? "" : "need brownian_dim >= assets");
  double min_eig = spec.min_ellipticity(T);
  bool elliptic = min_eig > 0.0;
  msg.str("");
  msg << "min eigenvalue of sigma sigma^T over horizon: " << min_eig;
  push(out, "ellipticity", elliptic, msg.str());

  // Embedded-chain irreducibility (trivially true for a frozen chain).
  bool irr = true;
  std::string irr_msg;
  for (std::size_t c = 0; c < chains.size(); ++c) {
    bool ok = chains[c].states() == 1 || irreducible(chains[c].embedded_matrix());
    if (!ok) {
      irr = false;
      msg.str("");
      msg << "embedded matrix of chain " << c << " is reducible";
      irr_msg = msg.str();
    }
  }
  push(out, "embedded-irreducible", irr, irr_msg);

  // Degenerate chains are legal but worth reporting.
  for (std::size_t c = 0; c < chains.size(); ++c)
    if (chains[c].states() == 1) {
      msg.str("");
      msg << "chain " << c << " is frozen (single state, zero hazard)";
      push(out, "degenerate-chain", true, msg.str());
    }

  // Constraint set must contain the origin (and keep it jump-safe).
  const auto& box = spec.constraint();
  bool origin = box.max_total >= 0.0 && box.delta > 0.0 && box.delta <= 1.0;
  for (int l = 0; l < spec.assets(); ++l)
    origin = origin && box.lower[l] <= 0.0 && box.upper[l] >= 0.0 &&
             box.lower[l] < box.upper[l];
  push(out, "constraint-origin", origin,
       origin ? "" : "constraint set must contain the zero portfolio");

  // Finite measures (constructor enforces structure; report the masses).
  double total = 0.0;
  for (int j = 0; j < spec.jump_sources(); ++j) total += spec.measure(j).total_mass();
  msg.str("");
  msg << "total jump intensity " << total;
  push(out, "finite-measures", std::isfinite(total), msg.str());

  return out;
}

}  // namespace riskswitch
