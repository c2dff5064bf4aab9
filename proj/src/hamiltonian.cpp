#include "riskswitch/hamiltonian.hpp"

#include <bit>
#include <cmath>
#include <stdexcept>

#include "riskswitch/quadrature.hpp"

namespace riskswitch {

double g_objective(const MarketSpec& spec, double t, int xflat, const Eigen::VectorXd& u) {
  const double q = 0.5 * spec.theta();
  const double r = spec.rate(t, xflat);
  const Eigen::VectorXd b = spec.excess(t, xflat);
  const Eigen::MatrixXd a = spec.diffusion(t, xflat);

  double g = -q * (r + b.dot(u)) + 0.5 * q * (q + 1.0) * u.dot(a * u);

  for (int j = 0; j < spec.jump_sources(); ++j) {
    const JumpMeasure& m = spec.measure(j);
    if (worst_jump_factor(spec, u, j) < spec.constraint().delta - 1e-12)
      throw std::domain_error("portfolio violates the jump-safety margin");
    double shift = 0.0, slope = 0.0;
    for (int l = 0; l < spec.assets(); ++l) {
      shift += u[l] * spec.eta(l, j).shift;
      slope += u[l] * spec.eta(l, j).slope;
    }
    if (m.has_density()) {
      const double dens = m.mass / (m.hi - m.lo);
      g += quad::integrate_gl(
          [&](double z) {
            return (std::pow(1.0 + shift + slope * z, -q) - 1.0) * dens;
          },
          m.lo, m.hi, 64);
    }
    for (std::size_t atom = 0; atom < m.atom_z.size(); ++atom)
      g += m.atom_w[atom] * (std::pow(1.0 + shift + slope * m.atom_z[atom], -q) - 1.0);
  }
  return g;
}

namespace {

// Central-difference gradient, step 1e-5 scaled per coordinate.
Eigen::VectorXd num_gradient(const MarketSpec& spec, double t, int x, const Eigen::VectorXd& u) {
  const int n = static_cast<int>(u.size());
  Eigen::VectorXd g(n);
  for (int l = 0; l < n; ++l) {
    const double h = 1e-5 * (1.0 + std::fabs(u[l]));
    Eigen::VectorXd up = u, dn = u;
    up[l] += h;
    dn[l] -= h;
    g[l] = (g_objective(spec, t, x, up) - g_objective(spec, t, x, dn)) / (2.0 * h);
  }
  return g;
}

Eigen::MatrixXd num_hessian(const MarketSpec& spec, double t, int x, const Eigen::VectorXd& u) {
  const int n = static_cast<int>(u.size());
  Eigen::MatrixXd h(n, n);
  const double step = 1e-5;
  for (int i = 0; i < n; ++i)
    for (int j = i; j < n; ++j) {
      const double hi = step * (1.0 + std::fabs(u[i]));
      const double hj = step * (1.0 + std::fabs(u[j]));
      Eigen::VectorXd pp = u, pm = u, mp = u, mm = u;
      pp[i] += hi; pp[j] += hj;
      pm[i] += hi; pm[j] -= hj;
      mp[i] -= hi; mp[j] += hj;
      mm[i] -= hi; mm[j] -= hj;
      h(i, j) = h(j, i) = (g_objective(spec, t, x, pp) - g_objective(spec, t, x, pm) -
                           g_objective(spec, t, x, mp) + g_objective(spec, t, x, mm)) /
                          (4.0 * hi * hj);
    }
  return h;
}

// Jump-safety cuts as linear inequalities coef.u >= delta - 1, one per
// (source, support point); affine responses make this enumeration exact.
struct LinearCut {
  Eigen::VectorXd coef;
};

std::vector<LinearCut> jump_cuts(const MarketSpec& spec) {
  std::vector<LinearCut> cuts;
  for (int j = 0; j < spec.jump_sources(); ++j) {
    const JumpMeasure& m = spec.measure(j);
    std::vector<double> zs(m.atom_z);
    if (m.has_density()) {
      zs.push_back(m.lo);
      zs.push_back(m.hi);
    }
    for (double z : zs) {
      LinearCut c;
      c.coef.resize(spec.assets());
      for (int l = 0; l < spec.assets(); ++l) c.coef[l] = spec.eta(l, j).at(z);
      cuts.push_back(std::move(c));
    }
  }
  return cuts;
}

HamiltonianResult minimize_univariate(const MarketSpec& spec, double t, int x) {
  const PortfolioSet& box = spec.constraint();
  const double delta = box.delta;
  double lo = box.lower[0];
  double hi = std::fmin(box.upper[0], box.max_total);
  for (const auto& cut : jump_cuts(spec)) {
    const double e = cut.coef[0];
    if (e > 1e-14)
      lo = std::fmax(lo, (delta - 1.0) / e);
    else if (e < -1e-14)
      hi = std::fmin(hi, (delta - 1.0) / e);
  }
  if (!(lo <= 0.0 && hi >= 0.0))
    throw std::invalid_argument("admissible interval does not contain the origin");

  auto g = [&](double u) {
    return g_objective(spec, t, x, Eigen::VectorXd::Constant(1, u));
  };

  // Golden-section bracket on the (strictly convex) objective.
  const double phi = 0.5 * (std::sqrt(5.0) - 1.0);
  double a = lo, b = hi;
  double c = b - phi * (b - a), d = a + phi * (b - a);
  double fc = g(c), fd = g(d);
  int iters = 0;
  while (b - a > 1e-11 * (1.0 + std::fabs(a) + std::fabs(b)) && iters < 200) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - phi * (b - a);
      fc = g(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + phi * (b - a);
      fd = g(d);
    }
    ++iters;
  }
  double u = 0.5 * (a + b);

  // Newton polish; derivatives by central differences, probes kept feasible.
  for (int polish = 0; polish < 3; ++polish) {
    const double h = 1e-6 * (1.0 + std::fabs(u));
    if (u - h < lo || u + h > hi) break;
    const double gp = (g(u + h) - g(u - h)) / (2.0 * h);
    const double gpp = (g(u + h) - 2.0 * g(u) + g(u - h)) / (h * h);
    if (!(gpp > 0.0)) break;
    double next = u - gp / gpp;
    next = std::fmin(std::fmax(next, lo), hi);
    if (g(next) <= g(u)) u = next;
    ++iters;
  }

  const double h = 1e-6 * (1.0 + std::fabs(u));
  double grad = 0.0;
  if (hi - lo > 4.0 * h) {
    const double um = std::fmin(std::fmax(u, lo + h), hi - h);
    grad = (g(um + h) - g(um - h)) / (2.0 * h);
    if (u <= lo + 2.0 * h && grad > 0.0) grad = 0.0;  // pinned at the boundary
    if (u >= hi - 2.0 * h && grad < 0.0) grad = 0.0;
  }

  HamiltonianResult res;
  res.value = g(u);
  res.minimizer = Eigen::VectorXd::Constant(1, u);
  res.iterations = iters;
  res.grad_norm = std::fabs(grad);
  res.converged = res.grad_norm <= 1e-9 || (b - a) <= 1e-10 * (1.0 + std::fabs(u));
  return res;
}

HamiltonianResult minimize_multivariate(const MarketSpec& spec, double t, int x) {
  const PortfolioSet& box = spec.constraint();
  const int n = spec.assets();
  const auto cuts = jump_cuts(spec);
  const double delta = box.delta;

  auto clip_box = [&](Eigen::VectorXd v) {
    for (int l = 0; l < n; ++l) v[l] = std::fmin(std::fmax(v[l], box.lower[l]), box.upper[l]);
    return v;
  };

  // Outward normals of the constraints active at u: box faces, total cap,
  // jump-safety cuts. Cuts read coef.u >= delta - 1, so -coef points out.
  auto active_normals = [&](const Eigen::VectorXd& u) {
    std::vector<Eigen::VectorXd> ns;
    const double tol = 1e-10;
    for (int l = 0; l < n; ++l) {
      if (u[l] >= box.upper[l] - tol * (1.0 + std::fabs(box.upper[l])))
        ns.push_back(Eigen::VectorXd::Unit(n, l));
      else if (u[l] <= box.lower[l] + tol * (1.0 + std::fabs(box.lower[l])))
        ns.push_back(-Eigen::VectorXd::Unit(n, l));
    }
    if (std::isfinite(box.max_total) &&
        u.sum() >= box.max_total - tol * (1.0 + std::fabs(box.max_total)))
      ns.push_back(Eigen::VectorXd::Ones(n));
    for (const auto& cut : cuts)
      if (1.0 + cut.coef.dot(u) - delta <= tol) ns.push_back(-cut.coef);
    return ns;
  };

  // Face-tangential gradient grad + N^T mu with least-squares multipliers
  // clamped to mu >= 0 (constraints with negative multipliers are dropped,
  // which lets the iterate slide off a non-binding face). Zero iff the KKT
  // conditions hold at u.
  auto kkt_residual = [&](const Eigen::VectorXd& grad, std::vector<Eigen::VectorXd> ns) {
    while (!ns.empty()) {
      const int k = static_cast<int>(ns.size());
      Eigen::MatrixXd N(k, n);
      for (int i = 0; i < k; ++i) N.row(i) = ns[i].transpose();
      Eigen::VectorXd mu = (N * N.transpose()).ldlt().solve(N * (-grad));
      if (!mu.allFinite()) {
        ns.pop_back();
        continue;
      }
      int worst = -1;
      double most_negative = -1e-12;
      for (int i = 0; i < k; ++i)
        if (mu[i] < most_negative) {
          most_negative = mu[i];
          worst = i;
        }
      if (worst < 0) return Eigen::VectorXd(grad + N.transpose() * mu);
      ns.erase(ns.begin() + worst);
    }
    return grad;
  };

  Eigen::VectorXd u = Eigen::VectorXd::Zero(n);
  double fu = g_objective(spec, t, x, u);
  HamiltonianResult res;
  res.minimizer = u;

  int iter = 0;
  double proj_norm = 0.0;
  bool converged = false;
  for (; iter < 200; ++iter) {
    const Eigen::VectorXd grad = num_gradient(spec, t, x, u);
    const auto ns = active_normals(u);
    const Eigen::VectorXd resid = kkt_residual(grad, ns);
    proj_norm = resid.cwiseAbs().maxCoeff();
    if (proj_norm <= 1e-9 * (1.0 + grad.cwiseAbs().maxCoeff())) {
      converged = true;
      break;
    }

    Eigen::VectorXd dir;
    double alpha_init = 1.0;
    const Eigen::MatrixXd hess = num_hessian(spec, t, x, u);
    if (ns.empty()) {
      // Interior: Newton with a descent check, steepest descent fallback.
      Eigen::LDLT<Eigen::MatrixXd> ldlt(hess);
      if (ldlt.info() == Eigen::Success) {
        dir = -ldlt.solve(grad);
        if (!(dir.dot(grad) < 0.0) || !dir.allFinite()) dir = -grad;
      } else {
        dir = -grad;
      }
    } else {
      dir = -resid;  // tangent to every retained active face
      // Exact line minimum of the local quadratic model, so descent along a
      // face converges at the Newton rate instead of a fixed unit stride.
      const double curv = dir.dot(hess * dir);
      if (curv > 0.0 && std::isfinite(curv)) alpha_init = resid.squaredNorm() / curv;
    }

    // Exact feasible stride along dir: box, total cap, affine cuts.
    double alpha_max = 1e100;
    for (int l = 0; l < n; ++l) {
      if (dir[l] > 1e-16) alpha_max = std::fmin(alpha_max, (box.upper[l] - u[l]) / dir[l]);
      if (dir[l] < -1e-16) alpha_max = std::fmin(alpha_max, (box.lower[l] - u[l]) / dir[l]);
    }
    if (std::isfinite(box.max_total) && dir.sum() > 1e-16)
      alpha_max = std::fmin(alpha_max, (box.max_total - u.sum()) / dir.sum());
    for (const auto& cut : cuts) {
      const double du = cut.coef.dot(dir);
      if (du < -1e-16) {
        const double room = 1.0 + cut.coef.dot(u) - delta;
        alpha_max = std::fmin(alpha_max, room / (-du));
      }
    }
    alpha_max *= 1.0 - 1e-12;  // keep candidates strictly inside the margin
    if (!(alpha_max > 0.0)) break;

    double alpha = std::fmin(alpha_init, alpha_max);
    const double slope = grad.dot(dir);
    bool stepped = false;
    for (int bt = 0; bt < 60; ++bt) {
      Eigen::VectorXd cand = clip_box(u + alpha * dir);
      double fc = g_objective(spec, t, x, cand);
      if (fc <= fu + 1e-4 * alpha * slope) {
        u = cand;
        fu = fc;
        stepped = true;
        break;
      }
      alpha *= 0.5;
    }
    if (!stepped) break;
  }

  res.value = fu;
  res.minimizer = u;
  res.iterations = iter;
  res.grad_norm = proj_norm;
  res.converged = converged;
  return res;
}

}  // namespace

HamiltonianResult minimize_g(const MarketSpec& spec, double t, int xflat) {
  return spec.assets() == 1 ? minimize_univariate(spec, t, xflat)
                            : minimize_multivariate(spec, t, xflat);
}

double h_lower_bound(const MarketSpec& spec, double T) {
  const double q = 0.5 * spec.theta();
  const double m = spec.coefficient_bound(T);
  const double floor = std::fmax(spec.min_ellipticity(T), 1e-300);
  double jump_mass = 0.0;
  for (int j = 0; j < spec.jump_sources(); ++j) jump_mass += spec.measure(j).total_mass();
  // min over s >= 0 of -q m (1 + s) + q(q+1)/2 floor s^2, minus the jump mass
  return -q * m - 0.5 * q * m * m / ((q + 1.0) * floor) - jump_mass;
}

const HamiltonianResult& HamiltonianTable::at(double t, int xflat) const {
  const auto key = std::make_pair(std::bit_cast<std::uint64_t>(t), xflat);
  std::lock_guard<std::mutex> lock(mutex_);
  auto it = cache_.find(key);
  if (it == cache_.end()) it = cache_.emplace(key, minimize_g(*spec_, t, xflat)).first;
  return it->second;
}

double big_h(const HamiltonianTable& table, double t1, double t2, int xflat, int panels) {
  if (t2 <= t1) return 0.0;
  if (table.spec().time_homogeneous()) return (t2 - t1) * table.at(0.0, xflat).value;
  return quad::composite_simpson([&](double s) { return table.at(s, xflat).value; }, t1, t2,
                                 panels);
}

double uniform_jump_term(double u, double theta, double a, double b, double w) {
  const double q = 0.5 * theta;
  const double zmax = std::fmax(std::fabs(a), std::fabs(b));
  if (std::fabs(u) * zmax < 1e-8) {
    // (1+uz)^{-q} - 1 = -q u z + q(q+1)/2 (u z)^2 + O((uz)^3)
    const double mean = 0.5 * (a + b);
    const double m2 = (a * a + a * b + b * b) / 3.0;
    return w * (-q * u * mean + 0.5 * q * (q + 1.0) * u * u * m2);
  }
  const double xa = 1.0 + u * a, xb = 1.0 + u * b;
  const double p = 1.0 - q;
  double lever;
  if (std::fabs(p) < 1e-7) {
    // (xb^p - xa^p)/p -> ln(xb/xa) * (1 + p (ln xa + ln xb)/2)
    const double la = std::log(xa), lb = std::log(xb);
    lever = (lb - la) * (1.0 + 0.5 * p * (la + lb));
  } else {
    lever = (std::pow(xb, p) - std::pow(xa, p)) / p;
  }
  return w * (lever / (u * (b - a)) - 1.0);
}

}  // namespace riskswitch
