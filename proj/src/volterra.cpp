#include "riskswitch/volterra.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <ostream>
#include <stdexcept>
#include <vector>

#include "riskswitch/kernels.hpp"

namespace riskswitch {

namespace {

int step_count(double dt, double T) {
  if (!(dt > 0.0)) throw std::invalid_argument("dt must be positive");
  if (!(T >= 0.0)) throw std::invalid_argument("horizon must be nonnegative");
  const auto M = static_cast<int>(std::llround(T / dt));
  if (std::fabs(M * dt - T) > 1e-9 * std::max(T, 1.0))
    throw std::invalid_argument("dt must divide the horizon");
  return M;
}

// exp of the h integral over the last m steps, laid out [m * combos + x].
std::vector<double> build_hhat(const HamiltonianTable& table, int M, double dt, double T) {
  const int combos = table.spec().regime_combos();
  std::vector<double> hhat(static_cast<std::size_t>(M + 1) * combos, 1.0);
  for (int x = 0; x < combos; ++x) {
    if (table.spec().time_homogeneous()) {
      const double h = table.at(0.0, x).value;
      for (int m = 1; m <= M; ++m)
        hhat[static_cast<std::size_t>(m) * combos + x] = std::exp(h * m * dt);
    } else {
      double acc = 0.0;
      for (int m = 1; m <= M; ++m) {
        acc += big_h(table, T - m * dt, T - (m - 1) * dt, x, 8);
        hhat[static_cast<std::size_t>(m) * combos + x] = std::exp(acc);
      }
    }
  }
  return hhat;
}

double median_ratio(const std::vector<double>& deltas) {
  std::vector<double> ratios;
  const std::size_t n = deltas.size();
  for (std::size_t i = n > 5 ? n - 5 : 1; i < n; ++i)
    if (deltas[i - 1] > 0.0) ratios.push_back(deltas[i] / deltas[i - 1]);
  if (ratios.empty()) return 0.0;
  std::nth_element(ratios.begin(), ratios.begin() + ratios.size() / 2, ratios.end());
  return ratios[ratios.size() / 2];
}

}  // namespace

PsiGrid solve_reduced(const MarketSpec& spec, const RegimeChain& chain, double dt, double T) {
  if (spec.regime_counts().size() != 1 || spec.regime_combos() != chain.states())
    throw std::invalid_argument("reduced solve needs a single driving chain matching the spec");
  const int k = chain.states();
  const int M = step_count(dt, T);

  PsiGrid psi;
  psi.mode_ = PsiMode::Reduced;
  psi.dt_ = dt;
  psi.steps_ = M;
  psi.theta_ = spec.theta();
  psi.counts_ = {k};
  psi.combos_ = k;
  psi.chains_ = {chain};

  HamiltonianTable table(spec);
  psi.hhat_ = build_hhat(table, M, dt, T);
  psi.values_.assign(static_cast<std::size_t>(M + 1) * k, 1.0);
  if (M == 0) return psi;

  // Holding density f_i, survival S_i, and the switch kernel
  // b_ij(l dt) = f_i(l dt) p_ij(l dt) on the step grid.
  std::vector<std::vector<double>> surv(k, std::vector<double>(M + 1));
  std::vector<std::vector<std::vector<double>>> b(
      k, std::vector<std::vector<double>>(k, std::vector<double>(M + 1)));
  for (int i = 0; i < k; ++i) {
    for (int m = 0; m <= M; ++m) surv[i][m] = chain.survival(i, m * dt);
    for (int l = 0; l <= M; ++l) {
      const double f = chain.holding_pdf(i, l * dt);
      for (int j = 0; j < k; ++j)
        b[i][j][l] = f == 0.0 ? 0.0 : f * chain.switch_prob(i, j, l * dt);
    }
  }

  // Implicit age-zero coupling: (I - dt/2 B(0)) psi^m = history terms. The
  // matrix is a perturbation of the identity; insist on strict diagonal
  // dominance so the step is well posed.
  Eigen::MatrixXd A = Eigen::MatrixXd::Identity(k, k);
  for (int i = 0; i < k; ++i) {
    double row = 0.0;
    for (int j = 0; j < k; ++j) {
      A(i, j) -= 0.5 * dt * b[i][j][0];
      row += 0.5 * dt * b[i][j][0];
    }
    if (row >= 1.0)
      throw std::invalid_argument("time step too large for the implicit switch step");
  }
  const Eigen::PartialPivLU<Eigen::MatrixXd> lu(A);

  // History products q_ij[m'] = psi^{m'}(j,0) / hhat_i[m'], appended once
  // per step so each march step is one reversed dot per (i, j).
  std::vector<std::vector<std::vector<double>>> q(k, std::vector<std::vector<double>>(k));
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < k; ++j) {
      q[i][j].reserve(M);
      q[i][j].push_back(1.0);
    }

  Eigen::VectorXd rhs(k), sol(k);
  for (int m = 1; m <= M; ++m) {
    for (int i = 0; i < k; ++i) {
      double acc = 0.0;
      for (int j = 0; j < k; ++j)
        // trapezoid interior weights are one; the l = m endpoint carries
        // one half and multiplies q[0] = 1 exactly
        acc += kernels::dot_rev(b[i][j].data() + 1, q[i][j].data(), m) - 0.5 * b[i][j][m];
      rhs[i] = psi.hhat_[static_cast<std::size_t>(m) * k + i] * (surv[i][m] + dt * acc);
    }
    sol = lu.solve(rhs);
    for (int i = 0; i < k; ++i) {
      if (!std::isfinite(sol[i]))
        throw std::runtime_error("reduced march produced a non-finite value");
      psi.values_[static_cast<std::size_t>(m) * k + i] = sol[i];
    }
    for (int i = 0; i < k; ++i)
      for (int j = 0; j < k; ++j)
        q[i][j].push_back(psi.values_[static_cast<std::size_t>(m) * k + j] /
                          psi.hhat_[static_cast<std::size_t>(m) * k + i]);
  }
  return psi;
}

double PsiGrid::reduced_eval(int m, int state, double age) const {
  if (m == 0) return 1.0;
  const int k = combos_;
  if (age == 0.0) return values_[static_cast<std::size_t>(m) * k + state];
  const RegimeChain& chain = chains_[0];
  const double hm = hhat_[static_cast<std::size_t>(m) * k + state];
  double out = chain.survival_ratio(state, age, m * dt_) * hm;
  double sum = 0.0;
  for (int l = 0; l <= m; ++l) {
    const double w = (l == 0 || l == m) ? 0.5 : 1.0;
    const double shifted = age + l * dt_;
    const double dens =
        chain.total_rate(state, shifted) * chain.survival_ratio(state, age, l * dt_);
    if (dens == 0.0) continue;
    const double ratio = hm / hhat_[static_cast<std::size_t>(m - l) * k + state];
    double inner = 0.0;
    for (int j = 0; j < k; ++j) {
      const double p = chain.switch_prob(state, j, shifted);
      if (p != 0.0) inner += p * values_[static_cast<std::size_t>(m - l) * k + j];
    }
    sum += w * dens * ratio * inner;
  }
  return out + dt_ * sum;
}

PsiGrid solve_general(const MarketSpec& spec, std::span<const RegimeChain> chains, double dt,
                      double T, double y_step, double y_max) {
  const int ncomp = static_cast<int>(chains.size());
  if (ncomp < 1 || ncomp > 3)
    throw std::invalid_argument("general solve supports one to three driving components");
  if (static_cast<int>(spec.regime_counts().size()) != ncomp)
    throw std::invalid_argument("component count differs between spec and chains");
  for (int c = 0; c < ncomp; ++c)
    if (spec.regime_counts()[c] != chains[c].states())
      throw std::invalid_argument("regime count differs between spec and chain");
  const int M = step_count(dt, T);
  if (!(y_step > 0.0)) throw std::invalid_argument("y_step must be positive");
  const auto cratio = static_cast<int>(std::llround(y_step / dt));
  if (cratio < 1 || std::fabs(cratio * dt - y_step) > 1e-9 * y_step)
    throw std::invalid_argument("y_step must be a positive multiple of dt");
  const int Y = static_cast<int>(std::floor(y_max / y_step + 1e-9)) + 1;
  const int combos = spec.regime_combos();

  std::size_t ytotal = 1;
  for (int c = 0; c < ncomp; ++c) ytotal *= static_cast<std::size_t>(Y);
  const std::size_t slice = static_cast<std::size_t>(combos) * ytotal;
  const std::size_t total = slice * (M + 1);
  if (total > 250'000'000)
    throw std::length_error("age tensor too large; coarsen y_step or shorten y_max");

  PsiGrid psi;
  psi.mode_ = PsiMode::General;
  psi.dt_ = dt;
  psi.steps_ = M;
  psi.theta_ = spec.theta();
  psi.counts_ = spec.regime_counts();
  psi.combos_ = combos;
  psi.y_step_ = y_step;
  psi.y_count_ = Y;
  psi.chains_.assign(chains.begin(), chains.end());

  HamiltonianTable table(spec);
  psi.hhat_ = build_hhat(table, M, dt, T);
  psi.values_.assign(total, 1.0);
  if (M == 0) return psi;

  // Per (component, state, age node) tables over the quadrature index l:
  // survival ratios, total rates at the shifted age, and switch masses.
  const std::size_t L = static_cast<std::size_t>(M) + 1;
  std::vector<std::vector<double>> sr(ncomp), rate(ncomp), sw(ncomp);
  for (int c = 0; c < ncomp; ++c) {
    const int kc = chains[c].states();
    sr[c].resize(static_cast<std::size_t>(kc) * Y * L);
    rate[c].resize(static_cast<std::size_t>(kc) * Y * L);
    sw[c].resize(static_cast<std::size_t>(kc) * kc * Y * L);
    for (int s = 0; s < kc; ++s)
      for (int a = 0; a < Y; ++a) {
        const double base = a * y_step;
        const std::size_t row = (static_cast<std::size_t>(s) * Y + a) * L;
        for (int l = 0; l <= M; ++l) {
          sr[c][row + l] = chains[c].survival_ratio(s, base, l * dt);
          rate[c][row + l] = chains[c].total_rate(s, base + l * dt);
        }
        for (int j = 0; j < kc; ++j) {
          const std::size_t jrow = ((static_cast<std::size_t>(s) * kc + j) * Y + a) * L;
          for (int l = 0; l <= M; ++l)
            sw[c][jrow + l] = chains[c].switch_prob(s, j, base + l * dt);
        }
      }
  }

  // Joint-regime digit decode and single-component neighbor flats.
  std::vector<std::vector<int>> digits(combos);
  for (int x = 0; x < combos; ++x) digits[x] = spec.unflatten(x);
  // nbr[x][c][j]: x with component c moved to state j
  std::vector<std::vector<std::vector<int>>> nbr(combos, std::vector<std::vector<int>>(ncomp));
  for (int x = 0; x < combos; ++x)
    for (int c = 0; c < ncomp; ++c) {
      nbr[x][c].resize(chains[c].states());
      for (int j = 0; j < chains[c].states(); ++j) {
        std::vector<int> d = digits[x];
        d[c] = j;
        nbr[x][c][j] = spec.flatten(d);
      }
    }

  // Age-shift decomposition per quadrature index: node offset and fraction.
  std::vector<int> off(L);
  std::vector<double> frac(L);
  for (int l = 0; l <= M; ++l) {
    off[l] = l / cratio;
    frac[l] = static_cast<double>(l % cratio) / cratio;
  }
  // y strides, first component slowest
  std::vector<std::size_t> ystride(ncomp, 1);
  for (int c = ncomp - 2; c >= 0; --c) ystride[c] = ystride[c + 1] * Y;

  std::vector<double> prev(psi.values_), next(psi.values_);
  long long clamps = 0;

  // One Picard application: next <- A(prev) on every interior slice.
  auto sweep = [&]() {
    std::vector<int> a(ncomp, 0);
    for (int m = 1; m <= M; ++m) {
      const double* hh = psi.hhat_.data();
      for (int x = 0; x < combos; ++x) {
        const double hm = hh[static_cast<std::size_t>(m) * combos + x];
        std::fill(a.begin(), a.end(), 0);
        for (std::size_t cell = 0; cell < ytotal; ++cell) {
          double acc_sum = 0.0;
          double gm = 1.0;
          for (int c = 0; c < ncomp; ++c) {
            const std::size_t row =
                (static_cast<std::size_t>(digits[x][c]) * Y + a[c]) * L;
            gm *= sr[c][row + m];
          }
          for (int l = 0; l <= m; ++l) {
            const double w = (l == 0 || l == m) ? 0.5 : 1.0;
            double gl = 1.0;
            for (int c = 0; c < ncomp; ++c)
              gl *= sr[c][(static_cast<std::size_t>(digits[x][c]) * Y + a[c]) * L + l];
            if (gl == 0.0) break;  // no survival mass left beyond this lag
            const double ratio = hm / hh[static_cast<std::size_t>(m - l) * combos + x];
            const double* base = prev.data() + static_cast<std::size_t>(m - l) * slice;
            double inner = 0.0;
            for (int c = 0; c < ncomp; ++c) {
              const int s = digits[x][c];
              const double rt =
                  rate[c][(static_cast<std::size_t>(s) * Y + a[c]) * L + l];
              if (rt == 0.0) continue;
              // gather psi at shifted ages with component c reset to zero
              double jsum = 0.0;
              const int kc = chains[c].states();
              for (int j = 0; j < kc; ++j) {
                const double p =
                    sw[c][((static_cast<std::size_t>(s) * kc + j) * Y + a[c]) * L + l];
                if (p == 0.0) continue;
                const double* blk = base + nbr[x][c][j] * ytotal;
                // multilinear read over the other components' shifted ages
                double v = 0.0;
                int fdim[2] = {0, 0};
                int fcnt = 0;
                std::size_t idx0 = 0;
                for (int d = 0; d < ncomp; ++d) {
                  if (d == c) continue;  // reset component reads node zero
                  int pos = a[d] + off[l];
                  if (pos >= Y - 1) {
                    if (pos > Y - 1 || frac[l] > 0.0) ++clamps;
                    pos = Y - 1;
                  } else if (frac[l] > 0.0) {
                    fdim[fcnt++] = d;
                  }
                  idx0 += static_cast<std::size_t>(pos) * ystride[d];
                }
                if (fcnt == 0) {
                  v = blk[idx0];
                } else if (fcnt == 1) {
                  const double f1 = frac[l];
                  v = (1.0 - f1) * blk[idx0] + f1 * blk[idx0 + ystride[fdim[0]]];
                } else {
                  // both shifted components carry the same fraction
                  const double f1 = frac[l];
                  const double v00 = blk[idx0];
                  const double v01 = blk[idx0 + ystride[fdim[1]]];
                  const double v10 = blk[idx0 + ystride[fdim[0]]];
                  const double v11 = blk[idx0 + ystride[fdim[0]] + ystride[fdim[1]]];
                  v = (1.0 - f1) * ((1.0 - f1) * v00 + f1 * v01) +
                      f1 * ((1.0 - f1) * v10 + f1 * v11);
                }
                jsum += p * v;
              }
              inner += rt * jsum;
            }
            acc_sum += w * gl * ratio * inner;
          }
          next[(static_cast<std::size_t>(m) * combos + x) * ytotal + cell] =
              gm * hm + dt * acc_sum;
          // odometer over the age nodes, last component fastest
          for (int d = ncomp - 1; d >= 0; --d) {
            if (++a[d] < Y) break;
            a[d] = 0;
          }
        }
      }
    }
  };

  for (int it = 1; it <= 500; ++it) {
    clamps = 0;
    sweep();
    const double delta = kernels::max_abs_diff(prev.data(), next.data(), total);
    psi.diag_.sweep_deltas.push_back(delta);
    psi.diag_.sweeps = it;
    std::swap(prev, next);
    if (delta <= 1e-10) break;
  }
  psi.diag_.clamp_count = clamps;
  psi.diag_.contraction = median_ratio(psi.diag_.sweep_deltas);
  const auto& d = psi.diag_.sweep_deltas;
  for (std::size_t i = d.size() > 5 ? d.size() - 5 : 1; i < d.size(); ++i)
    if (d[i - 1] > 0.0 && d[i] / d[i - 1] >= 1.0 && d[i] > 1e-10)
      psi.diag_.contraction_stalled = true;
  psi.values_ = std::move(prev);
  return psi;
}

double PsiGrid::general_eval(int m, int xflat, std::span<const double> ages) const {
  const int ncomp = components();
  // multilinear interpolation, ages clamped at the top node
  std::vector<std::size_t> strides(ncomp, 1);
  for (int c = ncomp - 2; c >= 0; --c) strides[c] = strides[c + 1] * y_count_;
  std::size_t ytotal = 1;
  for (int c = 0; c < ncomp; ++c) ytotal *= static_cast<std::size_t>(y_count_);
  const double* blk =
      values_.data() + (static_cast<std::size_t>(m) * combos_ + xflat) * ytotal;
  double out = 0.0;
  const int corners = 1 << ncomp;
  for (int mask = 0; mask < corners; ++mask) {
    double w = 1.0;
    std::size_t idx = 0;
    for (int c = 0; c < ncomp; ++c) {
      const double pos = std::min(ages[c] / y_step_, static_cast<double>(y_count_ - 1));
      const int i0 = std::min(static_cast<int>(pos), y_count_ - 2 >= 0 ? y_count_ - 2 : 0);
      const double f = std::min(std::max(pos - i0, 0.0), 1.0);
      if (mask & (1 << c)) {
        w *= f;
        idx += static_cast<std::size_t>(std::min(i0 + 1, y_count_ - 1)) * strides[c];
      } else {
        w *= 1.0 - f;
        idx += static_cast<std::size_t>(i0) * strides[c];
      }
      if (w == 0.0) break;
    }
    if (w != 0.0) out += w * blk[idx];
  }
  return out;
}

double PsiGrid::at_step(int m, int xflat, std::span<const double> ages) const {
  if (m < 0 || m > steps_) throw std::out_of_range("step index outside the grid");
  if (xflat < 0 || xflat >= combos_) throw std::out_of_range("regime index outside the grid");
  if (static_cast<int>(ages.size()) != components())
    throw std::invalid_argument("one age per driving component required");
  for (double y : ages)
    if (!(y >= 0.0)) throw std::invalid_argument("ages must be nonnegative");
  if (mode_ == PsiMode::Reduced) return reduced_eval(m, xflat, ages[0]);
  return general_eval(m, xflat, ages);
}

double PsiGrid::at_time(double t, int xflat, std::span<const double> ages) const {
  const double T = horizon();
  if (t < -1e-12 || t > T + 1e-12) throw std::out_of_range("time outside [0, T]");
  const double mr = std::min(std::max((T - t) / dt_, 0.0), static_cast<double>(steps_));
  const double nearest = std::round(mr);
  if (std::fabs(mr - nearest) <= 1e-6) return at_step(static_cast<int>(nearest), xflat, ages);
  const int m0 = static_cast<int>(mr);
  const double f = mr - m0;
  return (1.0 - f) * at_step(m0, xflat, ages) + f * at_step(m0 + 1, xflat, ages);
}

void PsiGrid::write_csv(std::ostream& os) const {
  os.precision(17);
  os << "m,t,state,y,psi\n";
  const int ncomp = components();
  const double T = horizon();
  std::size_t ytotal = 1;
  if (mode_ == PsiMode::General)
    for (int c = 0; c < ncomp; ++c) ytotal *= static_cast<std::size_t>(y_count_);
  for (int m = 0; m <= steps_; ++m) {
    const double t = T - m * dt_;
    for (int x = 0; x < combos_; ++x) {
      // decode joint regime as '|' separated digits
      std::string state;
      {
        int rem = x;
        std::vector<int> d(ncomp);
        for (int c = ncomp - 1; c >= 0; --c) {
          d[c] = rem % counts_[c];
          rem /= counts_[c];
        }
        for (int c = 0; c < ncomp; ++c) {
          if (c) state += '|';
          state += std::to_string(d[c]);
        }
      }
      if (mode_ == PsiMode::Reduced) {
        os << m << ',' << t << ',' << state << ',' << 0.0 << ','
           << values_[static_cast<std::size_t>(m) * combos_ + x] << '\n';
      } else {
        std::vector<int> a(ncomp, 0);
        for (std::size_t cell = 0; cell < ytotal; ++cell) {
          os << m << ',' << t << ',' << state << ',';
          for (int c = 0; c < ncomp; ++c) {
            if (c) os << '|';
            os << a[c] * y_step_;
          }
          os << ','
             << values_[(static_cast<std::size_t>(m) * combos_ + x) * ytotal + cell] << '\n';
          for (int d = ncomp - 1; d >= 0; --d) {
            if (++a[d] < y_count_) break;
            a[d] = 0;
          }
        }
      }
    }
  }
}

namespace {

void require_little_endian() {
  if constexpr (std::endian::native != std::endian::little)
    throw std::runtime_error("PSIG checkpoints are little-endian only");
}

template <typename T>
void put(std::ofstream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T take(std::ifstream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof v);
  return v;
}

}  // namespace

void PsiGrid::save(const std::string& path) const {
  require_little_endian();
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path + " for writing");
  os.write("PSIG", 4);
  put<std::uint32_t>(os, 1);  // version
  put<std::uint32_t>(os, mode_ == PsiMode::Reduced ? 0 : 1);
  put<std::uint32_t>(os, static_cast<std::uint32_t>(counts_.size()));
  put<std::uint32_t>(os, static_cast<std::uint32_t>(steps_));
  put<std::uint32_t>(os, static_cast<std::uint32_t>(y_count_));
  put<double>(os, dt_);
  put<double>(os, theta_);
  put<double>(os, y_step_);
  for (int kc : counts_) put<std::uint32_t>(os, static_cast<std::uint32_t>(kc));
  os.write(reinterpret_cast<const char*>(values_.data()),
           static_cast<std::streamsize>(values_.size() * sizeof(double)));
  os.write(reinterpret_cast<const char*>(hhat_.data()),
           static_cast<std::streamsize>(hhat_.size() * sizeof(double)));
  if (!os) throw std::runtime_error("short write to " + path);
}

PsiGrid PsiGrid::load(const std::string& path, std::vector<RegimeChain> chains) {
  require_little_endian();
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "PSIG", 4) != 0)
    throw std::runtime_error(path + " is not a PSIG checkpoint");
  if (take<std::uint32_t>(is) != 1) throw std::runtime_error("unsupported PSIG version");

  PsiGrid psi;
  psi.mode_ = take<std::uint32_t>(is) == 0 ? PsiMode::Reduced : PsiMode::General;
  const auto ncomp = take<std::uint32_t>(is);
  psi.steps_ = static_cast<int>(take<std::uint32_t>(is));
  psi.y_count_ = static_cast<int>(take<std::uint32_t>(is));
  psi.dt_ = take<double>(is);
  psi.theta_ = take<double>(is);
  psi.y_step_ = take<double>(is);
  psi.counts_.resize(ncomp);
  psi.combos_ = 1;
  for (auto& kc : psi.counts_) {
    kc = static_cast<int>(take<std::uint32_t>(is));
    psi.combos_ *= kc;
  }
  if (chains.size() != ncomp)
    throw std::invalid_argument("chain count does not match the checkpoint");
  for (std::size_t c = 0; c < ncomp; ++c)
    if (chains[c].states() != psi.counts_[c])
      throw std::invalid_argument("chain state count does not match the checkpoint");
  psi.chains_ = std::move(chains);

  std::size_t ytotal = 1;
  if (psi.mode_ == PsiMode::General)
    for (std::uint32_t c = 0; c < ncomp; ++c) ytotal *= static_cast<std::size_t>(psi.y_count_);
  psi.values_.resize(static_cast<std::size_t>(psi.steps_ + 1) * psi.combos_ * ytotal);
  psi.hhat_.resize(static_cast<std::size_t>(psi.steps_ + 1) * psi.combos_);
  is.read(reinterpret_cast<char*>(psi.values_.data()),
          static_cast<std::streamsize>(psi.values_.size() * sizeof(double)));
  is.read(reinterpret_cast<char*>(psi.hhat_.data()),
          static_cast<std::streamsize>(psi.hhat_.size() * sizeof(double)));
  if (!is) throw std::runtime_error("truncated PSIG checkpoint " + path);
  return psi;
}

double optimal_wealth(const PsiGrid& psi, double v, int xflat, std::span<const double> ages) {
  if (!(v > 0.0)) throw std::invalid_argument("initial wealth must be positive");
  return std::log(v) - (2.0 / psi.theta()) * std::log(psi.at_time(0.0, xflat, ages));
}

double pde_residual(const PsiGrid& psi, const MarketSpec& spec,
                    std::span<const RegimeChain> chains, double t, int xflat,
                    std::span<const double> ages, double eps) {
  if (!(eps > 0.0)) throw std::invalid_argument("eps must be positive");
  if (t + eps > psi.horizon() + 1e-12)
    throw std::out_of_range("forward difference leaves the time domain");
  const double here = psi.at_time(t, xflat, ages);
  std::vector<double> shifted(ages.begin(), ages.end());
  for (double& y : shifted) y += eps;
  double resid = (psi.at_time(t + eps, xflat, shifted) - here) / eps;

  const std::vector<int> digits = spec.unflatten(xflat);
  std::vector<double> reset(ages.begin(), ages.end());
  for (std::size_t c = 0; c < chains.size(); ++c) {
    const int s = digits[c];
    for (int j = 0; j < chains[c].states(); ++j) {
      if (j == s) continue;
      const double rate = chains[c].rate(s, j, ages[c]);
      if (rate == 0.0) continue;
      std::vector<int> d = digits;
      d[c] = j;
      const double save = reset[c];
      reset[c] = 0.0;
      resid += rate * (psi.at_time(t, spec.flatten(d), reset) - here);
      reset[c] = save;
    }
  }
  HamiltonianTable table(spec);
  resid += table.at(t, xflat).value * here;
  return resid;
}

ControlCurve optimal_control_curve(const MarketSpec& spec, std::span<const double> t_grid) {
  ControlCurve curve;
  curve.times.assign(t_grid.begin(), t_grid.end());
  curve.u.resize(t_grid.size());
  for (std::size_t i = 0; i < t_grid.size(); ++i) {
    curve.u[i].resize(spec.regime_combos());
    for (int x = 0; x < spec.regime_combos(); ++x)
      curve.u[i][x] = minimize_g(spec, t_grid[i], x).minimizer;
  }
  return curve;
}

}  // namespace riskswitch
