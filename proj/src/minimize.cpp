#include "bernoulli/minimize.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <random>
#include <sstream>
#include <stdexcept>

namespace bernoulli {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Cells within Chebyshev distance `radius` of c, in increasing order.
std::vector<Index> chebyshev_patch(const Grid& g, Index c, int radius) {
  const int d = g.dim();
  const MultiIndex idx = g.unravel(c);
  MultiIndex lo{}, hi{};
  for (int a = 0; a < d; ++a) {
    lo[a] = std::max(idx[a] - radius, 0);
    hi[a] = std::min(idx[a] + radius, g.cells(a) - 1);
  }
  std::vector<Index> out;
  MultiIndex cur = lo;
  while (true) {
    out.push_back(g.ravel(cur));
    int a = d - 1;
    while (a >= 0 && ++cur[a] > hi[a]) {
      cur[a] = lo[a];
      --a;
    }
    if (a < 0) break;
  }
  return out;
}

std::string format_energy(double e) { return format_number(e); }

}  // namespace

std::string to_string(SolverKind kind) {
  switch (kind) {
    case SolverKind::smoothed: return "smoothed";
    case SolverKind::exact: return "exact";
    case SolverKind::both: return "both";
  }
  return "both";
}

SolverKind parse_solver_kind(const std::string& s) {
  if (s == "smoothed") return SolverKind::smoothed;
  if (s == "exact") return SolverKind::exact;
  if (s == "both") return SolverKind::both;
  throw std::invalid_argument("unknown solver: " + s);
}

// ---------------------------------------------------------------------------
// Discretization

Discretization::Discretization(const MinimizeProblem& p)
    : K(p.A), gamma(p.gamma), volume(p.region().grid().cell_volume()) {
  const Region& region = p.region();
  const Grid& g = region.grid();
  if (p.g.grid() != g) throw std::invalid_argument("boundary data and coefficients use different grids");
  if (!region.subset_of(p.g.region)) throw std::invalid_argument("boundary data do not cover the region");
  const Index n = g.cell_count();
  in_region = region.mask();
  fixed = region.closure_layer();
  forced.assign(static_cast<std::size_t>(n), 0);
  free.assign(static_cast<std::size_t>(n), 0);
  data = Eigen::VectorXd::Zero(n);
  phi = cell_averages(p.w, region);
  g_max = -kInf;
  g_min = kInf;
  for (Index c = 0; c < n; ++c) {
    if (!in_region[c]) continue;
    if (fixed[c]) {
      const double v = p.g.values[c];
      if (!std::isfinite(v)) throw std::invalid_argument("boundary data must be finite");
      data[c] = v;
      g_max = std::max(g_max, v);
      g_min = std::min(g_min, v);
    } else if (std::isinf(phi[c])) {
      forced[c] = 1;
      data[c] = gamma;
    } else {
      free[c] = 1;
    }
  }
  if (!(g_max > -kInf)) throw std::invalid_argument("region has no boundary layer");
  eta_pos = p.settings.eta_pos_rel * std::max(g_max - gamma, 0.0);
  for (Index c = 0; c < n; ++c)
    if (fixed[c] && std::isinf(phi[c]) && data[c] > gamma + eta_pos)
      throw std::invalid_argument("boundary data are positive on a cell with infinite weight");
}

Eigen::VectorXd Discretization::start(double fill) const {
  Eigen::VectorXd u = data;
  for (Index c = 0; c < u.size(); ++c)
    if (free[c]) u[c] = fill;
  return u;
}

double Discretization::weight_energy(const Eigen::VectorXd& u) const {
  double s = 0.0;
  for (Index c = 0; c < u.size(); ++c) {
    if (!in_region[c] || !positive(u, c)) continue;
    if (std::isinf(phi[c])) return kInf;
    s += phi[c] * volume;
  }
  return s;
}

double Discretization::energy(const Eigen::VectorXd& u) const {
  const double w = weight_energy(u);
  if (std::isinf(w)) return kInf;
  return K.energy(u) + w;
}

double energy(const ScalarField& u, const MinimizeProblem& p) {
  const Discretization D(p);
  Eigen::VectorXd v = u.values;
  for (Index c = 0; c < v.size(); ++c)
    if (!D.in_region[c]) v[c] = 0.0;
  return D.energy(v);
}

Eigen::VectorXd harmonic_extension(const Discretization& D, double tolerance) {
  Eigen::VectorXd u = D.start(D.gamma);
  pcg_solve(D.K, D.free, u, tolerance, default_iteration_cap(D.K.grid()));
  return u;
}

// ---------------------------------------------------------------------------
// Smoothed solver

double smooth_step(double s) {
  if (s <= 0.0) return 0.0;
  if (s >= 1.0) return 1.0;
  return s * s * (3.0 - 2.0 * s);
}

double smooth_step_derivative(double s) {
  if (s <= 0.0 || s >= 1.0) return 0.0;
  return 6.0 * s * (1.0 - s);
}

namespace {

double smoothed_weight_term(const Discretization& D, const Eigen::VectorXd& u, double eps) {
  double s = 0.0;
  for (Index c = 0; c < u.size(); ++c) {
    if (!D.in_region[c] || D.phi[c] == 0.0) continue;
    const double t = smooth_step((u[c] - D.gamma) / eps);
    if (t == 0.0) continue;
    s += D.phi[c] * D.volume * t;
  }
  return s;
}

}  // namespace

double smoothed_energy(const Discretization& D, const Eigen::VectorXd& u, double eps) {
  return D.K.energy(u) + smoothed_weight_term(D, u, eps);
}

Eigen::VectorXd smoothed_gradient(const Discretization& D, const Eigen::VectorXd& u, double eps) {
  Eigen::VectorXd grad = 2.0 * D.K.apply(u);
  for (Index c = 0; c < u.size(); ++c) {
    if (!D.free[c]) {
      grad[c] = 0.0;
      continue;
    }
    grad[c] += D.phi[c] * D.volume * smooth_step_derivative((u[c] - D.gamma) / eps) / eps;
  }
  return grad;
}

double smoothed_local_energy(const Discretization& D, const Eigen::VectorXd& u, double eps, Index c) {
  double s = D.K.local_energy({c}, u);
  if (D.phi[c] != 0.0) s += D.phi[c] * D.volume * smooth_step((u[c] - D.gamma) / eps);
  return s;
}

double smoothed_gradient_error(const Discretization& D, const Eigen::VectorXd& u, double eps, int coords,
                               std::uint64_t seed) {
  std::vector<Index> cells;
  for (Index c = 0; c < u.size(); ++c)
    if (D.free[c] && D.K.diagonal(c) > 0.0) cells.push_back(c);
  if (cells.empty() || coords <= 0) return 0.0;
  const Eigen::VectorXd g = smoothed_gradient(D, u, eps);
  std::mt19937_64 rng(seed);
  std::vector<std::pair<double, double>> pairs;
  double scale = 0.0;
  auto indicator = [&](Index c, double value) {
    return D.phi[c] == 0.0 ? 0.0 : D.phi[c] * D.volume * smooth_step((value - D.gamma) / eps);
  };
  for (int k = 0; k < coords; ++k) {
    const Index c = cells[static_cast<std::size_t>(rng() % cells.size())];
    // outside the band [gamma, gamma + eps] J_eps is quadratic in u_c up to the nearest kink
    const double t = (u[c] - D.gamma) / eps;
    const double kink = t < 0.0 ? -t : (t > 1.0 ? t - 1.0 : 0.0);
    const double h = std::max(1e-4, 0.5 * kink) * eps;
    // element stiffness annihilates constants: shifting by u_c leaves the energy unchanged and
    // keeps the summed terms at the size of the differences
    Eigen::VectorXd v = u.array() - u[c];
    v[c] = h;
    const double fp = D.K.local_energy({c}, v) + indicator(c, u[c] + h);
    v[c] = -h;
    const double fm = D.K.local_energy({c}, v) + indicator(c, u[c] - h);
    pairs.emplace_back(g[c], (fp - fm) / (2.0 * h));
    scale = std::max(scale, std::abs(g[c]));
  }
  double worst = 0.0;
  for (const auto& [exact, fd] : pairs) {
    const double m = std::max(std::abs(exact), std::abs(fd));
    if (m <= 1e-12 * scale) continue;
    worst = std::max(worst, std::abs(exact - fd) / m);
  }
  return worst;
}

namespace {

MinimizerState smoothed_run(const MinimizeProblem& p, const Discretization& D, Eigen::VectorXd u) {
  const SolverSettings& st = p.settings;
  const Index n = D.data.size();
  MinimizerState state{ScalarField(p.region()), 0.0, {}, 0, true, {}, {}, "smoothed"};
  std::ostringstream diag;

  const double span = D.g_max - D.gamma;
  const double eps0 = st.eps0 > 0.0 ? st.eps0 : span;

  std::vector<Index> active;
  Mask is_active(static_cast<std::size_t>(n), 0);
  for (Index c = 0; c < n; ++c) {
    if (D.free[c] && D.K.diagonal(c) > 0.0) {
      active.push_back(c);
      is_active[c] = 1;
    }
  }
  // Jacobi preconditioner including the convex part of the smoothed indicator's curvature
  Eigen::VectorXd inv = Eigen::VectorXd::Zero(n);
  auto precondition = [&](const Eigen::VectorXd& v, double eps) {
    for (Index c : active) {
      double h = 2.0 * D.K.diagonal(c);
      const double s = (v[c] - D.gamma) / eps;
      if (span > 0.0 && s > 0.0 && s < 0.5) h += D.phi[c] * D.volume * (6.0 - 12.0 * s) / (eps * eps);
      inv[c] = 1.0 / h;
    }
  };

  bool any_free = !active.empty();
  Eigen::VectorXd Ku = D.K.apply(u);
  Eigen::VectorXd Kd(n), grad(n), z(n), dir(n), trial(n), z_old(n);
  double grad_ref = 0.0;
  double grad_first = 0.0;  // level 0 start: floor of every later reference
  Index cap = st.smoothed_iterations, final_cap = cap;
  if (cap <= 0) {
    int cells = 0;
    for (int k = 0; k < D.K.grid().dim(); ++k) cells = std::max(cells, D.K.grid().cells(k));
    cap = std::max(400, 8 * cells);
    // the final level decides convergence: it gets the linear solver's budget
    final_cap = std::max(cap, default_iteration_cap(D.K.grid()));
  }
  const int levels = span > 0.0 ? st.continuation_levels : 0;

  auto weight_term = [&](const Eigen::VectorXd& v, double eps) {
    return span > 0.0 ? smoothed_weight_term(D, v, eps) : 0.0;
  };

  for (int level = 0; level <= levels && any_free; ++level) {
    const double eps = span > 0.0 ? eps0 * std::ldexp(1.0, -level) : 1.0;
    auto gradient = [&](const Eigen::VectorXd& v, const Eigen::VectorXd& Kv, Eigen::VectorXd& out) {
      for (Index c = 0; c < n; ++c) {
        if (!is_active[c]) {
          out[c] = 0.0;
          continue;
        }
        out[c] = 2.0 * Kv[c];
        if (span > 0.0 && D.phi[c] != 0.0)
          out[c] += D.phi[c] * D.volume * smooth_step_derivative((v[c] - D.gamma) / eps) / eps;
      }
    };
    double f = u.dot(Ku) + weight_term(u, eps);
    gradient(u, Ku, grad);
    precondition(u, eps);
    z = inv.cwiseProduct(grad);
    double gz = grad.dot(z);
    if (level == 0) grad_first = std::sqrt(gz);
    grad_ref = std::max(std::sqrt(gz), grad_first);
    dir = -z;
    bool steepest = true;
    int stagnant = 0;
    int it = 0;
    bool level_done = gz == 0.0;
    const Index level_cap = level == levels ? final_cap : cap;
    for (; it < level_cap && !level_done; ++it) {
      if (std::sqrt(gz) <= (level == levels ? st.smoothed_tolerance : st.level_tolerance) * grad_ref) {
        level_done = true;
        break;
      }
      double slope = grad.dot(dir);
      if (slope >= 0.0) {
        dir = -z;
        slope = -gz;
        steepest = true;
      }
      D.K.apply(dir, Kd);
      const double curv = dir.dot(Kd);
      const double uKd = u.dot(Kd);
      const double base_quad = u.dot(Ku);
      double alpha = curv > 0.0 ? -slope / (2.0 * curv) : 1.0;
      double f_new = kInf;
      bool accepted = false;
      for (int bt = 0; bt < 60; ++bt) {
        trial = u + alpha * dir;
        f_new = base_quad + 2.0 * alpha * uKd + alpha * alpha * curv + weight_term(trial, eps);
        if (f_new <= f + 1e-4 * alpha * slope) {
          accepted = true;
          break;
        }
        alpha *= 0.5;
      }
      if (!accepted) {
        if (!steepest) {  // retry along steepest descent
          dir = -z;
          steepest = true;
          continue;
        }
        level_done = true;
        // the quadratic model ignores the indicator curvature, so it overestimates the decrease
        const double predicted = std::abs(slope) * (curv > 0.0 ? -slope / (2.0 * curv) : 1.0);
        if (predicted > 1e-9 * std::max(std::abs(f), 1e-300)) {
          diag << "line search stalled at level " << level << " iteration " << it << "; ";
          state.converged = false;
        }
        break;
      }
      const double decrease = f - f_new;
      u.swap(trial);
      Ku += alpha * Kd;
      f = f_new;
      z_old = z;
      gradient(u, Ku, grad);
      precondition(u, eps);
      z = inv.cwiseProduct(grad);
      const double gz_new = grad.dot(z);
      const double beta = std::max(0.0, grad.dot(z - z_old) / gz);
      gz = gz_new;
      dir = -z + beta * dir;
      steepest = beta == 0.0;
      ++state.iterations;
      stagnant = decrease <= 1e-15 * std::max(std::abs(f), 1e-300) ? stagnant + 1 : 0;
      if (stagnant >= 5) level_done = true;
    }
    if (!level_done) {
      diag << "level " << level << " hit the iteration cap; ";
      if (level == levels) state.converged = false;
    }
    Ku = D.K.apply(u);  // refresh accumulated products
    state.history.push_back(u.dot(Ku) + weight_term(u, eps));
  }

  // Round at the final width: cells within eps of the level join the zero set, the rest is
  // re-solved harmonically. Kept only when the exact energy improves.
  if (span > 0.0 && any_free) {
    const double eps = eps0 * std::ldexp(1.0, -levels);
    Eigen::VectorXd v = u;
    Mask nonzero(static_cast<std::size_t>(n), 0);
    for (Index c : active) {
      if (v[c] > D.gamma && v[c] <= D.gamma + eps) v[c] = D.gamma;
      nonzero[c] = std::abs(v[c] - D.gamma) > D.eta_pos;
    }
    try {
      pcg_solve(D.K, nonzero, v, st.tolerance, default_iteration_cap(D.K.grid()));
      for (Index c : active)
        if (nonzero[c] && (u[c] > D.gamma) != (v[c] > D.gamma)) v[c] = D.gamma;
      if (D.energy(v) < D.energy(u)) u = v;
    } catch (const ConvergenceError& e) {
      diag << "rounding solve failed (residual " << e.residual() << "); ";
    }
  }

  state.u.values = u;
  for (Index c = 0; c < n; ++c)
    if (!D.in_region[c]) state.u.values[c] = 0.0;
  state.energy = D.energy(u);
  state.positive.assign(static_cast<std::size_t>(n), 0);
  for (Index c = 0; c < n; ++c) state.positive[c] = D.in_region[c] && D.positive(u, c);
  state.diagnostics = diag.str();
  return state;
}

}  // namespace

MinimizerState minimize_smoothed(const MinimizeProblem& p) { return minimize_smoothed(p, Discretization(p)); }

// Two starts: halfway between gamma and the harmonic extension, and the harmonic extension
// itself. The wide early levels pull the first towards the zero phase and the second towards
// the positive phase; the lower final energy wins.
MinimizerState minimize_smoothed(const MinimizeProblem& p, const Discretization& D) {
  const Eigen::VectorXd H = harmonic_extension(D, p.settings.tolerance);
  Eigen::VectorXd half = D.start(D.gamma);
  for (Index c = 0; c < half.size(); ++c)
    if (D.free[c]) half[c] = D.gamma + 0.5 * (H[c] - D.gamma);
  MinimizerState best = smoothed_run(p, D, std::move(half));
  best.diagnostics = "half-harmonic start: " + best.diagnostics;
  MinimizerState other = smoothed_run(p, D, H);
  other.diagnostics = "harmonic start: " + other.diagnostics;
  const Index total = best.iterations + other.iterations;
  if (other.energy < best.energy) std::swap(best, other);
  best.iterations = total;
  return best;
}

// ---------------------------------------------------------------------------
// Exact descent

namespace {

class ExactDescent {
 public:
  ExactDescent(const MinimizeProblem& p, const Discretization& D, Eigen::VectorXd u)
      : p_(p), D_(D), st_(p.settings), u_(std::move(u)), g_(D.K.grid()) {
    // zero cells sit exactly at gamma
    for (Index c = 0; c < u_.size(); ++c)
      if (D_.free[c] && zero(c)) u_[c] = D_.gamma;
  }

  MinimizerState run() {
    MinimizerState state{ScalarField(p_.region()), 0.0, {}, 0, false, {}, {}, "exact"};
    double E = D_.energy(u_);
    eta_dec_ = st_.eta_dec_rel * (std::isfinite(E) && E > 0.0 ? E : 1.0);
    state.history.push_back(E);
    std::ostringstream diag;
    Index accepted_total = 0;
    for (int outer = 0; outer < st_.max_outer; ++outer) {
      Index accepted = 0;
      accepted += harmonic_phase(E);
      accepted += collapse_ladder(E);
      accepted += local_moves(E, true);
      accepted += local_moves(E, false);
      E = D_.energy(u_);
      state.history.push_back(E);
      ++state.iterations;
      accepted_total += accepted;
      if (accepted == 0) {
        state.converged = true;
        break;
      }
    }
    if (!state.converged) diag << "outer iteration cap reached; ";
    diag << "accepted moves " << accepted_total << " (harmonic " << harmonic_ << ", collapse " << collapse_
         << ", growth " << growth_ << ", retreat " << retreat_ << ")";
    state.u.values = u_;
    for (Index c = 0; c < u_.size(); ++c)
      if (!D_.in_region[c]) state.u.values[c] = 0.0;
    state.energy = E;
    state.positive.assign(static_cast<std::size_t>(u_.size()), 0);
    for (Index c = 0; c < u_.size(); ++c) state.positive[c] = D_.in_region[c] && D_.positive(u_, c);
    state.diagnostics = diag.str();
    return state;
  }

 private:
  bool zero(Index c) const { return std::abs(u_[c] - D_.gamma) <= D_.eta_pos; }
  double indicator(Index c) const { return D_.positive(u_, c) ? D_.phi[c] * D_.volume : 0.0; }

  Index harmonic_phase(double& E) {
    Mask active(static_cast<std::size_t>(u_.size()), 0);
    bool any = false;
    for (Index c = 0; c < u_.size(); ++c) {
      if (D_.free[c] && !zero(c)) {
        active[c] = 1;
        any = true;
      }
    }
    if (!any) return 0;
    Eigen::VectorXd v = u_;
    pcg_solve(D_.K, active, v, st_.tolerance, default_iteration_cap(g_));
    for (Index c = 0; c < v.size(); ++c) {
      if (!active[c]) continue;
      const bool was_pos = u_[c] > D_.gamma;
      if (was_pos ? v[c] < D_.gamma : v[c] > D_.gamma) v[c] = D_.gamma;  // phase crossing
    }
    const double E_new = D_.energy(v);
    if (E_new < E - eta_dec_) {
      u_ = std::move(v);
      E = E_new;
      ++harmonic_;
      return 1;
    }
    return 0;
  }

  // Chebyshev-connected components of the band {gamma < u < gamma + t} away from the data layer.
  Index collapse_ladder(double& E) {
    double top = -kInf;
    for (Index c = 0; c < u_.size(); ++c)
      if (D_.free[c]) top = std::max(top, u_[c]);
    const double span = top - D_.gamma;
    if (!(span > D_.eta_pos)) return 0;
    Index accepted = 0;
    std::vector<std::int32_t> seen(static_cast<std::size_t>(u_.size()), -1);
    for (int j = 1; j <= st_.ladder; ++j) {
      const double t = std::ldexp(span, -j);
      if (t <= D_.eta_pos) break;
      auto in_band = [&](Index c) {
        return D_.free[c] && D_.positive(u_, c) && u_[c] < D_.gamma + t;
      };
      for (Index s = 0; s < u_.size(); ++s) {
        if (seen[s] == j || !in_band(s)) continue;
        std::vector<Index> comp{s};
        seen[s] = j;
        bool touches_data = false;
        for (std::size_t k = 0; k < comp.size(); ++k) {
          for (Index nb : chebyshev_patch(g_, comp[k], 1)) {
            if (D_.fixed[nb]) touches_data = true;
            if (seen[nb] != j && in_band(nb)) {
              seen[nb] = j;
              comp.push_back(nb);
            }
          }
        }
        if (touches_data) continue;
        const double before = D_.K.local_energy(comp, u_);
        double reward = 0.0;
        std::vector<double> saved(comp.size());
        for (std::size_t k = 0; k < comp.size(); ++k) {
          saved[k] = u_[comp[k]];
          reward += indicator(comp[k]);
          u_[comp[k]] = D_.gamma;
        }
        const double delta = D_.K.local_energy(comp, u_) - before - reward;
        if (delta < -eta_dec_) {
          E += delta;
          ++accepted;
          ++collapse_;
        } else {
          for (std::size_t k = 0; k < comp.size(); ++k) u_[comp[k]] = saved[k];
        }
      }
    }
    return accepted;
  }

  // growth: re-activate zero cells next to a nonzero phase; retreat: zero out positive cells
  // next to the zero set. Each move relaxes the surrounding nonzero cells by Gauss-Seidel.
  // Accepted moves queue their neighbours, so a front can travel many cells in one sweep.
  Index local_moves(double& E, bool growth) {
    auto eligible = [&](Index c) {
      if (!D_.free[c] || (growth ? !zero(c) : !D_.positive(u_, c))) return false;
      for (Index nb : chebyshev_patch(g_, c, 1)) {
        if (nb == c || !D_.in_region[nb]) continue;
        if (growth ? !zero(nb) : zero(nb)) return true;
      }
      return false;
    };
    std::deque<Index> queue;
    std::vector<std::uint8_t> visits(static_cast<std::size_t>(u_.size()), 0);
    for (Index c = 0; c < u_.size(); ++c) {
      if (eligible(c)) {
        queue.push_back(c);
        visits[c] = 1;
      }
    }
    Index accepted = 0;
    while (!queue.empty()) {
      const Index c = queue.front();
      queue.pop_front();
      if (!eligible(c)) continue;
      std::vector<Index> relax;
      for (Index j : chebyshev_patch(g_, c, st_.local_radius))
        if (D_.free[j] && (j == c ? growth : !zero(j))) relax.push_back(j);
      std::vector<Index> touched = relax;
      if (!growth) touched.push_back(c);
      const double before = D_.K.local_energy(touched, u_);
      double ind_before = 0.0;
      std::vector<double> saved(touched.size());
      for (std::size_t k = 0; k < touched.size(); ++k) {
        saved[k] = u_[touched[k]];
        ind_before += indicator(touched[k]);
      }
      if (!growth) u_[c] = D_.gamma;
      for (int sweep = 0; sweep < st_.local_sweeps; ++sweep)
        for (Index j : relax) {
          const double dk = D_.K.diagonal(j);
          if (dk > 0.0) u_[j] -= D_.K.row_product(j, u_) / dk;
        }
      bool ok = growth ? !zero(c) : true;
      double delta = kInf;
      if (ok) {
        double ind_after = 0.0;
        for (Index j : touched) ind_after += indicator(j);
        delta = D_.K.local_energy(touched, u_) - before + ind_after - ind_before;
      }
      if (delta < -eta_dec_) {
        E += delta;
        ++accepted;
        ++(growth ? growth_ : retreat_);
        for (Index j : relax)
          if (zero(j)) u_[j] = D_.gamma;
        for (Index nb : chebyshev_patch(g_, c, 1)) {
          if (visits[nb] < 2 && D_.free[nb]) {
            ++visits[nb];
            queue.push_back(nb);
          }
        }
      } else {
        for (std::size_t k = 0; k < touched.size(); ++k) u_[touched[k]] = saved[k];
      }
    }
    return accepted;
  }

  const MinimizeProblem& p_;
  const Discretization& D_;
  const SolverSettings& st_;
  Eigen::VectorXd u_;
  const Grid& g_;
  double eta_dec_ = 0.0;
  Index harmonic_ = 0, collapse_ = 0, growth_ = 0, retreat_ = 0;
};

}  // namespace

MinimizerState exact_descent(const MinimizeProblem& p, const Discretization& D, Eigen::VectorXd u) {
  for (Index c = 0; c < u.size(); ++c)
    if (!D.free[c]) u[c] = D.in_region[c] ? D.data[c] : 0.0;
  return ExactDescent(p, D, std::move(u)).run();
}

MinimizerState minimize_exact(const MinimizeProblem& p, const ScalarField* seed) {
  return minimize_exact(p, Discretization(p), seed);
}

MinimizerState minimize_exact(const MinimizeProblem& p, const Discretization& D, const ScalarField* seed) {
  std::vector<std::pair<std::string, Eigen::VectorXd>> starts;
  starts.emplace_back("harmonic", harmonic_extension(D, p.settings.tolerance));
  if (!seed) starts.emplace_back("collapsed", D.start(D.gamma));
  if (seed) starts.emplace_back("seed", seed->values);
  std::unique_ptr<MinimizerState> best;
  std::ostringstream summary;
  for (auto& [name, u] : starts) {
    MinimizerState s = exact_descent(p, D, std::move(u));
    summary << name << " start: energy " << format_energy(s.energy) << ", " << s.iterations
            << " outer iterations; ";
    if (!best || s.energy < best->energy) {
      s.solver = "exact(" + name + ")";
      best = std::make_unique<MinimizerState>(std::move(s));
    }
  }
  best->diagnostics = summary.str() + best->diagnostics;
  return std::move(*best);
}

SolveResult minimize(const MinimizeProblem& p) {
  const Discretization D(p);
  SolveResult out{MinimizerState{ScalarField(p.region()), 0.0, {}, 0, false, {}, {}, ""}, nullptr, nullptr};
  if (p.solver != SolverKind::exact) out.smoothed = std::make_unique<MinimizerState>(minimize_smoothed(p, D));
  if (p.solver != SolverKind::smoothed)
    out.exact = std::make_unique<MinimizerState>(minimize_exact(p, D, out.smoothed ? &out.smoothed->u : nullptr));
  const MinimizerState* best = out.exact ? out.exact.get() : out.smoothed.get();
  if (out.exact && out.smoothed && out.smoothed->energy < out.exact->energy) best = out.smoothed.get();
  out.best = *best;
  return out;
}

// ---------------------------------------------------------------------------
// Transformations

double interpolate(const ScalarField& f, const Point& x) {
  const Grid& g = f.grid();
  const int d = g.dim();
  MultiIndex base{};
  double frac[kMaxDim];
  for (int a = 0; a < d; ++a) {
    const double s = (x[a] - g.lower()[a]) / g.spacing(a) - 0.5;
    int i = static_cast<int>(std::floor(s));
    i = std::clamp(i, 0, g.cells(a) - 2);
    base[a] = i;
    frac[a] = std::clamp(s - i, 0.0, 1.0);
  }
  double sum = 0.0, wsum = 0.0;
  for (int v = 0; v < (1 << d); ++v) {
    MultiIndex idx = base;
    double w = 1.0;
    for (int a = 0; a < d; ++a) {
      const bool hi = (v >> a) & 1;
      idx[a] += hi;
      w *= hi ? frac[a] : 1.0 - frac[a];
    }
    const Index c = g.ravel(idx);
    if (!f.region.contains(c) || w == 0.0) continue;
    sum += w * f.values[c];
    wsum += w;
  }
  if (wsum > 0.0) return sum / wsum;
  const Index c = g.locate(x);
  if (c >= 0 && f.region.contains(c)) return f.values[c];
  throw std::invalid_argument("interpolation point is away from the field region");
}

MinimizeProblem rescale_problem(const MinimizeProblem& p, const Point& x0, double r, double kappa, double gamma,
                                const std::function<double(const Point&)>& u, int n) {
  if (!(r > 0.0) || !(kappa >= 0.0)) throw std::invalid_argument("rescaling needs r > 0 and kappa >= 0");
  const Grid& src = p.region().grid();
  const int d = src.dim();
  const Grid grid = Grid::cube(d, -1.0, 1.0, n);
  const Region ball = make_ball(grid, Point::Zero(d), 1.0);
  std::vector<Index> source(static_cast<std::size_t>(grid.cell_count()), -1);
  for (Index c : ball.cells()) {
    const Index s = src.locate(x0 + r * grid.center(c));
    if (s < 0 || !p.region().contains(s)) throw std::invalid_argument("ball not contained in region");
    source[c] = s;
  }
  auto A = [&] {
    if (p.A.uniform()) return CoefficientField::constant(ball, p.A.matrix(source[ball.cells().front()]),
                                                         p.A.lambda(), p.A.Lambda());
    Eigen::MatrixXd entries = Eigen::MatrixXd::Zero(d * d, grid.cell_count());
    for (Index c : ball.cells()) {
      const SmallMatrix m = p.A.matrix(source[c]);
      for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) entries(i * d + j, c) = m(i, j);
    }
    return CoefficientField::from_entries(ball, std::move(entries), p.A.lambda(), p.A.Lambda());
  }();
  ScalarField g = sample(ball, [&](const Point& x) { return kappa * (u(x0 + r * x) - gamma); });
  return MinimizeProblem{std::move(A), p.w.rescaled(x0, r, kappa * kappa * r * r), std::move(g),
                         kappa * (p.gamma - gamma), p.solver, p.settings};
}

MinimizeProblem rescale_problem(const MinimizeProblem& p, const Point& x0, double r, double kappa, double gamma,
                                const ScalarField& u, int n) {
  return rescale_problem(p, x0, r, kappa, gamma, [&u](const Point& x) { return interpolate(u, x); }, n);
}

MinimizeProblem restrict_problem(const MinimizeProblem& p, const Point& x0, double r) {
  const Region sub = intersect(p.region(), make_ball(p.region().grid(), x0, r));
  ScalarField g(sub, p.g.values);
  return MinimizeProblem{p.A.restricted(sub), p.w, std::move(g), p.gamma, p.solver, p.settings};
}

}  // namespace bernoulli
