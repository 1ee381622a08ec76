#include "bernoulli/elliptic.hpp"

#include <algorithm>
#include <cmath>

namespace bernoulli {

namespace {

// Reference stiffness blocks R[v][a][b] (corners x corners) for the unit element scaled to
// the grid spacing: ∫ over quadrant v of ∂_a N_i ∂_b N_j.
std::vector<double> reference_blocks(const Grid& g) {
  const int d = g.dim();
  const int nc = 1 << d;
  const double gp[2] = {0.5 - 0.5 / std::sqrt(3.0), 0.5 + 0.5 / std::sqrt(3.0)};
  std::vector<double> out(static_cast<std::size_t>(nc * d * d * nc * nc), 0.0);
  double vol = 1.0;
  for (int k = 0; k < d; ++k) vol *= g.spacing(k);
  auto at = [&](int v, int a, int b, int i, int j) -> double& {
    return out[(((static_cast<std::size_t>(v) * d + a) * d + b) * nc + i) * nc + j];
  };
  std::vector<double> grad(static_cast<std::size_t>(nc * d));
  for (int v = 0; v < nc; ++v) {
    // 2^d Gauss points in the quadrant [v_k/2, v_k/2 + 1/2]
    for (int p = 0; p < nc; ++p) {
      double x[kMaxDim];
      for (int k = 0; k < d; ++k) x[k] = 0.5 * ((v >> (d - 1 - k)) & 1) + 0.5 * gp[(p >> k) & 1];
      const double w = vol / (nc * nc);  // Gauss weight 1/4 per axis on a quadrant of side 1/2
      for (int i = 0; i < nc; ++i) {
        for (int a = 0; a < d; ++a) {
          double prod = 1.0;
          for (int k = 0; k < d; ++k) {
            const bool hi = (i >> (d - 1 - k)) & 1;
            if (k == a) {
              prod *= (hi ? 1.0 : -1.0) / g.spacing(k);
            } else {
              prod *= hi ? x[k] : 1.0 - x[k];
            }
          }
          grad[static_cast<std::size_t>(i * d + a)] = prod;
        }
      }
      for (int a = 0; a < d; ++a)
        for (int b = 0; b < d; ++b)
          for (int i = 0; i < nc; ++i)
            for (int j = 0; j < nc; ++j)
              at(v, a, b, i, j) += w * grad[static_cast<std::size_t>(i * d + a)] *
                                   grad[static_cast<std::size_t>(j * d + b)];
    }
  }
  return out;
}

}  // namespace

StiffnessOperator::StiffnessOperator(const CoefficientField& A)
    : region_(A.region()), corners_(1 << A.dim()), uniform_(A.uniform()) {
  const Grid& g = grid();
  const int d = g.dim();
  const int nc = corners_;
  // corner v has bit (d-1-k) as its offset along axis k, so corner order follows cell order
  for (int v = 0; v < nc; ++v) {
    Index off = 0;
    for (int k = 0; k < d; ++k)
      if ((v >> (d - 1 - k)) & 1) off += g.stride(k);
    offset_[v] = off;
  }
  element_id_.assign(static_cast<std::size_t>(g.cell_count()), -1);
  for (Index c = 0; c < g.cell_count(); ++c) {
    if (!region_.contains(c)) continue;
    const MultiIndex idx = g.unravel(c);
    bool ok = true;
    for (int k = 0; k < d && ok; ++k) ok = idx[k] + 1 < g.cells(k);
    for (int v = 1; v < nc && ok; ++v) ok = region_.contains(c + offset_[v]);
    if (!ok) continue;
    element_id_[c] = static_cast<std::int32_t>(bases_.size());
    bases_.push_back(c);
  }

  const std::vector<double> ref = reference_blocks(g);
  const std::size_t block = static_cast<std::size_t>(nc * nc);
  auto assemble = [&](double* K, const std::array<SmallMatrix, 16>& mats) {
    std::fill(K, K + block, 0.0);
    for (int v = 0; v < nc; ++v)
      for (int a = 0; a < d; ++a)
        for (int b = 0; b < d; ++b) {
          const double m = mats[v](a, b);
          if (m == 0.0) continue;
          const double* r = &ref[((static_cast<std::size_t>(v) * d + a) * d + b) * block];
          for (std::size_t t = 0; t < block; ++t) K[t] += m * r[t];
        }
  };
  std::array<SmallMatrix, 16> mats;
  if (uniform_) {
    k_.resize(block);
    const Index any = region_.cells().front();
    for (int v = 0; v < nc; ++v) mats[v] = A.matrix(any);
    assemble(k_.data(), mats);
  } else {
    k_.resize(block * bases_.size());
    for (std::size_t e = 0; e < bases_.size(); ++e) {
      for (int v = 0; v < nc; ++v) mats[v] = A.matrix(bases_[e] + offset_[v]);
      assemble(&k_[e * block], mats);
    }
  }

  diag_ = Eigen::VectorXd::Zero(g.cell_count());
  for (std::size_t e = 0; e < bases_.size(); ++e) {
    const double* K = element_matrix(static_cast<Index>(e));
    for (int v = 0; v < nc; ++v) diag_[bases_[e] + offset_[v]] += K[v * nc + v];
  }
}

const double* StiffnessOperator::element_matrix(Index element) const {
  return uniform_ ? k_.data() : &k_[static_cast<std::size_t>(element) * corners_ * corners_];
}

void StiffnessOperator::apply(const Eigen::VectorXd& u, Eigen::VectorXd& y) const {
  const int nc = corners_;
  y.setZero(u.size());
  double ue[16];
  for (std::size_t e = 0; e < bases_.size(); ++e) {
    const Index base = bases_[e];
    const double* K = element_matrix(static_cast<Index>(e));
    for (int v = 0; v < nc; ++v) ue[v] = u[base + offset_[v]];
    for (int i = 0; i < nc; ++i) {
      double s = 0.0;
      for (int j = 0; j < nc; ++j) s += K[i * nc + j] * ue[j];
      y[base + offset_[i]] += s;
    }
  }
}

Eigen::VectorXd StiffnessOperator::apply(const Eigen::VectorXd& u) const {
  Eigen::VectorXd y;
  apply(u, y);
  return y;
}

double StiffnessOperator::row_product(Index cell, const Eigen::VectorXd& u) const {
  const int nc = corners_;
  double s = 0.0;
  for (int v = 0; v < nc; ++v) {
    const Index base = cell - offset_[v];
    if (base < 0) continue;
    const std::int32_t e = element_id_[base];
    if (e < 0) continue;
    const double* K = element_matrix(e);
    for (int j = 0; j < nc; ++j) s += K[v * nc + j] * u[base + offset_[j]];
  }
  return s;
}

double StiffnessOperator::element_energy(Index base, const Eigen::VectorXd& u) const {
  if (!has_element(base)) return 0.0;
  const int nc = corners_;
  const double* K = element_matrix(element_id_[base]);
  // K annihilates constants, so shifting by one corner value only removes cancellation
  double ue[16];
  const double shift = u[base];
  for (int v = 0; v < nc; ++v) ue[v] = u[base + offset_[v]] - shift;
  double s = 0.0;
  for (int i = 0; i < nc; ++i) {
    double t = 0.0;
    for (int j = 0; j < nc; ++j) t += K[i * nc + j] * ue[j];
    s += ue[i] * t;
  }
  return s;
}

double StiffnessOperator::energy(const Eigen::VectorXd& u) const {
  double s = 0.0;
  for (Index base : bases_) s += element_energy(base, u);
  return s;
}

std::vector<Index> StiffnessOperator::elements_of(Index cell) const {
  std::vector<Index> out;
  for (int v = 0; v < corners_; ++v) {
    const Index base = cell - offset_[v];
    if (has_element(base)) out.push_back(base);
  }
  return out;
}

double StiffnessOperator::local_energy(const std::vector<Index>& cells, const Eigen::VectorXd& u) const {
  std::vector<Index> elems;
  for (Index c : cells) {
    for (int v = 0; v < corners_; ++v) {
      const Index base = c - offset_[v];
      if (has_element(base)) elems.push_back(base);
    }
  }
  std::sort(elems.begin(), elems.end());
  elems.erase(std::unique(elems.begin(), elems.end()), elems.end());
  double s = 0.0;
  for (Index base : elems) s += element_energy(base, u);
  return s;
}

// ---------------------------------------------------------------------------

Index default_iteration_cap(const Grid& grid) {
  return static_cast<Index>(std::ceil(50.0 * std::sqrt(static_cast<double>(grid.cell_count()))));
}

SolveStats pcg_solve(const StiffnessOperator& K, const Mask& active, Eigen::VectorXd& u, double tolerance,
                     Index max_iterations) {
  const Index n = u.size();
  const Eigen::VectorXd& diag = K.diagonal();
  Eigen::VectorXd inv = Eigen::VectorXd::Zero(n);
  for (Index c = 0; c < n; ++c)
    if (active[c] && diag[c] > 0.0) inv[c] = 1.0 / diag[c];

  // Reference scale: the right-hand side generated by the fixed data alone.
  Eigen::VectorXd fixed = u;
  for (Index c = 0; c < n; ++c)
    if (inv[c] > 0.0) fixed[c] = 0.0;
  Eigen::VectorXd r = -K.apply(fixed);
  r = r.cwiseProduct((inv.array() > 0.0).cast<double>().matrix());
  double ref = std::sqrt(r.dot(inv.cwiseProduct(r)));

  Eigen::VectorXd Kp;
  K.apply(u, Kp);
  for (Index c = 0; c < n; ++c) r[c] = inv[c] > 0.0 ? -Kp[c] : 0.0;
  Eigen::VectorXd z = inv.cwiseProduct(r);
  double rz = r.dot(z);
  if (ref == 0.0) ref = std::sqrt(rz);
  SolveStats stats;
  if (ref == 0.0) return stats;
  stats.residual = std::sqrt(rz) / ref;
  if (stats.residual <= tolerance) return stats;

  Eigen::VectorXd p = z;
  while (true) {
    if (stats.iterations >= max_iterations)
      throw ConvergenceError("conjugate gradient did not converge", stats.residual, stats.iterations);
    K.apply(p, Kp);
    double pKp = 0.0;
    for (Index c = 0; c < n; ++c)
      if (inv[c] > 0.0) pKp += p[c] * Kp[c];
    if (!(pKp > 0.0)) break;
    const double alpha = rz / pKp;
    for (Index c = 0; c < n; ++c) {
      if (inv[c] == 0.0) continue;
      u[c] += alpha * p[c];
      r[c] -= alpha * Kp[c];
    }
    z = inv.cwiseProduct(r);
    const double rz_new = r.dot(z);
    ++stats.iterations;
    stats.residual = std::sqrt(rz_new) / ref;
    if (stats.residual <= tolerance) break;
    p = z + (rz_new / rz) * p;
    rz = rz_new;
  }
  return stats;
}

ScalarField apply_operator(const CoefficientField& A, const ScalarField& u) {
  if (A.dim() != u.grid().dim() || A.region().grid() != u.grid())
    throw std::invalid_argument("operator and field grids differ");
  const StiffnessOperator K(A);
  Eigen::VectorXd v = u.values;
  for (Index c = 0; c < v.size(); ++c)
    if (!A.region().contains(c)) v[c] = 0.0;
  Eigen::VectorXd y = K.apply(v) / -u.grid().cell_volume();
  return ScalarField(A.region(), std::move(y));
}

ScalarField solve_dirichlet(const DirichletProblem& p, SolveStats* stats) {
  if (p.A.region().grid() != p.active.grid() || p.boundary_values.grid() != p.active.grid())
    throw std::invalid_argument("dirichlet problem grids differ");
  if (!p.active.subset_of(p.A.region())) throw std::invalid_argument("active set leaves the coefficient region");
  if (!(p.tolerance > 1e-14 && p.tolerance < 1e-2)) throw std::invalid_argument("tolerance out of range");
  const StiffnessOperator K(p.A);
  const Grid& g = p.active.grid();
  Eigen::VectorXd u = Eigen::VectorXd::Zero(g.cell_count());
  Mask active(static_cast<std::size_t>(g.cell_count()), 0);
  bool has_fixed = false;
  for (Index c = 0; c < g.cell_count(); ++c) {
    if (!p.A.region().contains(c)) continue;
    if (p.active.contains(c)) {
      active[c] = 1;
    } else {
      u[c] = p.boundary_values.values[c];
      has_fixed = true;
    }
  }
  if (!has_fixed) throw std::invalid_argument("dirichlet problem has no boundary cells");
  const SolveStats s = pcg_solve(K, active, u, p.tolerance, default_iteration_cap(g));
  if (stats) *stats = s;
  return ScalarField(p.A.region(), std::move(u));
}

double subsolution_defect(const StiffnessOperator& K, const Eigen::VectorXd& u, const Mask& tested) {
  double worst = 0.0;
  for (Index c = 0; c < u.size(); ++c)
    if (tested[c]) worst = std::max(worst, K.row_product(c, u));
  return worst;
}

double subsolution_defect(const ScalarField& u, const CoefficientField& A) {
  const StiffnessOperator K(A);
  const Mask boundary = A.region().closure_layer();
  Mask tested(boundary.size(), 0);
  for (Index c = 0; c < u.grid().cell_count(); ++c)
    tested[c] = A.region().contains(c) && !boundary[c];
  Eigen::VectorXd v = u.values;
  for (Index c = 0; c < v.size(); ++c)
    if (!A.region().contains(c)) v[c] = 0.0;
  return subsolution_defect(K, v, tested);
}

double energy_norm(const ScalarField& u, const CoefficientField& A) {
  const StiffnessOperator K(A);
  Eigen::VectorXd v = u.values;
  for (Index c = 0; c < v.size(); ++c)
    if (!A.region().contains(c)) v[c] = 0.0;
  return std::sqrt(std::max(K.energy(v), 0.0));
}

}  // namespace bernoulli
