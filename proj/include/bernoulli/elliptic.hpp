#pragma once

#include <array>
#include <stdexcept>
#include <string>
#include <vector>

#include "bernoulli/field.hpp"

namespace bernoulli {

/// Raised when an iterative solve hits its iteration cap.
class ConvergenceError : public std::runtime_error {
 public:
  ConvergenceError(const std::string& what, double residual, Index iterations)
      : std::runtime_error(what), residual_(residual), iterations_(iterations) {}
  double residual() const { return residual_; }
  Index iterations() const { return iterations_; }

 private:
  double residual_;
  Index iterations_;
};

/// Assembled-on-the-fly Q1 stiffness of the form  sum_e u_e^T K_e u_e ~ ∫ ∇u·(A∇u).
///
/// Elements are the boxes spanned by 2^d adjacent cell centres; an element exists when all
/// of its vertex cells lie in the coefficient region. Each element quadrant takes the matrix
/// of the cell whose centre it touches, so the quadrature below is exact for piecewise
/// constant A.
class StiffnessOperator {
 public:
  explicit StiffnessOperator(const CoefficientField& A);

  const Grid& grid() const { return region_.grid(); }
  const Region& region() const { return region_; }
  int corners() const { return corners_; }
  Index element_count() const { return static_cast<Index>(bases_.size()); }

  /// y = K u over the whole grid (zero rows for cells outside every element).
  void apply(const Eigen::VectorXd& u, Eigen::VectorXd& y) const;
  Eigen::VectorXd apply(const Eigen::VectorXd& u) const;
  /// (K u)_c using only the elements around c.
  double row_product(Index cell, const Eigen::VectorXd& u) const;
  double diagonal(Index cell) const { return diag_[cell]; }
  const Eigen::VectorXd& diagonal() const { return diag_; }
  /// u^T K u.
  double energy(const Eigen::VectorXd& u) const;
  /// Energy of the elements touching any cell of `cells` (each element counted once).
  double local_energy(const std::vector<Index>& cells, const Eigen::VectorXd& u) const;
  /// Element energy contribution of the element with the given base cell (0 if absent).
  double element_energy(Index base, const Eigen::VectorXd& u) const;
  /// Base cells of the elements having `cell` as a vertex.
  std::vector<Index> elements_of(Index cell) const;
  bool has_element(Index base) const { return base >= 0 && element_id_[base] >= 0; }
  /// Cell offset of element corner v.
  Index corner_offset(int v) const { return offset_[v]; }

 private:
  const double* element_matrix(Index element) const;

  Region region_;
  int corners_;
  std::array<Index, 16> offset_{};
  std::vector<Index> bases_;
  std::vector<std::int32_t> element_id_;  // per cell: element index when the cell is a base, else -1
  bool uniform_;
  std::vector<double> k_;  // corners^2 per element, or a single block when uniform
  Eigen::VectorXd diag_;
};

/// Dirichlet data: the PDE holds on `active`, every other cell of A's region keeps its value
/// from `boundary_values`.
struct DirichletProblem {
  CoefficientField A;
  Region active;
  ScalarField boundary_values;
  double tolerance = 1e-10;
};

struct SolveStats {
  Index iterations = 0;
  double residual = 0.0;  // relative preconditioned residual
};

/// Jacobi-preconditioned CG on the cells flagged in `active`, updating u in place.
/// Throws ConvergenceError after `max_iterations`.
SolveStats pcg_solve(const StiffnessOperator& K, const Mask& active, Eigen::VectorXd& u, double tolerance,
                     Index max_iterations);
/// Default iteration cap: 50 sqrt(total cells).
Index default_iteration_cap(const Grid& grid);

/// Discrete ∇·(A∇u) per cell, the negative gradient of half the energy divided by the cell volume.
ScalarField apply_operator(const CoefficientField& A, const ScalarField& u);
ScalarField solve_dirichlet(const DirichletProblem& p, SolveStats* stats = nullptr);

/// Largest (K u)_c over the cells off the region's closure layer, clipped at 0.
/// Zero for subsolutions: ∫ A∇u·∇v <= 0 for every nonnegative hat function v.
double subsolution_defect(const ScalarField& u, const CoefficientField& A);
double subsolution_defect(const StiffnessOperator& K, const Eigen::VectorXd& u, const Mask& tested);
/// sqrt(u^T K u).
double energy_norm(const ScalarField& u, const CoefficientField& A);

}  // namespace bernoulli
