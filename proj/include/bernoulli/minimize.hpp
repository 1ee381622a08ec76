#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "bernoulli/elliptic.hpp"
#include "bernoulli/field.hpp"
#include "bernoulli/weights.hpp"

namespace bernoulli {

enum class SolverKind { smoothed, exact, both };

std::string to_string(SolverKind kind);
SolverKind parse_solver_kind(const std::string& s);

struct SolverSettings {
  double tolerance = 1e-10;           // linear solves
  double smoothed_tolerance = 1e-6;   // preconditioned gradient at the final level, relative to the larger of
                                      // its start and the start of level 0
  double level_tolerance = 1e-3;      // the same for the warm-start levels before it
  double eps0 = 0.0;                  // 0: max g - gamma
  int continuation_levels = 12;       // eps_k = eps0 2^-k, k = 0..levels
  int smoothed_iterations = 0;        // per continuation level; 0: max(400, 8 * most cells along an axis),
                                      // and the linear solver cap on the final level
  int max_outer = 200;
  int ladder = 16;                    // collapse thresholds 2^-j (max u - gamma), j = 1..ladder
  int local_radius = 2;               // Chebyshev radius of the relaxation patch of a local move
  int local_sweeps = 6;
  double eta_pos_rel = 1e-9;
  double eta_dec_rel = 1e-10;
};

struct MinimizeProblem {
  CoefficientField A;
  BernoulliWeight w;
  ScalarField g;  // Dirichlet data, read on the region's closure layer
  double gamma = 0.0;
  SolverKind solver = SolverKind::both;
  SolverSettings settings;

  const Region& region() const { return A.region(); }
};

/// Everything a solver needs, prepared once per problem.
struct Discretization {
  explicit Discretization(const MinimizeProblem& p);

  StiffnessOperator K;
  Eigen::VectorXd phi;  // cell averages of the weight (inf allowed), zero off the region
  Mask in_region;
  Mask fixed;           // closure layer: u = g
  Mask forced;          // infinite weight average off the layer: u = gamma
  Mask free;            // everything else in the region
  Eigen::VectorXd data; // g on fixed cells, gamma on forced cells, 0 elsewhere
  double gamma;
  double volume;        // cell volume
  double eta_pos;
  double g_max;
  double g_min;

  /// Start vector: data on fixed/forced cells and `fill` on free cells.
  Eigen::VectorXd start(double fill) const;
  bool positive(const Eigen::VectorXd& u, Index c) const { return u[c] > gamma + eta_pos; }
  /// u^T K u + sum over positive region cells of phi vol.
  double energy(const Eigen::VectorXd& u) const;
  /// Indicator part only.
  double weight_energy(const Eigen::VectorXd& u) const;
};

struct MinimizerState {
  ScalarField u;
  double energy = 0.0;
  Mask positive;
  Index iterations = 0;
  bool converged = false;
  std::vector<double> history;  // energy after every outer iteration (exact) or level (smoothed)
  std::string diagnostics;
  std::string solver;           // which solver produced the state
};

/// Exact discrete energy of a field; +inf when a cell with infinite weight average is positive.
double energy(const ScalarField& u, const MinimizeProblem& p);

/// Smoothed indicator Phi(s) = 3s^2 - 2s^3 on [0,1], 0 below, 1 above.
double smooth_step(double s);
double smooth_step_derivative(double s);
/// J_eps restricted to one level of the continuation.
double smoothed_energy(const Discretization& D, const Eigen::VectorXd& u, double eps);
/// Gradient of J_eps with respect to the free cells (zero elsewhere).
Eigen::VectorXd smoothed_gradient(const Discretization& D, const Eigen::VectorXd& u, double eps);
/// Part of J_eps that depends on u_c: the elements around c plus c's weight term.
double smoothed_local_energy(const Discretization& D, const Eigen::VectorXd& u, double eps, Index c);

/// Largest relative gap between smoothed_gradient and central differences of the local energy
/// over `coords` random free cells. The step is 1e-4 eps inside the smoothing band and half the
/// distance to the band outside it; gradients below 1e-12 of the largest sampled one count as agreeing.
double smoothed_gradient_error(const Discretization& D, const Eigen::VectorXd& u, double eps, int coords,
                               std::uint64_t seed);

MinimizerState minimize_smoothed(const MinimizeProblem& p);
MinimizerState minimize_smoothed(const MinimizeProblem& p, const Discretization& D);
/// Exact descent from the harmonic extension and from `seed`; without a seed the collapsed
/// start (every free cell at gamma) replaces it. The lowest energy wins.
MinimizerState minimize_exact(const MinimizeProblem& p, const ScalarField* seed = nullptr);
MinimizerState minimize_exact(const MinimizeProblem& p, const Discretization& D, const ScalarField* seed);
/// Single descent run from a given start vector.
MinimizerState exact_descent(const MinimizeProblem& p, const Discretization& D, Eigen::VectorXd u);

struct SolveResult {
  MinimizerState best;
  std::unique_ptr<MinimizerState> smoothed;
  std::unique_ptr<MinimizerState> exact;
};
/// Runs the solver(s) requested by p.solver; `best` is the lower-energy state.
SolveResult minimize(const MinimizeProblem& p);

/// Harmonic extension of the data over the free cells (forced cells at gamma).
Eigen::VectorXd harmonic_extension(const Discretization& D, double tolerance);

/// Transform to B_1: u -> kappa (u(x0 + r x) - gamma), phi -> kappa^2 r^2 phi(x0 + r x),
/// A -> A(x0 + r x), level -> kappa (level - gamma). The new problem lives on [-1,1]^d with
/// n cells per axis and its data are sampled from `u`.
MinimizeProblem rescale_problem(const MinimizeProblem& p, const Point& x0, double r, double kappa, double gamma,
                                const std::function<double(const Point&)>& u, int n);
MinimizeProblem rescale_problem(const MinimizeProblem& p, const Point& x0, double r, double kappa, double gamma,
                                const ScalarField& u, int n);
/// The same problem restricted to the cells of B_r(x0).
MinimizeProblem restrict_problem(const MinimizeProblem& p, const Point& x0, double r);

/// Multilinear interpolation of cell-centred values (clamped to the nearest masked cells).
double interpolate(const ScalarField& f, const Point& x);

}  // namespace bernoulli
