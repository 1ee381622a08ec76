#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>

#include "bernoulli/analyze.hpp"
#include "bernoulli/minimize.hpp"

using namespace bernoulli;

namespace {

Point pt(std::initializer_list<double> v) {
  Point p(static_cast<Index>(v.size()));
  Index i = 0;
  for (double x : v) p[i++] = x;
  return p;
}

MinimizeProblem ball_problem(int d, int n, const BernoulliWeight& w, const std::function<double(const Point&)>& g,
                             double gamma = 0.0, SolverKind solver = SolverKind::both) {
  const Region ball = make_ball(Grid::cube(d, -1.0, 1.0, n), Point::Zero(d), 1.0);
  return MinimizeProblem{CoefficientField::identity(ball), w, sample(ball, g), gamma, solver, {}};
}

MinimizeProblem section7_problem(int n, double m, SolverKind solver = SolverKind::both) {
  return ball_problem(3, n, BernoulliWeight::section7(3, 2.0, m), [m](const Point&) { return m; }, 0.0, solver);
}

double max_abs_diff(const ScalarField& a, const ScalarField& b) {
  double worst = 0.0;
  for (Index c : a.region.cells()) worst = std::max(worst, std::abs(a[c] - b[c]));
  return worst;
}

void check_state(const MinimizerState& s, const MinimizeProblem& p) {
  CHECK(s.energy == doctest::Approx(energy(s.u, p)).epsilon(1e-10));
  const double g_max = p.g.values.maxCoeff();
  const double eta = 1e-9 * (g_max - p.gamma);
  for (Index c : p.region().cells()) CHECK(bool(s.positive[c]) == (s.u[c] > p.gamma + eta));
}

}  // namespace

TEST_CASE("energy of simple fields") {
  const Region box = make_box(Grid::cube(2, 0.0, 1.0, 16));
  const MinimizeProblem p{CoefficientField::identity(box), BernoulliWeight::constant(2.5), ScalarField(box, 0.3),
                          0.3, SolverKind::both, {}};
  CHECK(energy(ScalarField(box, 0.3), p) == 0.0);
  MinimizeProblem q = p;
  q.gamma = 0.0;
  CHECK(energy(ScalarField(box, 0.7), q) == doctest::Approx(2.5).epsilon(1e-12));
}

TEST_CASE("energy of the radial profile") {
  // u_r with d = 3, r = 1/2, m = 1: 2 - 1/|x| beyond r, energy 4 pi
  const auto radial_energy = [](int n) {
    const Grid g = Grid::cube(3, -1.0, 1.0, n);
    const Region ball = make_ball(g, pt({0.0, 0.0, 0.0}), 1.0);
    const ScalarField u = sample(ball, [](const Point& x) { return std::max(0.0, 2.0 - 1.0 / x.norm()); });
    const MinimizeProblem p{CoefficientField::identity(ball), BernoulliWeight::constant(0.0), u, 0.0,
                            SolverKind::both, {}};
    return energy(u, p);
  };
  const double e32 = radial_energy(32), e64 = radial_energy(64);
  // elements span the cell centres only, so a boundary strip of width ~h is missing: first order
  CHECK(e64 < 4.0 * M_PI);
  CHECK(e64 == doctest::Approx(4.0 * M_PI).epsilon(0.05));
  CHECK((4.0 * M_PI - e32) / (4.0 * M_PI - e64) == doctest::Approx(2.0).epsilon(0.1));
  CHECK(2.0 * e64 - e32 == doctest::Approx(4.0 * M_PI).epsilon(0.01));
}

TEST_CASE("energy is infinite on positive forced cells") {
  const Region box = make_box(Grid::cube(2, -1.0, 1.0, 15));
  const MinimizeProblem p{CoefficientField::identity(box),
                          BernoulliWeight::point_singularity(pt({0.0, 0.0}), 1.0, 2.0), ScalarField(box, 1.0),
                          0.0, SolverKind::both, {}};
  CHECK(std::isinf(energy(ScalarField(box, 1.0), p)));
  const Discretization D(p);
  CHECK(D.forced[box.grid().locate(pt({0.0, 0.0}))]);
}

TEST_CASE("without a weight both solvers return the harmonic extension") {
  const MinimizeProblem p = ball_problem(2, 32, BernoulliWeight::constant(0.0),
                                         [](const Point& x) { return 1.0 + x[0] * x[1] + 0.5 * x[0]; });
  const SolveResult r = minimize(p);
  const Mask layer = p.region().closure_layer();
  Mask active(layer.size(), 0);
  for (Index c : p.region().cells()) active[c] = !layer[c];
  const ScalarField h = solve_dirichlet(DirichletProblem{p.A, make_custom(p.region().grid(), active), p.g, 1e-12});
  REQUIRE(r.smoothed);
  REQUIRE(r.exact);
  CHECK(max_abs_diff(r.smoothed->u, h) <= 1e-6);
  CHECK(max_abs_diff(r.exact->u, h) <= 1e-6);
  const double e = energy(h, p);
  CHECK(r.smoothed->energy == doctest::Approx(e).epsilon(1e-8));
  CHECK(r.exact->energy == doctest::Approx(e).epsilon(1e-8));
  CHECK(r.exact->converged);
  CHECK(r.smoothed->converged);
}

TEST_CASE("zero data give the zero minimizer") {
  const MinimizeProblem p =
      ball_problem(2, 24, BernoulliWeight::point_singularity(pt({0.1, 0.0}), 1.0, 1.0), [](const Point&) { return 0.0; });
  const SolveResult r = minimize(p);
  for (const MinimizerState* s : {r.smoothed.get(), r.exact.get()}) {
    REQUIRE(s);
    CHECK(s->u.values.cwiseAbs().maxCoeff() == 0.0);
    CHECK(s->energy == 0.0);
  }
}

TEST_CASE("singular sphere problem: solvers agree and the zero set is a shell") {
  const MinimizeProblem p = section7_problem(16, 0.2);
  const SolveResult r = minimize(p);
  REQUIRE(r.smoothed);
  REQUIRE(r.exact);
  check_state(*r.smoothed, p);
  check_state(*r.exact, p);
  CHECK(r.smoothed->energy == doctest::Approx(r.exact->energy).epsilon(0.05));
  CHECK(r.exact->energy <= r.smoothed->energy * (1.0 + 1e-12));
  Index zeros = 0;
  for (Index c : p.region().cells()) zeros += !r.exact->positive[c];
  CHECK(zeros > 0);
  CHECK(subsolution_defect(r.exact->u, p.A) <= 1e-6 * energy_norm(r.exact->u, p.A));
}

TEST_CASE("large boundary value keeps the whole ball positive") {
  const MinimizeProblem p = section7_problem(12, 10.0, SolverKind::exact);
  const MinimizerState s = minimize_exact(p);
  CHECK(s.converged);
  for (Index c : p.region().cells()) {
    CHECK(s.positive[c]);
    CHECK(s.u[c] == doctest::Approx(10.0).epsilon(1e-9));
  }
  const Discretization D(p);
  double integral = 0.0;
  for (Index c : p.region().cells()) integral += D.phi[c] * D.volume;
  CHECK(s.energy == doctest::Approx(integral).epsilon(1e-9));
}

TEST_CASE("exact descent: monotone history, fixed point, bounds") {
  const BernoulliWeight w = BernoulliWeight::point_singularity(pt({0.2, -0.1}), 0.01, 1.0, 0.5);
  const auto g = [](const Point& x) { return 0.15 + 0.1 * x[0]; };
  const MinimizeProblem p = ball_problem(2, 48, w, g, 0.0, SolverKind::exact);
  const Discretization D(p);
  const MinimizerState s = minimize_exact(p, D, nullptr);
  CHECK(s.converged);
  check_state(s, p);
  for (std::size_t k = 1; k < s.history.size(); ++k) CHECK(s.history[k] <= s.history[k - 1]);
  const MinimizerState again = exact_descent(p, D, s.u.values);
  CHECK(again.energy == doctest::Approx(s.energy).epsilon(1e-12));
  CHECK(max_abs_diff(again.u, s.u) <= 1e-9);
  Index zeros = 0;
  for (Index c : p.region().cells()) {
    CHECK(s.u[c] >= 0.0);
    CHECK(s.u[c] <= D.g_max + 1e-12);
    zeros += !s.positive[c];
  }
  CHECK(zeros > 0);
  CHECK(subsolution_defect(s.u, p.A) <= 1e-6 * energy_norm(s.u, p.A));
}

TEST_CASE("two-phase data respect the level and the data bounds") {
  const BernoulliWeight w = BernoulliWeight::constant(0.3);
  const auto g = [](const Point& x) { return 0.4 * x[0] + 0.1; };
  const MinimizeProblem p = ball_problem(2, 32, w, g, 0.05);
  const SolveResult r = minimize(p);
  const Discretization D(p);
  for (const MinimizerState* s : {r.smoothed.get(), r.exact.get()}) {
    REQUIRE(s);
    check_state(*s, p);
    for (Index c : p.region().cells()) {
      CHECK(s->u[c] >= std::min(p.gamma, D.g_min) - 1e-9);
      CHECK(s->u[c] <= D.g_max + 1e-9);
    }
  }
}

TEST_CASE("anisotropic coefficients converge under the automatic caps") {
  const Region box = make_box(Grid::cube(2, -1.0, 1.0, 64));
  const MinimizeProblem p{CoefficientField::diagonal(box, pt({1.0, 4.0})), BernoulliWeight::constant(0.5),
                          sample(box, [](const Point& x) { return 0.2 + 0.4 * x[0]; }), 0.0, SolverKind::both, {}};
  const SolveResult r = minimize(p);
  REQUIRE(r.smoothed);
  REQUIRE(r.exact);
  CHECK(r.smoothed->converged);
  CHECK(r.exact->converged);
  check_state(*r.smoothed, p);
  CHECK(std::abs(r.smoothed->energy - r.exact->energy) <= 0.05 * r.exact->energy);
}

TEST_CASE("smoothed gradient matches finite differences") {
  const BernoulliWeight w = BernoulliWeight::point_singularity(pt({0.1, 0.1}), 0.05, 1.0, 0.2);
  const MinimizeProblem p = ball_problem(2, 40, w, [](const Point& x) { return 0.5 + 0.3 * x[1]; });
  const Discretization D(p);
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> U(-0.05, 0.8);
  Eigen::VectorXd u = D.start(0.0);
  for (Index c = 0; c < u.size(); ++c)
    if (D.free[c]) u[c] = U(rng);
  for (double eps : {0.8, 0.1, 1e-3, 4.0 * D.eta_pos}) {
    CHECK(smoothed_gradient_error(D, u, eps, 20, 7) <= 1e-6);
  }
  CHECK(smooth_step(0.5) == doctest::Approx(0.5));
  CHECK(smooth_step(-1.0) == 0.0);
  CHECK(smooth_step(2.0) == 1.0);
  CHECK(smooth_step_derivative(0.5) == doctest::Approx(1.5));
}

TEST_CASE("rescaling: identity and transformed weight") {
  const BernoulliWeight w = BernoulliWeight::point_singularity(pt({0.2, 0.1}), 0.1, 1.0, 0.3);
  const auto g = [](const Point& x) { return 0.4 + 0.2 * x[0] - 0.1 * x[1] * x[1]; };
  const MinimizeProblem p = ball_problem(2, 40, w, g);
  const ScalarField u = sample(p.region(), [](const Point& x) { return std::max(0.0, 0.3 + x[0] - x[1] * x[1]); });
  const MinimizeProblem id = rescale_problem(p, pt({0.0, 0.0}), 1.0, 1.0, 0.0, u, 40);
  CHECK(energy(u, id) == doctest::Approx(energy(u, p)).epsilon(1e-12));

  const MinimizeProblem c = ball_problem(2, 40, BernoulliWeight::constant(0.7), g);
  const double r = 0.3;
  const MinimizeProblem t = rescale_problem(c, pt({0.1, 0.2}), r, 2.0, 0.0, u, 20);
  for (const Point& x : {pt({0.0, 0.0}), pt({0.5, -0.3})}) CHECK(t.w(x) == doctest::Approx(4.0 * r * r * 0.7));
  CHECK(t.w.cell_average(t.region().grid(), 7) == doctest::Approx(4.0 * r * r * 0.7));
  CHECK_THROWS(rescale_problem(c, pt({0.8, 0.0}), 0.5, 1.0, 0.0, u, 20));
}

TEST_CASE("rescaling: energy identity on nested grids") {
  for (int d : {2, 3}) {
    const int n = d == 2 ? 256 : 48;
    const BernoulliWeight w = BernoulliWeight::point_singularity(Point::Constant(d, 0.05), 0.1, 1.0, 0.2);
    const auto field = [](const Point& x) { return 0.5 * x[0] + 0.3 * x[1] * x[1] + 0.05; };
    const MinimizeProblem p = ball_problem(d, n, w, field);
    const ScalarField u = sample(p.region(), field);
    const double r = 0.5, kappa = 1.7, gamma = 0.02;
    const MinimizeProblem local = restrict_problem(p, Point::Zero(d), r);
    // the rescaled grid with n/2 cells has the restricted cells as its own: nested
    const MinimizeProblem tilde = rescale_problem(p, Point::Zero(d), r, kappa, gamma, field, n / 2);
    CHECK(tilde.gamma == doctest::Approx(-kappa * gamma));
    const double lhs = energy(tilde.g, tilde);
    const double rhs = kappa * kappa * std::pow(r, 2 - d) * energy(u, local);
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-9));
  }
}

TEST_CASE("rescaling: weak norm of the weight") {
  const int n = 256;
  const double q = 2.0, r = 0.5, kappa = 1.5;
  const Point x0 = pt({0.0, 0.0});
  const BernoulliWeight w = BernoulliWeight::point_singularity(x0, 1.0, 2.0 / q);
  const MinimizeProblem p = ball_problem(2, n, w, [](const Point&) { return 1.0; });
  const MinimizeProblem t = rescale_problem(p, x0, r, kappa, 0.0, [](const Point&) { return 1.0; }, n);
  const Region local = make_ball(p.region().grid(), x0, r);
  const double original = weak_lq_norm(sample_weight(w, local), q, local);
  const double rescaled = weak_lq_norm(sample_weight(t.w, t.region()), q, t.region());
  CHECK(rescaled == doctest::Approx(kappa * kappa * std::pow(r, 2.0 - 2.0 / q) * original).epsilon(0.05));
}

TEST_CASE("interpolation reproduces multilinear fields") {
  const Region box = make_box(Grid::cube(2, 0.0, 1.0, 10));
  const ScalarField f = sample(box, [](const Point& x) { return 1.0 + 2.0 * x[0] - x[1] + 3.0 * x[0] * x[1]; });
  for (const Point& x : {pt({0.31, 0.77}), pt({0.5, 0.5}), pt({0.06, 0.93})})
    CHECK(interpolate(f, x) == doctest::Approx(1.0 + 2.0 * x[0] - x[1] + 3.0 * x[0] * x[1]).epsilon(1e-12));
}

TEST_CASE("solver names parse") {
  CHECK(parse_solver_kind("smoothed") == SolverKind::smoothed);
  CHECK(parse_solver_kind("exact") == SolverKind::exact);
  CHECK(parse_solver_kind("both") == SolverKind::both);
  CHECK_THROWS(parse_solver_kind("newton"));
  CHECK(to_string(SolverKind::both) == "both");
}
