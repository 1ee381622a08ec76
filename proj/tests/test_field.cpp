#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>
#include <sstream>

#include <Eigen/Eigenvalues>

#include "bernoulli/field.hpp"

using namespace bernoulli;

namespace {

Point pt(std::initializer_list<double> v) {
  Point p(static_cast<Index>(v.size()));
  Index i = 0;
  for (double x : v) p[i++] = x;
  return p;
}

}  // namespace

TEST_CASE("unit ball and sphere constants") {
  CHECK(vol_ball(1) == doctest::Approx(2.0));
  CHECK(vol_ball(2) == doctest::Approx(M_PI));
  CHECK(vol_ball(3) == doctest::Approx(4.0 * M_PI / 3.0));
  CHECK(area_sphere(2) == doctest::Approx(2.0 * M_PI));
  CHECK(area_sphere(3) == doctest::Approx(4.0 * M_PI));
  for (int d = 1; d <= 4; ++d) CHECK(area_sphere(d) == doctest::Approx(d * vol_ball(d)));
}

TEST_CASE("grid indexing round trips") {
  const Grid g = Grid::cube(3, -1.0, 1.0, 5);
  CHECK(g.cell_count() == 125);
  CHECK(g.cell_volume() == doctest::Approx(std::pow(0.4, 3)));
  for (Index c = 0; c < g.cell_count(); ++c) {
    CHECK(g.ravel(g.unravel(c)) == c);
    CHECK(g.locate(g.center(c)) == c);
  }
  CHECK(g.neighbor(0, 0, -1) == -1);
  CHECK(g.neighbor(0, 2, 1) == 1);
  CHECK(g.locate(pt({2.0, 0.0, 0.0})) == -1);
  CHECK_THROWS(Grid::cube(5, 0.0, 1.0, 4));
  CHECK_THROWS(Grid::cube(2, 0.0, 1.0, 1));
}

TEST_CASE("box region fills the grid") {
  const Region r = make_box(Grid::cube(2, 0.0, 1.0, 16));
  CHECK(r.count() == 256);
  CHECK(r.measure() == doctest::Approx(1.0));
}

TEST_CASE("ball region cell fraction") {
  const Grid g = Grid::cube(2, -1.0, 1.0, 16);
  const Region r = make_ball(g, pt({0.0, 0.0}), 1.0);
  // oracle: count cell centres inside the unit disk directly
  int inside = 0;
  for (int i = 0; i < 16; ++i)
    for (int j = 0; j < 16; ++j) {
      const double x = -1.0 + (i + 0.5) / 8.0, y = -1.0 + (j + 0.5) / 8.0;
      inside += x * x + y * y < 1.0;
    }
  CHECK(r.count() == inside);
  const double frac = static_cast<double>(r.count()) / 256.0;
  CHECK(frac >= 0.70);
  CHECK(frac <= 0.83);
}

TEST_CASE("degenerate ball is rejected") {
  const Grid g = Grid::cube(2, -1.0, 1.0, 16);
  CHECK_THROWS_WITH(make_ball(g, pt({0.0, 0.0}), 0.0), "degenerate region");
  CHECK_THROWS(make_annulus(g, pt({0.0, 0.0}), 0.8, 0.5));
}

TEST_CASE("closure layer contains the boundary layer") {
  const Grid g = Grid::cube(2, -1.0, 1.0, 32);
  const Region r = make_ball(g, pt({0.0, 0.0}), 0.9);
  const Mask b = r.boundary_layer(), c = r.closure_layer();
  for (Index i = 0; i < g.cell_count(); ++i) {
    if (b[i]) CHECK(c[i]);
    if (c[i]) CHECK(r.contains(i));
  }
}

TEST_CASE("l2 norm") {
  const Region box = make_box(Grid::cube(2, 0.0, 1.0, 16));
  CHECK(l2_norm(ScalarField(box, 0.0), box) == 0.0);
  CHECK(l2_norm(ScalarField(box, 1.0), box) == doctest::Approx(1.0).epsilon(1e-14));
  const Region line = make_box(Grid::cube(1, 0.0, 1.0, 1024));
  const ScalarField x = sample(line, [](const Point& p) { return p[0]; });
  CHECK(std::abs(l2_norm(x, line) - 1.0 / std::sqrt(3.0)) < 1e-3);
}

TEST_CASE("l2 norm is homogeneous and subadditive") {
  const Region r = make_ball(Grid::cube(2, -1.0, 1.0, 24), pt({0.0, 0.0}), 1.0);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  for (int k = 0; k < 20; ++k) {
    ScalarField f(r), g(r);
    for (Index i = 0; i < f.values.size(); ++i) {
      f[i] = U(rng);
      g[i] = U(rng);
    }
    const double a = U(rng) * 5.0;
    ScalarField af(r, Eigen::VectorXd(a * f.values)), s(r, Eigen::VectorXd(f.values + g.values));
    CHECK(std::abs(l2_norm(af, r) - std::abs(a) * l2_norm(f, r)) <= 1e-12 * (1.0 + l2_norm(af, r)));
    CHECK(l2_norm(s, r) <= l2_norm(f, r) + l2_norm(g, r) + 1e-12);
  }
}

TEST_CASE("weak Lq norm of a constant") {
  const Grid g = Grid::cube(2, -1.0, 1.0, 32);
  const Region r = make_ball(g, pt({0.0, 0.0}), 0.7);
  for (double q : {0.5, 1.0, 2.0, 3.5})
    CHECK(weak_lq_norm(ScalarField(r, 2.5), q, r) == doctest::Approx(2.5 * std::pow(r.measure(), 1.0 / q)));
}

TEST_CASE("weak L2 norm of 1/|x| on the unit disk") {
  const Grid g = Grid::cube(2, -1.0, 1.0, 512);
  const Region disk = make_ball(g, pt({0.0, 0.0}), 1.0);
  const ScalarField f = sample(disk, [](const Point& x) { return 1.0 / x.norm(); });
  // the four cells around the origin carry the largest value sqrt(2)/h on a set of measure 4h^2
  CHECK(weak_lq_norm(f, 2.0, disk) == doctest::Approx(2.0 * std::sqrt(2.0)).epsilon(1e-9));
  // away from the singular cells {f > t} is the annulus rho < |x| < min(1/t, 1): the supremum is sqrt(pi)
  const Region annulus = make_annulus(g, pt({0.0, 0.0}), 0.05, 1.0);
  CHECK(weak_lq_norm(f, 2.0, annulus) == doctest::Approx(std::sqrt(M_PI)).epsilon(0.05));
}

TEST_CASE("weak Lq norm: monotone in the region and below the strong norm") {
  const Grid g = Grid::cube(2, -1.0, 1.0, 48);
  const Region big = make_ball(g, pt({0.0, 0.0}), 1.0);
  const Region small = make_ball(g, pt({0.2, 0.1}), 0.4);
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> U(0.0, 3.0);
  for (int k = 0; k < 10; ++k) {
    ScalarField f(big);
    for (Index i = 0; i < f.values.size(); ++i) f[i] = U(rng);
    for (double q : {1.0, 2.0, 4.0}) {
      CHECK(weak_lq_norm(f, q, small) <= weak_lq_norm(f, q, big));
      double strong = 0.0;
      for (Index i : big.cells()) strong += std::pow(f[i], q) * g.cell_volume();
      CHECK(weak_lq_norm(f, q, big) <= std::pow(strong, 1.0 / q) * (1.0 + 1e-12));
    }
  }
}

TEST_CASE("ball mean oscillation") {
  const Grid g = Grid::cube(2, -1.0, 1.0, 256);
  const Region box = make_box(g);
  CHECK(ball_mean_oscillation(ScalarField(box, 4.0), pt({0.0, 0.0}), 0.5) == doctest::Approx(0.0));
  const ScalarField x1 = sample(box, [](const Point& x) { return x[0]; });
  // mean of |x_1| over a disk of radius r: 4 r / (3 pi)
  const double r = 0.6;
  CHECK(ball_mean_oscillation(x1, pt({0.0, 0.0}), r) == doctest::Approx(4.0 * r / (3.0 * M_PI)).epsilon(0.05));
  const ScalarField half = sample(box, [](const Point& x) { return x[0] > 0.0 ? 1.0 : 0.0; });
  CHECK(ball_mean_oscillation(half, pt({0.0, 0.0}), r) == doctest::Approx(0.5).epsilon(0.02));
  CHECK_THROWS(ball_mean_oscillation(x1, pt({0.0, 0.0}), 1e-4));
}

TEST_CASE("coefficient fields certify their bounds") {
  const Region r = make_box(Grid::cube(2, 0.0, 1.0, 4));
  SmallMatrix m(2, 2);
  m << 2.0, 0.5, 0.5, 1.0;
  const double lo = (3.0 - std::sqrt(2.0)) / 2.0, hi = (3.0 + std::sqrt(2.0)) / 2.0;
  CHECK_NOTHROW(CoefficientField::constant(r, m, lo, hi));
  CHECK_THROWS(CoefficientField::constant(r, m, lo + 1e-6, hi));
  CHECK_THROWS(CoefficientField::constant(r, m, lo, hi - 1e-6));
  SmallMatrix skew(2, 2);
  skew << 1.0, 0.2, 0.0, 1.0;
  CHECK_THROWS(CoefficientField::constant(r, skew, 0.5, 2.0));
  const CoefficientField A = CoefficientField::random_symmetric(r, 0.5, 2.0, 11);
  for (Index c = 0; c < 16; ++c) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Eigen::MatrixXd(A.matrix(c)));
    CHECK(es.eigenvalues().minCoeff() >= 0.5 - 1e-9);
    CHECK(es.eigenvalues().maxCoeff() <= 2.0 + 1e-9);
  }
}

TEST_CASE("binary and CSV output round trip") {
  const Grid g = Grid::cube(3, -1.0, 1.0, 6);
  const Region r = make_ball(g, pt({0.0, 0.0, 0.0}), 0.9);
  const ScalarField f = sample(r, [](const Point& x) { return std::sin(3.0 * x[0]) + x[1] * x[2] / 3.0; });
  std::stringstream bin;
  write_binary(f, bin);
  const ScalarField h = read_binary(bin);
  CHECK(h.grid() == g);
  CHECK(h.region.count() == r.count());
  for (Index c : r.cells()) CHECK(h[c] == f[c]);
  for (double v : {0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23}) CHECK(std::stod(format_number(v)) == v);
  std::ostringstream csv;
  write_csv(f, csv);
  std::istringstream lines(csv.str());
  std::string line;
  int rows = -1;  // header
  while (std::getline(lines, line)) ++rows;
  CHECK(rows == r.count());
}
