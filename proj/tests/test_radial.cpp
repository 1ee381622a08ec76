#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <sstream>

#include "bernoulli/elliptic.hpp"
#include "bernoulli/radial.hpp"

using namespace bernoulli;

namespace {

// Composite Simpson on a smooth integrand.
double simpson(const std::function<double(double)>& f, double a, double b, int n = 2000) {
  const double h = (b - a) / n;
  double s = f(a) + f(b);
  for (int i = 1; i < n; ++i) s += (i % 2 ? 4.0 : 2.0) * f(a + i * h);
  return s * h / 3.0;
}

// int_{r_*}^{r^*} (rho - r_*)^{-1/q} rho^{d-1} drho after rho = r_* + s^{q/(q-1)}.
double shell_oracle(int d, double q) {
  const double rs = std::pow(1.0 / (d - 1.0), 1.0 / (d - 2.0)), ru = 0.5 * (1.0 + rs);
  const double p = q / (q - 1.0);
  const auto f = [&](double s) { return p * std::pow(rs + std::pow(s, p), d - 1); };
  return simpson(f, 0.0, std::pow(ru - rs, 1.0 - 1.0 / q));
}

RadialConfig config(int d, double q, double m) {
  RadialConfig c;
  c.d = d;
  c.q = q;
  c.m = m;
  return c;
}

}  // namespace

TEST_CASE("tau") {
  const RadialConfig c = config(3, 2.0, 0.1);
  CHECK(tau(0.5, c) == doctest::Approx(0.4));
  // tau(r_*) = m (d-1) / r_* = m r_*^{1-d}
  for (int d : {3, 4, 5}) {
    const RadialConfig k = config(d, 2.0, 0.1);
    const double rs = r_star<double>(d);
    CHECK(tau(rs, k) == doctest::Approx(0.1 * (d - 1) / rs).epsilon(1e-12));
    CHECK(tau(rs, k) == doctest::Approx(0.1 * std::pow(rs, 1 - d)).epsilon(1e-12));
  }
  // 0.1 / (0.9999 - 0.9999^2) = 1000.1, 2500 times tau(1/2)
  CHECK(tau(0.999, c) == doctest::Approx(0.1 / (0.999 - 0.999 * 0.999)));
  CHECK(tau(0.9999, c) > 1e3 * tau(0.5, c));
  CHECK_THROWS(tau(0.0, c));
  CHECK_THROWS(tau(1.0, c));
}

TEST_CASE("r_star minimizes tau") {
  CHECK(r_star<double>(3) == doctest::Approx(0.5));
  CHECK(r_star<double>(4) == doctest::Approx(1.0 / std::sqrt(3.0)));
  CHECK_THROWS(r_star<double>(2));
  for (int d : {3, 4, 6}) {
    const RadialConfig c = config(d, 2.0, 0.3);
    const double rs = r_star<double>(d);
    CHECK(tau(rs + 1e-4, c) >= tau(rs, c));
    CHECK(tau(rs - 1e-4, c) >= tau(rs, c));
    double best = 0.0, best_tau = 1e300;
    for (int i = 1; i < 100000; ++i) {
      const double r = i / 100000.0;
      const double t = tau(r, c);
      if (t < best_tau) {
        best_tau = t;
        best = r;
      }
    }
    CHECK(std::abs(best - rs) <= 1e-4);
  }
  CHECK(r_upper<double>(3) == doctest::Approx(0.75));
}

TEST_CASE("radial profile") {
  const RadialConfig c = config(3, 2.0, 0.7);
  CHECK(radial_profile(0.5, 0.5, 3, 0.7) == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(radial_profile(1.0, 0.5, 3, 0.7) == doctest::Approx(0.7));
  CHECK(radial_profile(0.75, 0.5, 3, 0.7) == doctest::Approx(2.0 / 3.0 * 0.7));
  CHECK(radial_profile(0.3, 0.5, 3, 0.7) == 0.0);
  Point x(3);
  x << 0.0, 0.6, 0.0;
  CHECK(radial_profile(x, 0.5, c) == doctest::Approx(radial_profile(0.6, 0.5, 3, 0.7)));
  // the slope at r is tau(r)
  const double h = 1e-7;
  for (double r : {0.3, 0.5, 0.8})
    CHECK((radial_profile(r + h, r, 3, 0.7) - radial_profile(r, r, 3, 0.7)) / h ==
          doctest::Approx(tau(r, c)).epsilon(1e-5));
}

TEST_CASE("radial profile is harmonic off the zero set") {
  const Grid g = Grid::cube(3, -1.0, 1.0, 48);
  const Region shell = make_annulus(g, Point::Zero(3), 0.35, 1.0);
  const RadialConfig c = config(3, 2.0, 1.0);
  const ScalarField u = sample(shell, [&](const Point& x) { return radial_profile(x, 0.3, c); });
  const ScalarField L = apply_operator(CoefficientField::identity(shell), u);
  const Mask layer = shell.closure_layer();
  // the discrete operator carries the O(h^2) consistency error of the Q1 stencil
  double worst = 0.0;
  for (Index cell : shell.cells())
    if (!layer[cell]) worst = std::max(worst, std::abs(L[cell]));
  const double h = g.spacing(0);
  CHECK(worst <= 20.0 * h * h / std::pow(0.35, 4));
  // refining the grid shrinks it at second order
  const Grid fine = Grid::cube(3, -1.0, 1.0, 96);
  const Region fshell = make_annulus(fine, Point::Zero(3), 0.35, 1.0);
  const ScalarField uf = sample(fshell, [&](const Point& x) { return radial_profile(x, 0.3, c); });
  const ScalarField Lf = apply_operator(CoefficientField::identity(fshell), uf);
  const Mask flayer = fshell.closure_layer();
  double fworst = 0.0;
  for (Index cell : fshell.cells())
    if (!flayer[cell]) fworst = std::max(fworst, std::abs(Lf[cell]));
  CHECK(fworst <= 0.3 * worst);
}

TEST_CASE("radial energy") {
  const BernoulliWeight zero = BernoulliWeight::constant(0.0);
  CHECK(radial_energy(0.5, config(3, 2.0, 1.0), zero) == doctest::Approx(4.0 * M_PI).epsilon(1e-12));
  for (double r : {0.2, 0.5, 0.9}) {
    const double c = 1.7;
    const RadialConfig k = config(3, 2.0, 0.4);
    const double closed = radial_energy(r, k, zero) + 4.0 * M_PI * c * (1.0 - r * r * r) / 3.0;
    CHECK(radial_energy(r, k, BernoulliWeight::constant(c)) == doctest::Approx(closed).epsilon(1e-10));
  }
  CHECK(radial_dirichlet_energy(0.5, 3, 1.0) == doctest::Approx(4.0 * M_PI));
  CHECK_THROWS(radial_energy(0.5, config(3, 2.0, 1.0),
                             BernoulliWeight::point_singularity(Point::Constant(3, 0.1), 1.0, 1.0)));
}

TEST_CASE("singular shell integral and threshold") {
  // antiderivative of t^{-1/2} (1/2 + t)^2 at t = 1/4
  const double s = 0.25;
  const double antiderivative = 0.4 * std::pow(s, 2.5) + 2.0 / 3.0 * std::pow(s, 1.5) + 0.5 * std::pow(s, 0.5);
  CHECK(singular_shell_integral(3, 2.0) == doctest::Approx(antiderivative).epsilon(1e-10));
  CHECK(singular_shell_integral(3, 2.0) == doctest::Approx(0.34583333333).epsilon(1e-9));
  CHECK(m_threshold(3, 2.0) == doctest::Approx(std::sqrt((4.0 / 3.0 - 1.0) * antiderivative)).epsilon(1e-10));
  CHECK(m_threshold(3, 2.0) == doctest::Approx(0.3396).epsilon(1e-3));
  for (int d : {3, 4}) {
    for (double q : {1.5, 2.0, 4.0}) {
      CHECK(singular_shell_integral(d, q) == doctest::Approx(shell_oracle(d, q)).epsilon(1e-8));
      const double ru = r_upper<double>(d);
      const double oracle = std::sqrt((std::pow(ru, 2 - d) - 1.0) / (d - 2.0) * shell_oracle(d, q));
      CHECK(m_threshold(d, q) == doctest::Approx(oracle).epsilon(1e-8));
      CHECK(m_threshold(d, q) > 0.0);
      CHECK(std::isfinite(m_threshold(d, q)));
    }
  }
  // frozen values of the quadrature
  CHECK(m_threshold(3, 1.5) == doctest::Approx(0.449986).epsilon(1e-5));
  CHECK(m_threshold(3, 4.0) == doctest::Approx(0.242483).epsilon(1e-5));
}

TEST_CASE("below the threshold the shell radius beats the constant state") {
  for (double q : {1.5, 2.0, 4.0}) {
    RadialConfig c = config(3, q, 0.9 * m_threshold(3, q));
    const BernoulliWeight w = c.weight();
    CHECK(radial_energy(r_upper<double>(3), c, w) < constant_state_energy(c, w));
  }
}

TEST_CASE("singular sphere energies") {
  const RadialConfig c = config(3, 2.0, 0.2);
  const BernoulliWeight w = c.weight();
  const double P = 0.64;
  // J(u = m) = 4 pi (P r_*^3/3 + shell + P (1 - r^{*3})/3)
  const double constant = 4.0 * M_PI * (P * 0.125 / 3.0 + 0.34583333333333 + P * (1.0 - 0.421875) / 3.0);
  CHECK(constant_state_energy(c, w) == doctest::Approx(constant).epsilon(1e-9));
  CHECK(constant_state_energy(c, w) / (4.0 * M_PI) == doctest::Approx(0.495833).epsilon(1e-5));
  // J(u_{3/4}) = Dirichlet + plateau on the outer shell
  const double e75 = 4.0 * M_PI * (0.04 / (4.0 / 3.0 - 1.0) + P * (1.0 - 0.421875) / 3.0);
  CHECK(radial_energy(0.75, c, w) == doctest::Approx(e75).epsilon(1e-9));
  CHECK(radial_energy(0.75, c, w) / (4.0 * M_PI) == doctest::Approx(0.243333).epsilon(1e-5));
  CHECK(radial_energy(0.5, c, w) / (4.0 * M_PI) == doctest::Approx(0.509167).epsilon(1e-5));
}

TEST_CASE("minimize radial") {
  SUBCASE("no weight pushes the zero set to the centre") {
    const RadialOptimum o = minimize_radial(config(3, 2.0, 1.0), BernoulliWeight::constant(0.0));
    CHECK(o.at_boundary);
    CHECK(o.r <= 2e-3);
  }
  SUBCASE("a large constant weight fills the ball") {
    const RadialOptimum o = minimize_radial(config(3, 2.0, 0.01), BernoulliWeight::constant(100.0));
    CHECK(o.r >= 0.95);
  }
  SUBCASE("singular sphere configuration") {
    const RadialConfig c = config(3, 2.0, 0.2);
    const BernoulliWeight w = c.weight();
    const RadialOptimum o = minimize_radial(c, w);
    CHECK(o.energy <= std::min(constant_state_energy(c, w), radial_energy(0.75, c, w)));
    CHECK(o.r == doctest::Approx(0.75).epsilon(1e-4));
    // the optimum is the kink at r^*: 4 pi (m^2 / (4/3 - 1) + P (1 - r^{*3}) / 3)
    CHECK(o.r == 0.75);
    CHECK(o.energy == doctest::Approx(4.0 * M_PI * (0.12 + 0.64 * 0.578125 / 3.0)).epsilon(1e-12));
    REQUIRE(o.scan_r.size() == o.scan_energy.size());
    CHECK(o.scan_r.size() >= 256);
    for (std::size_t i = 0; i < o.scan_r.size(); ++i) {
      CHECK(o.energy <= o.scan_energy[i] + 1e-12);
      CHECK(o.scan_energy[i] == doctest::Approx(radial_energy(o.scan_r[i], c, w)).epsilon(1e-12));
    }
    std::ostringstream csv;
    write_radial_scan(o, csv);
    CHECK(csv.str().rfind("r,energy\n", 0) == 0);
  }
}

TEST_CASE("first-order optimality of the radial energy") {
  // constant weight c: E'(r) = area r^{d-1} (tau(r)^2 - c), so tau(r_opt) = sqrt(c) above r_*
  const RadialConfig k = config(3, 2.0, 0.1);
  const double c = 0.36;
  const RadialOptimum o = minimize_radial(k, BernoulliWeight::constant(c));
  REQUIRE_FALSE(o.at_boundary);
  CHECK(o.r > r_star<double>(3));
  CHECK(tau(o.r, k) == doctest::Approx(std::sqrt(c)).epsilon(1e-4));
  CHECK(tau(o.r - 1e-3, k) - std::sqrt(c) < 0.0);
  CHECK(tau(o.r + 1e-3, k) - std::sqrt(c) > 0.0);
}

TEST_CASE("ordering chain at the shell") {
  for (double m : {0.05, 0.1, 0.2}) {
    const RadialConfig c = config(3, 2.0, m);
    const BernoulliWeight w = c.weight();
    const double rs = r_star<double>(3), ru = r_upper<double>(3);
    const double inner = std::sqrt(w.radial_value(ru - 1e-12));
    CHECK(inner == doctest::Approx(std::sqrt(std::pow(ru - rs, -1.0 / c.q))).epsilon(1e-6));
    CHECK(inner > tau(ru, c));
    CHECK(tau(ru, c) > tau(rs, c));
    CHECK(tau(rs, c) == doctest::Approx(std::sqrt(w.radial_value(0.1))));
  }
  // the printed plateau (m r_*^{d-1})^2 does not match tau(r_*)
  RadialConfig printed = config(3, 2.0, 0.2);
  printed.plateau_rule = PlateauRule::as_printed;
  CHECK(std::sqrt(printed.weight().radial_value(0.1)) != doctest::Approx(tau(0.5, printed)));
}

TEST_CASE("radial config validation") {
  CHECK_THROWS(config(2, 2.0, 0.2).validate());
  CHECK_THROWS(config(3, 1.0, 0.2).validate());
  CHECK_THROWS(config(3, 2.0, 0.0).validate());
  CHECK_NOTHROW(config(3, 2.0, 0.2).validate());
}
