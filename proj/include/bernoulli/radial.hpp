#pragma once

#include <cmath>
#include <iosfwd>
#include <stdexcept>
#include <vector>

#include "bernoulli/field.hpp"
#include "bernoulli/weights.hpp"

namespace bernoulli {

/// Radially symmetric competitors in the unit ball with boundary value m.
struct RadialConfig {
  int d = 3;
  double q = 2.0;
  double m = 0.2;
  PlateauRule plateau_rule = PlateauRule::tau_consistent;

  void validate() const;
  /// The singular-shell weight built from d, q, m and the plateau rule.
  BernoulliWeight weight() const;
};

/// Minimizer of tau on (0,1): (1/(d-1))^{1/(d-2)}.
template <class Scalar>
Scalar r_star(int d) {
  if (d < 3) throw std::invalid_argument("r_star needs d >= 3");
  using std::pow;
  return pow(Scalar(1) / Scalar(d - 1), Scalar(1) / Scalar(d - 2));
}

/// Outer end of the singular shell, the midpoint of r_* and 1.
template <class Scalar>
Scalar r_upper(int d) {
  return (r_star<Scalar>(d) + Scalar(1)) / Scalar(2);
}

/// Slope of u_r at |x| = r: m (d-2) / (r - r^{d-1}).
template <class Scalar>
Scalar tau(Scalar r, int d, Scalar m) {
  if (!(r > Scalar(0) && r < Scalar(1))) throw std::invalid_argument("tau needs r in (0,1)");
  using std::pow;
  return m * Scalar(d - 2) / (r - pow(r, d - 1));
}

/// u_r(rho): 0 for rho < r, m (r^{2-d} - rho^{2-d}) / (r^{2-d} - 1) beyond.
template <class Scalar>
Scalar radial_profile(Scalar rho, Scalar r, int d, Scalar m) {
  if (!(r > Scalar(0) && r < Scalar(1))) throw std::invalid_argument("radial profile needs r in (0,1)");
  if (rho < r) return Scalar(0);
  using std::pow;
  const Scalar a = pow(r, 2 - d);
  return m * (a - pow(rho, 2 - d)) / (a - Scalar(1));
}

/// Dirichlet energy of u_r over the ball: area(S^{d-1}) m^2 (d-2) / (r^{2-d} - 1).
template <class Scalar>
Scalar radial_dirichlet_energy(Scalar r, int d, Scalar m) {
  using std::pow;
  return Scalar(area_sphere(d)) * m * m * Scalar(d - 2) / (pow(r, 2 - d) - Scalar(1));
}

double tau(double r, const RadialConfig& c);
/// u_r as a function on R^d.
double radial_profile(const Point& x, double r, const RadialConfig& c);

/// area(S^{d-1}) int_a^b phi(rho) rho^{d-1} drho for a weight radial about the origin.
double radial_weight_integral(const BernoulliWeight& w, int d, double a, double b);
/// J(u_r) = Dirichlet term + weight integral over r < |x| < 1.
double radial_energy(double r, const RadialConfig& c, const BernoulliWeight& w);
/// J(u = m) = integral of phi over B_1.
double constant_state_energy(const RadialConfig& c, const BernoulliWeight& w);

/// int_{r_*}^{r^*} (rho - r_*)^{-1/q} rho^{d-1} drho.
double singular_shell_integral(int d, double q);
/// sqrt(((r^*)^{2-d} - 1)/(d-2) * singular_shell_integral(d, q)).
double m_threshold(int d, double q);

struct RadialSearch {
  double h = 1e-3;      // search interval (h, 1-h)
  int scan_points = 256;
  double tolerance = 1e-6;
};

struct RadialOptimum {
  double r = 0.0;
  double energy = 0.0;
  bool at_boundary = false;  // optimum on the edge of the search interval
  std::vector<double> scan_r;
  std::vector<double> scan_energy;
};

/// Coarse scan plus golden-section refinement around every local minimum of the scan.
RadialOptimum minimize_radial(const RadialConfig& c, const BernoulliWeight& w, const RadialSearch& s = {});

/// Columns r,energy with 17 significant digits.
void write_radial_scan(const RadialOptimum& opt, std::ostream& out);

}  // namespace bernoulli
