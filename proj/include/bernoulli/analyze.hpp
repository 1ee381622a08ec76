#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "bernoulli/field.hpp"
#include "bernoulli/weights.hpp"

namespace bernoulli {

/// Default positivity threshold for a field: 1e-9 (max u - gamma), or 0 when u <= gamma.
double positivity_threshold(const ScalarField& u, double gamma);

/// Centres of the cells with u > gamma + eta that have a face neighbour in the region with
/// u <= gamma + eta. A negative eta selects positivity_threshold(u, gamma).
std::vector<Point> extract_free_boundary(const ScalarField& u, double gamma, double eta = -1.0);

/// r_max, r_max/2, ... down to max(r_min, 4h).
std::vector<double> dyadic_radii(double r_min, double r_max, const Grid& grid);

struct ExponentFit {
  double alpha = 0.0;
  double residual = 0.0;  // RMS of the log-log fit
  std::vector<double> radii;
  std::vector<double> values;
};

/// Least-squares slope of log values against log radii (at least 4 pairs, positive values).
ExponentFit fit_power_law(std::vector<double> radii, std::vector<double> values);
/// Fit of sup_{B_r(x0)} |u - u(x0)| over dyadic radii; u(x0) is interpolated.
ExponentFit fit_growth_exponent(const ScalarField& u, const Point& x0, double r_min, double r_max);
/// Fit of the ball mean of |u - u(x0)|, the lower envelope of the growth.
ExponentFit fit_lower_exponent(const ScalarField& u, const Point& x0, double r_min, double r_max);

/// Largest centred-difference gradient magnitude over the cells of each shell r/2 <= |x - x0| < r.
std::vector<double> shell_slopes(const ScalarField& u, const Point& x0, const std::vector<double>& radii);

struct DensityRow {
  double r = 0.0;
  double positive = 0.0;  // |{u > gamma} ∩ B_r| / |B_r|^{alpha2/alpha1}
  double zero = 0.0;      // |{u <= gamma} ∩ B_r| / |B_r|^P
  double positive_fraction = 0.0;
  double zero_fraction = 0.0;
};

struct DensityTable {
  std::vector<DensityRow> rows;
  double positive_constant = 0.0;  // min over rows
  double zero_constant = 0.0;
};

/// Cusp exponent (alpha2/alpha1 - 1/q_minus) q_plus/(q_plus - 1) with alpha_i = 1 - d/(2 q).
/// Evaluated wherever the arithmetic is defined (0 < q_minus <= q_plus, q_plus != d/2); exactly 1
/// when q_minus = q_plus. cusp_theorem_applies tells whether the density theorem covers the pair.
double cusp_exponent(double q_minus, double q_plus, int d);
/// Whether the density theorem covers (q_minus, q_plus): q_plus >= q_minus > d/2.
bool cusp_theorem_applies(double q_minus, double q_plus, int d);

/// Ball measures are counted on cells; radii below 4h are dropped.
DensityTable density_ratios(const ScalarField& u, const Point& x0, double gamma, const std::vector<double>& radii,
                            double q_minus, double q_plus, double eta = -1.0);

/// Distance from x to the nearest cell centre outside the region (grid edges count as outside).
double distance_to_complement(const Region& region, const Point& x);
/// Max mean oscillation over n_balls balls centred at random region cells with radii
/// log-uniform in [4h, dist(centre, complement)]. Deterministic in seed.
double bmo_seminorm(const ScalarField& u, const Region& region, int n_balls, std::uint64_t seed);

/// max (u - gamma) / min (u - gamma) over the cells of the ball; throws when the ball meets {u <= gamma}.
double harnack_ratio(const ScalarField& u, const Point& center, double radius, double gamma = 0.0);

/// int_{B_{R/2}} |grad u|^2 / (int_{B_R} u^2 + ||phi||_{weak-L^q(B_R)}) with phi the cell averages.
double caccioppoli_ratio(const ScalarField& u, const BernoulliWeight& w, double q, const Point& center,
                         double radius);

struct PointReport {
  Point x;
  ExponentFit upper;
  ExponentFit lower;
  bool fitted = false;
  std::string note;
};

struct FreeBoundaryReport {
  double gamma = 0.0;
  std::vector<Point> points;
  std::vector<PointReport> per_point;
  std::vector<DensityTable> density;  // parallel to per_point
  double bmo = 0.0;
  double l2 = 0.0;
};

struct ReportSettings {
  std::vector<Point> exponent_points;  // empty: every free boundary point, subsampled to max_points
  int max_points = 16;
  double r_min = 0.0;
  double r_max = 0.25;
  std::vector<double> density_radii;  // empty: dyadic radii of the fit
  double q_minus = 0.0;               // 0: the weight's exponent
  double q_plus = 0.0;
  int bmo_balls = 32;
  std::uint64_t seed = 0;
};

FreeBoundaryReport analyze_free_boundary(const ScalarField& u, double gamma, const BernoulliWeight& w,
                                         const ReportSettings& s);
void write_report_json(const FreeBoundaryReport& r, std::ostream& out);
/// One row per point-radius pair.
void write_report_csv(const FreeBoundaryReport& r, std::ostream& out);

}  // namespace bernoulli
