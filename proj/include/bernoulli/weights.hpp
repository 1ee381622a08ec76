#pragma once

#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "bernoulli/field.hpp"

namespace bernoulli {

enum class WeightKind { constant, point_singularity, manifold_distance, section7_radial, one_sided, custom_table };
enum class PlateauRule { tau_consistent, as_printed };

std::string to_string(WeightKind kind);
std::string to_string(PlateauRule rule);
PlateauRule parse_plateau_rule(const std::string& s);

/// Circular cone with vertex at the measurement centre. A half angle of pi/2 is a half-space.
struct Cone {
  Point axis;
  double half_angle = 1.5707963267948966;

  bool contains(const Point& offset) const;
};

/// Nonnegative Bernoulli weight phi with analytic point values and exact cell averages.
///
/// Every kind may be composed with an affine pull-back x -> origin + scale * x and an overall
/// factor, which is how rescaled problems carry kappa^2 r^2 phi(x0 + r x).
class BernoulliWeight {
 public:
  struct Constant {
    double value;
  };
  /// base + amplitude |x - center|^{-exponent}
  struct PointSingularity {
    Point center;
    double amplitude;
    double exponent;
    double base;
  };
  /// amplitude dist(x, G)^{-exponent}, G = {x : x_i = anchor_i for every i in normal_axes}.
  struct ManifoldDistance {
    Point anchor;
    std::vector<int> normal_axes;
    double amplitude;
    double exponent;
  };
  /// The radial weight with a singular shell: plateau inside r_*, (|x| - r_*)^{-1/q} on
  /// [r_*, r^*), plateau on [r^*, 1] (and beyond).
  struct Section7 {
    int d;
    double q;
    double m;
    PlateauRule rule;
    double r_star;
    double r_upper;
    double plateau;
  };
  /// base + amplitude s^{-exponent} where s = x_axis - anchor_axis > 0, base elsewhere.
  struct OneSided {
    Point anchor;
    int axis;
    double base;
    double amplitude;
    double exponent;
  };
  /// Piecewise-constant table on its own grid (zero outside it).
  struct Table {
    std::shared_ptr<const ScalarField> field;
  };
  using Spec = std::variant<Constant, PointSingularity, ManifoldDistance, Section7, OneSided, Table>;

  static BernoulliWeight constant(double c);
  static BernoulliWeight point_singularity(const Point& center, double amplitude, double exponent,
                                           double base = 0.0);
  static BernoulliWeight manifold_distance(const Point& anchor, std::vector<int> normal_axes,
                                           double amplitude, double exponent);
  static BernoulliWeight section7(int d, double q, double m, PlateauRule rule = PlateauRule::tau_consistent);
  static BernoulliWeight one_sided(const Point& anchor, int axis, double base, double amplitude,
                                   double exponent);
  static BernoulliWeight table(ScalarField values);

  /// factor * phi(origin + scale * x).
  BernoulliWeight rescaled(const Point& origin, double scale, double factor) const;

  WeightKind kind() const;
  const Spec& spec() const { return spec_; }
  double factor() const { return factor_; }
  double scale() const { return scale_; }

  /// Point value, +inf on the singular set.
  double operator()(const Point& x) const;
  /// Mean of phi over the box [lower, upper]; +inf iff the integral diverges.
  double box_average(const Point& lower, const Point& upper) const;
  double cell_average(const Grid& grid, Index cell) const;

  /// True when phi(x) depends on |x| only (no pull-back shift).
  bool radial_about_origin() const;
  /// phi as a function of rho = |x| for radial weights.
  double radial_value(double rho) const;

  /// Largest exponent q for which the weight lies in weak-L^q near its singular set
  /// (infinity for bounded weights).
  double weak_exponent(int d) const;

 private:
  explicit BernoulliWeight(Spec spec) : spec_(std::move(spec)) {}
  double raw_value(const Point& y) const;
  double raw_box_average(const Point& lower, const Point& upper) const;

  Spec spec_;
  Point origin_;  // empty: identity pull-back
  double scale_ = 1.0;
  double factor_ = 1.0;
};

/// Per-cell averages over the region (entries outside the mask are zero).
Eigen::VectorXd cell_averages(const BernoulliWeight& w, const Region& region);
/// Point values at cell centres over the region.
ScalarField sample_weight(const BernoulliWeight& w, const Region& region);

/// Cell-counted |{phi > t} ∩ B_r(x0) (∩ cone)| using centre values.
double superlevel_measure(const BernoulliWeight& w, const Grid& grid, double t, const Point& x0, double r,
                          const std::optional<Cone>& cone = std::nullopt);
/// Cell-counted |B_r(x0) (∩ cone)|.
double ball_measure(const Grid& grid, const Point& x0, double r, const std::optional<Cone>& cone = std::nullopt);

struct SuperlevelProfile {
  Point center;
  std::vector<double> radii;
  std::vector<double> thresholds;
  Eigen::MatrixXd measures;  // radii x thresholds
  std::optional<Cone> cone;
};

SuperlevelProfile superlevel_profile(const BernoulliWeight& w, const Grid& grid, const Point& x0,
                                     std::vector<double> radii, std::vector<double> thresholds,
                                     const std::optional<Cone>& cone = std::nullopt);

struct GrowthFit {
  double c0 = 0.0;  // +inf when every sample saturates the ball branch
  bool pass = false;
};

/// Largest c0 with |{phi > t} ∩ B_r| >= min(c0 r^sigma t^{-p}, |B_r|) on the sampled lattice.
GrowthFit verify_growth_hypothesis(const BernoulliWeight& w, const Grid& grid, const Point& x0, double p,
                                   double sigma, const std::vector<double>& radii,
                                   const std::vector<double>& thresholds,
                                   const std::optional<Cone>& cone = std::nullopt);

}  // namespace bernoulli
