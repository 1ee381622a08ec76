#include "bernoulli/weights.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <random>
#include <stdexcept>

#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>

namespace bernoulli {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// 4-point Gauss-Legendre on [-1, 1].
constexpr std::array<double, 4> kGaussX = {-0.8611363115940526, -0.3399810435848563, 0.3399810435848563,
                                           0.8611363115940526};
constexpr std::array<double, 4> kGaussW = {0.3478548451374538, 0.6521451548625461, 0.6521451548625461,
                                           0.3478548451374538};

using BoxFn = std::function<double(const Point&)>;

double gauss_box(const BoxFn& f, const Point& lo, const Point& hi) {
  const int k = static_cast<int>(lo.size());
  if (k == 0) return f(lo);
  std::array<int, kMaxDim> idx{};
  Point x(k);
  double sum = 0.0;
  while (true) {
    double w = 1.0;
    for (int i = 0; i < k; ++i) {
      const double half = 0.5 * (hi[i] - lo[i]);
      x[i] = lo[i] + half * (1.0 + kGaussX[idx[i]]);
      w *= half * kGaussW[idx[i]];
    }
    sum += w * f(x);
    int a = k - 1;
    while (a >= 0 && ++idx[a] == 4) idx[a--] = 0;
    if (a < 0) break;
  }
  return sum;
}

// Adaptive tensor Gauss quadrature by bisection of every axis.
double adaptive_box(const BoxFn& f, const Point& lo, const Point& hi, double coarse, double tol, int depth) {
  const int k = static_cast<int>(lo.size());
  const int children = 1 << k;
  std::vector<double> parts(children);
  std::vector<Point> clo(children, Point(k)), chi(children, Point(k));
  double fine = 0.0;
  for (int b = 0; b < children; ++b) {
    for (int i = 0; i < k; ++i) {
      const double mid = 0.5 * (lo[i] + hi[i]);
      const bool upper = (b >> i) & 1;
      clo[b][i] = upper ? mid : lo[i];
      chi[b][i] = upper ? hi[i] : mid;
    }
    parts[b] = gauss_box(f, clo[b], chi[b]);
    fine += parts[b];
  }
  if (std::abs(fine - coarse) <= tol || depth == 0) return fine;
  double sum = 0.0;
  for (int b = 0; b < children; ++b)
    sum += adaptive_box(f, clo[b], chi[b], parts[b], 0.5 * tol, depth - 1);
  return sum;
}

double integrate_box(const BoxFn& f, const Point& lo, const Point& hi, double tol) {
  const int k = static_cast<int>(lo.size());
  if (k == 0) return f(lo);
  const int depth = k == 1 ? 30 : (k == 2 ? 8 : 5);
  return adaptive_box(f, lo, hi, gauss_box(f, lo, hi), tol, depth);
}

// 1D quadrature over [a, b] split at the given interior points: adaptive Gauss-Kronrod, or
// a fixed 10-point Gauss rule per piece when depth is 0.
double integrate_pieces(const std::function<double(double)>& f, double a, double b, std::vector<double> cuts,
                        double tol, int depth) {
  cuts.push_back(a);
  cuts.push_back(b);
  std::sort(cuts.begin(), cuts.end());
  double sum = 0.0;
  for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
    const double lo = std::max(cuts[i], a), hi = std::min(cuts[i + 1], b);
    if (!(hi > lo)) continue;
    if (depth == 0) {
      sum += boost::math::quadrature::gauss<double, 10>::integrate(f, lo, hi);
    } else {
      sum += boost::math::quadrature::gauss_kronrod<double, 15>::integrate(f, lo, hi, depth, tol);
    }
  }
  return sum;
}

// Points of (a, b) where c + z^2 crosses one of the squared radii.
std::vector<double> radius_crossings(double c, const std::vector<double>& radii, double a, double b) {
  std::vector<double> out;
  for (double r : radii) {
    const double z2 = r * r - c;
    if (z2 <= 0.0) continue;
    for (double z : {-std::sqrt(z2), std::sqrt(z2)})
      if (z > a && z < b) out.push_back(z);
  }
  return out;
}

// ∫ over the face box of G(sqrt(yn^2 + |z|^2)) dz: nested 1D with exact splits at the kink
// radii for faces of dimension <= 2 (fixed rules on the smooth pieces of 2D faces), adaptive
// tensor Gauss otherwise.
double face_integral(const std::function<double(double)>& G, double yn, const Point& flo, const Point& fhi,
                     const std::vector<double>& kinks) {
  const int m = static_cast<int>(flo.size());
  const double c = yn * yn;
  if (m == 1) {
    auto f = [&](double z) { return G(std::sqrt(c + z * z)); };
    std::vector<double> cuts = radius_crossings(c, kinks, flo[0], fhi[0]);
    if (flo[0] < 0.0 && fhi[0] > 0.0) cuts.push_back(0.0);
    return integrate_pieces(f, flo[0], fhi[0], cuts, 1e-10, 10);
  }
  if (m == 2) {
    // the foot of the origin is a kink of the inner integral as well
    std::vector<double> outer_cuts = radius_crossings(c, kinks, flo[0], fhi[0]);
    if (flo[0] < 0.0 && fhi[0] > 0.0) outer_cuts.push_back(0.0);
    auto outer = [&](double z1) {
      const double c1 = c + z1 * z1;
      std::vector<double> inner_cuts = radius_crossings(c1, kinks, flo[1], fhi[1]);
      if (flo[1] < 0.0 && fhi[1] > 0.0) inner_cuts.push_back(0.0);
      auto f = [&](double z2) { return G(std::sqrt(c1 + z2 * z2)); };
      return integrate_pieces(f, flo[1], fhi[1], inner_cuts, 0.0, 0);
    };
    return integrate_pieces(outer, flo[0], fhi[0], outer_cuts, 0.0, 0);
  }
  auto f = [&](const Point& z) { return G(std::sqrt(c + z.squaredNorm())); };
  const double coarse = gauss_box(f, flo, fhi);
  return integrate_box(f, flo, fhi, 1e-8 * std::abs(coarse));
}

// Integral of a radial function over the box [lo, hi] in R^k (coordinates relative to the
// radial centre), via div(y G(|y|)) = f(|y|) with G(rho) = rho^{-k} int_0^rho s^{k-1} f(s) ds.
double radial_box_integral(const std::function<double(double)>& G, const Point& lo, const Point& hi,
                           const std::vector<double>& kinks) {
  const int k = static_cast<int>(lo.size());
  if (k == 1) {
    auto flux = [&](double y) { return y == 0.0 ? 0.0 : G(std::abs(y)) * y; };
    return flux(hi[0]) - flux(lo[0]);
  }
  double total = 0.0;
  for (int axis = 0; axis < k; ++axis) {
    Point flo(k - 1), fhi(k - 1);
    for (int i = 0, j = 0; i < k; ++i) {
      if (i == axis) continue;
      flo[j] = lo[i];
      fhi[j] = hi[i];
      ++j;
    }
    for (int side = 0; side < 2; ++side) {
      const double yn = side == 0 ? lo[axis] : hi[axis];
      if (yn == 0.0) continue;
      const double value = yn * face_integral(G, yn, flo, fhi, kinks);
      total += side == 0 ? -value : value;
    }
  }
  return total;
}

// Distance range from the origin to the points of the box.
std::pair<double, double> box_distance_range(const Point& lo, const Point& hi) {
  double near = 0.0, far = 0.0;
  for (int i = 0; i < lo.size(); ++i) {
    const double a = std::abs(lo[i]), b = std::abs(hi[i]);
    if (lo[i] > 0.0 || hi[i] < 0.0) near += std::min(a, b) * std::min(a, b);
    far += std::max(a, b) * std::max(a, b);
  }
  return {std::sqrt(near), std::sqrt(far)};
}

// Integral of a radial function phi(|y|) over the box. Boxes well separated from the origin
// and from every radius where phi is not smooth use tensor Gauss on the box itself; the
// others go through the face-flux form.
double radial_integral(const std::function<double(double)>& phi, const std::function<double(double)>& G,
                       const std::vector<double>& kinks, const Point& lo, const Point& hi) {
  const auto [near, far] = box_distance_range(lo, hi);
  const double diam = (hi - lo).norm();
  bool separated = near > diam;
  for (double r : kinks) separated = separated && (r <= near - diam || r >= far + diam);
  if (!separated) return radial_box_integral(G, lo, hi, kinks);
  auto f = [&](const Point& y) { return phi(y.norm()); };
  const double coarse = gauss_box(f, lo, hi);
  return adaptive_box(f, lo, hi, coarse, 1e-10 * std::abs(coarse), lo.size() == 1 ? 20 : 3);
}

bool box_contains_origin(const Point& lo, const Point& hi) {
  for (int i = 0; i < lo.size(); ++i)
    if (lo[i] > 0.0 || hi[i] < 0.0) return false;
  return true;
}

double box_volume(const Point& lo, const Point& hi) {
  double v = 1.0;
  for (int i = 0; i < lo.size(); ++i) v *= hi[i] - lo[i];
  return v;
}

// Integral of amplitude |y|^{-a} over a box in R^k relative to the singular point.
double power_box_integral(const Point& lo, const Point& hi, double amplitude, double a) {
  const int k = static_cast<int>(lo.size());
  if (amplitude == 0.0) return 0.0;
  if (a <= 0.0 && a == 0.0) return amplitude * box_volume(lo, hi);
  if (a >= k && box_contains_origin(lo, hi)) return kInf;
  std::function<double(double)> G;
  if (a == k) {
    G = [=](double rho) { return amplitude * std::pow(rho, -k) * std::log(rho); };
  } else {
    G = [=](double rho) { return amplitude * std::pow(rho, -a) / (k - a); };
  }
  auto phi = [=](double rho) { return amplitude * std::pow(rho, -a); };
  return radial_integral(phi, G, {}, lo, hi);
}

double binomial(int n, int k) {
  double b = 1.0;
  for (int i = 1; i <= k; ++i) b = b * (n - k + i) / i;
  return b;
}

// int_{r_*}^{rho} (s - r_*)^{-1/q} s^{d-1} ds in closed form.
double section7_shell_moment(const BernoulliWeight::Section7& s, double rho) {
  const double t = rho - s.r_star;
  if (t <= 0.0) return 0.0;
  double sum = 0.0;
  for (int k = 0; k <= s.d - 1; ++k) {
    const double e = k + 1.0 - 1.0 / s.q;
    sum += binomial(s.d - 1, k) * std::pow(s.r_star, s.d - 1 - k) * std::pow(t, e) / e;
  }
  return sum;
}

// int_0^rho s^{d-1} phi(s) ds.
double section7_moment(const BernoulliWeight::Section7& s, double rho) {
  const int d = s.d;
  if (rho <= s.r_star) return s.plateau * std::pow(rho, d) / d;
  const double inner = s.plateau * std::pow(s.r_star, d) / d;
  if (rho < s.r_upper) return inner + section7_shell_moment(s, rho);
  return inner + section7_shell_moment(s, s.r_upper) +
         s.plateau * (std::pow(rho, d) - std::pow(s.r_upper, d)) / d;
}

double section7_value(const BernoulliWeight::Section7& s, double rho) {
  if (rho < s.r_star || rho >= s.r_upper) return s.plateau;
  if (rho == s.r_star) return kInf;
  return std::pow(rho - s.r_star, -1.0 / s.q);
}

}  // namespace

std::string to_string(WeightKind kind) {
  switch (kind) {
    case WeightKind::constant: return "constant";
    case WeightKind::point_singularity: return "point_singularity";
    case WeightKind::manifold_distance: return "manifold_distance";
    case WeightKind::section7_radial: return "section7_radial";
    case WeightKind::one_sided: return "one_sided";
    case WeightKind::custom_table: return "custom_table";
  }
  return "unknown";
}

std::string to_string(PlateauRule rule) {
  return rule == PlateauRule::tau_consistent ? "tau_consistent" : "as_printed";
}

PlateauRule parse_plateau_rule(const std::string& s) {
  if (s == "tau_consistent" || s == "tau-consistent") return PlateauRule::tau_consistent;
  if (s == "as_printed" || s == "as-printed") return PlateauRule::as_printed;
  throw std::invalid_argument("unknown plateau rule: " + s);
}

bool Cone::contains(const Point& offset) const {
  const double n = offset.norm();
  if (n == 0.0) return true;
  const double c = offset.dot(axis) / (n * axis.norm());
  return c >= std::cos(half_angle) - 1e-12;
}

// ---------------------------------------------------------------------------
// Construction

BernoulliWeight BernoulliWeight::constant(double c) {
  if (!(c >= 0.0) || std::isinf(c)) throw std::invalid_argument("constant weight must be finite and >= 0");
  return BernoulliWeight(Constant{c});
}

BernoulliWeight BernoulliWeight::point_singularity(const Point& center, double amplitude, double exponent,
                                                   double base) {
  if (amplitude < 0.0 || base < 0.0 || exponent < 0.0)
    throw std::invalid_argument("point singularity parameters must be nonnegative");
  return BernoulliWeight(PointSingularity{center, amplitude, exponent, base});
}

BernoulliWeight BernoulliWeight::manifold_distance(const Point& anchor, std::vector<int> normal_axes,
                                                   double amplitude, double exponent) {
  if (normal_axes.empty()) throw std::invalid_argument("manifold needs at least one normal axis");
  for (int a : normal_axes)
    if (a < 0 || a >= anchor.size()) throw std::invalid_argument("normal axis out of range");
  if (amplitude < 0.0 || exponent < 0.0) throw std::invalid_argument("manifold weight must be nonnegative");
  return BernoulliWeight(ManifoldDistance{anchor, std::move(normal_axes), amplitude, exponent});
}

BernoulliWeight BernoulliWeight::section7(int d, double q, double m, PlateauRule rule) {
  if (d < 3) throw std::invalid_argument("section7 weight needs d >= 3");
  if (!(q > 1.0) || !(m > 0.0)) throw std::invalid_argument("section7 weight needs q > 1 and m > 0");
  Section7 s{d, q, m, rule, 0.0, 0.0, 0.0};
  s.r_star = std::pow(1.0 / (d - 1.0), 1.0 / (d - 2.0));
  s.r_upper = 0.5 * (1.0 + s.r_star);
  const double root = rule == PlateauRule::tau_consistent ? m * std::pow(s.r_star, 1.0 - d)
                                                          : m * std::pow(s.r_star, d - 1.0);
  s.plateau = root * root;
  return BernoulliWeight(s);
}

BernoulliWeight BernoulliWeight::one_sided(const Point& anchor, int axis, double base, double amplitude,
                                           double exponent) {
  if (axis < 0 || axis >= anchor.size()) throw std::invalid_argument("one-sided axis out of range");
  if (base < 0.0 || amplitude < 0.0 || exponent < 0.0)
    throw std::invalid_argument("one-sided weight must be nonnegative");
  return BernoulliWeight(OneSided{anchor, axis, base, amplitude, exponent});
}

BernoulliWeight BernoulliWeight::table(ScalarField values) {
  for (Index c = 0; c < values.grid().cell_count(); ++c)
    if (values.region.contains(c) && !(values.values[c] >= 0.0))
      throw std::invalid_argument("table weight must be nonnegative");
  return BernoulliWeight(Table{std::make_shared<const ScalarField>(std::move(values))});
}

BernoulliWeight BernoulliWeight::rescaled(const Point& origin, double scale, double factor) const {
  if (!(scale > 0.0) || !(factor >= 0.0)) throw std::invalid_argument("invalid weight rescaling");
  BernoulliWeight w = *this;
  // Compose with any existing pull-back: x -> o1 + s1 (origin + scale x).
  if (origin_.size() == 0) {
    w.origin_ = origin;
    w.scale_ = scale;
  } else {
    w.origin_ = origin_ + scale_ * origin;
    w.scale_ = scale_ * scale;
  }
  w.factor_ = factor_ * factor;
  return w;
}

WeightKind BernoulliWeight::kind() const { return static_cast<WeightKind>(spec_.index()); }

// ---------------------------------------------------------------------------
// Evaluation

double BernoulliWeight::raw_value(const Point& y) const {
  return std::visit(
      [&](const auto& s) -> double {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, Constant>) {
          return s.value;
        } else if constexpr (std::is_same_v<T, PointSingularity>) {
          const double r = (y - s.center).norm();
          if (s.amplitude == 0.0 || s.exponent == 0.0) return s.base + s.amplitude;
          return r == 0.0 ? kInf : s.base + s.amplitude * std::pow(r, -s.exponent);
        } else if constexpr (std::is_same_v<T, ManifoldDistance>) {
          double r2 = 0.0;
          for (int a : s.normal_axes) r2 += (y[a] - s.anchor[a]) * (y[a] - s.anchor[a]);
          if (s.exponent == 0.0) return s.amplitude;
          return r2 == 0.0 ? kInf : s.amplitude * std::pow(r2, -0.5 * s.exponent);
        } else if constexpr (std::is_same_v<T, Section7>) {
          return section7_value(s, y.norm());
        } else if constexpr (std::is_same_v<T, OneSided>) {
          const double t = y[s.axis] - s.anchor[s.axis];
          if (t <= 0.0 || s.amplitude == 0.0) return s.base;
          return s.base + s.amplitude * std::pow(t, -s.exponent);
        } else {
          const Index c = s.field->grid().locate(y);
          return c >= 0 && s.field->region.contains(c) ? s.field->values[c] : 0.0;
        }
      },
      spec_);
}

double BernoulliWeight::operator()(const Point& x) const {
  if (origin_.size() == 0) return factor_ * raw_value(x);
  return factor_ * raw_value(origin_ + scale_ * x);
}

double BernoulliWeight::raw_box_average(const Point& lo, const Point& hi) const {
  const double vol = box_volume(lo, hi);
  return std::visit(
      [&](const auto& s) -> double {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, Constant>) {
          return s.value;
        } else if constexpr (std::is_same_v<T, PointSingularity>) {
          const Point a = lo - s.center, b = hi - s.center;
          return s.base + power_box_integral(a, b, s.amplitude, s.exponent) / vol;
        } else if constexpr (std::is_same_v<T, ManifoldDistance>) {
          const int k = static_cast<int>(s.normal_axes.size());
          Point a(k), b(k);
          double tangential = 1.0;
          for (int i = 0, j = 0; i < lo.size(); ++i) {
            if (std::find(s.normal_axes.begin(), s.normal_axes.end(), i) != s.normal_axes.end()) {
              a[j] = lo[i] - s.anchor[i];
              b[j] = hi[i] - s.anchor[i];
              ++j;
            } else {
              tangential *= hi[i] - lo[i];
            }
          }
          return tangential * power_box_integral(a, b, s.amplitude, s.exponent) / vol;
        } else if constexpr (std::is_same_v<T, Section7>) {
          auto G = [&s](double rho) {
            return rho == 0.0 ? s.plateau / s.d : section7_moment(s, rho) / std::pow(rho, s.d);
          };
          auto phi = [&s](double rho) { return section7_value(s, rho); };
          return radial_integral(phi, G, {s.r_star, s.r_upper}, lo, hi) / vol;
        } else if constexpr (std::is_same_v<T, OneSided>) {
          const double a = lo[s.axis] - s.anchor[s.axis];
          const double b = hi[s.axis] - s.anchor[s.axis];
          const double len = b - a;
          double sing = 0.0;
          if (b > 0.0 && s.amplitude > 0.0) {
            const double a0 = std::max(a, 0.0);
            const double e = 1.0 - s.exponent;
            if (a0 == 0.0 && s.exponent >= 1.0) return kInf;
            if (s.exponent == 1.0) {
              sing = std::log(b / a0);
            } else {
              sing = (std::pow(b, e) - std::pow(a0, e)) / e;
            }
          }
          return s.base + s.amplitude * sing / len;
        } else {
          // Stratified Monte Carlo over the table lookup, seeded from the box position.
          const int k = static_cast<int>(lo.size());
          const int per_axis = static_cast<int>(std::ceil(std::pow(256.0, 1.0 / k)));
          std::uint64_t seed = 0x9e3779b97f4a7c15ull;
          for (int i = 0; i < k; ++i) seed = seed * 1000003u ^ std::hash<double>{}(lo[i]);
          std::mt19937_64 rng(seed);
          std::uniform_real_distribution<double> uni(0.0, 1.0);
          for (int strata = per_axis;; strata *= 2) {
            Index n = 1;
            for (int i = 0; i < k; ++i) n *= strata;
            double sum = 0.0, sum2 = 0.0;
            std::array<int, kMaxDim> idx{};
            Point y(k);
            for (Index j = 0; j < n; ++j) {
              for (int i = 0; i < k; ++i)
                y[i] = lo[i] + (hi[i] - lo[i]) * (idx[i] + uni(rng)) / strata;
              const double v = raw_value(y);
              sum += v;
              sum2 += v * v;
              int a = k - 1;
              while (a >= 0 && ++idx[a] == strata) idx[a--] = 0;
            }
            const double mean = sum / n;
            const double se = std::sqrt(std::max(sum2 / n - mean * mean, 0.0) / n);
            if (se <= 0.01 * std::abs(mean) || mean == 0.0 || n >= (Index{1} << 16)) return mean;
          }
        }
      },
      spec_);
}

double BernoulliWeight::box_average(const Point& lower, const Point& upper) const {
  if (origin_.size() == 0) return factor_ * raw_box_average(lower, upper);
  const Point lo = origin_ + scale_ * lower;
  const Point hi = origin_ + scale_ * upper;
  const double avg = raw_box_average(lo, hi);
  return factor_ == 0.0 && std::isinf(avg) ? 0.0 : factor_ * avg;
}

double BernoulliWeight::cell_average(const Grid& grid, Index cell) const {
  return box_average(grid.cell_lower(cell), grid.cell_upper(cell));
}

bool BernoulliWeight::radial_about_origin() const {
  if (origin_.size() != 0 && origin_.norm() != 0.0) return false;
  switch (kind()) {
    case WeightKind::constant:
    case WeightKind::section7_radial:
      return true;
    case WeightKind::point_singularity:
      return std::get<PointSingularity>(spec_).center.norm() == 0.0;
    default:
      return false;
  }
}

double BernoulliWeight::radial_value(double rho) const {
  if (!radial_about_origin()) throw std::invalid_argument("weight is not radial about the origin");
  const double r = origin_.size() == 0 ? rho : scale_ * rho;
  double v = 0.0;
  switch (kind()) {
    case WeightKind::constant: v = std::get<Constant>(spec_).value; break;
    case WeightKind::section7_radial: v = section7_value(std::get<Section7>(spec_), r); break;
    default: {
      const auto& s = std::get<PointSingularity>(spec_);
      v = r == 0.0 ? kInf : s.base + s.amplitude * std::pow(r, -s.exponent);
    }
  }
  return factor_ * v;
}

double BernoulliWeight::weak_exponent(int d) const {
  return std::visit(
      [&](const auto& s) -> double {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, PointSingularity>) {
          return s.exponent > 0.0 && s.amplitude > 0.0 ? d / s.exponent : kInf;
        } else if constexpr (std::is_same_v<T, ManifoldDistance>) {
          return s.exponent > 0.0 ? static_cast<double>(s.normal_axes.size()) / s.exponent : kInf;
        } else if constexpr (std::is_same_v<T, Section7>) {
          return s.q;
        } else if constexpr (std::is_same_v<T, OneSided>) {
          return s.exponent > 0.0 && s.amplitude > 0.0 ? 1.0 / s.exponent : kInf;
        } else {
          return kInf;
        }
      },
      spec_);
}

Eigen::VectorXd cell_averages(const BernoulliWeight& w, const Region& region) {
  const Grid& g = region.grid();
  Eigen::VectorXd out = Eigen::VectorXd::Zero(g.cell_count());
  for (Index c = 0; c < g.cell_count(); ++c)
    if (region.contains(c)) out[c] = w.cell_average(g, c);
  return out;
}

ScalarField sample_weight(const BernoulliWeight& w, const Region& region) {
  return sample(region, [&](const Point& x) { return w(x); });
}

// ---------------------------------------------------------------------------
// Superlevel sets

double superlevel_measure(const BernoulliWeight& w, const Grid& grid, double t, const Point& x0, double r,
                          const std::optional<Cone>& cone) {
  Index n = 0;
  for_each_cell_in_ball(grid, x0, r, [&](Index c) {
    const Point x = grid.center(c);
    if (cone && !cone->contains(x - x0)) return;
    if (w(x) > t) ++n;
  });
  return static_cast<double>(n) * grid.cell_volume();
}

double ball_measure(const Grid& grid, const Point& x0, double r, const std::optional<Cone>& cone) {
  Index n = 0;
  for_each_cell_in_ball(grid, x0, r, [&](Index c) {
    if (!cone || cone->contains(grid.center(c) - x0)) ++n;
  });
  return static_cast<double>(n) * grid.cell_volume();
}

SuperlevelProfile superlevel_profile(const BernoulliWeight& w, const Grid& grid, const Point& x0,
                                     std::vector<double> radii, std::vector<double> thresholds,
                                     const std::optional<Cone>& cone) {
  SuperlevelProfile p{x0, std::move(radii), std::move(thresholds), {}, cone};
  p.measures.resize(static_cast<Index>(p.radii.size()), static_cast<Index>(p.thresholds.size()));
  for (std::size_t i = 0; i < p.radii.size(); ++i)
    for (std::size_t j = 0; j < p.thresholds.size(); ++j)
      p.measures(i, j) = superlevel_measure(w, grid, p.thresholds[j], x0, p.radii[i], cone);
  return p;
}

GrowthFit verify_growth_hypothesis(const BernoulliWeight& w, const Grid& grid, const Point& x0, double p,
                                   double sigma, const std::vector<double>& radii,
                                   const std::vector<double>& thresholds, const std::optional<Cone>& cone) {
  if (radii.empty() || thresholds.empty()) throw std::invalid_argument("growth check needs radii and thresholds");
  GrowthFit fit{kInf, false};
  for (double r : radii) {
    const double ball = ball_measure(grid, x0, r, cone);
    for (double t : thresholds) {
      const double measured = superlevel_measure(w, grid, t, x0, r, cone);
      if (measured >= ball) continue;  // the ball branch of the minimum is met for every c0
      fit.c0 = std::min(fit.c0, measured / (std::pow(r, sigma) * std::pow(t, -p)));
    }
  }
  fit.pass = fit.c0 > 0.0;
  return fit;
}

}  // namespace bernoulli
