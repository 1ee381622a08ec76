#include "bernoulli/radial.hpp"

#include <algorithm>
#include <functional>
#include <limits>
#include <ostream>

#include <boost/math/quadrature/gauss_kronrod.hpp>

namespace bernoulli {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double gk(const std::function<double(double)>& f, double a, double b) {
  if (!(b > a)) return 0.0;
  return boost::math::quadrature::gauss_kronrod<double, 31>::integrate(f, a, b, 15, 1e-13);
}

// int_a^b rho^{k-1-e} drho, a >= 0.
double power_moment(int k, double e, double a, double b) {
  const double p = k - e;
  if (p == 0.0) return a > 0.0 ? std::log(b / a) : kInf;
  if (p < 0.0 && a == 0.0) return kInf;
  return (std::pow(b, p) - std::pow(a, p)) / p;
}

}  // namespace

void RadialConfig::validate() const {
  if (d < 3) throw std::invalid_argument("radial configuration needs d >= 3");
  if (!(q > 1.0)) throw std::invalid_argument("radial configuration needs q > 1");
  if (!(m > 0.0)) throw std::invalid_argument("radial configuration needs m > 0");
}

BernoulliWeight RadialConfig::weight() const {
  validate();
  return BernoulliWeight::section7(d, q, m, plateau_rule);
}

double tau(double r, const RadialConfig& c) { return tau<double>(r, c.d, c.m); }

double radial_profile(const Point& x, double r, const RadialConfig& c) {
  return radial_profile<double>(x.norm(), r, c.d, c.m);
}

double radial_weight_integral(const BernoulliWeight& w, int d, double a, double b) {
  if (!w.radial_about_origin()) throw std::invalid_argument("radial energy needs a radial weight");
  if (!(b > a)) return 0.0;
  const double area = area_sphere(d);
  switch (w.kind()) {
    case WeightKind::constant:
      return area * w.radial_value(1.0) * (std::pow(b, d) - std::pow(a, d)) / d;
    case WeightKind::point_singularity: {
      const auto& s = std::get<BernoulliWeight::PointSingularity>(w.spec());
      const double k = std::pow(w.scale(), -s.exponent);
      return area * w.factor() *
             (s.base * (std::pow(b, d) - std::pow(a, d)) / d + s.amplitude * k * power_moment(d, s.exponent, a, b));
    }
    case WeightKind::section7_radial: {
      const auto& s = std::get<BernoulliWeight::Section7>(w.spec());
      const double lo_kink = s.r_star / w.scale();
      const double hi_kink = s.r_upper / w.scale();
      auto smooth = [&](double x, double y) {
        if (!(y > x)) return 0.0;
        return gk([&](double rho) { return w.radial_value(rho) * std::pow(rho, d - 1); }, x, y);
      };
      double sum = smooth(a, std::min(b, lo_kink)) + smooth(std::max(a, hi_kink), b);
      const double x = std::max(a, lo_kink);
      const double y = std::min(b, hi_kink);
      if (y > x) {
        // rho = r_* + t^p with p = q/(q-1): phi(rho) drho/dt is then constant in t
        const double p = s.q / (s.q - 1.0);
        const double c = w.factor() * std::pow(w.scale(), -1.0 / s.q) * p;
        auto f = [&](double t) { return c * std::pow(lo_kink + std::pow(t, p), d - 1); };
        sum += gk(f, std::pow(x - lo_kink, 1.0 / p), std::pow(y - lo_kink, 1.0 / p));
      }
      return area * sum;
    }
    default:
      throw std::invalid_argument("radial energy needs a radial weight");
  }
}

double radial_energy(double r, const RadialConfig& c, const BernoulliWeight& w) {
  c.validate();
  if (!(r > 0.0 && r < 1.0)) throw std::invalid_argument("radial energy needs r in (0,1)");
  return radial_dirichlet_energy<double>(r, c.d, c.m) + radial_weight_integral(w, c.d, r, 1.0);
}

double constant_state_energy(const RadialConfig& c, const BernoulliWeight& w) {
  c.validate();
  return radial_weight_integral(w, c.d, 0.0, 1.0);
}

double singular_shell_integral(int d, double q) {
  RadialConfig c{d, q, 1.0, PlateauRule::tau_consistent};
  const BernoulliWeight w = c.weight();
  return radial_weight_integral(w, d, r_star<double>(d), r_upper<double>(d)) / area_sphere(d);
}

double m_threshold(int d, double q) {
  const double ru = r_upper<double>(d);
  return std::sqrt((std::pow(ru, 2 - d) - 1.0) / (d - 2.0) * singular_shell_integral(d, q));
}

RadialOptimum minimize_radial(const RadialConfig& c, const BernoulliWeight& w, const RadialSearch& s) {
  c.validate();
  if (!(s.h > 0.0 && s.h < 0.5) || s.scan_points < 3) throw std::invalid_argument("invalid radial search");
  RadialOptimum out;
  const int n = s.scan_points;
  const double lo = s.h, hi = 1.0 - s.h;
  out.scan_r.resize(n);
  out.scan_energy.resize(n);
  for (int i = 0; i < n; ++i) {
    out.scan_r[i] = lo + (hi - lo) * i / (n - 1);
    out.scan_energy[i] = radial_energy(out.scan_r[i], c, w);
  }
  int best = static_cast<int>(std::min_element(out.scan_energy.begin(), out.scan_energy.end()) - out.scan_energy.begin());
  out.r = out.scan_r[best];
  out.energy = out.scan_energy[best];

  auto E = [&](double r) { return radial_energy(r, c, w); };
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  for (int i = 0; i < n; ++i) {
    const bool left = i == 0 || out.scan_energy[i] <= out.scan_energy[i - 1];
    const bool right = i == n - 1 || out.scan_energy[i] <= out.scan_energy[i + 1];
    if (!left || !right) continue;
    double a = out.scan_r[std::max(i - 1, 0)];
    double b = out.scan_r[std::min(i + 1, n - 1)];
    double x1 = b - inv_phi * (b - a), x2 = a + inv_phi * (b - a);
    double f1 = E(x1), f2 = E(x2);
    while (b - a > s.tolerance) {
      if (f1 <= f2) {
        b = x2;
        x2 = x1;
        f2 = f1;
        x1 = b - inv_phi * (b - a);
        f1 = E(x1);
      } else {
        a = x1;
        x1 = x2;
        f1 = f2;
        x2 = a + inv_phi * (b - a);
        f2 = E(x2);
      }
    }
    const double r = f1 <= f2 ? x1 : x2;
    const double e = std::min(f1, f2);
    if (e < out.energy) {
      out.r = r;
      out.energy = e;
    }
  }
  // jumps of the weight are kinks of the energy that golden sections only approach
  if (const auto* s7 = std::get_if<BernoulliWeight::Section7>(&w.spec()); s7 && w.radial_about_origin()) {
    for (double r : {s7->r_star, s7->r_upper}) {
      const double rr = r / w.scale();
      if (rr <= lo || rr >= hi) continue;
      const double e = E(rr);
      if (e < out.energy) {
        out.r = rr;
        out.energy = e;
      }
    }
  }
  out.at_boundary = out.r - lo <= 2.0 * s.tolerance || hi - out.r <= 2.0 * s.tolerance ||
                    out.r == out.scan_r.front() || out.r == out.scan_r.back();
  return out;
}

void write_radial_scan(const RadialOptimum& opt, std::ostream& out) {
  out << "r,energy\n";
  for (std::size_t i = 0; i < opt.scan_r.size(); ++i)
    out << format_number(opt.scan_r[i]) << ',' << format_number(opt.scan_energy[i]) << '\n';
}

}  // namespace bernoulli
