#include "bernoulli/analyze.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <random>
#include <stdexcept>

#include "bernoulli/elliptic.hpp"
#include "bernoulli/minimize.hpp"
#include "json.hpp"

namespace bernoulli {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double value_at(const ScalarField& u, const Point& x) {
  const Index c = u.grid().locate(x);
  if (c >= 0 && u.region.contains(c) && (u.grid().center(c) - x).norm() < 1e-12 * u.grid().min_spacing())
    return u.values[c];
  return interpolate(u, x);
}

template <class Visit>
void region_cells_in_ball(const ScalarField& u, const Point& x0, double r, Visit&& visit) {
  for_each_cell_in_ball(u.grid(), x0, r, [&](Index c) {
    if (u.region.contains(c)) visit(c);
  });
}

double cell_gradient(const ScalarField& u, Index c) {
  const Grid& g = u.grid();
  double sq = 0.0;
  for (int k = 0; k < g.dim(); ++k) {
    const Index lo = g.neighbor(c, k, -1), hi = g.neighbor(c, k, +1);
    const bool has_lo = lo >= 0 && u.region.contains(lo);
    const bool has_hi = hi >= 0 && u.region.contains(hi);
    double d = 0.0;
    if (has_lo && has_hi) d = (u.values[hi] - u.values[lo]) / (2.0 * g.spacing(k));
    else if (has_hi) d = (u.values[hi] - u.values[c]) / g.spacing(k);
    else if (has_lo) d = (u.values[c] - u.values[lo]) / g.spacing(k);
    sq += d * d;
  }
  return std::sqrt(sq);
}

double unit_uniform(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

nlohmann::json num(double v) {
  if (std::isfinite(v)) return v;
  return std::isnan(v) ? "nan" : (v > 0 ? "inf" : "-inf");
}

nlohmann::json point_json(const Point& x) {
  nlohmann::json a = nlohmann::json::array();
  for (Index i = 0; i < x.size(); ++i) a.push_back(x[i]);
  return a;
}

nlohmann::json fit_json(const ExponentFit& f) {
  nlohmann::json j;
  j["alpha"] = num(f.alpha);
  j["residual"] = num(f.residual);
  nlohmann::json r = nlohmann::json::array(), v = nlohmann::json::array();
  for (double x : f.radii) r.push_back(num(x));
  for (double x : f.values) v.push_back(num(x));
  j["radii"] = r;
  j["values"] = v;
  return j;
}

}  // namespace

double positivity_threshold(const ScalarField& u, double gamma) {
  double top = gamma;
  for (Index c = 0; c < u.grid().cell_count(); ++c)
    if (u.region.contains(c)) top = std::max(top, u.values[c]);
  return 1e-9 * (top - gamma);
}

std::vector<Point> extract_free_boundary(const ScalarField& u, double gamma, double eta) {
  if (eta < 0.0) eta = positivity_threshold(u, gamma);
  const Grid& g = u.grid();
  const double level = gamma + eta;
  std::vector<Point> out;
  for (Index c = 0; c < g.cell_count(); ++c) {
    if (!u.region.contains(c) || !(u.values[c] > level)) continue;
    bool boundary = false;
    for (int k = 0; k < g.dim() && !boundary; ++k) {
      for (int dir : {-1, 1}) {
        const Index nb = g.neighbor(c, k, dir);
        if (nb >= 0 && u.region.contains(nb) && u.values[nb] <= level) {
          boundary = true;
          break;
        }
      }
    }
    if (boundary) out.push_back(g.center(c));
  }
  return out;
}

std::vector<double> dyadic_radii(double r_min, double r_max, const Grid& grid) {
  const double floor = std::max(r_min, 4.0 * grid.max_spacing());
  std::vector<double> radii;
  for (double r = r_max; r >= floor * (1.0 - 1e-12); r *= 0.5) radii.push_back(r);
  return radii;
}

ExponentFit fit_power_law(std::vector<double> radii, std::vector<double> values) {
  if (radii.size() != values.size()) throw std::invalid_argument("radii and values differ in length");
  if (radii.size() < 4) throw std::invalid_argument("exponent fit needs at least 4 radii");
  const std::size_t n = radii.size();
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!(radii[i] > 0.0) || !(values[i] > 0.0) || !std::isfinite(values[i]))
      throw std::invalid_argument("exponent fit needs positive finite values");
    const double x = std::log(radii[i]), y = std::log(values[i]);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  const double mx = sx / n, my = sy / n;
  const double slope = (sxy - n * mx * my) / (sxx - n * mx * mx);
  double ss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double e = std::log(values[i]) - (my + slope * (std::log(radii[i]) - mx));
    ss += e * e;
  }
  return {slope, std::sqrt(ss / n), std::move(radii), std::move(values)};
}

ExponentFit fit_growth_exponent(const ScalarField& u, const Point& x0, double r_min, double r_max) {
  const std::vector<double> radii = dyadic_radii(r_min, r_max, u.grid());
  if (radii.size() < 4) throw std::invalid_argument("exponent fit needs at least 4 dyadic radii above 4h");
  const double u0 = value_at(u, x0);
  std::vector<double> values;
  for (double r : radii) {
    double sup = 0.0;
    region_cells_in_ball(u, x0, r, [&](Index c) { sup = std::max(sup, std::abs(u.values[c] - u0)); });
    values.push_back(sup);
  }
  return fit_power_law(radii, values);
}

ExponentFit fit_lower_exponent(const ScalarField& u, const Point& x0, double r_min, double r_max) {
  const std::vector<double> radii = dyadic_radii(r_min, r_max, u.grid());
  if (radii.size() < 4) throw std::invalid_argument("exponent fit needs at least 4 dyadic radii above 4h");
  const double u0 = value_at(u, x0);
  std::vector<double> values;
  for (double r : radii) {
    double sum = 0.0;
    Index n = 0;
    region_cells_in_ball(u, x0, r, [&](Index c) {
      sum += std::abs(u.values[c] - u0);
      ++n;
    });
    values.push_back(n > 0 ? sum / static_cast<double>(n) : 0.0);
  }
  return fit_power_law(radii, values);
}

std::vector<double> shell_slopes(const ScalarField& u, const Point& x0, const std::vector<double>& radii) {
  std::vector<double> out;
  for (double r : radii) {
    double best = 0.0;
    region_cells_in_ball(u, x0, r, [&](Index c) {
      if ((u.grid().center(c) - x0).norm() >= 0.5 * r) best = std::max(best, cell_gradient(u, c));
    });
    out.push_back(best);
  }
  return out;
}

double cusp_exponent(double q_minus, double q_plus, int d) {
  if (d < 1) throw std::invalid_argument("dimension must be positive");
  if (!(q_minus > 0.0) || !(q_plus >= q_minus))
    throw std::invalid_argument("cusp exponent needs 0 < q_minus <= q_plus");
  const double a1 = 1.0 - d / (2.0 * q_plus);
  if (a1 == 0.0) throw std::invalid_argument("cusp exponent undefined for q_plus = d/2");
  if (q_minus == q_plus) return 1.0;  // alpha2 = alpha1 and (1 - 1/q) q/(q - 1) = 1, also in the limit q -> 1
  if (q_plus == 1.0) throw std::invalid_argument("cusp exponent undefined for q_plus = 1");
  const double a2 = 1.0 - d / (2.0 * q_minus);
  const double conj = std::isinf(q_plus) ? 1.0 : q_plus / (q_plus - 1.0);
  return (a2 / a1 - 1.0 / q_minus) * conj;
}

bool cusp_theorem_applies(double q_minus, double q_plus, int d) {
  return q_minus > 0.5 * d && q_plus >= q_minus;
}

DensityTable density_ratios(const ScalarField& u, const Point& x0, double gamma, const std::vector<double>& radii,
                            double q_minus, double q_plus, double eta) {
  const int d = u.grid().dim();
  const double a1 = 1.0 - d / (2.0 * q_plus);
  const double a2 = 1.0 - d / (2.0 * q_minus);
  const double ratio = a2 / a1;
  const double P = cusp_exponent(q_minus, q_plus, d);
  if (eta < 0.0) eta = positivity_threshold(u, gamma);
  const double vol = u.grid().cell_volume();
  const double floor = 4.0 * u.grid().max_spacing();
  DensityTable t;
  t.positive_constant = kInf;
  t.zero_constant = kInf;
  for (double r : radii) {
    if (r < floor * (1.0 - 1e-12)) continue;
    Index pos = 0, all = 0;
    region_cells_in_ball(u, x0, r, [&](Index c) {
      ++all;
      if (u.values[c] > gamma + eta) ++pos;
    });
    if (all == 0) continue;
    const double ball = static_cast<double>(all) * vol;
    DensityRow row;
    row.r = r;
    row.positive_fraction = static_cast<double>(pos) / static_cast<double>(all);
    row.zero_fraction = 1.0 - row.positive_fraction;
    row.positive = static_cast<double>(pos) * vol / std::pow(ball, ratio);
    row.zero = static_cast<double>(all - pos) * vol / std::pow(ball, P);
    t.positive_constant = std::min(t.positive_constant, row.positive);
    t.zero_constant = std::min(t.zero_constant, row.zero);
    t.rows.push_back(row);
  }
  if (t.rows.empty()) t.positive_constant = t.zero_constant = 0.0;
  return t;
}

double distance_to_complement(const Region& region, const Point& x) {
  const Grid& g = region.grid();
  double best = kInf;
  for (int k = 0; k < g.dim(); ++k) {
    best = std::min(best, x[k] - g.lower()[k] + 0.5 * g.spacing(k));
    best = std::min(best, g.upper()[k] - x[k] + 0.5 * g.spacing(k));
  }
  for (Index c = 0; c < g.cell_count(); ++c)
    if (!region.contains(c)) best = std::min(best, (g.center(c) - x).norm());
  return best;
}

double bmo_seminorm(const ScalarField& u, const Region& region, int n_balls, std::uint64_t seed) {
  if (n_balls < 32) throw std::invalid_argument("bmo estimate needs at least 32 balls");
  const std::vector<Index> cells = region.cells();
  if (cells.empty()) return 0.0;
  const double rmin = 4.0 * region.grid().max_spacing();
  std::mt19937_64 rng(seed);
  double best = 0.0;
  int placed = 0;
  for (Index attempt = 0; placed < n_balls && attempt < Index{1000} * n_balls; ++attempt) {
    const Index c = cells[static_cast<std::size_t>(rng() % cells.size())];
    const Point x = region.grid().center(c);
    const double dist = distance_to_complement(region, x);
    if (dist <= rmin) continue;
    const double r = rmin * std::exp(unit_uniform(rng) * std::log(dist / rmin));
    best = std::max(best, ball_mean_oscillation(u, x, r));
    ++placed;
  }
  if (placed < n_balls) throw std::invalid_argument("region too thin for the bmo radii");
  return best;
}

double harnack_ratio(const ScalarField& u, const Point& center, double radius, double gamma) {
  double hi = -kInf, lo = kInf;
  region_cells_in_ball(u, center, radius, [&](Index c) {
    hi = std::max(hi, u.values[c] - gamma);
    lo = std::min(lo, u.values[c] - gamma);
  });
  if (hi == -kInf) throw std::invalid_argument("ball contains no cells");
  if (!(lo > 0.0)) throw std::invalid_argument("ball meets the zero phase");
  return hi / lo;
}

double caccioppoli_ratio(const ScalarField& u, const BernoulliWeight& w, double q, const Point& center,
                         double radius) {
  const Grid& g = u.grid();
  const Region inner = intersect(u.region, make_ball(g, center, 0.5 * radius));
  const Region outer = intersect(u.region, make_ball(g, center, radius));
  const StiffnessOperator K(CoefficientField::identity(inner));
  const double grad = std::max(0.0, K.energy(u.values));  // round-off on constant fields
  const double l2 = l2_norm(u, outer);
  const double phi = weak_lq_norm(sample_weight(w, outer), q, outer);
  const double denom = l2 * l2 + phi;
  return denom > 0.0 ? grad / denom : (grad > 0.0 ? kInf : 0.0);
}

FreeBoundaryReport analyze_free_boundary(const ScalarField& u, double gamma, const BernoulliWeight& w,
                                         const ReportSettings& s) {
  FreeBoundaryReport rep;
  rep.gamma = gamma;
  rep.points = extract_free_boundary(u, gamma);
  std::vector<Point> chosen = s.exponent_points;
  if (chosen.empty() && !rep.points.empty()) {
    const std::size_t n = rep.points.size();
    const std::size_t k = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(s.max_points, 1)));
    for (std::size_t i = 0; i < k; ++i) chosen.push_back(rep.points[i * n / k]);
  }
  const int d = u.grid().dim();
  const double qw = w.weak_exponent(d);
  double qm = s.q_minus > 0.0 ? s.q_minus : qw;
  double qp = s.q_plus > 0.0 ? s.q_plus : qw;
  for (const Point& x : chosen) {
    PointReport pr;
    pr.x = x;
    try {
      pr.upper = fit_growth_exponent(u, x, s.r_min, s.r_max);
      pr.lower = fit_lower_exponent(u, x, s.r_min, s.r_max);
      pr.fitted = true;
    } catch (const std::invalid_argument& e) {
      pr.note = e.what();
    }
    const std::vector<double> radii =
        s.density_radii.empty() ? dyadic_radii(s.r_min, s.r_max, u.grid()) : s.density_radii;
    DensityTable t;
    try {
      t = density_ratios(u, x, gamma, radii, qm, qp);
    } catch (const std::invalid_argument& e) {
      if (!pr.note.empty()) pr.note += "; ";
      pr.note += e.what();
    }
    rep.per_point.push_back(std::move(pr));
    rep.density.push_back(std::move(t));
  }
  rep.l2 = l2_norm(u, u.region);
  try {
    rep.bmo = bmo_seminorm(u, u.region, s.bmo_balls, s.seed);
  } catch (const std::invalid_argument&) {
    rep.bmo = std::numeric_limits<double>::quiet_NaN();
  }
  return rep;
}

void write_report_json(const FreeBoundaryReport& r, std::ostream& out) {
  nlohmann::json j;
  j["gamma"] = num(r.gamma);
  j["free_boundary_points"] = r.points.size();
  j["bmo"] = num(r.bmo);
  j["l2"] = num(r.l2);
  nlohmann::json pts = nlohmann::json::array();
  for (std::size_t i = 0; i < r.per_point.size(); ++i) {
    const PointReport& p = r.per_point[i];
    nlohmann::json e;
    e["x"] = point_json(p.x);
    e["fitted"] = p.fitted;
    if (p.fitted) {
      e["upper"] = fit_json(p.upper);
      e["lower"] = fit_json(p.lower);
    }
    if (!p.note.empty()) e["note"] = p.note;
    nlohmann::json rows = nlohmann::json::array();
    for (const DensityRow& row : r.density[i].rows)
      rows.push_back({{"r", num(row.r)},
                      {"positive", num(row.positive)},
                      {"zero", num(row.zero)},
                      {"positive_fraction", num(row.positive_fraction)},
                      {"zero_fraction", num(row.zero_fraction)}});
    e["density"] = rows;
    e["positive_constant"] = num(r.density[i].positive_constant);
    e["zero_constant"] = num(r.density[i].zero_constant);
    pts.push_back(e);
  }
  j["points"] = pts;
  out << j.dump(2) << '\n';
}

void write_report_csv(const FreeBoundaryReport& r, std::ostream& out) {
  out << "point";
  const int d = r.per_point.empty() ? 0 : static_cast<int>(r.per_point.front().x.size());
  for (int k = 0; k < d; ++k) out << ",x" << k;
  out << ",r,alpha_upper,residual_upper,alpha_lower,residual_lower,sup_growth,mean_growth,positive,zero,"
         "positive_fraction,zero_fraction\n";
  for (std::size_t i = 0; i < r.per_point.size(); ++i) {
    const PointReport& p = r.per_point[i];
    for (const DensityRow& row : r.density[i].rows) {
      out << i;
      for (int k = 0; k < d; ++k) out << ',' << format_number(p.x[k]);
      out << ',' << format_number(row.r);
      std::string sup, mean;
      if (p.fitted) {
        for (std::size_t k = 0; k < p.upper.radii.size(); ++k) {
          if (p.upper.radii[k] == row.r) {
            sup = format_number(p.upper.values[k]);
            mean = format_number(p.lower.values[k]);
          }
        }
        out << ',' << format_number(p.upper.alpha) << ',' << format_number(p.upper.residual) << ','
            << format_number(p.lower.alpha) << ',' << format_number(p.lower.residual);
      } else {
        out << ",,,,";
      }
      out << ',' << sup << ',' << mean << ',' << format_number(row.positive) << ',' << format_number(row.zero)
          << ',' << format_number(row.positive_fraction) << ',' << format_number(row.zero_fraction) << '\n';
    }
  }
}

}  // namespace bernoulli
