#include "bernoulli/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <random>
#include <set>
#include <sstream>

#include "bernoulli/elliptic.hpp"

namespace bernoulli {

using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Reads one JSON object; finish() rejects keys that were never asked for.
class Reader {
 public:
  Reader(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw ConfigError(where_ + " must be an object");
  }

  bool has(const std::string& k) {
    used_.insert(k);
    return j_.contains(k);
  }

  double number(const std::string& k, double def) {
    if (!has(k)) return def;
    const json& v = j_.at(k);
    if (!v.is_number()) throw ConfigError(path(k) + " must be a number");
    return v.get<double>();
  }

  int integer(const std::string& k, int def) {
    if (!has(k)) return def;
    const json& v = j_.at(k);
    if (!v.is_number_integer()) throw ConfigError(path(k) + " must be an integer");
    return v.get<int>();
  }

  std::uint64_t unsigned_integer(const std::string& k, std::uint64_t def) {
    if (!has(k)) return def;
    const json& v = j_.at(k);
    if (!v.is_number_integer() || v.get<long long>() < 0) throw ConfigError(path(k) + " must be a nonnegative integer");
    return v.get<std::uint64_t>();
  }

  bool boolean(const std::string& k, bool def) {
    if (!has(k)) return def;
    const json& v = j_.at(k);
    if (!v.is_boolean()) throw ConfigError(path(k) + " must be true or false");
    return v.get<bool>();
  }

  std::string string(const std::string& k, const std::string& def) {
    if (!has(k)) return def;
    const json& v = j_.at(k);
    if (!v.is_string()) throw ConfigError(path(k) + " must be a string");
    return v.get<std::string>();
  }

  std::vector<double> numbers(const std::string& k) {
    std::vector<double> out;
    if (!has(k)) return out;
    const json& v = j_.at(k);
    if (!v.is_array()) throw ConfigError(path(k) + " must be an array of numbers");
    for (const json& e : v) {
      if (!e.is_number()) throw ConfigError(path(k) + " must be an array of numbers");
      out.push_back(e.get<double>());
    }
    return out;
  }

  std::vector<int> integers(const std::string& k) {
    std::vector<int> out;
    if (!has(k)) return out;
    const json& v = j_.at(k);
    if (!v.is_array()) throw ConfigError(path(k) + " must be an array of integers");
    for (const json& e : v) {
      if (!e.is_number_integer()) throw ConfigError(path(k) + " must be an array of integers");
      out.push_back(e.get<int>());
    }
    return out;
  }

  std::vector<std::vector<double>> rows(const std::string& k) {
    std::vector<std::vector<double>> out;
    if (!has(k)) return out;
    const json& v = j_.at(k);
    if (!v.is_array()) throw ConfigError(path(k) + " must be an array of arrays");
    for (const json& row : v) {
      if (!row.is_array()) throw ConfigError(path(k) + " must be an array of arrays");
      std::vector<double> r;
      for (const json& e : row) {
        if (!e.is_number()) throw ConfigError(path(k) + " entries must be numbers");
        r.push_back(e.get<double>());
      }
      out.push_back(std::move(r));
    }
    return out;
  }

  std::vector<std::string> strings(const std::string& k) {
    std::vector<std::string> out;
    if (!has(k)) return out;
    const json& v = j_.at(k);
    if (!v.is_array()) throw ConfigError(path(k) + " must be an array of strings");
    for (const json& e : v) {
      if (!e.is_string()) throw ConfigError(path(k) + " must be an array of strings");
      out.push_back(e.get<std::string>());
    }
    return out;
  }

  Reader object(const std::string& k) {
    static const json empty = json::object();
    if (!has(k)) return Reader(empty, path(k));
    return Reader(j_.at(k), path(k));
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!used_.count(it.key())) throw ConfigError("unknown key '" + path(it.key()) + "'");
  }

 private:
  std::string path(const std::string& k) const { return where_.empty() ? k : where_ + "." + k; }

  const json& j_;
  std::string where_;
  std::set<std::string> used_;
};

void require(bool ok, const std::string& msg) {
  if (!ok) throw ConfigError(msg);
}

Point to_point(const std::vector<double>& v, int dim, const std::string& what) {
  if (v.empty()) return Point::Zero(dim);
  if (static_cast<int>(v.size()) != dim) throw ConfigError(what + " must have " + std::to_string(dim) + " entries");
  Point p(dim);
  for (int i = 0; i < dim; ++i) p[i] = v[i];
  return p;
}

bool is_criterion(const std::string& id) {
  static const std::set<std::string> ids{"A1", "A2", "A3", "A4", "A5", "A6", "A7", "A8", "A9", "A10"};
  return ids.count(id) > 0;
}

void read_settings(Reader r, SolverSettings& s) {
  s.tolerance = r.number("tolerance", s.tolerance);
  s.smoothed_tolerance = r.number("smoothed_tolerance", s.smoothed_tolerance);
  s.level_tolerance = r.number("level_tolerance", s.level_tolerance);
  s.eps0 = r.number("eps0", s.eps0);
  s.continuation_levels = r.integer("continuation_levels", s.continuation_levels);
  s.smoothed_iterations = r.integer("smoothed_iterations", s.smoothed_iterations);
  s.max_outer = r.integer("max_outer", s.max_outer);
  s.ladder = r.integer("ladder", s.ladder);
  s.local_radius = r.integer("local_radius", s.local_radius);
  s.local_sweeps = r.integer("local_sweeps", s.local_sweeps);
  s.eta_pos_rel = r.number("eta_pos_rel", s.eta_pos_rel);
  s.eta_dec_rel = r.number("eta_dec_rel", s.eta_dec_rel);
  r.finish();
  require(s.tolerance > 1e-14 && s.tolerance < 1e-2, "solver.tolerance must lie in (1e-14, 1e-2)");
  require(s.continuation_levels >= 0 && s.smoothed_iterations >= 0 && s.max_outer > 0 && s.ladder >= 0,
          "solver iteration settings must be positive");
  require(s.local_radius >= 1 && s.local_sweeps >= 1, "local move settings must be positive");
}

json settings_json(const SolverSettings& s) {
  return {{"tolerance", s.tolerance},
          {"smoothed_tolerance", s.smoothed_tolerance},
          {"level_tolerance", s.level_tolerance},
          {"eps0", s.eps0},
          {"continuation_levels", s.continuation_levels},
          {"smoothed_iterations", s.smoothed_iterations},
          {"max_outer", s.max_outer},
          {"ladder", s.ladder},
          {"local_radius", s.local_radius},
          {"local_sweeps", s.local_sweeps},
          {"eta_pos_rel", s.eta_pos_rel},
          {"eta_dec_rel", s.eta_dec_rel}};
}

json finite_or_string(double v) {
  if (std::isfinite(v)) return v;
  return std::isnan(v) ? "nan" : (v > 0 ? "inf" : "-inf");
}

}  // namespace

// ---------------------------------------------------------------------------
// Config

ExperimentConfig parse_config(const json& doc, const fs::path& base_dir) {
  ExperimentConfig c;
  c.base_dir = base_dir;
  Reader top(doc, "");
  require(top.has("name"), "missing key 'name'");
  c.name = top.string("name", "");
  require(!c.name.empty() && c.name.find_first_of("/\\") == std::string::npos, "name must be a nonempty file name");
  require(top.has("grid"), "missing key 'grid'");
  {
    Reader r = top.object("grid");
    c.grid.dim = r.integer("dim", c.grid.dim);
    c.grid.n = r.integer("n", c.grid.n);
    c.grid.lower = r.number("lower", c.grid.lower);
    c.grid.upper = r.number("upper", c.grid.upper);
    r.finish();
    require(c.grid.dim >= 1 && c.grid.dim <= kMaxDim, "grid.dim must lie in 1..4");
    require(c.grid.n >= 2, "grid.n must be at least 2");
    require(c.grid.upper > c.grid.lower, "grid.upper must exceed grid.lower");
  }
  const int d = c.grid.dim;
  {
    Reader r = top.object("region");
    c.region.kind = r.string("kind", c.region.kind);
    c.region.center = r.numbers("center");
    c.region.radius = r.number("radius", c.region.radius);
    c.region.inner_radius = r.number("inner_radius", c.region.inner_radius);
    r.finish();
    require(c.region.kind == "box" || c.region.kind == "ball" || c.region.kind == "annulus",
            "region.kind must be box, ball or annulus");
    to_point(c.region.center, d, "region.center");
    require(c.region.radius > 0.0, "region.radius must be positive");
    if (c.region.kind == "annulus")
      require(c.region.inner_radius > 0.0 && c.region.inner_radius < c.region.radius,
              "annulus needs 0 < inner_radius < radius");
  }
  {
    Reader r = top.object("coefficients");
    c.coefficients.kind = r.string("kind", c.coefficients.kind);
    c.coefficients.diagonal = r.numbers("diagonal");
    c.coefficients.lambda = r.number("lambda", c.coefficients.lambda);
    c.coefficients.Lambda = r.number("Lambda", c.coefficients.Lambda);
    c.coefficients.seed = r.unsigned_integer("seed", c.coefficients.seed);
    r.finish();
    const std::string& k = c.coefficients.kind;
    require(k == "identity" || k == "diagonal" || k == "random_symmetric",
            "coefficients.kind must be identity, diagonal or random_symmetric");
    if (k == "diagonal") to_point(c.coefficients.diagonal, d, "coefficients.diagonal");
    if (k == "random_symmetric")
      require(c.coefficients.lambda > 0.0 && c.coefficients.Lambda >= c.coefficients.lambda,
              "random_symmetric needs 0 < lambda <= Lambda");
  }
  {
    Reader r = top.object("weight");
    WeightConfig& w = c.weight;
    w.kind = r.string("kind", w.kind);
    w.value = r.number("value", w.value);
    w.center = r.numbers("center");
    w.amplitude = r.number("amplitude", w.amplitude);
    w.exponent = r.number("exponent", w.exponent);
    w.base = r.number("base", w.base);
    w.normal_axes = r.integers("normal_axes");
    w.axis = r.integer("axis", w.axis);
    w.q = r.number("q", w.q);
    w.plateau_rule = r.string("plateau_rule", w.plateau_rule);
    r.finish();
    require(w.kind == "constant" || w.kind == "point_singularity" || w.kind == "manifold_distance" ||
                w.kind == "section7" || w.kind == "one_sided",
            "weight.kind must be constant, point_singularity, manifold_distance, section7 or one_sided");
    to_point(w.center, d, "weight.center");
    if (w.kind == "section7") {
      require(d >= 3, "section7 weight needs grid.dim >= 3");
      require(w.q > 1.0, "weight.q must exceed 1");
    }
    parse_plateau_rule(w.plateau_rule);
    w.plateau_rule = to_string(parse_plateau_rule(w.plateau_rule));
  }
  {
    Reader r = top.object("boundary");
    BoundaryConfig& b = c.boundary;
    b.kind = r.string("kind", b.kind);
    b.m = r.number("m", b.m);
    b.threshold_factor = r.number("threshold_factor", b.threshold_factor);
    b.r = r.number("r", b.r);
    b.inner_value = r.number("inner_value", b.inner_value);
    b.split_radius = r.number("split_radius", b.split_radius);
    b.gradient = r.numbers("gradient");
    b.path = r.string("path", b.path);
    const double echoed_m = r.number("resolved_m", std::numeric_limits<double>::quiet_NaN());  // written by to_json
    r.finish();
    require(b.kind == "constant" || b.kind == "radial_profile" || b.kind == "radial_step" || b.kind == "affine" ||
                b.kind == "table",
            "boundary.kind must be constant, radial_profile, radial_step, affine or table");
    if (b.threshold_factor > 0.0) require(c.weight.kind == "section7", "boundary.threshold_factor needs a section7 weight");
    if (b.kind == "radial_profile") require(d >= 3 && b.r > 0.0 && b.r < 1.0, "radial_profile needs dim >= 3 and r in (0,1)");
    if (b.kind == "affine") to_point(b.gradient, d, "boundary.gradient");
    if (b.kind == "table") require(!b.path.empty(), "table boundary needs a path");
    if (!std::isnan(echoed_m))
      require(std::abs(echoed_m - boundary_value_m(c)) <= 1e-12 * std::max(1.0, std::abs(echoed_m)),
              "boundary.resolved_m does not match the boundary data");
  }
  c.gamma = top.number("gamma", c.gamma);
  {
    Reader r = top.object("solver");
    const std::string kind = r.string("kind", to_string(c.solver));
    try {
      c.solver = parse_solver_kind(kind);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
    read_settings(r.object("settings"), c.settings);
    r.finish();
  }
  {
    Reader r = top.object("analysis");
    AnalysisConfig& a = c.analysis;
    a.report = r.boolean("report", a.report);
    a.exponent_points = r.rows("exponent_points");
    a.max_points = r.integer("max_points", a.max_points);
    a.r_min = r.number("r_min", a.r_min);
    a.r_max = r.number("r_max", a.r_max);
    a.density_radii = r.numbers("density_radii");
    a.q_minus = r.number("q_minus", a.q_minus);
    a.q_plus = r.number("q_plus", a.q_plus);
    a.bmo_balls = r.integer("bmo_balls", a.bmo_balls);
    a.caccioppoli = r.boolean("caccioppoli", a.caccioppoli);
    a.gradient_checks = r.integer("gradient_checks", a.gradient_checks);
    r.finish();
    for (const auto& p : a.exponent_points) to_point(p, d, "analysis.exponent_points entry");
    require(a.r_max > 0.0 && a.r_min >= 0.0, "analysis radii must be positive");
    require(a.bmo_balls >= 32, "analysis.bmo_balls must be at least 32");
    require(a.max_points >= 1 && a.gradient_checks >= 0, "analysis counts must be positive");
  }
  {
    Reader r = top.object("pipeline");
    PipelineConfig& p = c.pipeline;
    p.kind = r.string("kind", p.kind);
    require(p.kind == "solve" || p.kind == "anchored_singularity" || p.kind == "scaling" || p.kind == "cusp",
            "pipeline.kind must be solve, anchored_singularity, scaling or cusp");
    if (p.kind == "anchored_singularity") {
      p.amplitude = r.number("amplitude", p.amplitude);
      p.exponent = r.number("exponent", p.exponent);
      p.direction = r.numbers("direction");
      p.placement_n = r.integer("placement_n", p.placement_n);
      p.max_placements = r.integer("max_placements", p.max_placements);
      p.max_refinements = r.integer("max_refinements", p.max_refinements);
      p.density_r_max = r.number("density_r_max", p.density_r_max);
      require(p.amplitude > 0.0 && p.exponent > 0.0, "anchored singularity needs positive amplitude and exponent");
      require(c.weight.kind == "constant", "anchored singularity adds to a constant base weight");
      if (p.direction.empty()) {
        p.direction.assign(static_cast<std::size_t>(d), 0.0);
        p.direction[0] = 1.0;
      }
      require(to_point(p.direction, d, "pipeline.direction").norm() > 0.0, "pipeline.direction must be nonzero");
      require(p.max_placements >= 1 && p.max_refinements >= 0 && p.placement_n >= 0, "placement counts invalid");
    } else if (p.kind == "scaling") {
      p.samples = r.integer("samples", p.samples);
      require(p.samples >= 1, "pipeline.samples must be positive");
    } else if (p.kind == "cusp") {
      p.q_values = r.numbers("q_values");
      p.dims = r.integers("dims");
      p.pairs = r.rows("pairs");
      for (const auto& row : p.pairs) require(row.size() == 4, "cusp pairs are (q_minus, q_plus, d, expected)");
    }
    r.finish();
  }
  c.resolutions = top.integers("resolutions");
  for (int n : c.resolutions) require(n >= 2, "resolutions must be at least 2");
  c.criteria = top.strings("criteria");
  for (const auto& id : c.criteria) require(is_criterion(id), "unknown criterion '" + id + "'");
  c.seed = top.unsigned_integer("seed", c.seed);
  top.finish();
  return c;
}

ExperimentConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return parse_config(doc, path.parent_path());
}

json to_json(const ExperimentConfig& c) {
  json j;
  j["name"] = c.name;
  j["grid"] = {{"dim", c.grid.dim}, {"n", c.grid.n}, {"lower", c.grid.lower}, {"upper", c.grid.upper}};
  const int d = c.grid.dim;
  auto pt = [d](const std::vector<double>& v) {
    json a = json::array();
    const Point p = to_point(v, d, "point");
    for (int i = 0; i < d; ++i) a.push_back(p[i]);
    return a;
  };
  j["region"] = {{"kind", c.region.kind},
                 {"center", pt(c.region.center)},
                 {"radius", c.region.radius},
                 {"inner_radius", c.region.inner_radius}};
  j["coefficients"] = {{"kind", c.coefficients.kind},
                       {"diagonal", c.coefficients.diagonal},
                       {"lambda", c.coefficients.lambda},
                       {"Lambda", c.coefficients.Lambda},
                       {"seed", c.coefficients.seed}};
  j["weight"] = {{"kind", c.weight.kind},         {"value", c.weight.value},
                 {"center", pt(c.weight.center)}, {"amplitude", c.weight.amplitude},
                 {"exponent", c.weight.exponent}, {"base", c.weight.base},
                 {"normal_axes", c.weight.normal_axes}, {"axis", c.weight.axis},
                 {"q", c.weight.q},               {"plateau_rule", c.weight.plateau_rule}};
  j["boundary"] = {{"kind", c.boundary.kind},
                   {"m", c.boundary.m},
                   {"resolved_m", boundary_value_m(c)},
                   {"threshold_factor", c.boundary.threshold_factor},
                   {"r", c.boundary.r},
                   {"inner_value", c.boundary.inner_value},
                   {"split_radius", c.boundary.split_radius},
                   {"gradient", c.boundary.gradient},
                   {"path", c.boundary.path}};
  j["gamma"] = c.gamma;
  j["solver"] = {{"kind", to_string(c.solver)}, {"settings", settings_json(c.settings)}};
  j["analysis"] = {{"report", c.analysis.report},
                   {"exponent_points", c.analysis.exponent_points},
                   {"max_points", c.analysis.max_points},
                   {"r_min", c.analysis.r_min},
                   {"r_max", c.analysis.r_max},
                   {"density_radii", c.analysis.density_radii},
                   {"q_minus", c.analysis.q_minus},
                   {"q_plus", c.analysis.q_plus},
                   {"bmo_balls", c.analysis.bmo_balls},
                   {"caccioppoli", c.analysis.caccioppoli},
                   {"gradient_checks", c.analysis.gradient_checks}};
  json p = {{"kind", c.pipeline.kind}};
  if (c.pipeline.kind == "anchored_singularity") {
    p["amplitude"] = c.pipeline.amplitude;
    p["exponent"] = c.pipeline.exponent;
    p["direction"] = c.pipeline.direction;
    p["placement_n"] = c.pipeline.placement_n;
    p["max_placements"] = c.pipeline.max_placements;
    p["max_refinements"] = c.pipeline.max_refinements;
    p["density_r_max"] = c.pipeline.density_r_max;
  } else if (c.pipeline.kind == "scaling") {
    p["samples"] = c.pipeline.samples;
  } else if (c.pipeline.kind == "cusp") {
    p["q_values"] = c.pipeline.q_values;
    p["dims"] = c.pipeline.dims;
    p["pairs"] = c.pipeline.pairs;
  }
  j["pipeline"] = p;
  j["resolutions"] = c.resolutions.empty() ? std::vector<int>{c.grid.n} : c.resolutions;
  j["criteria"] = c.criteria;
  j["seed"] = c.seed;
  return j;
}

void apply_overrides(ExperimentConfig& c, const ConfigOverrides& o) {
  if (o.seed) c.seed = *o.seed;
  if (o.plateau_rule) {
    try {
      c.weight.plateau_rule = to_string(parse_plateau_rule(*o.plateau_rule));
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
  }
}

// ---------------------------------------------------------------------------
// Problem construction

double boundary_value_m(const ExperimentConfig& c) {
  if (c.boundary.threshold_factor > 0.0) return c.boundary.threshold_factor * m_threshold(c.grid.dim, c.weight.q);
  return c.boundary.m;
}

BernoulliWeight build_weight(const ExperimentConfig& c) {
  const int d = c.grid.dim;
  const WeightConfig& w = c.weight;
  const Point center = to_point(w.center, d, "weight.center");
  try {
    if (w.kind == "constant") return BernoulliWeight::constant(w.value);
    if (w.kind == "point_singularity") return BernoulliWeight::point_singularity(center, w.amplitude, w.exponent, w.base);
    if (w.kind == "manifold_distance") return BernoulliWeight::manifold_distance(center, w.normal_axes, w.amplitude, w.exponent);
    if (w.kind == "one_sided") return BernoulliWeight::one_sided(center, w.axis, w.base, w.amplitude, w.exponent);
    return BernoulliWeight::section7(d, w.q, boundary_value_m(c), parse_plateau_rule(w.plateau_rule));
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("weight: ") + e.what());
  }
}

ProblemSetup build_problem(const ExperimentConfig& c, int n) {
  const int d = c.grid.dim;
  const Grid grid = Grid::cube(d, c.grid.lower, c.grid.upper, n);
  const Point center = to_point(c.region.center, d, "region.center");
  Region region = make_box(grid);
  Point ball_center = Point::Constant(d, 0.5 * (c.grid.lower + c.grid.upper));
  double ball_radius = 0.5 * (c.grid.upper - c.grid.lower);
  if (c.region.kind == "ball") {
    region = make_ball(grid, center, c.region.radius);
  } else if (c.region.kind == "annulus") {
    region = make_annulus(grid, center, c.region.inner_radius, c.region.radius);
  }
  if (c.region.kind != "box") {
    ball_center = center;
    ball_radius = c.region.radius;
  }
  if (region.count() == 0) throw ConfigError("region contains no cells");

  CoefficientField A = CoefficientField::identity(region);
  try {
    if (c.coefficients.kind == "diagonal") {
      A = CoefficientField::diagonal(region, to_point(c.coefficients.diagonal, d, "coefficients.diagonal"));
    } else if (c.coefficients.kind == "random_symmetric") {
      A = CoefficientField::random_symmetric(region, c.coefficients.lambda, c.coefficients.Lambda, c.coefficients.seed);
    }
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("coefficients: ") + e.what());
  }

  const double m = boundary_value_m(c);
  const BoundaryConfig& b = c.boundary;
  std::function<double(const Point&)> g;
  if (b.kind == "constant") {
    g = [m](const Point&) { return m; };
  } else if (b.kind == "radial_profile") {
    g = [m, b, d, center](const Point& x) { return radial_profile<double>((x - center).norm(), b.r, d, m); };
  } else if (b.kind == "radial_step") {
    g = [m, b, center](const Point& x) { return (x - center).norm() < b.split_radius ? b.inner_value : m; };
  } else if (b.kind == "affine") {
    const Point grad = to_point(b.gradient, d, "boundary.gradient");
    g = [m, grad](const Point& x) { return m + grad.dot(x); };
  } else {
    std::ifstream in(c.base_dir / b.path, std::ios::binary);
    if (!in) throw ConfigError("cannot open boundary table " + (c.base_dir / b.path).string());
    auto table = std::make_shared<ScalarField>(read_binary(in));
    g = [table](const Point& x) { return interpolate(*table, x); };
  }
  MinimizeProblem p{A, build_weight(c), sample(region, g), c.gamma, c.solver, c.settings};
  return {region, std::move(p), ball_center, ball_radius};
}

// ---------------------------------------------------------------------------
// Runs

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// Interface radii: midpoints of face pairs (positive, zero) measured from `center`.
std::pair<double, double> interface_radii(const ScalarField& u, const Mask& positive, const Point& center) {
  const Grid& g = u.grid();
  double lo = kInf, hi = -kInf;
  for (Index c = 0; c < g.cell_count(); ++c) {
    if (!u.region.contains(c) || !positive[c]) continue;
    for (int k = 0; k < g.dim(); ++k) {
      for (int dir : {-1, 1}) {
        const Index nb = g.neighbor(c, k, dir);
        if (nb < 0 || !u.region.contains(nb) || positive[nb]) continue;
        const double r = (0.5 * (g.center(c) + g.center(nb)) - center).norm();
        lo = std::min(lo, r);
        hi = std::max(hi, r);
      }
    }
  }
  return {lo, hi};
}

ReportSettings report_settings(const ExperimentConfig& c) {
  ReportSettings s;
  const int d = c.grid.dim;
  for (const auto& p : c.analysis.exponent_points) s.exponent_points.push_back(to_point(p, d, "exponent point"));
  s.max_points = c.analysis.max_points;
  s.r_min = c.analysis.r_min;
  s.r_max = c.analysis.r_max;
  s.density_radii = c.analysis.density_radii;
  s.q_minus = c.analysis.q_minus;
  s.q_plus = c.analysis.q_plus;
  s.bmo_balls = c.analysis.bmo_balls;
  s.seed = c.seed;
  return s;
}

struct SolvedRun {
  ProblemSetup setup;
  SolveResult result;
  RunRecord record;
  std::unique_ptr<FreeBoundaryReport> report;
};

// Metrics shared by every pipeline that produces a minimizer.
void solve_metrics(const ExperimentConfig& c, SolvedRun& s) {
  RunRecord& rec = s.record;
  const MinimizeProblem& p = s.setup.problem;
  const SolveResult& res = s.result;
  const MinimizerState& best = res.best;
  auto& m = rec.metrics;
  m["energy"] = best.energy;
  rec.converged = true;
  if (res.smoothed) {
    m["energy_smoothed"] = res.smoothed->energy;
    m["smoothed_iterations"] = static_cast<double>(res.smoothed->iterations);
    rec.converged = rec.converged && res.smoothed->converged;
    if (!res.smoothed->converged) rec.notes.push_back("smoothed: " + res.smoothed->diagnostics);
  }
  if (res.exact) {
    m["energy_exact"] = res.exact->energy;
    m["exact_iterations"] = static_cast<double>(res.exact->iterations);
    rec.converged = rec.converged && res.exact->converged;
    if (!res.exact->converged) rec.notes.push_back("exact: " + res.exact->diagnostics);
    const auto& h = res.exact->history;
    double worst = 0.0;
    for (std::size_t i = 1; i < h.size(); ++i) worst = std::max(worst, h[i] - h[i - 1]);
    const double ref = h.empty() ? 1.0 : std::max(std::abs(h.front()), 1e-300);
    m["exact_max_increase"] = worst / ref;
    m["exact_monotone"] = worst <= 1e-10 * ref ? 1.0 : 0.0;
    rec.series["exact_history"] = h;
  }
  if (res.smoothed && res.exact)
    m["smoothed_exact_rel"] = std::abs(res.smoothed->energy - res.exact->energy) / std::max(std::abs(res.exact->energy), 1e-300);

  const Discretization D(p);
  if (res.smoothed && c.analysis.gradient_checks > 0 && D.g_max > D.gamma) {
    const double span = D.g_max - D.gamma;
    const double eps0 = p.settings.eps0 > 0.0 ? p.settings.eps0 : span;
    const double eps = eps0 * std::ldexp(1.0, -p.settings.continuation_levels);
    if (eps >= 4.0 * D.eta_pos) {
      std::mt19937_64 rng(c.seed ^ 0x9e3779b97f4a7c15ull);
      Eigen::VectorXd v = res.smoothed->u.values;
      for (Index i = 0; i < v.size(); ++i)
        if (D.free[i]) v[i] += 0.01 * span * (static_cast<double>(rng() >> 11) * 0x1.0p-53 - 0.5);
      m["gradient_error"] = smoothed_gradient_error(D, v, eps, c.analysis.gradient_checks, c.seed);
    }
  }

  const Region& region = s.setup.region;
  Index zero = 0;
  for (Index i = 0; i < region.grid().cell_count(); ++i)
    if (region.contains(i) && !best.positive[i]) ++zero;
  m["zero_cells"] = static_cast<double>(zero);
  m["zero_fraction"] = static_cast<double>(zero) / static_cast<double>(region.count());
  m["h"] = region.grid().max_spacing();
  const auto [r1, r2] = interface_radii(best.u, best.positive, s.setup.center);
  m["interface_r1"] = r1;
  m["interface_r2"] = r2;
  m["subsolution_defect"] = subsolution_defect(best.u, p.A);
  m["u_min"] = best.u.values.minCoeff();
  m["u_max"] = best.u.values.maxCoeff();

  const double q = p.w.weak_exponent(region.grid().dim());
  if (c.analysis.caccioppoli) m["caccioppoli"] = caccioppoli_ratio(best.u, p.w, q, s.setup.center, s.setup.radius);

  if (c.analysis.report) {
    s.report = std::make_unique<FreeBoundaryReport>(analyze_free_boundary(best.u, p.gamma, p.w, report_settings(c)));
    m["free_boundary_points"] = static_cast<double>(s.report->points.size());
    m["bmo"] = s.report->bmo;
    m["l2"] = s.report->l2;
    m["bmo_over_l2"] = s.report->l2 > 0.0 ? s.report->bmo / s.report->l2 : 0.0;
  }
}

void section7_metrics(const ExperimentConfig& c, SolvedRun& s) {
  auto& m = s.record.metrics;
  const int d = c.grid.dim;
  const RadialConfig rc{d, c.weight.q, boundary_value_m(c), parse_plateau_rule(c.weight.plateau_rule)};
  const BernoulliWeight w = rc.weight();
  const RadialOptimum opt = minimize_radial(rc, w);
  m["m"] = rc.m;
  m["m_threshold"] = m_threshold(d, rc.q);
  m["radial_r"] = opt.r;
  m["radial_energy"] = opt.energy;
  m["constant_energy"] = constant_state_energy(rc, w);
  m["r_star"] = r_star<double>(d);
  m["r_upper"] = r_upper<double>(d);
  const MinimizerState& best = s.result.best;
  const MinimizeProblem& p = s.setup.problem;
  m["constant_energy_discrete"] = energy(ScalarField(s.setup.region, rc.m), p);

  // growth at free boundary points on |x| = r_*
  const double h = s.setup.region.grid().max_spacing();
  const double rs = r_star<double>(d);
  int count = 0;
  double worst_alpha = -kInf;
  bool monotone = true;
  for (const Point& x : extract_free_boundary(best.u, p.gamma)) {
    if (std::abs((x - s.setup.center).norm() - rs) > h) continue;
    ++count;
    try {
      const ExponentFit f = fit_lower_exponent(best.u, x, c.analysis.r_min, c.analysis.r_max);
      worst_alpha = std::max(worst_alpha, f.alpha);
      std::vector<double> radii(f.radii.end() - std::min<std::ptrdiff_t>(3, f.radii.size()), f.radii.end());
      const std::vector<double> slopes = shell_slopes(best.u, x, radii);
      for (std::size_t i = 1; i < slopes.size(); ++i) monotone = monotone && slopes[i] > slopes[i - 1];
    } catch (const std::invalid_argument& e) {
      monotone = false;
      s.record.notes.push_back(std::string("r_* point fit: ") + e.what());
    }
  }
  m["rstar_points"] = count;
  m["rstar_max_lower_alpha"] = count > 0 ? worst_alpha : kInf;
  m["rstar_slopes_increase"] = count > 0 && monotone ? 1.0 : 0.0;
}

SolvedRun solve_config(const ExperimentConfig& c, int n) {
  ProblemSetup setup = build_problem(c, n);
  SolveResult result = minimize(setup.problem);
  SolvedRun s{std::move(setup), std::move(result), {}, nullptr};
  s.record.config = c.name;
  s.record.n = n;
  s.record.dim = c.grid.dim;
  solve_metrics(c, s);
  if (c.weight.kind == "section7") section7_metrics(c, s);
  return s;
}

std::optional<Point> nearest(const std::vector<Point>& pts, const Point& x) {
  std::optional<Point> best;
  double bd = kInf;
  for (const Point& p : pts) {
    const double dd = (p - x).norm();
    if (dd < bd) {
      bd = dd;
      best = p;
    }
  }
  return best;
}

// x0 is moved to the nearest computed free boundary point until it lies within one cell diagonal of it.
SolvedRun anchored_run(const ExperimentConfig& c, int n) {
  const int d = c.grid.dim;
  const PipelineConfig& pc = c.pipeline;
  const int np = pc.placement_n > 0 ? pc.placement_n : n;
  std::vector<std::string> notes;

  ExperimentConfig base = c;
  base.analysis.report = false;
  base.analysis.caccioppoli = false;
  base.analysis.gradient_checks = 0;
  SolvedRun first = solve_config(base, np);
  const Point dir = to_point(pc.direction, d, "direction").normalized();
  const Point center = first.setup.center;
  std::optional<Point> x0;
  double best_perp = kInf;
  for (const Point& x : extract_free_boundary(first.result.best.u, c.gamma)) {
    const Point off = x - center;
    const double along = off.dot(dir);
    if (along <= 0.0) continue;
    const double perp = (off - along * dir).norm();
    if (perp < best_perp) {
      best_perp = perp;
      x0 = x;
    }
  }
  if (!x0) throw std::runtime_error("anchored singularity: the base problem has no free boundary along the ray");

  ExperimentConfig with = c;
  with.weight.kind = "point_singularity";
  with.weight.base = c.weight.value;
  with.weight.amplitude = pc.amplitude;
  with.weight.exponent = pc.exponent;
  int placements = 0;
  double gap = kInf;
  auto place = [&](int grid_n, int rounds, bool final) -> std::optional<SolvedRun> {
    std::optional<SolvedRun> last;
    const double tol = std::sqrt(static_cast<double>(d)) * (c.grid.upper - c.grid.lower) / grid_n * (1.0 + 1e-9);
    for (int k = 0; k < rounds; ++k) {
      ExperimentConfig trial = final ? with : base;
      if (!final) {
        trial.weight = with.weight;
      }
      trial.weight.center.assign(x0->data(), x0->data() + d);
      SolvedRun run = final ? solve_config(trial, grid_n) : [&] {
        ExperimentConfig quick = trial;
        quick.analysis.report = false;
        quick.analysis.caccioppoli = false;
        quick.analysis.gradient_checks = 0;
        return solve_config(quick, grid_n);
      }();
      ++placements;
      const auto y = nearest(extract_free_boundary(run.result.best.u, c.gamma), *x0);
      gap = y ? (*y - *x0).norm() : kInf;
      const bool done = gap <= tol;
      if (!done && y && k + 1 < rounds) x0 = *y;
      last = std::move(run);
      if (done) break;
    }
    return last;
  };
  if (np != n) place(np, pc.max_placements, false);
  std::optional<SolvedRun> fin = place(n, np != n ? pc.max_refinements + 1 : pc.max_placements, true);
  SolvedRun s = std::move(*fin);
  auto& m = s.record.metrics;
  for (int k = 0; k < d; ++k) m["anchor_x" + std::to_string(k)] = (*x0)[k];
  const double h = s.setup.region.grid().max_spacing();
  m["anchor_gap"] = gap;
  m["anchor_placed"] = gap <= std::sqrt(static_cast<double>(d)) * h * (1.0 + 1e-9) ? 1.0 : 0.0;
  m["anchor_solves"] = placements + 1;
  const MinimizerState& best = s.result.best;
  try {
    const ExponentFit f = fit_growth_exponent(best.u, *x0, c.analysis.r_min, c.analysis.r_max);
    m["alpha"] = f.alpha;
    m["alpha_residual"] = f.residual;
    s.record.series["alpha_radii"] = f.radii;
    s.record.series["alpha_values"] = f.values;
  } catch (const std::invalid_argument& e) {
    m["alpha"] = std::numeric_limits<double>::quiet_NaN();
    m["alpha_residual"] = std::numeric_limits<double>::quiet_NaN();
    s.record.notes.push_back(std::string("anchor fit: ") + e.what());
  }
  if (const auto y = nearest(extract_free_boundary(best.u, c.gamma), *x0)) {
    try {
      const ExponentFit f = fit_growth_exponent(best.u, *y, c.analysis.r_min, c.analysis.r_max);
      m["alpha_nearest"] = f.alpha;
      m["alpha_nearest_residual"] = f.residual;
    } catch (const std::invalid_argument&) {
    }
  }

  // density of the positive phase around every free boundary point
  const double q = static_cast<double>(d) / pc.exponent;
  const std::vector<double> radii = dyadic_radii(8.0 * h, pc.density_r_max, s.setup.region.grid());
  double lo = kInf, hi = -kInf, ratio = 0.0;
  Index points = 0;
  for (const Point& x : extract_free_boundary(best.u, c.gamma)) {
    const DensityTable t = density_ratios(best.u, x, c.gamma, radii, q, q);
    double plo = kInf, phi = -kInf;
    for (const DensityRow& row : t.rows) {
      plo = std::min(plo, row.positive_fraction);
      phi = std::max(phi, row.positive_fraction);
    }
    if (t.rows.empty()) continue;
    ++points;
    lo = std::min(lo, plo);
    hi = std::max(hi, phi);
    ratio = std::max(ratio, plo > 0.0 ? phi / plo : kInf);
  }
  m["density_points"] = static_cast<double>(points);
  m["density_scales"] = static_cast<double>(radii.size());
  m["density_min_fraction"] = points > 0 ? lo : std::numeric_limits<double>::quiet_NaN();
  m["density_max_fraction"] = points > 0 ? hi : std::numeric_limits<double>::quiet_NaN();
  m["density_max_ratio"] = points > 0 ? ratio : std::numeric_limits<double>::quiet_NaN();
  for (auto& note : notes) s.record.notes.push_back(note);
  return s;
}

// Smooth field with both phases, used for the rescaling identity.
double scaling_field(const Point& x) {
  double v = 0.6 * x[0] + 0.1;
  for (Index k = 1; k < x.size(); ++k) v += 0.25 * std::sin(2.0 * x[k]) / static_cast<double>(x.size() - 1);
  return v;
}

RunRecord scaling_run(const ExperimentConfig& c, int n) {
  RunRecord rec;
  rec.config = c.name;
  rec.n = n;
  rec.dim = c.grid.dim;
  const int d = c.grid.dim;
  ProblemSetup S = build_problem(c, n);
  std::mt19937_64 rng(c.seed);
  auto uni = [&](double a, double b) { return a + (b - a) * (static_cast<double>(rng() >> 11) * 0x1.0p-53); };
  std::vector<double> disc;
  const double half = 0.5 * (c.grid.upper - c.grid.lower);
  const Point mid = Point::Constant(d, 0.5 * (c.grid.upper + c.grid.lower));
  for (int k = 0; k < c.pipeline.samples; ++k) {
    const double r = uni(0.35, 0.6) * half;
    Point x0(d);
    for (int i = 0; i < d; ++i) x0[i] = mid[i] + uni(-1.0, 1.0) * (0.95 * half - r);
    const double kappa = uni(0.5, 2.0);
    const double gamma = uni(-0.2, 0.2);
    const MinimizeProblem local = restrict_problem(S.problem, x0, r);
    const double J_local = energy(sample(local.region(), scaling_field), local);
    const MinimizeProblem tilde = rescale_problem(S.problem, x0, r, kappa, gamma, scaling_field, n);
    const double J_tilde = energy(tilde.g, tilde);
    const double target = kappa * kappa * std::pow(r, 2.0 - d) * J_local;
    disc.push_back(std::abs(J_tilde - target) / std::max(std::abs(target), 1e-300));
  }
  double mx = 0.0, mean = 0.0;
  for (double v : disc) {
    mx = std::max(mx, v);
    mean += v / static_cast<double>(disc.size());
  }
  rec.metrics["scaling_max"] = mx;
  rec.metrics["scaling_mean"] = mean;
  rec.series["scaling_discrepancy"] = disc;
  return rec;
}

RunRecord cusp_run(const ExperimentConfig& c) {
  RunRecord rec;
  rec.config = c.name;
  double sym = 0.0, pair = 0.0;
  for (int d : c.pipeline.dims) {
    for (double q : c.pipeline.q_values) {
      const double P = cusp_exponent(q, q, d);
      sym = std::max(sym, std::abs(P - 1.0));
      rec.series["symmetric_d" + std::to_string(d)].push_back(P);
      if (!cusp_theorem_applies(q, q, d))
        rec.notes.push_back("q=" + format_number(q) + ", d=" + std::to_string(d) + " lies outside the theorem's range");
    }
  }
  for (const auto& row : c.pipeline.pairs) {
    const double P = cusp_exponent(row[0], row[1], static_cast<int>(row[2]));
    pair = std::max(pair, std::abs(P - row[3]));
    rec.series["pairs"].push_back(P);
  }
  rec.metrics["cusp_symmetric_error"] = sym;
  rec.metrics["cusp_pair_error"] = pair;
  return rec;
}

void write_text(const fs::path& p, const std::string& s) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  out << s;
}

}  // namespace

void write_run_artifacts(const fs::path& dir, const ExperimentConfig& c, int n, const MinimizerState& state,
                         const FreeBoundaryReport* report) {
  fs::create_directories(dir);
  {
    std::ofstream out(dir / "solution.bin", std::ios::binary);
    write_binary(state.u, out);
  }
  {
    std::ofstream out(dir / "solution_slice.csv", std::ios::binary);
    write_csv_slice(state.u, out);
  }
  json s;
  s["energy"] = finite_or_string(state.energy);
  s["iterations"] = state.iterations;
  s["converged"] = state.converged;
  s["solver"] = state.solver;
  s["diagnostics"] = state.diagnostics;
  json hist = json::array();
  for (double v : state.history) hist.push_back(finite_or_string(v));
  s["history"] = hist;
  Index positive = 0;
  for (auto b : state.positive) positive += b ? 1 : 0;
  s["positive_cells"] = positive;
  s["n"] = n;
  s["settings"] = settings_json(c.settings);
  json cfg = to_json(c);
  cfg["grid"]["n"] = n;
  s["config"] = cfg;
  write_text(dir / "state.json", s.dump(2) + "\n");
  write_text(dir / "config_resolved.json", cfg.dump(2) + "\n");
  if (report) {
    std::ostringstream js, cs;
    write_report_json(*report, js);
    write_report_csv(*report, cs);
    write_text(dir / "report.json", js.str());
    write_text(dir / "report.csv", cs.str());
  }
}

void write_summary_csv(const std::vector<RunRecord>& runs, std::ostream& out) {
  std::set<std::string> keys;
  for (const auto& r : runs)
    for (const auto& [k, v] : r.metrics) keys.insert(k);
  out << "config,n,dim,converged";
  for (const auto& k : keys) out << ',' << k;
  out << '\n';
  for (const auto& r : runs) {
    out << r.config << ',' << r.n << ',' << r.dim << ',' << (r.converged ? 1 : 0);
    for (const auto& k : keys) {
      out << ',';
      const auto it = r.metrics.find(k);
      if (it != r.metrics.end()) out << format_number(it->second);
    }
    out << '\n';
  }
}

ExperimentResult run_experiment(const ExperimentConfig& c, const std::optional<fs::path>& output) {
  ExperimentResult result;
  result.config = c;
  const std::vector<int> resolutions = c.resolutions.empty() ? std::vector<int>{c.grid.n} : c.resolutions;
  const fs::path dir = output ? *output / c.name : fs::path();
  if (output) fs::create_directories(dir);
  if (c.pipeline.kind == "cusp") {
    result.runs.push_back(cusp_run(c));
  } else {
    for (int n : resolutions) {
      const auto t0 = std::chrono::steady_clock::now();
      if (c.pipeline.kind == "scaling") {
        RunRecord rec = scaling_run(c, n);
        rec.seconds = seconds_since(t0);
        result.runs.push_back(std::move(rec));
        continue;
      }
      SolvedRun s = c.pipeline.kind == "anchored_singularity" ? anchored_run(c, n) : solve_config(c, n);
      s.record.seconds = seconds_since(t0);
      if (output) {
        ExperimentConfig echo = c;
        if (c.pipeline.kind == "anchored_singularity") {
          echo.weight.kind = "point_singularity";
          echo.weight.base = c.weight.value;
          echo.weight.amplitude = c.pipeline.amplitude;
          echo.weight.exponent = c.pipeline.exponent;
          echo.weight.center.clear();
          for (int k = 0; k < c.grid.dim; ++k) echo.weight.center.push_back(s.record.metrics["anchor_x" + std::to_string(k)]);
        }
        write_run_artifacts(dir / ("n" + std::to_string(n)), echo, n, s.result.best, s.report.get());
      }
      result.runs.push_back(std::move(s.record));
    }
  }
  for (const auto& r : result.runs)
    if (!r.converged) result.exit_status = 2;
  if (output) {
    std::ostringstream os;
    write_summary_csv(result.runs, os);
    write_text(dir / "summary.csv", os.str());
    write_text(dir / "config_resolved.json", to_json(c).dump(2) + "\n");
  }
  return result;
}

void report_run(const fs::path& run_dir) {
  const fs::path cfg_path = run_dir / "config_resolved.json";
  const ExperimentConfig c = load_config(cfg_path);
  std::ifstream in(run_dir / "solution.bin", std::ios::binary);
  if (!in) throw ConfigError("missing solution.bin in " + run_dir.string());
  ScalarField u = read_binary(in);
  const BernoulliWeight w = build_weight(c);
  // cells outside the mask are stored as NaN
  for (Index i = 0; i < u.values.size(); ++i)
    if (!u.region.contains(i)) u.values[i] = 0.0;
  const FreeBoundaryReport rep = analyze_free_boundary(u, c.gamma, w, report_settings(c));
  std::ostringstream js, cs;
  write_report_json(rep, js);
  write_report_csv(rep, cs);
  write_text(run_dir / "report.json", js.str());
  write_text(run_dir / "report.csv", cs.str());
}

json radial_scan(const ExperimentConfig& c, const std::optional<fs::path>& output) {
  if (c.weight.kind != "section7") throw ConfigError("radial-scan needs a section7 weight");
  const RadialConfig rc{c.grid.dim, c.weight.q, boundary_value_m(c), parse_plateau_rule(c.weight.plateau_rule)};
  const BernoulliWeight w = rc.weight();
  const RadialOptimum opt = minimize_radial(rc, w);
  json j;
  j["d"] = rc.d;
  j["q"] = rc.q;
  j["m"] = rc.m;
  j["plateau_rule"] = to_string(rc.plateau_rule);
  j["r_star"] = r_star<double>(rc.d);
  j["r_upper"] = r_upper<double>(rc.d);
  j["tau_r_star"] = tau(r_star<double>(rc.d), rc);
  j["m_threshold"] = m_threshold(rc.d, rc.q);
  j["constant_energy"] = constant_state_energy(rc, w);
  j["radial_upper_energy"] = radial_energy(r_upper<double>(rc.d), rc, w);
  j["r_opt"] = opt.r;
  j["energy_opt"] = opt.energy;
  j["at_boundary"] = opt.at_boundary;
  if (output) {
    const fs::path dir = *output / c.name;
    fs::create_directories(dir);
    std::ostringstream os;
    write_radial_scan(opt, os);
    write_text(dir / "radial_scan.csv", os.str());
    write_text(dir / "radial.json", j.dump(2) + "\n");
  }
  return j;
}

}  // namespace bernoulli
