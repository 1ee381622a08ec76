#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <limits>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "bernoulli/experiment.hpp"

namespace bernoulli {

using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Tolerances of the acceptance criteria.
constexpr double kA1EnergySlack = 1.03;
constexpr double kA1Seconds = 300.0;
constexpr double kA2EnergyRel = 0.01;
constexpr double kA2ZeroFraction = 0.01;
constexpr double kA3AlphaLow = 0.40;
constexpr double kA3AlphaHigh = 0.65;
constexpr double kA3Residual = 0.05;
constexpr double kA4Alpha = 0.85;
constexpr double kA5FractionLow = 0.02;
constexpr double kA5FractionHigh = 0.98;
constexpr double kA5Ratio = 5.0;
constexpr int kA5Scales = 3;
constexpr double kA6Tolerance = 1e-12;
constexpr double kA7Ratio = 2.0;
constexpr int kA8Minimizers = 25;
constexpr double kA8Growth = 1.5;
constexpr double kA9EnergyRel = 0.05;
constexpr double kA9Gradient = 1e-6;
constexpr double kA10Coarse = 0.02;
constexpr double kA10Decay = 0.6;

double metric(const RunRecord& r, const std::string& k) {
  const auto it = r.metrics.find(k);
  return it == r.metrics.end() ? kNaN : it->second;
}

bool tagged(const ExperimentResult& e, const std::string& id) {
  return std::find(e.config.criteria.begin(), e.config.criteria.end(), id) != e.config.criteria.end();
}

std::vector<const ExperimentResult*> tagged_results(const std::vector<ExperimentResult>& results, const std::string& id) {
  std::vector<const ExperimentResult*> out;
  for (const auto& e : results)
    if (tagged(e, id)) out.push_back(&e);
  return out;
}

std::string fmt(double v) { return format_number(v); }

// Appends "what" to the detail and returns ok.
bool check(CriterionResult& c, bool ok, const std::string& what) {
  if (!c.detail.empty()) c.detail += "; ";
  c.detail += (ok ? "" : "FAILED ") + what;
  return ok;
}

void a1(CriterionResult& c, const std::vector<const ExperimentResult*>& runs) {
  bool pass = true;
  for (const auto* e : runs) {
    for (const auto& r : e->runs) {
      const double E = std::isnan(metric(r, "energy_exact")) ? metric(r, "energy") : metric(r, "energy_exact");
      const double radial = metric(r, "radial_energy");
      const double rs = metric(r, "r_star"), h = metric(r, "h");
      const double r1 = metric(r, "interface_r1"), r2 = metric(r, "interface_r2");
      c.metrics["energy"] = E;
      c.metrics["radial_energy"] = radial;
      c.metrics["r1"] = r1;
      c.metrics["r2"] = r2;
      c.metrics["seconds"] = r.seconds;
      pass &= check(c, E <= kA1EnergySlack * radial, "E=" + fmt(E) + " <= 1.03*" + fmt(radial));
      pass &= check(c, metric(r, "zero_cells") > 0, "zero cells " + fmt(metric(r, "zero_cells")));
      pass &= check(c, r1 <= rs + h && r2 >= rs - h,
                    "r1=" + fmt(r1) + " <= " + fmt(rs + h) + " and r2=" + fmt(r2) + " >= " + fmt(rs - h));
      pass &= check(c, r.seconds < kA1Seconds, "runtime " + fmt(r.seconds) + " s");
    }
  }
  c.pass = pass;
}

void a2(CriterionResult& c, const std::vector<const ExperimentResult*>& runs) {
  bool pass = true, above = false, below = false;
  for (const auto* e : runs) {
    const double factor = e->config.boundary.threshold_factor;
    for (const auto& r : e->runs) {
      if (factor > 1.0) {
        above = true;
        const double E = metric(r, "energy"), Ec = metric(r, "constant_energy_discrete");
        const double rel = std::abs(Ec - E) / std::abs(E);
        c.metrics["above_zero_fraction"] = metric(r, "zero_fraction");
        c.metrics["above_energy_rel"] = rel;
        pass &= check(c, metric(r, "zero_cells") == 0 || rel <= kA2EnergyRel,
                      "m above threshold: zero fraction " + fmt(metric(r, "zero_fraction")) + ", |J(m)-E|/E " + fmt(rel));
      } else {
        below = true;
        c.metrics["below_zero_fraction"] = metric(r, "zero_fraction");
        pass &= check(c, metric(r, "zero_fraction") >= kA2ZeroFraction,
                      "m below threshold: zero fraction " + fmt(metric(r, "zero_fraction")));
      }
    }
  }
  c.pass = pass && check(c, above && below, "both sides of the threshold run");
}

void a3(CriterionResult& c, const std::vector<const ExperimentResult*>& runs) {
  bool pass = true;
  for (const auto* e : runs) {
    for (const auto& r : e->runs) {
      const double a = metric(r, "alpha"), res = metric(r, "alpha_residual");
      c.metrics["alpha"] = a;
      c.metrics["residual"] = res;
      c.metrics["anchor_gap"] = metric(r, "anchor_gap");
      pass &= check(c, metric(r, "anchor_placed") == 1.0, "anchor gap " + fmt(metric(r, "anchor_gap")));
      pass &= check(c, a >= kA3AlphaLow && a <= kA3AlphaHigh, "alpha " + fmt(a) + " in [0.40, 0.65]");
      pass &= check(c, res <= kA3Residual, "fit residual " + fmt(res));
    }
  }
  c.pass = pass;
}

void a4(CriterionResult& c, const std::vector<const ExperimentResult*>& runs) {
  bool pass = true;
  for (const auto* e : runs) {
    for (const auto& r : e->runs) {
      const double pts = metric(r, "rstar_points"), a = metric(r, "rstar_max_lower_alpha");
      c.metrics["points"] = pts;
      c.metrics["max_lower_alpha"] = a;
      pass &= check(c, pts > 0, fmt(pts) + " free boundary points on |x| = r_*");
      pass &= check(c, a <= kA4Alpha, "max lower exponent " + fmt(a));
      pass &= check(c, metric(r, "rstar_slopes_increase") == 1.0, "shell slopes increase towards the point");
    }
  }
  c.pass = pass;
}

void a5(CriterionResult& c, const std::vector<const ExperimentResult*>& runs) {
  bool pass = true;
  for (const auto* e : runs) {
    for (const auto& r : e->runs) {
      const double lo = metric(r, "density_min_fraction"), hi = metric(r, "density_max_fraction");
      const double ratio = metric(r, "density_max_ratio"), scales = metric(r, "density_scales");
      c.metrics["min_fraction"] = lo;
      c.metrics["max_fraction"] = hi;
      c.metrics["max_ratio"] = ratio;
      c.metrics["points"] = metric(r, "density_points");
      pass &= check(c, metric(r, "density_points") > 0 && scales >= kA5Scales,
                    fmt(metric(r, "density_points")) + " points, " + fmt(scales) + " scales");
      pass &= check(c, lo >= kA5FractionLow && hi <= kA5FractionHigh,
                    "positive fraction in [" + fmt(lo) + ", " + fmt(hi) + "]");
      pass &= check(c, ratio <= kA5Ratio, "per-point max/min " + fmt(ratio));
    }
  }
  c.pass = pass;
}

void a6(CriterionResult& c, const std::vector<const ExperimentResult*>& runs) {
  bool pass = true;
  for (const auto* e : runs) {
    for (const auto& r : e->runs) {
      const double s = metric(r, "cusp_symmetric_error"), p = metric(r, "cusp_pair_error");
      c.metrics["symmetric_error"] = s;
      c.metrics["pair_error"] = p;
      pass &= check(c, s <= kA6Tolerance, "|P(q,q,d) - 1| " + fmt(s));
      pass &= check(c, p <= kA6Tolerance, "pair error " + fmt(p));
    }
  }
  c.pass = pass;
}

void a7(CriterionResult& c, const std::vector<const ExperimentResult*>& runs) {
  bool pass = true;
  for (const auto* e : runs) {
    double lo = kInf, hi = 0.0;
    for (const auto& r : e->runs) {
      const double v = metric(r, "bmo_over_l2");
      c.metrics["bmo_over_l2_n" + std::to_string(r.n)] = v;
      if (!std::isfinite(v) || v <= 0.0) {
        pass &= check(c, false, "bmo/l2 at n=" + std::to_string(r.n) + " is " + fmt(v));
        continue;
      }
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    pass &= check(c, e->runs.size() >= 2, e->config.name + ": " + std::to_string(e->runs.size()) + " resolutions");
    if (lo <= hi) pass &= check(c, hi / lo <= kA7Ratio, e->config.name + ": bmo/l2 spread " + fmt(hi / lo));
  }
  c.pass = pass;
}

// The suite maximum at each resolution step (first, second, ... resolution of every config)
// must not grow by more than kA8Growth from one step to the next.
void a8(CriterionResult& c, const std::vector<const ExperimentResult*>& runs) {
  bool pass = true;
  int count = 0;
  std::map<std::size_t, double> max_by_step;
  for (const auto* e : runs) {
    std::vector<int> ns;
    for (const auto& r : e->runs) ns.push_back(r.n);
    std::sort(ns.begin(), ns.end());
    for (const auto& r : e->runs) {
      const double v = metric(r, "caccioppoli");
      if (std::isnan(v)) continue;
      ++count;
      if (!std::isfinite(v)) pass &= check(c, false, e->config.name + " n=" + std::to_string(r.n) + " ratio not finite");
      const auto step = static_cast<std::size_t>(std::lower_bound(ns.begin(), ns.end(), r.n) - ns.begin());
      max_by_step[step] = std::max(max_by_step[step], v);
    }
  }
  c.metrics["minimizers"] = count;
  double worst = 0.0;
  for (const auto& [step, v] : max_by_step) {
    worst = std::max(worst, v);
    c.metrics["max_ratio_step" + std::to_string(step)] = v;
    const auto next = max_by_step.find(step + 1);
    if (next == max_by_step.end() || v <= 0.0) continue;
    const double growth = next->second / v;
    c.metrics["growth_step" + std::to_string(step)] = growth;
    pass &= check(c, growth <= kA8Growth, "suite max grows by " + fmt(growth) + " at resolution step " + std::to_string(step + 1));
  }
  c.metrics["max_ratio"] = worst;
  pass &= check(c, count >= kA8Minimizers, std::to_string(count) + " minimizers");
  check(c, true, "max ratio " + fmt(worst));
  c.pass = pass;
}

void a9(CriterionResult& c, const std::vector<const ExperimentResult*>& runs) {
  bool pass = true;
  double gap = 0.0, grad = 0.0;
  int count = 0;
  for (const auto* e : runs) {
    for (const auto& r : e->runs) {
      ++count;
      const std::string who = e->config.name + " n=" + std::to_string(r.n);
      const double g = metric(r, "smoothed_exact_rel"), ge = metric(r, "gradient_error");
      if (!(g <= kA9EnergyRel)) pass &= check(c, false, who + " smoothed/exact gap " + fmt(g));
      if (metric(r, "exact_monotone") != 1.0)
        pass &= check(c, false, who + " exact energy increased by " + fmt(metric(r, "exact_max_increase")));
      if (!(ge <= kA9Gradient)) pass &= check(c, false, who + " gradient error " + fmt(ge));
      if (std::isfinite(g)) gap = std::max(gap, g);
      if (std::isfinite(ge)) grad = std::max(grad, ge);
    }
  }
  c.metrics["runs"] = count;
  c.metrics["max_energy_gap"] = gap;
  c.metrics["max_gradient_error"] = grad;
  pass &= check(c, count > 0, std::to_string(count) + " runs");
  check(c, true, "max gap " + fmt(gap) + ", max gradient error " + fmt(grad));
  c.pass = pass;
}

void a10(CriterionResult& c, const std::vector<const ExperimentResult*>& runs) {
  bool pass = true;
  for (const auto* e : runs) {
    std::map<int, const RunRecord*> by_n;
    for (const auto& r : e->runs) by_n[r.n] = &r;
    if (by_n.size() < 2) {
      pass &= check(c, false, e->config.name + " needs two resolutions");
      continue;
    }
    const RunRecord& coarse = *by_n.begin()->second;
    c.metrics["coarse_max"] = metric(coarse, "scaling_max");
    pass &= check(c, metric(coarse, "scaling_max") <= kA10Coarse,
                  "max discrepancy at n=" + std::to_string(coarse.n) + " " + fmt(metric(coarse, "scaling_max")));
    for (auto it = by_n.begin(); std::next(it) != by_n.end(); ++it) {
      const RunRecord& a = *it->second;
      const RunRecord& b = *std::next(it)->second;
      const double ratio = metric(b, "scaling_mean") / metric(a, "scaling_mean");
      c.metrics["decay_n" + std::to_string(a.n)] = ratio;
      pass &= check(c, ratio <= kA10Decay, "mean discrepancy ratio n=" + std::to_string(a.n) + "->" +
                                               std::to_string(b.n) + " " + fmt(ratio));
    }
  }
  c.pass = pass;
}

}  // namespace

CriterionResult evaluate_criterion(const std::string& id, const std::vector<ExperimentResult>& results) {
  CriterionResult c;
  c.id = id;
  const auto runs = tagged_results(results, id);
  if (runs.empty()) {
    c.detail = "no run feeds this criterion";
    return c;
  }
  c.evaluated = true;
  if (id == "A1") a1(c, runs);
  else if (id == "A2") a2(c, runs);
  else if (id == "A3") a3(c, runs);
  else if (id == "A4") a4(c, runs);
  else if (id == "A5") a5(c, runs);
  else if (id == "A6") a6(c, runs);
  else if (id == "A7") a7(c, runs);
  else if (id == "A8") a8(c, runs);
  else if (id == "A9") a9(c, runs);
  else if (id == "A10") a10(c, runs);
  else throw std::invalid_argument("unknown criterion " + id);
  return c;
}

std::vector<CriterionResult> evaluate_criteria(const std::vector<ExperimentResult>& results) {
  std::set<std::string> ids;
  for (const auto& e : results)
    for (const auto& id : e.config.criteria) ids.insert(id);
  std::vector<std::string> ordered(ids.begin(), ids.end());
  std::sort(ordered.begin(), ordered.end(), [](const std::string& a, const std::string& b) {
    return std::stoi(a.substr(1)) < std::stoi(b.substr(1));
  });
  std::vector<CriterionResult> out;
  for (const auto& id : ordered) out.push_back(evaluate_criterion(id, results));
  return out;
}

void write_acceptance(const std::vector<CriterionResult>& criteria, const fs::path& dir) {
  fs::create_directories(dir);
  json arr = json::array();
  for (const auto& c : criteria) {
    json m = json::object();
    for (const auto& [k, v] : c.metrics) m[k] = std::isfinite(v) ? json(v) : json(format_number(v));
    arr.push_back({{"id", c.id}, {"pass", c.pass}, {"evaluated", c.evaluated}, {"detail", c.detail}, {"metrics", m}});
  }
  std::ofstream(dir / "acceptance.json") << arr.dump(2) << '\n';
  std::ofstream csv(dir / "acceptance.csv");
  csv << "id,pass,evaluated,detail\n";
  for (const auto& c : criteria) {
    std::string d = c.detail;
    std::replace(d.begin(), d.end(), '"', '\'');
    csv << c.id << ',' << (c.pass ? 1 : 0) << ',' << (c.evaluated ? 1 : 0) << ",\"" << d << "\"\n";
  }
}

SuiteResult run_suite(const fs::path& dir, int jobs, const std::optional<fs::path>& output,
                      const ConfigOverrides& overrides) {
  SuiteResult suite;
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.is_regular_file() && entry.path().extension() == ".json") files.push_back(entry.path());
  std::sort(files.begin(), files.end());

  std::vector<ExperimentConfig> configs;
  for (const auto& f : files) {
    try {
      configs.push_back(load_config(f));
      apply_overrides(configs.back(), overrides);
    } catch (const ConfigError& e) {
      suite.config_errors.push_back(f.filename().string() + ": " + e.what());
    }
  }

  std::vector<std::optional<ExperimentResult>> slots(configs.size());
  std::atomic<std::size_t> next{0};
  std::mutex mu;
  auto worker = [&] {
    for (std::size_t i = next++; i < configs.size(); i = next++) {
      ExperimentResult r;
      try {
        r = run_experiment(configs[i], output);
      } catch (const std::exception& e) {
        r.config = configs[i];
        r.exit_status = 2;
        RunRecord rec;
        rec.config = configs[i].name;
        rec.converged = false;
        rec.notes.push_back(e.what());
        r.runs.push_back(rec);
      }
      std::lock_guard<std::mutex> lock(mu);
      slots[i] = std::move(r);
    }
  };
  const int n_threads = std::max(1, std::min<int>(jobs, static_cast<int>(configs.size())));
  std::vector<std::thread> threads;
  for (int t = 1; t < n_threads; ++t) threads.emplace_back(worker);
  worker();
  for (auto& t : threads) t.join();

  for (auto& s : slots) {
    suite.exit_status = std::max(suite.exit_status, s->exit_status);
    suite.experiments.push_back(std::move(*s));
  }
  if (!suite.config_errors.empty()) suite.exit_status = 1;
  suite.criteria = evaluate_criteria(suite.experiments);
  if (output) {
    fs::create_directories(*output);
    std::vector<RunRecord> all;
    for (const auto& e : suite.experiments) all.insert(all.end(), e.runs.begin(), e.runs.end());
    std::ofstream csv(*output / "summary.csv");
    write_summary_csv(all, csv);
    if (!suite.criteria.empty()) write_acceptance(suite.criteria, *output);
  }
  return suite;
}

}  // namespace bernoulli
