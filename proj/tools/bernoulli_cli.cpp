#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "bernoulli/experiment.hpp"

namespace fs = std::filesystem;
using namespace bernoulli;

namespace {

struct Options {
  int jobs = 1;
  std::string output;
  std::uint64_t seed = 0;
  std::string plateau_rule;
  std::string target;
};

std::optional<fs::path> output_dir(const Options& o) {
  if (o.output.empty()) return std::nullopt;
  return fs::path(o.output);
}

ConfigOverrides overrides(const Options& o, const CLI::App& app) {
  ConfigOverrides ov;
  if (app.count("--seed") > 0) ov.seed = o.seed;
  if (!o.plateau_rule.empty()) ov.plateau_rule = o.plateau_rule;
  return ov;
}

void print_runs(const ExperimentResult& r) {
  for (const auto& run : r.runs) {
    std::cout << r.config.name << " n=" << run.n << (run.converged ? " converged" : " NOT converged");
    const auto e = run.metrics.find("energy");
    if (e != run.metrics.end()) std::cout << " energy=" << format_number(e->second);
    std::cout << '\n';
    for (const auto& note : run.notes) std::cerr << "  " << note << '\n';
  }
}

int solve(const Options& o, const CLI::App& app) {
  ExperimentConfig c = load_config(o.target);
  apply_overrides(c, overrides(o, app));
  const ExperimentResult r = run_experiment(c, output_dir(o));
  print_runs(r);
  return r.exit_status;
}

int suite(const Options& o, const CLI::App& app) {
  const SuiteResult s = run_suite(o.target, o.jobs, output_dir(o), overrides(o, app));
  for (const auto& e : s.config_errors) std::cerr << "config error: " << e << '\n';
  for (const auto& r : s.experiments) print_runs(r);
  for (const auto& c : s.criteria)
    std::cout << c.id << ' ' << (c.pass ? "PASS" : "FAIL") << ' ' << c.detail << '\n';
  return s.exit_status;
}

int radial(const Options& o, const CLI::App& app) {
  ExperimentConfig c = load_config(o.target);
  apply_overrides(c, overrides(o, app));
  std::cout << radial_scan(c, output_dir(o)).dump(2) << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Variational Bernoulli free boundary experiments"};
  app.require_subcommand(1);
  Options o;
  app.add_option("--jobs", o.jobs, "Concurrent experiments in a suite")->check(CLI::PositiveNumber);
  app.add_option("--output", o.output, "Directory for run artifacts");
  app.add_option("--seed", o.seed, "Seed for sampled analyses (default 0)");
  app.add_option("--plateau-rule", o.plateau_rule, "Plateau rule of the section7 weight kind")
      ->check(CLI::IsMember({"tau-consistent", "as-printed"}));

  CLI::App* s = app.add_subcommand("solve", "Run one experiment config");
  s->add_option("config", o.target, "Config file")->required();
  CLI::App* u = app.add_subcommand("suite", "Run every config of a directory and evaluate its criteria");
  u->add_option("dir", o.target, "Config directory")->required();
  CLI::App* r = app.add_subcommand("radial-scan", "Scan the radial family of a config with a section7 weight");
  r->add_option("config", o.target, "Config file")->required();
  CLI::App* p = app.add_subcommand("report", "Recompute the free boundary report of a run directory");
  p->add_option("run_dir", o.target, "Run directory")->required();
  for (CLI::App* sub : {s, u, r, p}) sub->fallthrough();

  CLI11_PARSE(app, argc, argv);
  try {
    if (s->parsed()) return solve(o, app);
    if (u->parsed()) return suite(o, app);
    if (r->parsed()) return radial(o, app);
    report_run(o.target);
    return 0;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
}
