#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "bernoulli/analyze.hpp"
#include "bernoulli/minimize.hpp"
#include "bernoulli/radial.hpp"
#include "json.hpp"

namespace bernoulli {

/// Invalid or unreadable configuration.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct GridConfig {
  int dim = 2;
  int n = 64;
  double lower = -1.0;
  double upper = 1.0;
};

struct RegionConfig {
  std::string kind = "box";  // box | ball | annulus
  std::vector<double> center;
  double radius = 1.0;
  double inner_radius = 0.0;
};

struct CoefficientConfig {
  std::string kind = "identity";  // identity | diagonal | random_symmetric
  std::vector<double> diagonal;
  double lambda = 1.0;
  double Lambda = 1.0;
  std::uint64_t seed = 0;
};

struct WeightConfig {
  std::string kind = "constant";  // constant | point_singularity | manifold_distance | section7 | one_sided
  double value = 0.0;
  std::vector<double> center;     // point_singularity centre, manifold / one-sided anchor
  double amplitude = 0.0;
  double exponent = 0.0;
  double base = 0.0;
  std::vector<int> normal_axes;
  int axis = 0;
  double q = 2.0;
  std::string plateau_rule = "tau_consistent";
};

struct BoundaryConfig {
  std::string kind = "constant";  // constant | radial_profile | radial_step | affine | table
  double m = 0.0;
  double threshold_factor = 0.0;  // > 0: m = factor * m_threshold(d, q) of the section7 weight
  double r = 0.5;                 // radial_profile zero radius
  double inner_value = 0.0;       // radial_step: value below split_radius
  double split_radius = 0.0;
  std::vector<double> gradient;   // affine: m + gradient . x
  std::string path;               // table: field binary, relative to the config file
};

struct AnalysisConfig {
  bool report = true;
  std::vector<std::vector<double>> exponent_points;
  int max_points = 16;
  double r_min = 0.0;
  double r_max = 0.25;
  std::vector<double> density_radii;
  double q_minus = 0.0;
  double q_plus = 0.0;
  int bmo_balls = 32;
  bool caccioppoli = true;
  int gradient_checks = 20;
};

struct PipelineConfig {
  std::string kind = "solve";  // solve | anchored_singularity | scaling | cusp
  // anchored_singularity: |x - x0|^{-exponent} with the given amplitude, x0 moved onto the free boundary
  double amplitude = 0.0;
  double exponent = 1.0;
  std::vector<double> direction;  // ray from the region centre along which x0 starts
  int placement_n = 0;            // grid used for the placement iterations (0: the run grid)
  int max_placements = 10;
  int max_refinements = 2;
  double density_r_max = 0.125;
  // scaling
  int samples = 5;
  // cusp
  std::vector<double> q_values;
  std::vector<int> dims;
  std::vector<std::vector<double>> pairs;  // (q_minus, q_plus, d)
};

struct ExperimentConfig {
  std::string name;
  GridConfig grid;
  RegionConfig region;
  CoefficientConfig coefficients;
  WeightConfig weight;
  BoundaryConfig boundary;
  double gamma = 0.0;
  SolverKind solver = SolverKind::both;
  SolverSettings settings;
  AnalysisConfig analysis;
  PipelineConfig pipeline;
  std::vector<int> resolutions;  // empty: grid.n only
  std::vector<std::string> criteria;
  std::uint64_t seed = 0;
  std::filesystem::path base_dir;  // directory of the config file, for relative paths
};

/// Parses and validates a config document; unknown keys are rejected.
ExperimentConfig parse_config(const nlohmann::json& doc, const std::filesystem::path& base_dir = {});
ExperimentConfig load_config(const std::filesystem::path& path);
/// Fully resolved config including defaults.
nlohmann::json to_json(const ExperimentConfig& c);

/// Command-line settings that replace the config's values when present.
struct ConfigOverrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::string> plateau_rule;
};
void apply_overrides(ExperimentConfig& c, const ConfigOverrides& o);

/// Objects built from a config at one resolution.
struct ProblemSetup {
  Region region;
  MinimizeProblem problem;
  Point center;   // centre of the region's inscribed ball
  double radius;  // radius of that ball
};
ProblemSetup build_problem(const ExperimentConfig& c, int n);
BernoulliWeight build_weight(const ExperimentConfig& c);
double boundary_value_m(const ExperimentConfig& c);

/// Scalar results of one run (config at one resolution), keyed by metric name.
struct RunRecord {
  std::string config;
  int n = 0;
  int dim = 0;
  bool converged = true;
  std::map<std::string, double> metrics;
  std::map<std::string, std::vector<double>> series;
  std::vector<std::string> notes;
  double seconds = 0.0;  // wall time, never written to run outputs
};

struct ExperimentResult {
  ExperimentConfig config;
  std::vector<RunRecord> runs;
  int exit_status = 0;  // 0 converged, 2 not converged
};

/// Runs every resolution of the config. With an output directory, writes per-run artifacts
/// under output/<name>/n<N>/ and output/<name>/summary.csv.
ExperimentResult run_experiment(const ExperimentConfig& c, const std::optional<std::filesystem::path>& output);

struct CriterionResult {
  std::string id;
  bool pass = false;
  bool evaluated = false;  // false when no run of the suite feeds the criterion
  std::string detail;
  std::map<std::string, double> metrics;
};

/// Evaluates every criterion referenced by the results (A1..A10).
std::vector<CriterionResult> evaluate_criteria(const std::vector<ExperimentResult>& results);
CriterionResult evaluate_criterion(const std::string& id, const std::vector<ExperimentResult>& results);

struct SuiteResult {
  std::vector<ExperimentResult> experiments;
  std::vector<CriterionResult> criteria;
  std::vector<std::string> config_errors;
  int exit_status = 0;  // worst of the experiments; 1 when a config failed to load
};

/// Runs every *.json config of a directory (sorted by name) with up to `jobs` concurrent
/// experiments, then evaluates the referenced criteria. With an output directory, writes
/// summary.csv, acceptance.json and acceptance.csv there.
SuiteResult run_suite(const std::filesystem::path& dir, int jobs,
                      const std::optional<std::filesystem::path>& output, const ConfigOverrides& overrides = {});

/// Writes state.json, solution.bin, solution_slice.csv, report.json, report.csv for a state.
void write_run_artifacts(const std::filesystem::path& dir, const ExperimentConfig& c, int n,
                         const MinimizerState& state, const FreeBoundaryReport* report);
void write_summary_csv(const std::vector<RunRecord>& runs, std::ostream& out);
void write_acceptance(const std::vector<CriterionResult>& criteria, const std::filesystem::path& dir);

/// Re-analyzes a run directory (solution.bin + config_resolved.json) and rewrites its reports.
void report_run(const std::filesystem::path& run_dir);

/// Radial family scan for a config with a section7 weight: radial_scan.csv + radial.json.
nlohmann::json radial_scan(const ExperimentConfig& c, const std::optional<std::filesystem::path>& output);

}  // namespace bernoulli
