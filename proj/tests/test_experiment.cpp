#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "bernoulli/elliptic.hpp"
#include "bernoulli/experiment.hpp"
#include "json.hpp"

using namespace bernoulli;
using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

json small_config(const std::string& name) {
  return json{{"name", name},
              {"grid", {{"dim", 2}, {"n", 24}}},
              {"region", {{"kind", "ball"}, {"radius", 1.0}}},
              {"weight", {{"kind", "constant"}, {"value", 0.64}}},
              {"boundary", {{"kind", "constant"}, {"m", 0.2}}}};
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("bernoulli_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

void write_json(const fs::path& p, const json& j) { std::ofstream(p) << j.dump(2) << '\n'; }

int run_cli(const std::string& args) {
  const std::string cmd = std::string(BERNOULLI_CLI) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

std::vector<fs::path> files_under(const fs::path& root) {
  std::vector<fs::path> out;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file()) out.push_back(fs::relative(e.path(), root));
  std::sort(out.begin(), out.end());
  return out;
}

// First data row of a summary.csv as a column -> text map.
std::map<std::string, std::string> summary_row(const fs::path& p) {
  std::ifstream in(p);
  std::string header, row;
  std::getline(in, header);
  std::getline(in, row);
  std::map<std::string, std::string> out;
  std::istringstream hs(header), rs(row);
  std::string k, v;
  while (std::getline(hs, k, ',') && std::getline(rs, v, ',')) out[k] = v;
  return out;
}

}  // namespace

TEST_CASE("config parsing fills defaults and echoes them") {
  const ExperimentConfig c = parse_config(small_config("echo"));
  CHECK(c.grid.lower == -1.0);
  CHECK(c.coefficients.kind == "identity");
  CHECK(c.solver == SolverKind::both);
  const json resolved = to_json(c);
  CHECK(resolved.contains("solver"));
  CHECK(resolved.contains("analysis"));
  CHECK(to_json(parse_config(resolved)) == resolved);
}

TEST_CASE("invalid configs are rejected") {
  json missing_grid = small_config("x");
  missing_grid.erase("grid");
  CHECK_THROWS_AS(parse_config(missing_grid), ConfigError);
  json unknown = small_config("x");
  unknown["colour"] = "red";
  CHECK_THROWS_AS(parse_config(unknown), ConfigError);
  json nested = small_config("x");
  nested["weight"]["valeu"] = 1.0;
  CHECK_THROWS_AS(parse_config(nested), ConfigError);
  json bad_kind = small_config("x");
  bad_kind["region"]["kind"] = "torus";
  CHECK_THROWS_AS(parse_config(bad_kind), ConfigError);
  json bad_type = small_config("x");
  bad_type["grid"]["n"] = "many";
  CHECK_THROWS_AS(parse_config(bad_type), ConfigError);
  json flat = small_config("x");
  flat["grid"]["dim"] = 2;
  flat["weight"] = {{"kind", "section7"}};
  CHECK_THROWS_AS(parse_config(flat), ConfigError);
}

TEST_CASE("overrides replace seed and plateau rule") {
  json j = small_config("o");
  j["grid"] = {{"dim", 3}, {"n", 8}};
  j["weight"] = {{"kind", "section7"}, {"q", 2.0}};
  ExperimentConfig c = parse_config(j);
  CHECK(c.seed == 0);
  ConfigOverrides o;
  o.seed = 17;
  o.plateau_rule = "as-printed";
  apply_overrides(c, o);
  CHECK(c.seed == 17);
  CHECK(c.weight.plateau_rule == "as_printed");
  o.plateau_rule = "neither";
  CHECK_THROWS_AS(apply_overrides(c, o), ConfigError);
}

TEST_CASE("a zero weight gives the energy of the harmonic extension") {
  // affine data: the harmonic extension is the data itself
  json affine = small_config("affine");
  affine["region"] = {{"kind", "box"}};
  affine["weight"] = {{"kind", "constant"}, {"value", 0.0}};
  affine["boundary"] = {{"kind", "affine"}, {"m", 0.3}, {"gradient", {0.4, -0.1}}};
  const ExperimentConfig ca = parse_config(affine);
  const ExperimentResult ra = run_experiment(ca, std::nullopt);
  REQUIRE(ra.runs.size() == 1);
  CHECK(ra.exit_status == 0);
  const ProblemSetup sa = build_problem(ca, ca.grid.n);
  const double ea = energy(sa.problem.g, sa.problem);
  CHECK(ra.runs[0].metrics.at("energy") == doctest::Approx(ea).epsilon(1e-8));

  // curved data on a ball, against a direct Dirichlet solve
  json ball = small_config("ball");
  ball["weight"] = {{"kind", "constant"}, {"value", 0.0}};
  ball["boundary"] = {{"kind", "radial_step"}, {"m", 0.4}, {"inner_value", 0.1}, {"split_radius", 0.5}};
  ball["coefficients"] = {{"kind", "random_symmetric"}, {"lambda", 0.5}, {"Lambda", 2.0}, {"seed", 4}};
  const ExperimentConfig cb = parse_config(ball);
  const ExperimentResult rb = run_experiment(cb, std::nullopt);
  CHECK(rb.exit_status == 0);
  const ProblemSetup sb = build_problem(cb, cb.grid.n);
  const Region& r = sb.region;
  const Mask layer = r.closure_layer();
  Mask active(layer.size(), 0);
  for (Index c = 0; c < r.grid().cell_count(); ++c) active[c] = r.contains(c) && !layer[c];
  const ScalarField h = solve_dirichlet(DirichletProblem{sb.problem.A, make_custom(r.grid(), active), sb.problem.g, 1e-12});
  CHECK(rb.runs[0].metrics.at("energy") == doctest::Approx(energy(h, sb.problem)).epsilon(1e-6));
}

TEST_CASE("run artifacts and config echo") {
  const fs::path out = scratch("artifacts");
  const ExperimentResult r = run_experiment(parse_config(small_config("art")), out);
  CHECK(r.exit_status == 0);
  for (const char* f : {"summary.csv", "config_resolved.json", "n24/state.json", "n24/solution.bin",
                        "n24/solution_slice.csv", "n24/report.json", "n24/report.csv", "n24/config_resolved.json"})
    CHECK_MESSAGE(fs::exists(out / "art" / f), f);
  const json echo = json::parse(slurp(out / "art" / "config_resolved.json"));
  CHECK(echo == to_json(parse_config(small_config("art"))));
  const json state = json::parse(slurp(out / "art" / "n24" / "state.json"));
  CHECK(state.contains("config"));
  CHECK(state.contains("energy"));
  // re-analysis from the written artifacts reproduces the report
  const std::string report = slurp(out / "art" / "n24" / "report.json");
  CHECK(run_cli("report " + (out / "art" / "n24").string()) == 0);
  CHECK(slurp(out / "art" / "n24" / "report.json") == report);
  fs::remove_all(out);
}

TEST_CASE("cli exit codes") {
  const fs::path dir = scratch("cli");
  json bad = small_config("bad");
  bad.erase("grid");
  write_json(dir / "bad.json", bad);
  CHECK(run_cli("solve " + (dir / "bad.json").string() + " --output " + (dir / "out").string()) == 1);
  CHECK_FALSE(fs::exists(dir / "out"));
  CHECK(run_cli("solve " + (dir / "absent.json").string()) == 1);

  const fs::path empty = dir / "empty";
  fs::create_directories(empty);
  CHECK(run_cli("suite " + empty.string() + " --output " + (dir / "empty_out").string()) == 0);
  CHECK(files_under(dir / "empty_out") == std::vector<fs::path>{"summary.csv"});
  CHECK(slurp(dir / "empty_out" / "summary.csv") == "config,n,dim,converged\n");

  // one config that cannot converge next to one that does
  const fs::path mixed = dir / "mixed";
  fs::create_directories(mixed);
  write_json(mixed / "good.json", small_config("good"));
  json capped = small_config("capped");
  capped["solver"] = {{"kind", "smoothed"}, {"settings", {{"smoothed_iterations", 1}}}};
  write_json(mixed / "capped.json", capped);
  CHECK(run_cli("suite " + mixed.string() + " --output " + (dir / "mixed_out").string()) == 2);
  std::ifstream in(dir / "mixed_out" / "summary.csv");
  std::string line;
  std::map<std::string, char> converged;
  std::getline(in, line);
  while (std::getline(in, line)) {
    const std::string name = line.substr(0, line.find(','));
    converged[name] = line[line.find(',', line.find(',', name.size() + 1) + 1) + 1];
  }
  CHECK(converged["good"] == '1');
  CHECK(converged["capped"] == '0');
  fs::remove_all(dir);
}

TEST_CASE("identical runs give identical bytes") {
  const fs::path dir = scratch("determinism");
  json j = small_config("det");
  j["coefficients"] = {{"kind", "random_symmetric"}, {"lambda", 0.5}, {"Lambda", 2.0}, {"seed", 3}};
  j["weight"] = {{"kind", "point_singularity"}, {"center", {0.2, 0.1}}, {"amplitude", 0.05}, {"exponent", 1.0},
                 {"base", 0.3}};
  write_json(dir / "det.json", j);
  for (const char* o : {"a", "b"})
    REQUIRE(run_cli("solve " + (dir / "det.json").string() + " --output " + (dir / o).string()) == 0);
  const std::vector<fs::path> fa = files_under(dir / "a"), fb = files_under(dir / "b");
  CHECK(fa == fb);
  CHECK(fa.size() >= 8);
  for (const fs::path& f : fa) CHECK_MESSAGE(slurp(dir / "a" / f) == slurp(dir / "b" / f), f.string());
  fs::remove_all(dir);
}

TEST_CASE("shipped singular sphere preset reports interface radii") {
  const fs::path dir = scratch("section7");
  REQUIRE(run_cli("solve " + std::string(BERNOULLI_SOURCE_DIR) + "/configs/section7.json --output " + dir.string()) == 0);
  const auto row = summary_row(dir / "section7" / "summary.csv");
  REQUIRE(row.count("interface_r1") == 1);
  REQUIRE(row.count("interface_r2") == 1);
  const double r1 = std::stod(row.at("interface_r1")), r2 = std::stod(row.at("interface_r2"));
  CHECK(r1 > 0.0);
  CHECK(r1 <= r2);
  CHECK(r2 < 1.0);
  // the whole interface is a sphere, with r1 and r2 one cell apart up to staircase effects
  const double h = std::stod(row.at("h"));
  CHECK(r2 - r1 <= 2.0 * h);
  fs::remove_all(dir);
}
