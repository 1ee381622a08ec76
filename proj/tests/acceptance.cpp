// Runs the shipped acceptance suite and prints one line per criterion A1..A10.
// Usage: acceptance [config_dir [output_dir [jobs]]]

#include <iostream>
#include <string>
#include <thread>

#include "bernoulli/experiment.hpp"

namespace fs = std::filesystem;
using namespace bernoulli;

int main(int argc, char** argv) {
  const fs::path dir = argc > 1 ? fs::path(argv[1]) : fs::path(BERNOULLI_SOURCE_DIR) / "configs" / "acceptance";
  const fs::path out = argc > 2 ? fs::path(argv[2]) : fs::path("acceptance_out");
  const int jobs = argc > 3 ? std::stoi(argv[3]) : static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));

  const SuiteResult suite = run_suite(dir, jobs, out);
  for (const auto& e : suite.config_errors) std::cout << "config error: " << e << '\n';
  for (const auto& e : suite.experiments)
    for (const auto& r : e.runs)
      if (!r.converged) std::cout << "not converged: " << r.config << " n=" << r.n << '\n';

  bool all = suite.config_errors.empty();
  for (int k = 1; k <= 10; ++k) {
    const std::string id = "A" + std::to_string(k);
    CriterionResult c = evaluate_criterion(id, suite.experiments);
    if (!c.evaluated) c.pass = false;
    all = all && c.pass;
    std::cout << id << ' ' << (c.pass ? "PASS" : "FAIL") << ' ' << (c.evaluated ? c.detail : "no run feeds this criterion")
              << std::endl;
  }
  return all ? 0 : 1;
}
