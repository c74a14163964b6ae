// Runs the validation suite twice with the same seed and prints one line per acceptance criterion.
// Criterion 12 additionally requires that the two report files are byte-identical.

#include "inforesp/experiments.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

int main() {
  const fs::path base = fs::temp_directory_path() / "inforesp_acceptance";
  fs::remove_all(base);
  inforesp::ValidationReport first, second;
  try {
    inforesp::SuiteConfig cfg;
    cfg.output_dir = base / "run1";
    first = inforesp::run_validation_suite(cfg);
    cfg.output_dir = base / "run2";
    second = inforesp::run_validation_suite(cfg);
  } catch (const std::exception& e) {
    std::cout << "FAIL  suite aborted: " << e.what() << "\n";
    return 1;
  }
  const std::string a = slurp(base / "run1" / "validate" / "report.json");
  const std::string b = slurp(base / "run2" / "validate" / "report.json");
  const bool identical = !a.empty() && a == b;

  int failed = 0;
  for (int i = 1; i <= 13; ++i) {
    const std::string id = "C" + std::to_string(i);
    const inforesp::Check* c = first.find(id);
    bool pass = c && c->pass;
    std::ostringstream line;
    if (!c) {
      line << "missing from report";
    } else {
      line << c->name << ": observed " << c->observed << ", expected " << c->expected << ", tolerance "
           << c->tolerance;
      if (c->details.contains("error")) line << " [error: " << c->details["error"].get<std::string>() << "]";
    }
    if (i == 12) {
      pass = pass && identical;
      line << "; repeated report " << (identical ? "byte-identical" : "DIFFERS");
    }
    if (!pass) ++failed;
    std::printf("%s  %-4s %s\n", pass ? "PASS" : "FAIL", id.c_str(), line.str().c_str());
  }
  std::printf("%d of 13 criteria passed\n", 13 - failed);
  return failed == 0 ? 0 : 1;
}
