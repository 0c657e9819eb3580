// Runs every acceptance criterion at full size and prints one line per criterion.

#include <filesystem>
#include <iostream>

#include "vrpg/verify.hpp"

int main() {
  const auto dir = std::filesystem::temp_directory_path() / "vrpg_acceptance";
  std::filesystem::create_directories(dir);
  const vrpg::SuiteReport report = vrpg::run_suite(vrpg::VerifyLevel::full, dir, &std::cout);
  vrpg::write_text_file(dir / "verify_report.json", vrpg::suite_to_json(report, vrpg::VerifyLevel::full).dump(2) + "\n");
  int failed = 0;
  for (const auto& r : report.results) failed += r.passed ? 0 : 1;
  std::cout << (report.results.size() - failed) << "/" << report.results.size() << " criteria passed\n";
  return failed == 0 ? 0 : 1;
}
