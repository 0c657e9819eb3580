// Command-line entry point: run experiments, print constants and schedules,
// and execute the verification suite.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "vrpg/experiment.hpp"
#include "vrpg/verify.hpp"

namespace {

std::optional<std::filesystem::path> env_output_dir() {
  if (const char* v = std::getenv("VRPG_OUT_DIR"); v != nullptr && *v != '\0') return std::filesystem::path(v);
  return std::nullopt;
}

std::vector<std::uint64_t> parse_seeds(const std::string& csv) {
  std::vector<std::uint64_t> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    std::size_t used = 0;
    const auto v = std::stoull(item, &used);
    if (used != item.size()) throw vrpg::SpecError("bad seed: " + item);
    out.push_back(v);
  }
  if (out.empty()) throw vrpg::SpecError("seed list must be nonempty");
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Variance-reduced policy gradient laboratory"};
  app.require_subcommand(1);

  std::string spec_path;
  std::string out_dir;
  std::string seeds_csv;
  std::string level = "fast";
  bool exact_adv = false;
  std::optional<double> lambda;

  auto* run = app.add_subcommand("run", "Run every (algorithm, seed) pair of an experiment spec");
  run->add_option("--spec", spec_path, "Experiment spec (JSON)")->required();
  run->add_option("--out", out_dir, "Output directory (default: $VRPG_OUT_DIR, then the experiment file's output_dir)");
  run->add_option("--seeds", seeds_csv, "Comma-separated seeds overriding the experiment file");
  run->add_flag("--exact-adv", exact_adv, "Use oracle advantages in the NPG subproblem");
  run->add_option("--lambda", lambda, "Damping / ridge override");

  auto* verify = app.add_subcommand("verify", "Run the acceptance suite");
  verify->add_option("--level", level, "fast or full")->check(CLI::IsMember({"fast", "full"}));
  verify->add_option("--out", out_dir, "Directory for the report and scratch files");

  auto* constants = app.add_subcommand("constants", "Print the constants report and theorem schedules");
  constants->add_option("--spec", spec_path, "Experiment spec (JSON)")->required();
  constants->add_option("--lambda", lambda, "Damping override");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) {
      const vrpg::ExperimentSpec spec = vrpg::load_experiment(spec_path);
      vrpg::ExperimentOptions opt;
      if (!out_dir.empty()) opt.output_dir = out_dir;
      else if (auto env = env_output_dir()) opt.output_dir = *env;
      if (!seeds_csv.empty()) opt.seeds = parse_seeds(seeds_csv);
      opt.force_exact_adv = exact_adv;
      opt.lambda = lambda;
      const vrpg::Json manifest = vrpg::run_experiment(spec, opt);
      bool truncated = false;
      for (const auto& r : manifest["runs"]) truncated = truncated || r["truncated"].get<bool>();
      std::cout << "wrote " << manifest["runs"].size() << " runs to "
                << opt.output_dir.value_or(spec.output_dir).string() << (truncated ? " (some truncated by budget)" : "")
                << "\n";
      return 0;
    }
    if (constants->parsed()) {
      const vrpg::ExperimentSpec spec = vrpg::load_experiment(spec_path);
      std::cout << vrpg::constants_report_json(spec, lambda).dump(2) << "\n";
      return 0;
    }
    if (verify->parsed()) {
      const vrpg::VerifyLevel lv = vrpg::level_from_string(level);
      std::filesystem::path dir = !out_dir.empty() ? std::filesystem::path(out_dir)
                                                   : env_output_dir().value_or(std::filesystem::path("vrpg_verify"));
      std::filesystem::create_directories(dir);
      const vrpg::SuiteReport report = vrpg::run_suite(lv, dir, &std::cout);
      vrpg::write_text_file(dir / "verify_report.json", vrpg::suite_to_json(report, lv).dump(2) + "\n");
      std::cout << (report.all_passed() ? "all criteria passed" : "some criteria FAILED") << "\n";
      return report.all_passed() ? 0 : 1;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
