#include <gtest/gtest.h>

#include <filesystem>
#include <set>
#include <fstream>
#include <sstream>

#include "vrpg/experiment.hpp"
#include "vrpg/io.hpp"

using namespace vrpg;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("vrpg_test_io_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Json four_algorithm_spec() {
  return Json::parse(R"({
    "env": {"builtin": "chain2"},
    "seeds": [1, 2, 3],
    "runs": [
      {"algorithm": "pg", "eta": 0.05, "iterations": 5, "batch": 8, "horizon": 10},
      {"algorithm": "npg", "eta": 0.05, "iterations": 5, "horizon": 10, "sgd": {"iterations": 20}},
      {"algorithm": "srvr_pg", "eta": 0.05, "epochs": 2, "epoch_length": 3, "batch": 8, "minibatch": 4, "horizon": 10},
      {"algorithm": "srvr_npg", "eta": 0.05, "epochs": 2, "epoch_length": 3, "batch": 8, "minibatch": 4,
       "horizon": 10, "sgd": {"iterations": 20}}
    ]})");
}

}  // namespace

TEST(Io, MdpRoundTripIsExact) {
  const fs::path dir = scratch("mdp");
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const TabularMdp mdp = make_test_mdp(TestMdpKind::random, seed, 4, 3, 0.95, 2.5);
    save_mdp(mdp, dir / "m.json");
    const TabularMdp back = load_mdp(dir / "m.json");
    EXPECT_EQ(back.n_states, mdp.n_states);
    EXPECT_EQ(back.n_actions, mdp.n_actions);
    EXPECT_EQ(back.gamma, mdp.gamma);
    EXPECT_EQ(back.reward_bound, mdp.reward_bound);
    EXPECT_EQ(back.rho, mdp.rho);
    EXPECT_EQ(back.reward, mdp.reward);
    EXPECT_EQ(back.transition, mdp.transition);
  }
}

TEST(Io, MdpRejectsInvalidTables) {
  Json j = mdp_to_json(make_chain2());
  j["transition"][0][0][0] = 0.7;  // row no longer sums to 1
  EXPECT_THROW(mdp_from_json(j), SpecError);
  j = mdp_to_json(make_chain2());
  j.erase("gamma");
  EXPECT_THROW(mdp_from_json(j), SpecError);
  j = mdp_to_json(make_chain2());
  j["transition"][1].erase(1);
  EXPECT_THROW(mdp_from_json(j), SpecError);
}

TEST(Io, PolicyStateRoundTrip) {
  const SoftmaxTabular tab(3, 2);
  const Vector th = Vector::LinSpaced(6, -1, 1);
  PolicyState st = policy_state_from_json(policy_state_to_json(tab, th));
  EXPECT_EQ(st.theta, th);
  EXPECT_EQ(std::get<SoftmaxTabular>(st.family).dim(), 6);

  Matrix f0(2, 3), f1(2, 3);
  f0 << 1, 0, 0.5, 0, 1, -0.25;
  f1 << 0.1, 0.2, 0.3, 0.4, 0.5, 0.6;
  const SoftmaxLinear lin({f0, f1});
  const Vector tl = Vector::LinSpaced(3, 0.1, 0.3);
  st = policy_state_from_json(policy_state_to_json(lin, tl));
  EXPECT_EQ(std::get<SoftmaxLinear>(st.family).features()[1], f1);
  EXPECT_EQ(st.theta, tl);

  const GaussianLinear gau(std::vector<Matrix>{Matrix::Ones(2, 1)}, Matrix::Constant(1, 1, 0.5));
  st = policy_state_from_json(policy_state_to_json(gau, Vector::Ones(2)));
  EXPECT_EQ(std::get<GaussianLinear>(st.family).covariance()(0, 0), 0.5);

  Json bad = policy_state_to_json(tab, th);
  bad["d"] = 5;
  EXPECT_THROW(policy_state_from_json(bad), SpecError);
  bad = policy_state_to_json(tab, th);
  bad["family"] = "beta";
  EXPECT_THROW(policy_state_from_json(bad), SpecError);
  EXPECT_THROW(policy_state_to_json(tab, Vector::Zero(2)), std::invalid_argument);
}

TEST(Io, ConfigRoundTrip) {
  RunConfig c;
  c.algorithm = Algorithm::srvr_npg;
  c.eta = 0.0123;
  c.epochs = 7;
  c.epoch_length = 3;
  c.batch = 99;
  c.minibatch = 11;
  c.horizon = 33;
  c.sgd.iterations = 77;
  c.sgd.stepsize = 0.2;
  c.sgd.exact_adv = true;
  c.lambda = 1e-5;
  c.seed = 42;
  c.trajectory_budget = 5000;
  c.exact_gradients = true;
  const RunConfig back = config_from_json(config_to_json(c));
  EXPECT_EQ(config_to_json(back), config_to_json(c));
  EXPECT_THROW(config_from_json(Json{{"etta", 0.1}}), SpecError);
  EXPECT_THROW(config_from_json(Json{{"sgd", {{"iters", 1}}}}), SpecError);
  EXPECT_THROW(config_from_json(Json{{"algorithm", "ppo"}}), SpecError);
}

TEST(Io, FormatDoubleRoundTrips) {
  for (double x : {0.1, 1.0 / 3.0, 1e-300, -2.5e17, 9.0, 4100.0000000000005}) {
    const std::string s = format_double(x);
    EXPECT_EQ(std::strtod(s.c_str(), nullptr), x) << s;
  }
  EXPECT_EQ(format_double(0.1), "0.1");
  EXPECT_EQ(format_double(std::numeric_limits<double>::quiet_NaN()), "nan");
}

TEST(Io, RunCsvHasStableHeader) {
  RunConfig cfg;
  cfg.algorithm = Algorithm::pg;
  cfg.iterations = 4;
  const RunResult r = run(make_chain2(), SoftmaxTabular(2, 2), Vector::Zero(4), cfg);
  const std::string csv = run_csv_string(r);
  std::istringstream in(csv);
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "iter,j_exact,grad_norm2,w_norm2,w_err,trajectories");
  int rows = 0;
  while (std::getline(in, line)) {
    EXPECT_EQ(std::count(line.begin(), line.end(), ','), 5);
    ++rows;
  }
  EXPECT_EQ(rows, 4);
  const Json side = run_sidecar_json(r);
  EXPECT_EQ(side["schema_version"], kSchemaVersion);
  EXPECT_EQ(side["config"]["algorithm"], "pg");
  EXPECT_EQ(side["trajectories"], 40);
}

TEST(Io, TrajectoryDumpRoundTrip) {
  const TabularMdp mdp = make_test_mdp(TestMdpKind::random, 5, 3, 2);
  const SoftmaxTabular fam(3, 2);
  Sampler sampler(mdp, fam);
  RngStream rng(1);
  const auto batch = sampler.sample_batch(Vector::Zero(6), 7, 10, rng);
  std::stringstream ss;
  write_trajectories(ss, batch);
  const auto back = read_trajectories(ss);
  ASSERT_EQ(back.size(), batch.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    ASSERT_EQ(back[i].horizon(), 7);
    for (int h = 0; h < 7; ++h) {
      EXPECT_EQ(back[i].steps[h].state, batch[i].steps[h].state);
      EXPECT_EQ(back[i].steps[h].action, batch[i].steps[h].action);
      EXPECT_EQ(back[i].steps[h].reward, batch[i].steps[h].reward);
    }
  }
  std::istringstream bad("3 0 1 0.5 1 0");
  EXPECT_THROW(read_trajectories(bad), SpecError);
}

TEST(Io, SpecParseErrors) {
  EXPECT_THROW(parse_experiment(Json::array()), SpecError);
  EXPECT_THROW(parse_experiment(Json::parse(R"({"env": {"builtin": "gridworld"}})")), SpecError);
  EXPECT_THROW(parse_experiment(Json::parse(R"({"seeds": []})")), SpecError);
  EXPECT_THROW(parse_experiment(Json::parse(R"({"runs": [{"algorithm": "pg", "eta": -1}]})")), SpecError);
  EXPECT_THROW(parse_experiment(Json::parse(R"({"runs": [{"algorithm": "pg", "bogus": 1}]})")), SpecError);
  EXPECT_THROW(parse_experiment(Json::parse(R"({"policy": {"family": "gaussian_linear"}})")), SpecError);
  try {
    parse_experiment(Json::parse(R"({"env": {"file": "no_such_mdp.json"}})"), "/nonexistent_dir");
    FAIL() << "expected SpecError";
  } catch (const SpecError& e) {
    EXPECT_NE(std::string(e.what()).find("/nonexistent_dir/no_such_mdp.json"), std::string::npos) << e.what();
  }
  EXPECT_THROW(load_experiment("/nonexistent_dir/spec.json"), SpecError);
}

TEST(Io, ExperimentWritesOneArtifactPairPerRunAndSeed) {
  const fs::path out = scratch("experiment");
  ExperimentSpec spec = parse_experiment(four_algorithm_spec());
  ExperimentOptions opt;
  opt.output_dir = out / "a";
  const Json manifest = run_experiment(spec, opt);
  EXPECT_EQ(manifest["runs"].size(), 12u);
  int csvs = 0;
  for (const auto& e : fs::directory_iterator(out / "a")) {
    if (e.path().extension() != ".csv") continue;
    ++csvs;
    std::ifstream in(e.path());
    std::string header;
    std::getline(in, header);
    EXPECT_EQ(header, kRunCsvHeader);
  }
  EXPECT_EQ(csvs, 12);
  EXPECT_TRUE(fs::exists(out / "a" / "srvr_npg_seed3.json"));
  EXPECT_TRUE(fs::exists(out / "a" / "index.json"));

  // A rerun, and a rerun with a parallel sweep, reproduce the CSVs byte for byte.
  opt.output_dir = out / "b";
  run_experiment(spec, opt);
  spec.jobs = 3;
  opt.output_dir = out / "c";
  run_experiment(spec, opt);
  for (const auto& e : fs::directory_iterator(out / "a")) {
    if (e.path().extension() != ".csv") continue;
    EXPECT_EQ(slurp(e.path()), slurp(out / "b" / e.path().filename()));
    EXPECT_EQ(slurp(e.path()), slurp(out / "c" / e.path().filename()));
  }

  // Seed override.
  opt.output_dir = out / "d";
  opt.seeds = std::vector<std::uint64_t>{9};
  EXPECT_EQ(run_experiment(spec, opt)["runs"].size(), 4u);
}

TEST(Io, ScheduledRunsUseConstants) {
  const fs::path out = scratch("scheduled");
  const ExperimentSpec spec = parse_experiment(Json::parse(R"({
    "env": {"builtin": "chain2"},
    "probes": {"replications": 200},
    "runs": [{"name": "e1", "schedule": "stationary_e1", "iterations": 3, "batch": 5}]})"));
  ExperimentOptions opt;
  opt.output_dir = out;
  run_experiment(spec, opt);
  const Json side = read_json_file(out / "e1_seed1.json");
  EXPECT_EQ(side["schedule"], "stationary_e1");
  EXPECT_EQ(side["config"]["iterations"], 3);
  EXPECT_NEAR(side["config"]["eta"].get<double>(), 1.0 / (4.0 * 4100.0), 1e-12 / 4100.0);
}

TEST(Io, ConstantsReportListsTheoremStepsizes) {
  const ExperimentSpec spec = parse_experiment(Json::parse(R"({
    "env": {"builtin": "chain2"}, "theta0": [0.3, -0.2, 0.1, 0.4], "probes": {"replications": 200}})"));
  const Json a = constants_report_json(spec);
  const Json b = constants_report_json(spec);
  EXPECT_EQ(a.dump(), b.dump());
  EXPECT_NEAR(a["constants"]["L_J"].get<double>(), 4100.0, 1e-9);
  std::set<std::string> with_eta;
  for (const auto& s : a["schedules"])
    if (s.contains("eta") && s["eta"].get<double>() > 0.0) with_eta.insert(s["schedule"].get<std::string>());
  for (const char* name : {"thm1_pg", "thm2_npg", "thm3_srvr_pg", "thm4_srvr_npg"}) EXPECT_TRUE(with_eta.count(name)) << name;
  const double l = a["constants"]["L_J"].get<double>();
  EXPECT_EQ(a["schedules"][0]["eta"].get<double>(), 1.0 / (4.0 * l));
  EXPECT_EQ(a["schedules"][2]["eta"].get<double>(), 1.0 / (8.0 * l));
  EXPECT_TRUE(a["schedules"][0]["complete"].get<bool>());
}

TEST(Io, MissingVarianceProbesMarkSchedulesIncomplete) {
  const ExperimentSpec spec = parse_experiment(Json::parse(R"({
    "env": {"builtin": "chain2"}, "probes": {"sigma_thetas": 0, "replications": 200}})"));
  const Json a = constants_report_json(spec);
  EXPECT_TRUE(a["constants"]["sigma2_hat"].is_null());
  EXPECT_FALSE(a["schedules"][0]["complete"].get<bool>());
  EXPECT_FALSE(a["schedules"][4]["complete"].get<bool>());
}
