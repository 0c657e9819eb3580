#pragma once

// Experiment specifications (JSON) and the run/constants commands built on
// them. Shared by the command-line tool and the tests.

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <filesystem>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <variant>
#include <vector>

#include "vrpg/algorithms.hpp"
#include "vrpg/analysis.hpp"
#include "vrpg/io.hpp"

namespace vrpg {

struct EnvSpec {
  /// "chain2", "random" or empty when `file` is set.
  std::string builtin = "chain2";
  std::filesystem::path file;
  std::uint64_t seed = 1;
  int n_states = 2;
  int n_actions = 2;
  double gamma = 0.9;
  double reward_bound = 1.0;
};

struct PolicySpec {
  std::string family = "softmax_tabular";
  std::vector<Matrix> features;  // softmax_linear only
};

struct RunEntry {
  std::string name;
  RunConfig config;
  std::optional<Schedule> schedule;
  /// Keys applied on top of the schedule's skeleton.
  Json overrides = Json::object();
};

struct ProbeSettings {
  int n_theta = 20;
  double theta_scale = 2.0;
  std::uint64_t seed = 1;
  /// Random parameters at which sigma^2 is probed; 0 leaves sigma^2 missing.
  int sigma_thetas = 4;
  /// Parameter pairs for W at growing distance; 0 leaves W missing.
  int w_pairs = 4;
  double w_step = 0.1;
  int horizon = 5;
  int replications = 1000;
};

struct ExperimentSpec {
  EnvSpec env;
  PolicySpec policy;
  std::optional<Vector> theta0;
  std::vector<RunEntry> runs;
  std::vector<std::uint64_t> seeds{1};
  std::filesystem::path output_dir = "vrpg_out";
  double epsilon = 0.1;
  double lambda = 1e-3;
  ProbeSettings probes;
  /// Worker threads for the seed sweep.
  int jobs = 1;
};

using AnyPolicy = std::variant<SoftmaxTabular, SoftmaxLinear>;

/// Parses a spec; relative file paths resolve against `base_dir`.
inline ExperimentSpec parse_experiment(const Json& j, const std::filesystem::path& base_dir = {}) {
  if (!j.is_object()) throw SpecError("experiment spec must be a JSON object");
  ExperimentSpec spec;
  try {
    if (j.contains("env")) {
      const Json& e = j.at("env");
      if (e.contains("file")) {
        spec.env.builtin.clear();
        spec.env.file = e.at("file").get<std::string>();
        if (spec.env.file.is_relative()) spec.env.file = base_dir / spec.env.file;
        if (!std::filesystem::exists(spec.env.file)) throw SpecError("MDP file not found: " + spec.env.file.string());
      } else {
        spec.env.builtin = e.value("builtin", std::string("chain2"));
        if (spec.env.builtin != "chain2" && spec.env.builtin != "random")
          throw SpecError("unknown builtin environment: " + spec.env.builtin);
      }
      spec.env.seed = e.value("seed", spec.env.seed);
      spec.env.n_states = e.value("n_states", spec.env.n_states);
      spec.env.n_actions = e.value("n_actions", spec.env.n_actions);
      spec.env.gamma = e.value("gamma", spec.env.gamma);
      spec.env.reward_bound = e.value("reward_bound", spec.env.reward_bound);
    }
    if (j.contains("policy")) {
      const Json& p = j.at("policy");
      spec.policy.family = p.value("family", spec.policy.family);
      if (spec.policy.family == "softmax_linear") spec.policy.features = features_from_json(p.at("features"));
      else if (spec.policy.family != "softmax_tabular") throw SpecError("unsupported policy family: " + spec.policy.family);
    }
    if (j.contains("theta0")) spec.theta0 = vector_from_json(j.at("theta0"));
    if (j.contains("seeds")) spec.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    if (spec.seeds.empty()) throw SpecError("seed list must be nonempty");
    if (j.contains("output_dir")) {
      spec.output_dir = j.at("output_dir").get<std::string>();
      if (spec.output_dir.is_relative() && !base_dir.empty()) spec.output_dir = base_dir / spec.output_dir;
    }
    spec.epsilon = j.value("epsilon", spec.epsilon);
    spec.lambda = j.value("lambda", spec.lambda);
    spec.jobs = std::max(1, j.value("jobs", spec.jobs));
    if (j.contains("probes")) {
      const Json& p = j.at("probes");
      auto& s = spec.probes;
      s.n_theta = p.value("n_theta", s.n_theta);
      s.theta_scale = p.value("theta_scale", s.theta_scale);
      s.seed = p.value("seed", s.seed);
      s.sigma_thetas = p.value("sigma_thetas", s.sigma_thetas);
      s.w_pairs = p.value("w_pairs", s.w_pairs);
      s.w_step = p.value("w_step", s.w_step);
      s.horizon = p.value("horizon", s.horizon);
      s.replications = p.value("replications", s.replications);
    }
    if (j.contains("runs")) {
      std::set<std::string> names;
      for (const Json& r : j.at("runs")) {
        RunEntry entry;
        RunConfig base;
        base.lambda = spec.lambda;
        if (r.contains("schedule")) {
          entry.schedule = schedule_from_string(r.at("schedule").get<std::string>());
          entry.overrides = r;
        } else {
          entry.config = config_from_json(r, base);
          validate(entry.config);
        }
        const std::string algo =
            entry.schedule ? to_string(entry.schedule.value()) : to_string(entry.config.algorithm);
        entry.name = r.value("name", algo);
        if (!names.insert(entry.name).second) entry.name += "_" + std::to_string(spec.runs.size());
        names.insert(entry.name);
        spec.runs.push_back(std::move(entry));
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw SpecError(std::string("experiment spec: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw SpecError(std::string("experiment spec: ") + e.what());
  }
  return spec;
}

inline ExperimentSpec load_experiment(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw SpecError("experiment file not found: " + path.string());
  return parse_experiment(read_json_file(path), path.parent_path());
}

inline TabularMdp build_env(const EnvSpec& e) {
  if (!e.file.empty()) return load_mdp(e.file);
  if (e.builtin == "chain2") return make_chain2(e.gamma);
  return make_test_mdp(TestMdpKind::random, e.seed, e.n_states, e.n_actions, e.gamma, e.reward_bound);
}

inline AnyPolicy build_policy(const PolicySpec& p, const TabularMdp& mdp) {
  if (p.family == "softmax_linear") {
    SoftmaxLinear fam(p.features);
    check_compatible(mdp, fam);
    return fam;
  }
  return SoftmaxTabular(mdp.n_states, mdp.n_actions);
}

inline int policy_dim(const AnyPolicy& p) {
  return std::visit([](const auto& f) { return f.dim(); }, p);
}

inline Vector initial_theta(const ExperimentSpec& spec, const AnyPolicy& p) {
  const int d = policy_dim(p);
  if (!spec.theta0) return Vector::Zero(d);
  if (spec.theta0->size() != d) throw SpecError("theta0 has the wrong dimension");
  return *spec.theta0;
}

/// Probe settings for compute_constants: sigma^2 at random parameters around
/// theta0, W on pairs (theta0, theta0 + k * step * v) for a fixed unit v.
inline ConstantsSpec make_constants_spec(const ProbeSettings& s, const Vector& theta0, double lambda) {
  ConstantsSpec cs;
  cs.score.n_theta = s.n_theta;
  cs.score.theta_scale = s.theta_scale;
  cs.score.seed = s.seed;
  cs.theta0 = theta0;
  cs.lambda = lambda;
  cs.moments.horizon = s.horizon;
  cs.moments.replications = s.replications;
  cs.moments.seed = s.seed;
  RngStream rng(s.seed, 0x5349474d41ULL);
  for (int i = 0; i < s.sigma_thetas; ++i) {
    Vector th = theta0;
    if (i > 0)
      for (Eigen::Index k = 0; k < th.size(); ++k) th(k) += s.theta_scale * (2.0 * rng.uniform() - 1.0);
    cs.moments.thetas.push_back(th);
  }
  if (s.w_pairs > 0) {
    Vector dir(theta0.size());
    for (Eigen::Index k = 0; k < dir.size(); ++k) dir(k) = rng.normal();
    dir /= dir.norm();
    for (int i = 1; i <= s.w_pairs; ++i) cs.moments.theta_pairs.emplace_back(theta0, theta0 + (s.w_step * i) * dir);
  }
  return cs;
}

struct ExperimentOptions {
  std::optional<std::filesystem::path> output_dir;
  std::optional<std::vector<std::uint64_t>> seeds;
  bool force_exact_adv = false;
  std::optional<double> lambda;
  std::optional<int> threads;  // sampler threads per run
};

struct ExperimentContext {
  TabularMdp mdp;
  AnyPolicy policy;
  Vector theta0;
  std::optional<ConstantsReport> constants;
};

inline ExperimentContext prepare_context(const ExperimentSpec& spec, bool need_constants, double lambda) {
  TabularMdp mdp = build_env(spec.env);
  AnyPolicy pol = build_policy(spec.policy, mdp);
  Vector th0 = initial_theta(spec, pol);
  std::optional<ConstantsReport> c;
  if (need_constants) {
    const ConstantsSpec cs = make_constants_spec(spec.probes, th0, lambda);
    c = std::visit([&](const auto& fam) { return compute_constants(mdp, fam, cs); }, pol);
  }
  return {std::move(mdp), std::move(pol), std::move(th0), std::move(c)};
}

/// Resolved configuration of one run entry for one seed.
inline RunConfig resolve_config(const RunEntry& entry, const ExperimentContext& ctx, const ExperimentSpec& spec,
                                const ExperimentOptions& opt, std::uint64_t seed) {
  RunConfig cfg = entry.config;
  if (entry.schedule) {
    const double eps = entry.overrides.value("epsilon", spec.epsilon);
    RunConfig base = theorem_schedule(*entry.schedule, *ctx.constants, eps).config;
    base.lambda = spec.lambda;
    cfg = config_from_json(entry.overrides, base);
    validate(cfg);
  }
  cfg.seed = seed;
  if (opt.force_exact_adv) cfg.sgd.exact_adv = true;
  if (opt.lambda) cfg.lambda = *opt.lambda;
  if (opt.threads) cfg.threads = *opt.threads;
  return cfg;
}

inline std::string artifact_stem(const RunEntry& entry, std::uint64_t seed) {
  return entry.name + "_seed" + std::to_string(seed);
}

/// Writes one CSV and one JSON sidecar per (run entry, seed), then index.json.
/// Returns the manifest.
inline Json run_experiment(const ExperimentSpec& spec, const ExperimentOptions& opt = {}) {
  if (spec.runs.empty()) throw SpecError("experiment spec has no runs");
  const auto out_dir = opt.output_dir.value_or(spec.output_dir);
  const auto seeds = opt.seeds.value_or(spec.seeds);
  if (seeds.empty()) throw SpecError("seed list must be nonempty");
  const bool need_constants =
      std::any_of(spec.runs.begin(), spec.runs.end(), [](const RunEntry& e) { return e.schedule.has_value(); });
  const ExperimentContext ctx = prepare_context(spec, need_constants, opt.lambda.value_or(spec.lambda));
  std::filesystem::create_directories(out_dir);

  struct Task {
    const RunEntry* entry;
    std::uint64_t seed;
    Json manifest_row;
  };
  std::vector<Task> tasks;
  for (const auto& e : spec.runs)
    for (auto s : seeds) tasks.push_back({&e, s, Json()});

  std::atomic<std::size_t> next{0};
  std::mutex err_mu;
  std::optional<std::string> error;
  auto worker = [&]() {
    for (std::size_t i = next++; i < tasks.size(); i = next++) {
      try {
        Task& t = tasks[i];
        const RunConfig cfg = resolve_config(*t.entry, ctx, spec, opt, t.seed);
        const RunResult res = std::visit([&](const auto& fam) { return run(ctx.mdp, fam, ctx.theta0, cfg); }, ctx.policy);
        const std::string stem = artifact_stem(*t.entry, t.seed);
        write_text_file(out_dir / (stem + ".csv"), run_csv_string(res));
        Json side = run_sidecar_json(res);
        side["run"] = t.entry->name;
        if (t.entry->schedule) side["schedule"] = to_string(*t.entry->schedule);
        write_text_file(out_dir / (stem + ".json"), side.dump(2) + "\n");
        t.manifest_row = {{"run", t.entry->name},
                          {"seed", t.seed},
                          {"csv", stem + ".csv"},
                          {"sidecar", stem + ".json"},
                          {"truncated", res.truncated}};
      } catch (const std::exception& e) {
        std::lock_guard lock(err_mu);
        if (!error) error = e.what();
      }
    }
  };
  {
    const int jobs = std::max(1, std::min<int>(spec.jobs, static_cast<int>(tasks.size())));
    std::vector<std::jthread> pool;
    for (int w = 1; w < jobs; ++w) pool.emplace_back(worker);
    worker();
  }
  if (error) throw std::runtime_error(*error);

  Json manifest;
  manifest["schema_version"] = kSchemaVersion;
  manifest["runs"] = Json::array();
  for (const auto& t : tasks) manifest["runs"].push_back(t.manifest_row);
  write_text_file(out_dir / "index.json", manifest.dump(2) + "\n");
  return manifest;
}

/// Constants report plus every theorem schedule at the experiment's epsilon.
inline Json constants_report_json(const ExperimentSpec& spec, std::optional<double> lambda = std::nullopt) {
  const ExperimentContext ctx = prepare_context(spec, true, lambda.value_or(spec.lambda));
  Json out;
  out["schema_version"] = kSchemaVersion;
  out["constants"] = constants_to_json(*ctx.constants);
  out["epsilon"] = spec.epsilon;
  Json schedules = Json::array();
  for (int i = 0; i <= static_cast<int>(Schedule::stationary_e4); ++i) {
    try {
      schedules.push_back(schedule_to_json(theorem_schedule(static_cast<Schedule>(i), *ctx.constants, spec.epsilon)));
    } catch (const std::exception& e) {
      schedules.push_back({{"schedule", to_string(static_cast<Schedule>(i))}, {"error", e.what()}, {"complete", false}});
    }
  }
  out["schedules"] = std::move(schedules);
  return out;
}

}  // namespace vrpg
