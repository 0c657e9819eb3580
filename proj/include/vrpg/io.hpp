#pragma once

// JSON and CSV serialization for MDPs, policies, run configurations, run
// results, constants reports and trajectory dumps.

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <istream>
#include <limits>
#include <ostream>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "vrpg/algorithms.hpp"
#include "vrpg/analysis.hpp"
#include "vrpg/constants.hpp"
#include "vrpg/mdp.hpp"
#include "vrpg/policy.hpp"
#include "vrpg/sampler.hpp"

namespace vrpg {

using Json = nlohmann::ordered_json;

/// Bumped whenever the run CSV columns or the sidecar layout change.
inline constexpr int kSchemaVersion = 1;
inline constexpr const char* kRunCsvHeader = "iter,j_exact,grad_norm2,w_norm2,w_err,trajectories";

class SpecError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline Json vector_to_json(const Vector& v) {
  Json out = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

inline Vector vector_from_json(const Json& j) {
  if (!j.is_array()) throw SpecError("expected a numeric array");
  Vector v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
  return v;
}

inline Json matrix_to_json(const Matrix& m) {
  Json out = Json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    Json row = Json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    out.push_back(std::move(row));
  }
  return out;
}

inline Matrix matrix_from_json(const Json& j) {
  if (!j.is_array() || j.empty() || !j[0].is_array()) throw SpecError("expected a nonempty array of rows");
  const auto cols = j[0].size();
  Matrix m(static_cast<Eigen::Index>(j.size()), static_cast<Eigen::Index>(cols));
  for (std::size_t r = 0; r < j.size(); ++r) {
    if (j[r].size() != cols) throw SpecError("ragged matrix rows");
    for (std::size_t c = 0; c < cols; ++c)
      m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = j[r][c].get<double>();
  }
  return m;
}

/// transition[s][a][s'] nests the (s, a) rows; doubles round-trip exactly.
inline Json mdp_to_json(const TabularMdp& mdp) {
  Json t = Json::array();
  for (int s = 0; s < mdp.n_states; ++s) {
    Json per_action = Json::array();
    for (int a = 0; a < mdp.n_actions; ++a) {
      Json row = Json::array();
      for (double p : mdp.next_distribution(s, a)) row.push_back(p);
      per_action.push_back(std::move(row));
    }
    t.push_back(std::move(per_action));
  }
  Json out;
  out["n_states"] = mdp.n_states;
  out["n_actions"] = mdp.n_actions;
  out["gamma"] = mdp.gamma;
  out["reward_bound"] = mdp.reward_bound;
  out["rho"] = vector_to_json(mdp.rho);
  out["reward"] = matrix_to_json(mdp.reward);
  out["transition"] = std::move(t);
  return out;
}

inline TabularMdp mdp_from_json(const Json& j) {
  try {
    TabularMdp mdp;
    mdp.n_states = j.at("n_states").get<int>();
    mdp.n_actions = j.at("n_actions").get<int>();
    mdp.gamma = j.at("gamma").get<double>();
    mdp.reward_bound = j.at("reward_bound").get<double>();
    mdp.rho = vector_from_json(j.at("rho"));
    mdp.reward = matrix_from_json(j.at("reward"));
    const Json& t = j.at("transition");
    if (mdp.n_states < 1 || mdp.n_actions < 1) throw SpecError("mdp: sizes must be >= 1");
    if (t.size() != static_cast<std::size_t>(mdp.n_states)) throw SpecError("mdp: transition has the wrong state count");
    mdp.transition = RowMatrix::Zero(static_cast<Eigen::Index>(mdp.n_states) * mdp.n_actions, mdp.n_states);
    for (int s = 0; s < mdp.n_states; ++s) {
      if (t[s].size() != static_cast<std::size_t>(mdp.n_actions)) throw SpecError("mdp: transition has the wrong action count");
      for (int a = 0; a < mdp.n_actions; ++a) {
        if (t[s][a].size() != static_cast<std::size_t>(mdp.n_states)) throw SpecError("mdp: transition row has the wrong length");
        for (int s2 = 0; s2 < mdp.n_states; ++s2) mdp.transition(s * mdp.n_actions + a, s2) = t[s][a][s2].get<double>();
      }
    }
    const auto problems = validate_mdp(mdp);
    if (!problems.empty()) throw SpecError("mdp: " + problems.front());
    return mdp;
  } catch (const nlohmann::json::exception& e) {
    throw SpecError(std::string("mdp: ") + e.what());
  }
}

inline Json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw SpecError("cannot open file: " + path.string());
  try {
    return Json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw SpecError("malformed JSON in " + path.string() + ": " + e.what());
  }
}

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write file: " + path.string());
  out << text;
}

inline TabularMdp load_mdp(const std::filesystem::path& path) { return mdp_from_json(read_json_file(path)); }

inline void save_mdp(const TabularMdp& mdp, const std::filesystem::path& path) {
  write_text_file(path, mdp_to_json(mdp).dump(2) + "\n");
}

inline Json policy_to_json(const SoftmaxTabular& p) {
  return Json{{"family", "softmax_tabular"}, {"n_states", p.n_states()}, {"n_actions", p.n_actions()}};
}

inline Json policy_to_json(const SoftmaxLinear& p) {
  Json feats = Json::array();
  for (const auto& f : p.features()) feats.push_back(matrix_to_json(f));
  return Json{{"family", "softmax_linear"}, {"features", std::move(feats)}};
}

inline Json policy_to_json(const GaussianLinear& p) {
  Json feats = Json::array();
  for (const auto& f : p.features()) feats.push_back(matrix_to_json(f));
  return Json{{"family", "gaussian_linear"}, {"features", std::move(feats)}, {"covariance", matrix_to_json(p.covariance())}};
}

inline std::vector<Matrix> features_from_json(const Json& j) {
  if (!j.is_array() || j.empty()) throw SpecError("policy: features must be a nonempty array");
  std::vector<Matrix> out;
  for (const auto& f : j) out.push_back(matrix_from_json(f));
  return out;
}

using AnyFamily = std::variant<SoftmaxTabular, SoftmaxLinear, GaussianLinear>;

struct PolicyState {
  AnyFamily family;
  Vector theta;
};

/// Family description plus "d" and "theta"; theta must have the family's dimension.
template <PolicyFamily P>
Json policy_state_to_json(const P& family, const Vector& theta) {
  if (theta.size() != family.dim()) throw std::invalid_argument("policy_state_to_json: theta has the wrong dimension");
  Json out = policy_to_json(family);
  out["d"] = family.dim();
  out["theta"] = vector_to_json(theta);
  return out;
}

inline PolicyState policy_state_from_json(const Json& j) {
  try {
    const std::string tag = j.at("family").get<std::string>();
    auto family = [&]() -> AnyFamily {
      if (tag == "softmax_tabular") return SoftmaxTabular(j.at("n_states").get<int>(), j.at("n_actions").get<int>());
      if (tag == "softmax_linear") return SoftmaxLinear(features_from_json(j.at("features")));
      if (tag == "gaussian_linear")
        return GaussianLinear(features_from_json(j.at("features")), matrix_from_json(j.at("covariance")));
      throw SpecError("policy: unknown family " + tag);
    }();
    Vector theta = vector_from_json(j.at("theta"));
    const int d = std::visit([](const auto& f) { return f.dim(); }, family);
    if (j.at("d").get<int>() != d || theta.size() != d) throw SpecError("policy: d and theta disagree with the family");
    return {std::move(family), std::move(theta)};
  } catch (const nlohmann::json::exception& e) {
    throw SpecError(std::string("policy: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw SpecError(std::string("policy: ") + e.what());
  }
}

inline Json sgd_to_json(const SgdConfig& c) {
  return Json{{"iterations", c.iterations},
              {"stepsize", c.stepsize},
              {"lambda", c.lambda},
              {"exact_adv", c.exact_adv},
              {"adv_horizon", c.adv_horizon}};
}

inline Json config_to_json(const RunConfig& c) {
  Json out;
  out["algorithm"] = to_string(c.algorithm);
  out["eta"] = c.eta;
  out["iterations"] = c.iterations;
  out["epochs"] = c.epochs;
  out["epoch_length"] = c.epoch_length;
  out["batch"] = c.batch;
  out["minibatch"] = c.minibatch;
  out["horizon"] = c.horizon;
  out["sgd"] = sgd_to_json(c.sgd);
  out["lambda"] = c.lambda;
  out["score_bound"] = c.score_bound;
  out["seed"] = c.seed;
  out["trajectory_budget"] = c.trajectory_budget;
  out["eval_every"] = c.eval_every;
  out["exact_gradients"] = c.exact_gradients;
  out["exact_subproblem"] = c.exact_subproblem;
  out["threads"] = c.threads;
  return out;
}

/// Overlays the keys present in `j` onto `base`; unknown keys are rejected.
inline RunConfig config_from_json(const Json& j, RunConfig base = {}) {
  if (!j.is_object()) throw SpecError("run config must be an object");
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "algorithm") base.algorithm = algorithm_from_string(value.get<std::string>());
      else if (key == "eta") base.eta = value.get<double>();
      else if (key == "iterations") base.iterations = value.get<std::int64_t>();
      else if (key == "epochs") base.epochs = value.get<std::int64_t>();
      else if (key == "epoch_length") base.epoch_length = value.get<std::int64_t>();
      else if (key == "batch") base.batch = value.get<std::int64_t>();
      else if (key == "minibatch") base.minibatch = value.get<std::int64_t>();
      else if (key == "horizon") base.horizon = value.get<int>();
      else if (key == "lambda") base.lambda = value.get<double>();
      else if (key == "score_bound") base.score_bound = value.get<double>();
      else if (key == "seed") base.seed = value.get<std::uint64_t>();
      else if (key == "trajectory_budget") base.trajectory_budget = value.get<std::int64_t>();
      else if (key == "eval_every") base.eval_every = value.get<int>();
      else if (key == "exact_gradients") base.exact_gradients = value.get<bool>();
      else if (key == "exact_subproblem") base.exact_subproblem = value.get<bool>();
      else if (key == "threads") base.threads = value.get<int>();
      else if (key == "sgd") {
        for (const auto& [k2, v2] : value.items()) {
          if (k2 == "iterations") base.sgd.iterations = v2.get<int>();
          else if (k2 == "stepsize") base.sgd.stepsize = v2.get<double>();
          else if (k2 == "lambda") base.sgd.lambda = v2.get<double>();
          else if (k2 == "exact_adv") base.sgd.exact_adv = v2.get<bool>();
          else if (k2 == "adv_horizon") base.sgd.adv_horizon = v2.get<int>();
          else throw SpecError("unknown sgd key: " + k2);
        }
      } else if (key == "schedule" || key == "epsilon" || key == "name") {
        continue;  // handled by the experiment layer
      } else {
        throw SpecError("unknown run config key: " + key);
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw SpecError(std::string("run config: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw SpecError(e.what());
  }
  return base;
}

/// Shortest decimal text that parses back to the same double; "nan" for NaN.
inline std::string format_double(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[40];
  for (int prec = 15; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof buf, "%.*g", prec, x);
    if (std::strtod(buf, nullptr) == x) break;
  }
  return buf;
}

inline void write_run_csv(std::ostream& os, const RunResult& run) {
  os << kRunCsvHeader << '\n';
  for (const auto& r : run.records) {
    os << r.iter << ',' << format_double(r.j_exact) << ',' << format_double(r.grad_norm2) << ','
       << format_double(r.w_norm2) << ',' << format_double(r.w_err) << ',' << r.trajectories << '\n';
  }
}

inline std::string run_csv_string(const RunResult& run) {
  std::ostringstream os;
  write_run_csv(os, run);
  return os.str();
}

inline Json run_sidecar_json(const RunResult& run) {
  Json out;
  out["schema_version"] = kSchemaVersion;
  out["columns"] = Json::array({"iter", "j_exact", "grad_norm2", "w_norm2", "w_err", "trajectories"});
  out["config"] = config_to_json(run.config);
  out["records"] = run.records.size();
  out["trajectories"] = run.records.empty() ? 0 : run.records.back().trajectories;
  out["truncated"] = run.truncated;
  out["final_theta"] = vector_to_json(run.final_theta);
  out["theta_out"] = vector_to_json(run.theta_out);
  out["wall_time_seconds"] = run.wall_time;
  return out;
}

inline Json constants_to_json(const ConstantsReport& c) {
  Json out;
  out["G"] = c.G;
  out["M"] = c.M;
  out["R"] = c.R;
  out["gamma"] = c.gamma;
  out["sigma2_hat"] = c.sigma2_hat ? Json(*c.sigma2_hat) : Json(nullptr);
  out["W_hat"] = c.W_hat ? Json(*c.W_hat) : Json(nullptr);
  out["mu_F"] = c.mu_F;
  out["mu_F_convention"] = c.mu_F_convention;
  out["L_J"] = c.L_J;
  out["C_gamma"] = c.C_gamma;
  out["eps_bias"] = std::isnan(c.eps_bias) ? Json(nullptr) : Json(c.eps_bias);
  out["lambda"] = c.lambda;
  out["j_star"] = c.j_star;
  out["j_theta0"] = c.j_theta0;
  out["kl_init"] = c.kl_init;
  return out;
}

inline Json schedule_to_json(const ScheduleResult& s) {
  Json out;
  out["schedule"] = to_string(s.which);
  out["epsilon"] = s.epsilon;
  out["eta"] = s.config.eta;
  out["order_only"] = s.order_only;
  out["complete"] = s.complete;
  out["feasible"] = s.feasible;
  out["config"] = config_to_json(s.config);
  out["notes"] = s.notes;
  return out;
}

inline Json decomposition_to_json(const GapDecomposition& d) {
  Json out;
  out["lhs"] = d.lhs;
  out["term_bias"] = d.term_bias;
  out["term_kl"] = d.term_kl;
  out["term_w2"] = d.term_w2;
  out["term_werr"] = d.term_werr;
  out["rhs"] = d.rhs();
  out["slack"] = d.slack;
  out["tolerance"] = d.tolerance;
  out["holds"] = d.holds;
  out["partial"] = d.partial;
  out["dominant"] = d.dominant;
  out["iterations"] = d.iterations;
  return out;
}

inline Json truncation_audit_to_json(const std::vector<TruncationAuditRow>& rows) {
  Json out = Json::array();
  for (const auto& r : rows)
    out.push_back({{"H", r.horizon}, {"gap", r.gap}, {"bound", r.bound}, {"enumerated", r.enumerated}, {"ok", r.ok}});
  return out;
}

/// One line per trajectory: H followed by H (state, action, reward) triples.
inline void write_trajectories(std::ostream& os, std::span<const Trajectory<int>> batch) {
  for (const auto& t : batch) {
    os << t.horizon();
    for (const auto& st : t.steps) os << ' ' << st.state << ' ' << st.action << ' ' << format_double(st.reward);
    os << '\n';
  }
}

inline std::vector<Trajectory<int>> read_trajectories(std::istream& is) {
  std::vector<Trajectory<int>> out;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    int h = 0;
    if (!(ls >> h) || h < 0) throw SpecError("trajectory dump: bad horizon");
    Trajectory<int> t;
    for (int i = 0; i < h; ++i) {
      Step<int> st;
      std::string reward;
      if (!(ls >> st.state >> st.action >> reward)) throw SpecError("trajectory dump: truncated line");
      st.reward = std::strtod(reward.c_str(), nullptr);
      t.steps.push_back(st);
    }
    out.push_back(std::move(t));
  }
  return out;
}

}  // namespace vrpg
