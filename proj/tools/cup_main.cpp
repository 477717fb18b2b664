/*
 Copyright 2025 The cup-cmdp Authors

 Licensed under the Apache License, Version 2.0 (the "License");
 you may not use this file except in compliance with the License.
 You may obtain a copy of the License at

      https://www.apache.org/licenses/LICENSE-2.0

 Unless required by applicable law or agreed to in writing, software
 distributed under the License is distributed on an "AS IS" BASIS,
 WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 See the License for the specific language governing permissions and
 limitations under the License.
*/

#include <cstdint>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "cup/bounds.hpp"
#include "cup/harness.hpp"
#include "cup/lambda_dynamics.hpp"
#include "cup/optimizer.hpp"
#include "json.hpp"

namespace {

using namespace cup;

constexpr int kExitUsage = 2;
constexpr int kExitNumerical = 3;

Mat policy_theta_from_file(const std::string& path, int n_states,
                           int n_actions) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open policy file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(ss.str());
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("policy JSON parse error: ") + e.what());
  }
  const auto& rows = j.at("theta");
  if (static_cast<int>(rows.size()) != n_states)
    throw ConfigError("policy theta must have n_states rows");
  Mat theta(n_states, n_actions);
  for (int s = 0; s < n_states; ++s) {
    if (static_cast<int>(rows[s].size()) != n_actions)
      throw ConfigError("policy theta row " + std::to_string(s) +
                        " must have n_actions entries");
    for (int a = 0; a < n_actions; ++a)
      theta(s, a) = rows[s][a].get<double>();
  }
  return theta;
}

std::string plot_data_csv(const std::vector<IterationReport>& reports) {
  std::string out = "iter,metric,value\n";
  char line[128];
  const auto emit = [&](size_t i, const char* metric, double value) {
    std::snprintf(line, sizeof(line), "%zu,%s,%.12g\n", i, metric, value);
    out += line;
  };
  for (size_t i = 0; i < reports.size(); ++i) {
    emit(i, "j_reward_exact", reports[i].j_reward);
    emit(i, "j_cost_exact", reports[i].j_cost);
    emit(i, "nu", reports[i].nu);
    emit(i, "kl_step1", reports[i].kl_step1);
  }
  return out;
}

int cmd_train(const std::string& model_path, const std::string& config_path,
              int iters, std::uint64_t seed, const std::string& out,
              const std::string& summary, double init_scale,
              bool emit_plot_data, int episodes, int horizon) {
  const CmdpModel model = CmdpModel::load(model_path);
  ExperimentConfig config;
  config.model_path = model_path;
  if (!config_path.empty()) config.cup = CupConfig::load(config_path);
  if (episodes > 0) config.cup.episodes = episodes;
  if (horizon > 0) config.cup.horizon = horizon;
  config.iters = iters;
  config.seed = seed;
  config.out_csv = out;
  config.summary_path = summary;
  config.init_scale = init_scale;
  const ExperimentResult result = run_experiment(model, config);
  if (emit_plot_data)
    atomic_write(out + ".plot.csv", plot_data_csv(result.reports));
  std::cout << "train: iters=" << result.iters
            << " J=" << result.j_final << " Jc=" << result.jc_final
            << " b=" << model.cost_limit_b()
            << (result.feasible ? " feasible" : " infeasible") << "\n";
  return 0;
}

int cmd_audit(std::uint64_t seed, int draws, const std::string& sizes,
              std::vector<double> lambdas, double scale, double gamma,
              const std::string& out) {
  AuditOptions options;
  options.seed = seed;
  options.draws = draws;
  if (!sizes.empty()) {
    const auto x = sizes.find('x');
    if (x == std::string::npos)
      throw ConfigError("--sizes must look like SxA, e.g. 6x3");
    options.n_states = std::stoi(sizes.substr(0, x));
    options.n_actions = std::stoi(sizes.substr(x + 1));
    if (options.n_states < 1 || options.n_actions < 1)
      throw ConfigError("--sizes must be positive");
  }
  if (!lambdas.empty()) options.lambdas = std::move(lambdas);
  options.policy_scale = scale;
  options.gamma = gamma;

  std::vector<std::string> reports;
  const AuditReport report = audit_bounds(options, &reports);
  if (!out.empty()) {
    std::string text = "{\n\"summary\": " + audit_report_to_json(report) +
                       ",\n\"reports\": [\n";
    for (size_t i = 0; i < reports.size(); ++i) {
      text += reports[i];
      if (i + 1 < reports.size()) text += ",";
      text += "\n";
    }
    text += "]\n}\n";
    atomic_write(out, text);
  }
  std::cout << audit_report_to_json(report) << "\n";
  return report.violations == 0 ? 0 : 1;
}

int cmd_eval(const std::string& model_path, const std::string& policy_path,
             double lambda, const std::string& dump_dynamics,
             const std::string& out) {
  const CmdpModel model = CmdpModel::load(model_path);
  SoftmaxPolicy policy =
      policy_path.empty()
          ? SoftmaxPolicy::uniform(model.n_states(), model.n_actions())
          : SoftmaxPolicy(policy_theta_from_file(policy_path, model.n_states(),
                                                 model.n_actions()));
  const double j = objective(model, policy, Signal::reward);
  const double jc = objective(model, policy, Signal::cost);
  nlohmann::json summary;
  summary["j_reward"] = j;
  summary["j_cost"] = jc;
  summary["cost_limit"] = model.cost_limit_b();
  summary["feasible"] = jc <= model.cost_limit_b();
  const auto [plain, lam] = lambda_objective_identity(model, policy, lambda);
  summary["lambda"] = lambda;
  summary["j_lambda_identity"] = lam;
  summary["identity_gap"] = plain - lam;
  if (!dump_dynamics.empty()) {
    const LambdaDynamics dyn = make_lambda_dynamics(model, policy, lambda);
    atomic_write(dump_dynamics, lambda_dynamics_to_json(dyn));
  }
  const std::string text = summary.dump(2);
  if (!out.empty()) atomic_write(out, text);
  std::cout << text << "\n";
  return 0;
}

int cmd_gen_gridworld(const std::string& spec_path, const std::string& out,
                      double cost_limit_frac) {
  GridworldSpec spec;
  if (!spec_path.empty()) {
    std::ifstream in(spec_path);
    if (!in) throw ConfigError("cannot open gridworld spec: " + spec_path);
    std::ostringstream ss;
    ss << in.rdbuf();
    spec = GridworldSpec::from_json_string(ss.str());
  }
  if (cost_limit_frac > 0.0) {
    // scale the limit off the unconstrained optimum's cost
    spec.cost_limit_b = 1.0;  // placeholder so the model validates
    const CmdpModel base = build_gridworld(spec);
    const ValueIterationResult vi = value_iteration(base);
    Mat theta = Mat::Constant(base.n_states(), base.n_actions(), -30.0);
    for (int s = 0; s < base.n_states(); ++s) theta(s, vi.greedy_actions[s]) = 0.0;
    const double jc_star =
        objective(base, SoftmaxPolicy(theta), Signal::cost);
    spec.cost_limit_b = cost_limit_frac * jc_star;
  }
  const CmdpModel model = build_gridworld(spec);
  model.save(out);
  std::cout << "gen-gridworld: " << out << " (S=" << model.n_states()
            << ", b=" << model.cost_limit_b() << ")\n";
  return 0;
}

int cmd_oracle(const std::string& model_path, const std::string& out) {
  const CmdpModel model = CmdpModel::load(model_path);
  const OracleResult result = deterministic_feasible_oracle(model);
  nlohmann::json j;
  if (result.best_feasible_return) {
    j["best_feasible_return"] = *result.best_feasible_return;
    j["actions"] = result.actions;
  } else {
    j["best_feasible_return"] = nullptr;
  }
  const std::string text = j.dump(2);
  if (!out.empty()) atomic_write(out, text);
  std::cout << text << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"cup: exact tabular constrained-MDP toolkit"};
  app.require_subcommand(1);

  // train
  auto* train = app.add_subcommand("train", "run the CUP optimizer on a model");
  std::string model_path, config_path, out = "run.csv", summary;
  int iters = 300;
  std::uint64_t seed = 1;
  double init_scale = 0.1;
  bool emit_plot_data = false;
  int episodes = 0, horizon = 0;
  train->add_option("--model", model_path, "model JSON")->required();
  train->add_option("--config", config_path, "CUP config JSON");
  train->add_option("--iters", iters, "iteration budget");
  train->add_option("--seed", seed, "master seed");
  train->add_option("--out", out, "output CSV path");
  train->add_option("--summary", summary, "summary JSON path");
  train->add_option("--init-scale", init_scale, "initial logit scale");
  train->add_option("--episodes", episodes,
                    "episodes per iteration (sampled mode override)");
  train->add_option("--horizon", horizon,
                    "episode horizon (sampled mode override)");
  train->add_flag("--emit-plot-data", emit_plot_data,
                  "also write tidy long-format plot CSV");

  // audit-bounds
  auto* audit = app.add_subcommand("audit-bounds",
                                   "randomized certification of the bounds");
  std::uint64_t audit_seed = 42;
  int draws = 500;
  std::string sizes = "6x3", audit_out;
  std::vector<double> lambdas;
  double scale = 1.0, gamma = 0.9;
  audit->add_option("--seed", audit_seed, "master seed");
  audit->add_option("--draws", draws, "number of random draws");
  audit->add_option("--sizes", sizes, "model size as SxA");
  audit->add_option("--lambdas", lambdas, "lambda grid");
  audit->add_option("--scale", scale, "policy logit scale");
  audit->add_option("--gamma", gamma, "discount factor");
  audit->add_option("--out", audit_out, "report JSON path");

  // eval
  auto* eval = app.add_subcommand("eval", "evaluate a policy on a model");
  std::string eval_model, eval_policy, dump_dynamics, eval_out;
  double eval_lambda = 0.5;
  eval->add_option("--model", eval_model, "model JSON")->required();
  eval->add_option("--policy", eval_policy, "policy JSON with a theta matrix");
  eval->add_option("--lambda", eval_lambda, "lambda for the identity check");
  eval->add_option("--dump-dynamics", dump_dynamics,
                   "write the lambda-dynamics bundle to this path");
  eval->add_option("--out", eval_out, "summary JSON path");

  // gen-gridworld
  auto* gen = app.add_subcommand("gen-gridworld", "emit a gridworld CMDP");
  std::string gen_spec, gen_out = "model.json";
  double cost_limit_frac = 0.0;
  gen->add_option("--spec", gen_spec, "gridworld spec JSON");
  gen->add_option("--out", gen_out, "model JSON path");
  gen->add_option("--cost-limit-frac", cost_limit_frac,
                  "set b to this fraction of the unconstrained optimum's cost");

  // oracle
  auto* oracle = app.add_subcommand(
      "oracle", "exhaustive deterministic feasibility reference");
  std::string oracle_model, oracle_out;
  oracle->add_option("--model", oracle_model, "model JSON")->required();
  oracle->add_option("--out", oracle_out, "result JSON path");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train)
      return cmd_train(model_path, config_path, iters, seed, out, summary,
                       init_scale, emit_plot_data, episodes, horizon);
    if (*audit)
      return cmd_audit(audit_seed, draws, sizes, lambdas, scale, gamma,
                       audit_out);
    if (*eval)
      return cmd_eval(eval_model, eval_policy, eval_lambda, dump_dynamics,
                      eval_out);
    if (*gen) return cmd_gen_gridworld(gen_spec, gen_out, cost_limit_frac);
    if (*oracle) return cmd_oracle(oracle_model, oracle_out);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return kExitNumerical;
  }
  return 0;
}
