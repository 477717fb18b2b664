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

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "cup/cmdp.hpp"
#include "cup/optimizer.hpp"

namespace cup {

/// Desk-scale gridworld CMDP generator. Cells are indexed x + y*width with
/// (0,0) top-left; actions are up/right/down/left; slip redistributes motion
/// to the two lateral directions; off-grid moves bounce in place; the goal is
/// absorbing. Hazard cost is charged per entry: c(s,a) = hazard_cost times
/// the probability of landing in a hazard cell.
struct GridworldSpec {
  int width = 4;
  int height = 4;
  int goal_cell = 15;
  std::vector<int> hazard_cells;
  double step_reward = 0.0;
  double goal_reward = 1.0;
  double hazard_cost = 1.0;
  double slip_prob = 0.1;
  double gamma = 0.9;
  double cost_limit_b = 1.0;

  static GridworldSpec from_json_string(const std::string& text);
  std::string to_json_string() const;
};

CmdpModel build_gridworld(const GridworldSpec& spec);

/// Random dense CMDP: normalized-exponential transition rows, rewards
/// uniform in [-1,1], costs uniform in [0,1], random initial distribution.
/// Deterministic per seed.
CmdpModel random_cmdp(std::uint64_t seed, int n_states, int n_actions,
                      double gamma, double b);

/// Unconstrained optimal value and greedy deterministic policy, by value
/// iteration to fixed point.
struct ValueIterationResult {
  Vec v;
  std::vector<int> greedy_actions;
};
ValueIterationResult value_iteration(const CmdpModel& model,
                                     double tol = 1e-13, int max_iters = 100000);

/// Exhaustive search over deterministic policies for the best return among
/// those with Jc <= b. Lower reference only: constrained optima may be
/// stochastic. Throws ConfigError when n_actions^n_states > 10^6.
struct OracleResult {
  std::optional<double> best_feasible_return;
  std::vector<int> actions;  // empty when no feasible policy exists
};
OracleResult deterministic_feasible_oracle(const CmdpModel& model);

/// Randomized bound audit over random (model, policy pair) draws.
struct AuditReport {
  int draws = 0;
  int checks = 0;
  int violations = 0;
  double worst_margin = 0.0;  // most negative slack seen (>= 0 when clean)
  struct VariantStats {
    std::string name;
    int checks = 0;
    int violations = 0;
    double worst_margin = 0.0;
  };
  std::vector<VariantStats> per_variant;
};

struct AuditOptions {
  std::uint64_t seed = 42;
  int draws = 500;
  int n_states = 6;
  int n_actions = 3;
  std::vector<double> lambdas = {0.0, 0.5, 0.95};
  double policy_scale = 1.0;
  double gamma = 0.9;
  double tolerance = 1e-9;
};

AuditReport audit_bounds(const AuditOptions& options,
                         std::vector<std::string>* reports_json = nullptr);

std::string audit_report_to_json(const AuditReport& report);

/// Experiment runner config (the `cup train` JSON file): model path, CUP
/// config, iteration budget, seed, output paths.
struct ExperimentConfig {
  std::string model_path;
  CupConfig cup;
  int iters = 300;
  std::uint64_t seed = 1;
  std::string out_csv = "run.csv";
  std::string summary_path;
  double init_scale = 0.1;

  static ExperimentConfig from_json_string(const std::string& text);
  static ExperimentConfig load(const std::string& path);
};

struct ExperimentResult {
  double j_initial = 0.0;
  double j_final = 0.0;
  double jc_final = 0.0;
  bool feasible = false;
  int iters = 0;
  std::vector<IterationReport> reports;
};

/// Runs CUP per config, writes run.csv (and summary JSON when configured)
/// atomically. The CSV layout is fixed:
/// iter,j_reward_exact,j_cost_exact,nu,kl_step1,surrogate,feasible.
ExperimentResult run_experiment(const CmdpModel& model,
                                const ExperimentConfig& config);

std::string run_csv(const std::vector<IterationReport>& reports);

}  // namespace cup
