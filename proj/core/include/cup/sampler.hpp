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
#include <string>
#include <vector>

#include "cup/cmdp.hpp"
#include "cup/policy.hpp"

namespace cup {

/// One sampled episode. states has length T+1, the step arrays length T.
/// rewards[t] = r(s_{t+1}|s_t,a_t), costs[t] = c(s_t,a_t).
struct Trajectory {
  std::vector<int> states;
  std::vector<int> actions;
  std::vector<double> rewards;
  std::vector<double> costs;
  std::vector<double> log_probs_behavior;
  std::uint64_t seed = 0;
};

/// Deterministic given (model, policy, horizon, seed).
Trajectory sample_trajectory(const CmdpModel& model,
                             const SoftmaxPolicy& policy, int horizon,
                             std::uint64_t seed);

/// Backward-recursion GAE over one trajectory: A_t = td_t + gamma*lambda*A_{t+1}.
/// td uses the step convention sig_t + gamma*v(s_{t+1}) - v(s_t), with
/// sig_t = rewards[t] for the reward signal and costs[t] for the cost signal.
std::vector<double> compute_gae(const Trajectory& traj,
                                const Vec& value_estimate, double gamma,
                                double lambda, Signal signal);

/// targets[t] = adv_hat[t] + value_estimate[states[t]].
std::vector<double> value_targets(const std::vector<double>& adv_hat,
                                  const Vec& value_estimate,
                                  const Trajectory& traj);

/// Sampled batch with the per-step estimator pipeline already applied.
struct EstimatorBatch {
  std::vector<Trajectory> trajectories;
  std::vector<std::vector<double>> adv_hat;
  std::vector<std::vector<double>> cost_adv_hat;
  std::vector<std::vector<double>> v_targets;
  std::vector<std::vector<double>> c_targets;
  double j_cost_hat = 0.0;
  double gamma = 0.0;
  double lambda = 0.0;
};

/// Samples `episodes` trajectories (stream i derived from the master seed)
/// and runs TD-error -> GAE -> target computation for both signals.
EstimatorBatch collect_batch(const CmdpModel& model,
                             const SoftmaxPolicy& policy, int episodes,
                             int horizon, std::uint64_t master_seed,
                             const Vec& v_estimate, const Vec& c_estimate,
                             double lambda);

/// Mean over episodes of sum_t gamma^t costs[t]. Throws ConfigError on an
/// empty batch.
double cost_return_estimate(const EstimatorBatch& batch);

/// Per-state mean of targets over visits; unvisited states keep the previous
/// estimate.
Vec fit_tabular_value(const EstimatorBatch& batch,
                      const std::vector<std::vector<double>>& targets,
                      const Vec& previous);

/// Mean over visited steps of KL(pi_a(.|s_t) || pi_b(.|s_t)).
double empirical_kl(const EstimatorBatch& batch, const SoftmaxPolicy& pi_a,
                    const SoftmaxPolicy& pi_b);

/// Importance-weighted estimate of the lambda-surrogate
/// E_{s~d_lambda(old), a~pi_new}[adv(s,a)] from a batch sampled by pi_old.
/// Step t is weighted by the d_lambda occupancy mixture (1 at t=0,
/// (1-lambda) gamma^t for t>=1, all scaled by 1-gamma_tilde), and the action
/// is reweighted by the single-step ratio pi_new/pi_old.
double dlam_surrogate_estimate(const EstimatorBatch& batch,
                               const SoftmaxPolicy& pi_new,
                               const SoftmaxPolicy& pi_old, Signal signal);

std::string batch_to_json(const EstimatorBatch& batch);
EstimatorBatch batch_from_json(const std::string& text);

}  // namespace cup
