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

#include "cup/sampler.hpp"

#include <cmath>

#include "cup/lambda_dynamics.hpp"
#include "cup/rng.hpp"
#include "json.hpp"

namespace cup {

Trajectory sample_trajectory(const CmdpModel& model,
                             const SoftmaxPolicy& policy, int horizon,
                             std::uint64_t seed) {
  check_dimensions(model, policy);
  if (horizon < 1) throw ConfigError("horizon must be >= 1");
  const int S = model.n_states();
  Rng rng(seed);
  Trajectory traj;
  traj.seed = seed;
  traj.states.reserve(horizon + 1);
  traj.actions.reserve(horizon);
  traj.rewards.reserve(horizon);
  traj.costs.reserve(horizon);
  traj.log_probs_behavior.reserve(horizon);

  int s = rng.categorical({model.rho0().data(), static_cast<size_t>(S)});
  traj.states.push_back(s);
  for (int t = 0; t < horizon; ++t) {
    Eigen::RowVectorXd action_probs = policy.probs().row(s);
    const int a = rng.categorical(
        {action_probs.data(), static_cast<size_t>(action_probs.size())});
    Eigen::RowVectorXd next_probs = model.transition(a).row(s);
    const int sp = rng.categorical(
        {next_probs.data(), static_cast<size_t>(next_probs.size())});
    traj.actions.push_back(a);
    traj.rewards.push_back(model.reward(a)(s, sp));
    traj.costs.push_back(model.cost()(s, a));
    traj.log_probs_behavior.push_back(policy.log_prob(s, a));
    traj.states.push_back(sp);
    s = sp;
  }
  return traj;
}

std::vector<double> compute_gae(const Trajectory& traj,
                                const Vec& value_estimate, double gamma,
                                double lambda, Signal signal) {
  const int T = static_cast<int>(traj.actions.size());
  std::vector<double> adv(T, 0.0);
  const double gl = gamma * lambda;
  double running = 0.0;
  for (int t = T - 1; t >= 0; --t) {
    const double sig =
        signal == Signal::reward ? traj.rewards[t] : traj.costs[t];
    const double delta = sig + gamma * value_estimate(traj.states[t + 1]) -
                         value_estimate(traj.states[t]);
    running = delta + gl * running;
    adv[t] = running;
  }
  return adv;
}

std::vector<double> value_targets(const std::vector<double>& adv_hat,
                                  const Vec& value_estimate,
                                  const Trajectory& traj) {
  std::vector<double> targets(adv_hat.size());
  for (size_t t = 0; t < adv_hat.size(); ++t)
    targets[t] = adv_hat[t] + value_estimate(traj.states[t]);
  return targets;
}

EstimatorBatch collect_batch(const CmdpModel& model,
                             const SoftmaxPolicy& policy, int episodes,
                             int horizon, std::uint64_t master_seed,
                             const Vec& v_estimate, const Vec& c_estimate,
                             double lambda) {
  if (episodes < 1) throw ConfigError("episodes must be >= 1");
  EstimatorBatch batch;
  batch.gamma = model.gamma();
  batch.lambda = lambda;
  batch.trajectories.reserve(episodes);
  double jc = 0.0;
  for (int i = 0; i < episodes; ++i) {
    Rng stream = Rng::stream(master_seed, static_cast<std::uint64_t>(i));
    Trajectory traj =
        sample_trajectory(model, policy, horizon, stream.next_u64());
    double disc = 1.0, epi_cost = 0.0;
    for (double c : traj.costs) {
      epi_cost += disc * c;
      disc *= model.gamma();
    }
    jc += epi_cost;
    batch.adv_hat.push_back(
        compute_gae(traj, v_estimate, model.gamma(), lambda, Signal::reward));
    batch.cost_adv_hat.push_back(
        compute_gae(traj, c_estimate, model.gamma(), lambda, Signal::cost));
    batch.v_targets.push_back(
        value_targets(batch.adv_hat.back(), v_estimate, traj));
    batch.c_targets.push_back(
        value_targets(batch.cost_adv_hat.back(), c_estimate, traj));
    batch.trajectories.push_back(std::move(traj));
  }
  batch.j_cost_hat = jc / episodes;
  return batch;
}

double cost_return_estimate(const EstimatorBatch& batch) {
  if (batch.trajectories.empty())
    throw ConfigError("cost_return_estimate requires a non-empty batch");
  double total = 0.0;
  for (const Trajectory& traj : batch.trajectories) {
    double disc = 1.0, epi = 0.0;
    for (double c : traj.costs) {
      epi += disc * c;
      disc *= batch.gamma;
    }
    total += epi;
  }
  return total / static_cast<double>(batch.trajectories.size());
}

Vec fit_tabular_value(const EstimatorBatch& batch,
                      const std::vector<std::vector<double>>& targets,
                      const Vec& previous) {
  Vec sums = Vec::Zero(previous.size());
  Eigen::VectorXi counts = Eigen::VectorXi::Zero(previous.size());
  for (size_t i = 0; i < batch.trajectories.size(); ++i) {
    const Trajectory& traj = batch.trajectories[i];
    for (size_t t = 0; t < targets[i].size(); ++t) {
      sums(traj.states[t]) += targets[i][t];
      counts(traj.states[t]) += 1;
    }
  }
  Vec fitted = previous;
  for (int s = 0; s < previous.size(); ++s)
    if (counts(s) > 0) fitted(s) = sums(s) / counts(s);
  return fitted;
}

double empirical_kl(const EstimatorBatch& batch, const SoftmaxPolicy& pi_a,
                    const SoftmaxPolicy& pi_b) {
  double total = 0.0;
  long steps = 0;
  for (const Trajectory& traj : batch.trajectories) {
    for (size_t t = 0; t + 1 < traj.states.size(); ++t) {
      const int s = traj.states[t];
      double kl = 0.0;
      for (int a = 0; a < pi_a.n_actions(); ++a)
        kl += pi_a.prob(s, a) * (pi_a.log_prob(s, a) - pi_b.log_prob(s, a));
      total += kl;
      ++steps;
    }
  }
  return steps == 0 ? 0.0 : total / static_cast<double>(steps);
}

double dlam_surrogate_estimate(const EstimatorBatch& batch,
                               const SoftmaxPolicy& pi_new,
                               const SoftmaxPolicy& pi_old, Signal signal) {
  const double gamma = batch.gamma;
  const double lambda = batch.lambda;
  const double gt = gamma_tilde(gamma, lambda);
  double total = 0.0;
  for (size_t i = 0; i < batch.trajectories.size(); ++i) {
    const Trajectory& traj = batch.trajectories[i];
    const auto& adv =
        signal == Signal::reward ? batch.adv_hat[i] : batch.cost_adv_hat[i];
    double disc = 1.0;  // gamma^t
    for (size_t t = 0; t < adv.size(); ++t) {
      const double w = t == 0 ? 1.0 : (1.0 - lambda) * disc;
      const int s = traj.states[t];
      const int a = traj.actions[t];
      const double ratio = pi_new.prob(s, a) / pi_old.prob(s, a);
      total += w * ratio * adv[t];
      disc *= gamma;
    }
  }
  return (1.0 - gt) * total / static_cast<double>(batch.trajectories.size());
}

std::string batch_to_json(const EstimatorBatch& batch) {
  nlohmann::json j;
  j["gamma"] = batch.gamma;
  j["lambda"] = batch.lambda;
  j["j_cost_hat"] = batch.j_cost_hat;
  nlohmann::json trajs = nlohmann::json::array();
  for (size_t i = 0; i < batch.trajectories.size(); ++i) {
    const Trajectory& t = batch.trajectories[i];
    nlohmann::json row;
    row["seed"] = t.seed;
    row["states"] = t.states;
    row["actions"] = t.actions;
    row["rewards"] = t.rewards;
    row["costs"] = t.costs;
    row["log_probs_behavior"] = t.log_probs_behavior;
    row["adv_hat"] = batch.adv_hat[i];
    row["cost_adv_hat"] = batch.cost_adv_hat[i];
    row["v_targets"] = batch.v_targets[i];
    row["c_targets"] = batch.c_targets[i];
    trajs.push_back(std::move(row));
  }
  j["trajectories"] = std::move(trajs);
  return j.dump();
}

EstimatorBatch batch_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("batch JSON parse error: ") + e.what());
  }
  EstimatorBatch batch;
  batch.gamma = j.at("gamma").get<double>();
  batch.lambda = j.at("lambda").get<double>();
  batch.j_cost_hat = j.at("j_cost_hat").get<double>();
  for (const auto& row : j.at("trajectories")) {
    Trajectory t;
    t.seed = row.at("seed").get<std::uint64_t>();
    t.states = row.at("states").get<std::vector<int>>();
    t.actions = row.at("actions").get<std::vector<int>>();
    t.rewards = row.at("rewards").get<std::vector<double>>();
    t.costs = row.at("costs").get<std::vector<double>>();
    t.log_probs_behavior = row.at("log_probs_behavior").get<std::vector<double>>();
    batch.adv_hat.push_back(row.at("adv_hat").get<std::vector<double>>());
    batch.cost_adv_hat.push_back(
        row.at("cost_adv_hat").get<std::vector<double>>());
    batch.v_targets.push_back(row.at("v_targets").get<std::vector<double>>());
    batch.c_targets.push_back(row.at("c_targets").get<std::vector<double>>());
    batch.trajectories.push_back(std::move(t));
  }
  return batch;
}

}  // namespace cup
