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

#include "cup/lambda_dynamics.hpp"

#include <cmath>

#include "json.hpp"

namespace cup {

namespace {

void check_lambda(double lambda) {
  if (!(lambda >= 0.0 && lambda <= 1.0))
    throw ConfigError("lambda must lie in [0,1], got " + std::to_string(lambda));
}

}  // namespace

double gamma_tilde(double gamma, double lambda) {
  if (!(gamma > 0.0 && gamma < 1.0))
    throw ConfigError("gamma must lie strictly inside (0,1), got " +
                      std::to_string(gamma));
  check_lambda(lambda);
  return gamma * (1.0 - lambda) / (1.0 - gamma * lambda);
}

Mat lambda_transition(const CmdpModel& model, const SoftmaxPolicy& policy,
                      double lambda) {
  check_lambda(lambda);
  const int S = model.n_states();
  const Mat p_pi = transition_matrix(model, policy);
  const double gl = model.gamma() * lambda;
  if (gl == 0.0) return p_pi;
  const Mat system = Mat::Identity(S, S) - gl * p_pi;
  // P and (I - gl P)^{-1} commute, so the resolvent form is a single solve.
  return (1.0 - gl) * Eigen::PartialPivLU<Mat>(system).solve(p_pi);
}

Vec lambda_reward(const CmdpModel& model, const SoftmaxPolicy& policy,
                  double lambda, Signal signal) {
  check_lambda(lambda);
  const int S = model.n_states();
  const Vec r_pi = reward_vector(model, policy, signal);
  const double gl = model.gamma() * lambda;
  if (gl == 0.0) return r_pi;
  const Mat p_pi = transition_matrix(model, policy);
  const Mat system = Mat::Identity(S, S) - gl * p_pi;
  return Eigen::PartialPivLU<Mat>(system).solve(r_pi);
}

StateDistribution lambda_visitation(const CmdpModel& model,
                                    const SoftmaxPolicy& policy,
                                    double lambda) {
  check_lambda(lambda);
  const int S = model.n_states();
  const double gt = gamma_tilde(model.gamma(), lambda);
  const Mat p_lam = lambda_transition(model, policy, lambda);
  const Mat system = Mat::Identity(S, S) - gt * p_lam.transpose();
  Vec d = (1.0 - gt) * Eigen::PartialPivLU<Mat>(system).solve(model.rho0());
  return StateDistribution{std::move(d), DistributionKind::d_lambda};
}

std::pair<double, double> lambda_objective_identity(const CmdpModel& model,
                                                    const SoftmaxPolicy& policy,
                                                    double lambda) {
  const double j_plain = objective(model, policy, Signal::reward);
  const double gt = gamma_tilde(model.gamma(), lambda);
  const Vec r_lam = lambda_reward(model, policy, lambda, Signal::reward);
  const StateDistribution d_lam = lambda_visitation(model, policy, lambda);
  const double j_lambda = d_lam.dist.dot(r_lam) / (1.0 - gt);
  return {j_plain, j_lambda};
}

std::pair<double, double> td_decomposition_identity(const CmdpModel& model,
                                                    const SoftmaxPolicy& policy,
                                                    double lambda,
                                                    const Vec& phi) {
  if (phi.size() != model.n_states())
    throw ConfigError("phi must have length n_states");
  const double j_plain = objective(model, policy, Signal::reward);
  const int S = model.n_states();
  const double gt = gamma_tilde(model.gamma(), lambda);
  const double gl = model.gamma() * lambda;

  const Mat p_pi = transition_matrix(model, policy);
  // One-step expected TD error under phi.
  const Vec r_pi = reward_vector(model, policy, Signal::reward);
  const Vec dbar = r_pi + model.gamma() * (p_pi * phi) - phi;
  const Mat system = Mat::Identity(S, S) - gl * p_pi;
  const Vec td_sum = Eigen::PartialPivLU<Mat>(system).solve(dbar);
  const StateDistribution d_lam = lambda_visitation(model, policy, lambda);
  const double j_decomposed =
      model.rho0().dot(phi) + d_lam.dist.dot(td_sum) / (1.0 - gt);
  return {j_plain, j_decomposed};
}

GaeTable exact_gae(const CmdpModel& model, const SoftmaxPolicy& policy,
                   double lambda, Signal signal, GaeBaseline baseline,
                   const Vec* supplied_estimate) {
  check_lambda(lambda);
  const int S = model.n_states();
  Vec phi;
  if (baseline == GaeBaseline::true_value) {
    phi = evaluate_policy(model, policy, signal).v;
  } else {
    if (supplied_estimate == nullptr || supplied_estimate->size() != S)
      throw ConfigError("supplied_estimate baseline requires a length-S vector");
    phi = *supplied_estimate;
  }
  // dbar(s,a) = E_s'[sig + gamma*phi(s')] - phi(s)
  const Mat dbar = expected_backup(model, signal, phi).colwise() - phi;
  const double gl = model.gamma() * lambda;
  // h = (I - gl P_pi)^{-1} dbar_pi, then g = dbar + gl * P h.
  const Vec dbar_pi = (policy.probs().cwiseProduct(dbar)).rowwise().sum();
  Vec h;
  if (gl == 0.0) {
    h = dbar_pi;
  } else {
    const Mat p_pi = transition_matrix(model, policy);
    h = Eigen::PartialPivLU<Mat>(Mat::Identity(S, S) - gl * p_pi).solve(dbar_pi);
  }
  GaeTable table;
  table.values = dbar;
  if (gl != 0.0)
    for (int a = 0; a < model.n_actions(); ++a)
      table.values.col(a) += gl * (model.transition(a) * h);
  table.lambda = lambda;
  table.signal = signal;
  table.baseline = baseline;
  return table;
}

LambdaDynamics make_lambda_dynamics(const CmdpModel& model,
                                    const SoftmaxPolicy& policy, double lambda,
                                    Signal signal) {
  LambdaDynamics dyn;
  dyn.lambda = lambda;
  dyn.gamma_tilde = gamma_tilde(model.gamma(), lambda);
  dyn.p_lambda = lambda_transition(model, policy, lambda);
  dyn.r_lambda = lambda_reward(model, policy, lambda, signal);
  dyn.d_lambda = lambda_visitation(model, policy, lambda);
  dyn.policy_probs = policy.probs();
  dyn.signal = signal;
  return dyn;
}

std::string lambda_dynamics_to_json(const LambdaDynamics& dyn) {
  nlohmann::json j;
  j["lambda"] = dyn.lambda;
  j["gamma_tilde"] = dyn.gamma_tilde;
  j["signal"] = dyn.signal == Signal::reward ? "reward" : "cost";
  const int S = static_cast<int>(dyn.r_lambda.size());
  nlohmann::json p = nlohmann::json::array();
  for (int s = 0; s < S; ++s) {
    nlohmann::json row = nlohmann::json::array();
    for (int sp = 0; sp < S; ++sp) row.push_back(dyn.p_lambda(s, sp));
    p.push_back(std::move(row));
  }
  j["p_lambda"] = std::move(p);
  j["r_lambda"] = std::vector<double>(dyn.r_lambda.data(),
                                      dyn.r_lambda.data() + S);
  j["d_lambda"] = std::vector<double>(dyn.d_lambda.dist.data(),
                                      dyn.d_lambda.dist.data() + S);
  nlohmann::json pol = nlohmann::json::array();
  for (int s = 0; s < S; ++s) {
    nlohmann::json row = nlohmann::json::array();
    for (int a = 0; a < dyn.policy_probs.cols(); ++a)
      row.push_back(dyn.policy_probs(s, a));
    pol.push_back(std::move(row));
  }
  j["policy"] = std::move(pol);
  return j.dump(2);
}

}  // namespace cup
