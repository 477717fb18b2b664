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

#include "cup/evaluation.hpp"

#include <cmath>

namespace cup {

Mat transition_matrix(const CmdpModel& model, const SoftmaxPolicy& policy) {
  check_dimensions(model, policy);
  const int S = model.n_states();
  Mat p = Mat::Zero(S, S);
  for (int a = 0; a < model.n_actions(); ++a)
    p += policy.probs().col(a).asDiagonal() * model.transition(a);
  return p;
}

Vec reward_vector(const CmdpModel& model, const SoftmaxPolicy& policy,
                  Signal signal) {
  check_dimensions(model, policy);
  const int S = model.n_states();
  Vec r = Vec::Zero(S);
  if (signal == Signal::reward) {
    for (int a = 0; a < model.n_actions(); ++a) {
      const Vec per_state =
          (model.transition(a).cwiseProduct(model.reward(a))).rowwise().sum();
      r += policy.probs().col(a).cwiseProduct(per_state);
    }
  } else {
    r = (policy.probs().cwiseProduct(model.cost())).rowwise().sum();
  }
  return r;
}

Mat expected_backup(const CmdpModel& model, Signal signal, const Vec& v) {
  const int S = model.n_states();
  const int A = model.n_actions();
  Mat q(S, A);
  for (int a = 0; a < A; ++a) {
    if (signal == Signal::reward) {
      q.col(a) = (model.transition(a).cwiseProduct(model.reward(a)))
                     .rowwise()
                     .sum() +
                 model.gamma() * (model.transition(a) * v);
    } else {
      q.col(a) = model.cost().col(a) + model.gamma() * (model.transition(a) * v);
    }
  }
  return q;
}

PolicyEvaluation evaluate_policy(const CmdpModel& model,
                                 const SoftmaxPolicy& policy, Signal signal) {
  const int S = model.n_states();
  const Mat p_pi = transition_matrix(model, policy);
  const Vec r_pi = reward_vector(model, policy, signal);
  const Mat system = Mat::Identity(S, S) - model.gamma() * p_pi;
  Eigen::PartialPivLU<Mat> lu(system);
  PolicyEvaluation out;
  out.signal = signal;
  out.v = lu.solve(r_pi);
  if (!out.v.allFinite())
    throw NumericalError("policy evaluation solve produced non-finite values");
  out.q = expected_backup(model, signal, out.v);
  out.adv = out.q.colwise() - out.v;
  return out;
}

StateDistribution discounted_visitation(const CmdpModel& model,
                                        const SoftmaxPolicy& policy) {
  const int S = model.n_states();
  const Mat p_pi = transition_matrix(model, policy);
  const Mat system = Mat::Identity(S, S) - model.gamma() * p_pi.transpose();
  Vec d = (1.0 - model.gamma()) * Eigen::PartialPivLU<Mat>(system).solve(
                                      model.rho0());
  return StateDistribution{std::move(d), DistributionKind::d_rho0};
}

double objective(const CmdpModel& model, const SoftmaxPolicy& policy,
                 Signal signal) {
  return model.rho0().dot(evaluate_policy(model, policy, signal).v);
}

}  // namespace cup
