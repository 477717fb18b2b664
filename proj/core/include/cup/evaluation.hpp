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

#include "cup/cmdp.hpp"
#include "cup/policy.hpp"

namespace cup {

/// Exact value, action-value and advantage for one signal, from dense solves.
struct PolicyEvaluation {
  Vec v;    // [S]
  Mat q;    // [S, A]
  Mat adv;  // [S, A], q - v broadcast over actions
  Signal signal = Signal::reward;
};

/// P_pi(s, s') = sum_a pi(a|s) P(s'|s,a). Row-stochastic.
Mat transition_matrix(const CmdpModel& model, const SoftmaxPolicy& policy);

/// Expected one-step signal per state. For the reward signal,
/// r_pi(s) = sum_a sum_s' pi(a|s) P(s'|s,a) r(s'|s,a); for cost,
/// c_pi(s) = sum_a pi(a|s) c(s,a).
Vec reward_vector(const CmdpModel& model, const SoftmaxPolicy& policy,
                  Signal signal);

/// Per-(s,a) expectation of signal + gamma*v(s'), used by q and the GAE
/// machinery. For reward: sum_s' P(s'|s,a)(r(s'|s,a) + gamma*v(s'));
/// for cost: c(s,a) + gamma * sum_s' P(s'|s,a) v(s').
Mat expected_backup(const CmdpModel& model, Signal signal, const Vec& v);

/// Solves v = r_pi + gamma P_pi v by a dense linear solve, then fills q and
/// the centered advantage.
PolicyEvaluation evaluate_policy(const CmdpModel& model,
                                 const SoftmaxPolicy& policy, Signal signal);

/// Normalized discounted state visitation
/// d = (1-gamma) (I - gamma P_pi^T)^{-1} rho0.
StateDistribution discounted_visitation(const CmdpModel& model,
                                        const SoftmaxPolicy& policy);

/// J = <rho0, v> for the requested signal.
double objective(const CmdpModel& model, const SoftmaxPolicy& policy,
                 Signal signal);

}  // namespace cup
