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

#include <string>
#include <utility>

#include "cup/cmdp.hpp"
#include "cup/evaluation.hpp"
#include "cup/policy.hpp"

namespace cup {

/// Effective discount gamma_tilde = gamma (1-lambda) / (1 - gamma lambda).
/// Equals gamma at lambda=0 and 0 at lambda=1. Throws ConfigError on
/// out-of-range inputs.
double gamma_tilde(double gamma, double lambda);

/// Lambda-weighted multi-step transition operator, in closed resolvent form
/// (1 - gamma lambda) P_pi (I - gamma lambda P_pi)^{-1}. Row-stochastic for
/// every lambda in [0, 1]; reduces to P_pi at lambda=0.
Mat lambda_transition(const CmdpModel& model, const SoftmaxPolicy& policy,
                      double lambda);

/// Lambda-weighted expected signal (I - gamma lambda P_pi)^{-1} r_pi.
Vec lambda_reward(const CmdpModel& model, const SoftmaxPolicy& policy,
                  double lambda, Signal signal);

/// d_lambda = (1 - gamma_tilde)(I - gamma_tilde P_lambda^T)^{-1} rho0.
/// Equals the plain discounted visitation at lambda=0 and rho0 at lambda=1.
StateDistribution lambda_visitation(const CmdpModel& model,
                                    const SoftmaxPolicy& policy,
                                    double lambda);

/// (J via <rho0,v>, J via <d_lambda, r_lambda>/(1-gamma_tilde)). The two
/// agree for every valid input; the pair is exposed so tests and the CLI can
/// certify the identity.
std::pair<double, double> lambda_objective_identity(const CmdpModel& model,
                                                    const SoftmaxPolicy& policy,
                                                    double lambda);

/// (J via <rho0,v>, J via E_rho0[phi] + the lambda-weighted expected-TD sum),
/// the t-sum evaluated in closed form with the resolvent
/// (I - gamma lambda P_pi)^{-1}. Holds for every real phi.
std::pair<double, double> td_decomposition_identity(const CmdpModel& model,
                                                    const SoftmaxPolicy& policy,
                                                    double lambda,
                                                    const Vec& phi);

enum class GaeBaseline { true_value, supplied_estimate };

/// Exact state-action lambda-advantage: the conditional expectation of the
/// lambda-weighted TD-error sum given (s0=s, a0=a), with the tail following
/// the policy. Solves the linear system
///   g(s,a) = dbar(s,a) + gamma lambda sum_s' P(s'|s,a) sum_a' pi(a'|s') g(s',a').
struct GaeTable {
  Mat values;  // [S, A]
  double lambda = 0.0;
  Signal signal = Signal::reward;
  GaeBaseline baseline = GaeBaseline::true_value;
};

GaeTable exact_gae(const CmdpModel& model, const SoftmaxPolicy& policy,
                   double lambda, Signal signal, GaeBaseline baseline,
                   const Vec* supplied_estimate = nullptr);

/// Derived lambda-return bundle for one (policy, lambda) pair.
struct LambdaDynamics {
  double lambda = 0.0;
  double gamma_tilde = 0.0;
  Mat p_lambda;
  Vec r_lambda;
  StateDistribution d_lambda;
  Mat policy_probs;  // source policy
  Signal signal = Signal::reward;
};

LambdaDynamics make_lambda_dynamics(const CmdpModel& model,
                                    const SoftmaxPolicy& policy, double lambda,
                                    Signal signal = Signal::reward);

std::string lambda_dynamics_to_json(const LambdaDynamics& dyn);

}  // namespace cup
