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

enum class BoundVariant {
  theorem1_tv,  // two-sided Hoelder sandwich (no TV reduction)
  prop1_tv,
  prop1_kl,
  prop2_tv,
  prop2_kl,
};

std::string to_string(BoundVariant v);

/// One evaluated performance-difference bound.
///
/// `lower`/`upper` are the certified sides (+-infinity on the unused side of
/// one-sided bounds). The certified sandwich, checked by the audits, is
///   lower - truncation_tail <= actual_diff <= upper + truncation_tail.
/// `surrogate_term` and `divergence_coefficient` factor the one-sided bounds
/// as surrogate -+ coefficient * divergence so the KL substitution can
/// re-evaluate them.
struct BoundReport {
  double actual_diff = 0.0;
  double lower = 0.0;
  double upper = 0.0;
  int truncation_T = 0;
  double truncation_tail = 0.0;
  double epsilon_sup = 0.0;
  double mean_tv = 0.0;
  double mean_kl = 0.0;
  BoundVariant variant = BoundVariant::theorem1_tv;
  double surrogate_term = 0.0;
  double divergence_coefficient = 0.0;
};

/// Per-state total variation and KL between two policies, with expectations
/// under a supplied state distribution. KL rows are KL(pi_old(.|s), pi_new(.|s)),
/// matching the divergence order used by the bounds.
struct DivergencePair {
  Vec tv_per_state;
  Vec kl_per_state;
  double mean_tv = 0.0;
  double mean_kl = 0.0;
};

DivergencePair divergences(const SoftmaxPolicy& pi_new,
                           const SoftmaxPolicy& pi_old,
                           const StateDistribution& weight);

/// Expected TD-error vector after t steps: P_pi^t dbar, where
/// dbar(s) = sum_a pi(a|s) sum_s' P(s'|s,a)(sig + gamma*phi(s') - phi(s)).
Vec expected_td_vector(const CmdpModel& model, const SoftmaxPolicy& policy,
                       const Vec& phi, int t, Signal signal = Signal::reward);

/// Difference of expected TD-error vectors of the two policies at step t.
/// At t=0 this equals kappa(s) = sum_a (pi_new - pi_old)(a|s) E_s'[td(s,a,s')].
Vec delta_vector(const CmdpModel& model, const SoftmaxPolicy& pi_new,
                 const SoftmaxPolicy& pi_old, const Vec& phi, int t,
                 Signal signal = Signal::reward);

/// Default series truncation ceil(log(1e-10)/log(gamma*lambda)), capped at
/// 5000; 0 when gamma*lambda == 0.
int default_truncation(double gamma, double lambda);

/// Two-sided generalized performance-difference bound. p_norm must be 1
/// (paired with the max norm) or 2 (self-dual); anything else throws
/// ConfigError. The t-sum runs to T_trunc with an analytic geometric tail
/// recorded in the report.
BoundReport theorem1_bounds(const CmdpModel& model, const SoftmaxPolicy& pi_new,
                            const SoftmaxPolicy& pi_old, const Vec& phi,
                            double lambda, int p_norm, int T_trunc,
                            Signal signal = Signal::reward);

/// Worst-case sup over t <= T_sup of max_s E[|td|] with the expectation taken
/// inside the absolute value per state (chain and actions under `policy`).
double epsilon_sup(const CmdpModel& model, const SoftmaxPolicy& policy,
                   const Vec& phi, int T_sup, Signal signal);

/// Lower bound on J(pi_new) - J(pi_old) built from the old policy's exact
/// lambda-advantage and a TV correction.
BoundReport prop1_lower(const CmdpModel& model, const SoftmaxPolicy& pi_new,
                        const SoftmaxPolicy& pi_old, double lambda, int T_sup);

/// Upper bound on Jc(pi_new) - Jc(pi_old); cost-signal mirror of prop1_lower.
BoundReport prop2_upper(const CmdpModel& model, const SoftmaxPolicy& pi_new,
                        const SoftmaxPolicy& pi_old, double lambda, int T_sup);

/// Pinsker substitution E[TV] <- sqrt(E[KL]/2) applied to a TV-variant
/// report. The result is never tighter than the TV variant.
BoundReport prop3_substitute(const BoundReport& report,
                             const DivergencePair& divergences);

/// (exact L1 gap between the lambda visitations, lemma right-hand side).
/// Contract: lhs <= rhs within tolerance for all valid inputs.
std::pair<double, double> visitation_gap(const CmdpModel& model,
                                         const SoftmaxPolicy& pi_new,
                                         const SoftmaxPolicy& pi_old,
                                         double lambda);

std::string bound_report_to_json(const BoundReport& report);

}  // namespace cup
