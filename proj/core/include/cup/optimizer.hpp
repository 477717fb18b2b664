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
#include <utility>

#include "cup/cmdp.hpp"
#include "cup/lambda_dynamics.hpp"
#include "cup/policy.hpp"
#include "cup/sampler.hpp"

namespace cup {

enum class CupMode { exact, sampled };
enum class SurrogateKind { kl_penalty, clip };

struct CupConfig {
  double alpha_k = 1.0;       // KL-penalty coefficient (step 1)
  double alpha_decay = 1.0;   // geometric schedule alpha_k = alpha * decay^k
  double beta_k = 0.0;        // constraint KL coefficient (step 2)
  double eta = 0.3;           // primal and dual step size
  double clip_epsilon = 0.2;  // clip surrogate half-width
  int inner_steps = 15;       // gradient steps per stage
  double nu_init = 0.0;
  double nu_max = 2.0;
  double lambda = 0.5;
  CupMode mode = CupMode::exact;
  SurrogateKind surrogate = SurrogateKind::kl_penalty;
  // sampled mode only
  int episodes = 50;
  int horizon = 200;

  void validate() const;
  static CupConfig from_json_string(const std::string& text);
  static CupConfig load(const std::string& path);
  std::string to_json_string() const;
};

/// Frozen per-iteration quantities the surrogate objectives are built from.
/// In exact mode these come from lambda_visitation / exact_gae; in sampled
/// mode from an EstimatorBatch collected by pi_k.
struct SurrogateData {
  explicit SurrogateData(SoftmaxPolicy pi) : pi_k(std::move(pi)) {}

  SoftmaxPolicy pi_k;
  double gamma_tilde = 0.0;
  // exact mode
  Vec d_lambda;
  Mat gae;       // reward GAE of pi_k, [S,A]
  Mat gae_cost;  // cost GAE of pi_k, [S,A]
  // sampled mode
  const EstimatorBatch* batch = nullptr;

  bool sampled() const { return batch != nullptr; }
};

SurrogateData make_exact_data(const CmdpModel& model,
                              const SoftmaxPolicy& pi_k, double lambda);
SurrogateData make_sampled_data(const SoftmaxPolicy& pi_k, double lambda,
                                double gamma, const EstimatorBatch& batch);

struct ObjectiveValue {
  double value = 0.0;
  Mat gradient;  // d value / d theta, [S,A]
};

/// Step-1 surrogate: importance-weighted advantage minus
/// alpha * sqrt(expected KL(pi_k, pi_theta)). The sqrt cusp at KL < 1e-12
/// contributes zero gradient.
ObjectiveValue improvement_objective(const Mat& theta, const Mat& theta_k,
                                     const SurrogateData& data, double alpha_k);

/// Clipped surrogate (sampled mode only): per-sample
/// min(ratio*A, clip(ratio, 1-eps, 1+eps)*A), averaged; clamp-active samples
/// contribute zero gradient.
ObjectiveValue clip_objective(const Mat& theta, const Mat& theta_k,
                              const EstimatorBatch& batch, double clip_epsilon);

/// Step-2 penalized distance: expected KL(pi_half, pi_theta) plus
/// nu * (cost surrogate - b); the cost surrogate carries the 1/(1-gamma_tilde)
/// scaling and the optional beta * sqrt(KL(pi_k, pi_theta)) term.
ObjectiveValue projection_objective(const Mat& theta, const Mat& theta_half,
                                    const Mat& theta_k, double nu,
                                    const SurrogateData& data,
                                    const CupConfig& config, double j_cost_k,
                                    double b);

/// inner_steps of fixed-step gradient ascent on the chosen step-1 surrogate,
/// starting from theta_k. alpha_k is the already-scheduled coefficient.
/// Throws NumericalError if a gradient goes non-finite.
Mat improvement_step(const Mat& theta_k, const CupConfig& config,
                     const SurrogateData& data, double alpha_k);

/// inner_steps of fixed-step gradient descent on the projection objective,
/// starting from theta_half.
Mat projection_step(const Mat& theta_half, const Mat& theta_k, double nu,
                    const CupConfig& config, const SurrogateData& data,
                    double j_cost_k, double b);

/// Positive-part dual ascent: min(nu_max, max(0, nu + eta*(j_cost_hat - b))).
double dual_update(double nu, double j_cost_hat, double b, double eta,
                   double nu_max);

/// Closed-form Theorem-2 style certificate:
///   improvement floor  = -iota * alpha_k * sqrt(2 chi_k) * eps_v / (1-gt)
///   violation ceiling  = b + iota * beta_k * sqrt(2 chi_k) * eps_c / (1-gt)
/// with iota = gt (gamma lambda (S-1) + 1) / ((1-gt)(1-gamma lambda)).
std::pair<double, double> theorem2_certificate(double chi_k, double alpha_k,
                                               double beta_k, double eps_v,
                                               double eps_c, double gamma,
                                               double lambda, int n_states,
                                               double b);

struct IterationReport {
  double j_reward = 0.0;  // exact, of the pre-update policy
  double j_cost = 0.0;
  double nu = 0.0;        // after this iteration's dual update
  double kl_step1 = 0.0;  // chi_k: E_{d_lambda}[KL(pi_k, pi_{k+1/2})]
  double surrogate_value = 0.0;
  bool feasible = false;  // j_cost <= b
  // Exact diagnostics of the post-update policy (always available at desk
  // scale, in both modes).
  double j_reward_next = 0.0;
  double j_cost_next = 0.0;
  // Theorem-2 audit inputs
  std::optional<std::pair<double, double>> certificate;
  bool projection_premise = false;  // cost surrogate of theta_{k+1} within b
  // Expected KL(pi_k, pi_{k+1}) under d_lambda(pi_k). The certificate's
  // Bregman premise asks this to stay within kl_step1.
  double kl_next = 0.0;
};

struct CupState {
  Mat theta;
  double nu = 0.0;
  Vec v_estimate;  // sampled mode value estimates, zero-initialized
  Vec c_estimate;
  int iter = 0;
  std::uint64_t seed = 0;
};

CupState make_initial_state(const CmdpModel& model, const CupConfig& config,
                            std::uint64_t seed, double init_scale = 0.1);

/// One full CUP iteration: data collection (exact operators or a sampled
/// batch), improvement step, dual update, projection step, value fits
/// (sampled mode). Mutates `state`, returns the per-iteration report.
IterationReport cup_iterate(const CmdpModel& model, CupState& state,
                            const CupConfig& config);

}  // namespace cup
