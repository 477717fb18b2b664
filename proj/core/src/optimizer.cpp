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

#include "cup/optimizer.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "cup/bounds.hpp"
#include "cup/rng.hpp"
#include "json.hpp"

namespace cup {

namespace {

constexpr double kKlCusp = 1e-12;

/// Expected KL(pi_ref, pi_theta) under a state weighting, plus its gradient
/// with respect to theta: d(s) (pi_theta(a|s) - pi_ref(a|s)).
double weighted_kl(const Vec& d, const SoftmaxPolicy& pi_ref,
                   const SoftmaxPolicy& pi_theta) {
  double kl = 0.0;
  for (int s = 0; s < pi_ref.n_states(); ++s) {
    double row = 0.0;
    for (int a = 0; a < pi_ref.n_actions(); ++a)
      row += pi_ref.prob(s, a) *
             (pi_ref.log_prob(s, a) - pi_theta.log_prob(s, a));
    kl += d(s) * row;
  }
  return kl;
}

/// Mean over batch steps of KL(pi_ref(.|s_t), pi_theta(.|s_t)).
double batch_kl(const EstimatorBatch& batch, const SoftmaxPolicy& pi_ref,
                const SoftmaxPolicy& pi_theta) {
  return empirical_kl(batch, pi_ref, pi_theta);
}

/// Gradient of the d-weighted expected advantage sum_s d(s) sum_a pi g(s,a).
Mat weighted_advantage_grad(const Vec& d, const SoftmaxPolicy& pi_theta,
                            const Mat& g) {
  const Vec gbar = (pi_theta.probs().cwiseProduct(g)).rowwise().sum();
  return d.asDiagonal() * pi_theta.probs().cwiseProduct(g.colwise() - gbar);
}

struct BatchSurrogate {
  double value = 0.0;
  Mat gradient;
};

/// (1/N) sum ratio_t * adv_t and its gradient; behavior policy is pi_k.
BatchSurrogate batch_ratio_surrogate(const EstimatorBatch& batch,
                                     const SoftmaxPolicy& pi_theta,
                                     const SoftmaxPolicy& pi_k, Signal signal) {
  BatchSurrogate out;
  out.gradient = Mat::Zero(pi_theta.n_states(), pi_theta.n_actions());
  long steps = 0;
  for (size_t i = 0; i < batch.trajectories.size(); ++i) {
    const Trajectory& traj = batch.trajectories[i];
    const auto& adv =
        signal == Signal::reward ? batch.adv_hat[i] : batch.cost_adv_hat[i];
    for (size_t t = 0; t < traj.actions.size(); ++t) {
      const int s = traj.states[t];
      const int a = traj.actions[t];
      const double ratio = pi_theta.prob(s, a) / pi_k.prob(s, a);
      out.value += ratio * adv[t];
      // d ratio / d theta(s,b) = ratio * (1[b=a] - pi_theta(b|s))
      for (int b = 0; b < pi_theta.n_actions(); ++b)
        out.gradient(s, b) += ratio * adv[t] *
                              ((b == a ? 1.0 : 0.0) - pi_theta.prob(s, b));
      ++steps;
    }
  }
  if (steps > 0) {
    out.value /= static_cast<double>(steps);
    out.gradient /= static_cast<double>(steps);
  }
  return out;
}

/// Gradient of the batch-mean KL(pi_ref, pi_theta).
Mat batch_kl_grad(const EstimatorBatch& batch, const SoftmaxPolicy& pi_ref,
                  const SoftmaxPolicy& pi_theta) {
  Mat grad = Mat::Zero(pi_theta.n_states(), pi_theta.n_actions());
  long steps = 0;
  for (const Trajectory& traj : batch.trajectories) {
    for (size_t t = 0; t + 1 < traj.states.size(); ++t) {
      const int s = traj.states[t];
      for (int a = 0; a < pi_theta.n_actions(); ++a)
        grad(s, a) += pi_theta.prob(s, a) - pi_ref.prob(s, a);
      ++steps;
    }
  }
  if (steps > 0) grad /= static_cast<double>(steps);
  return grad;
}

void check_finite(const Mat& grad, const char* where) {
  if (!grad.allFinite())
    throw NumericalError(std::string("non-finite gradient in ") + where);
}

}  // namespace

void CupConfig::validate() const {
  if (alpha_k < 0.0) throw ConfigError("alpha_k must be >= 0");
  if (!(alpha_decay > 0.0 && alpha_decay <= 1.0))
    throw ConfigError("alpha_decay must lie in (0,1]");
  if (beta_k < 0.0) throw ConfigError("beta_k must be >= 0");
  if (!(eta > 0.0)) throw ConfigError("eta must be > 0");
  if (!(clip_epsilon > 0.0 && clip_epsilon < 1.0))
    throw ConfigError("clip_epsilon must lie in (0,1)");
  if (inner_steps < 1) throw ConfigError("inner_steps must be >= 1");
  if (nu_init < 0.0) throw ConfigError("nu_init must be >= 0");
  if (nu_max < nu_init) throw ConfigError("nu_max must be >= nu_init");
  if (!(lambda >= 0.0 && lambda <= 1.0))
    throw ConfigError("lambda must lie in [0,1]");
  if (episodes < 1) throw ConfigError("episodes must be >= 1");
  if (horizon < 1) throw ConfigError("horizon must be >= 1");
  if (surrogate == SurrogateKind::clip && mode == CupMode::exact)
    throw ConfigError("clip surrogate requires sampled mode");
}

CupConfig CupConfig::from_json_string(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config JSON parse error: ") + e.what());
  }
  CupConfig c;
  auto get = [&j](const char* key, auto& out) {
    if (j.contains(key)) out = j.at(key).template get<std::decay_t<decltype(out)>>();
  };
  get("alpha_k", c.alpha_k);
  get("alpha_decay", c.alpha_decay);
  get("beta_k", c.beta_k);
  get("eta", c.eta);
  get("clip_epsilon", c.clip_epsilon);
  get("inner_steps", c.inner_steps);
  get("nu_init", c.nu_init);
  get("nu_max", c.nu_max);
  get("lambda", c.lambda);
  get("episodes", c.episodes);
  get("horizon", c.horizon);
  if (j.contains("mode")) {
    const std::string m = j.at("mode").get<std::string>();
    if (m == "exact") c.mode = CupMode::exact;
    else if (m == "sampled") c.mode = CupMode::sampled;
    else throw ConfigError("mode must be \"exact\" or \"sampled\", got \"" + m + "\"");
  }
  if (j.contains("surrogate")) {
    const std::string s = j.at("surrogate").get<std::string>();
    if (s == "kl_penalty") c.surrogate = SurrogateKind::kl_penalty;
    else if (s == "clip") c.surrogate = SurrogateKind::clip;
    else throw ConfigError("surrogate must be \"kl_penalty\" or \"clip\", got \"" + s + "\"");
  }
  c.validate();
  return c;
}

CupConfig CupConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return from_json_string(ss.str());
}

std::string CupConfig::to_json_string() const {
  nlohmann::json j;
  j["alpha_k"] = alpha_k;
  j["alpha_decay"] = alpha_decay;
  j["beta_k"] = beta_k;
  j["eta"] = eta;
  j["clip_epsilon"] = clip_epsilon;
  j["inner_steps"] = inner_steps;
  j["nu_init"] = nu_init;
  j["nu_max"] = nu_max;
  j["lambda"] = lambda;
  j["mode"] = mode == CupMode::exact ? "exact" : "sampled";
  j["surrogate"] = surrogate == SurrogateKind::kl_penalty ? "kl_penalty" : "clip";
  j["episodes"] = episodes;
  j["horizon"] = horizon;
  return j.dump(2);
}

SurrogateData make_exact_data(const CmdpModel& model,
                              const SoftmaxPolicy& pi_k, double lambda) {
  SurrogateData data(pi_k);
  data.gamma_tilde = gamma_tilde(model.gamma(), lambda);
  data.d_lambda = lambda_visitation(model, pi_k, lambda).dist;
  data.gae = exact_gae(model, pi_k, lambda, Signal::reward,
                       GaeBaseline::true_value)
                 .values;
  data.gae_cost = exact_gae(model, pi_k, lambda, Signal::cost,
                            GaeBaseline::true_value)
                      .values;
  return data;
}

SurrogateData make_sampled_data(const SoftmaxPolicy& pi_k, double lambda,
                                double gamma, const EstimatorBatch& batch) {
  SurrogateData data(pi_k);
  data.gamma_tilde = gamma_tilde(gamma, lambda);
  data.batch = &batch;
  return data;
}

ObjectiveValue improvement_objective(const Mat& theta, const Mat& theta_k,
                                     const SurrogateData& data,
                                     double alpha_k) {
  const SoftmaxPolicy pi_theta(theta);
  const SoftmaxPolicy pi_k(theta_k);
  ObjectiveValue out;
  double kl = 0.0;
  Mat kl_grad;
  if (data.sampled()) {
    const BatchSurrogate surr =
        batch_ratio_surrogate(*data.batch, pi_theta, pi_k, Signal::reward);
    out.value = surr.value;
    out.gradient = surr.gradient;
    kl = batch_kl(*data.batch, pi_k, pi_theta);
    kl_grad = batch_kl_grad(*data.batch, pi_k, pi_theta);
  } else {
    const Vec expected =
        (pi_theta.probs().cwiseProduct(data.gae)).rowwise().sum();
    out.value = data.d_lambda.dot(expected);
    out.gradient = weighted_advantage_grad(data.d_lambda, pi_theta, data.gae);
    kl = weighted_kl(data.d_lambda, pi_k, pi_theta);
    kl_grad = data.d_lambda.asDiagonal() * (pi_theta.probs() - pi_k.probs());
  }
  if (alpha_k > 0.0) {
    out.value -= alpha_k * std::sqrt(std::max(kl, 0.0));
    // Subgradient 0 at the KL=0 cusp keeps theta_k stationary when the
    // advantage term vanishes.
    if (kl > kKlCusp)
      out.gradient -= (alpha_k / (2.0 * std::sqrt(kl))) * kl_grad;
  }
  return out;
}

ObjectiveValue clip_objective(const Mat& theta, const Mat& theta_k,
                              const EstimatorBatch& batch,
                              double clip_epsilon) {
  const SoftmaxPolicy pi_theta(theta);
  const SoftmaxPolicy pi_k(theta_k);
  ObjectiveValue out;
  out.gradient = Mat::Zero(pi_theta.n_states(), pi_theta.n_actions());
  long steps = 0;
  for (size_t i = 0; i < batch.trajectories.size(); ++i) {
    const Trajectory& traj = batch.trajectories[i];
    for (size_t t = 0; t < traj.actions.size(); ++t) {
      const int s = traj.states[t];
      const int a = traj.actions[t];
      const double adv = batch.adv_hat[i][t];
      const double ratio = pi_theta.prob(s, a) / pi_k.prob(s, a);
      const double clipped =
          std::min(std::max(ratio, 1.0 - clip_epsilon), 1.0 + clip_epsilon);
      out.value += std::min(ratio * adv, clipped * adv);
      const bool clamp_active = (adv >= 0.0 && ratio > 1.0 + clip_epsilon) ||
                                (adv < 0.0 && ratio < 1.0 - clip_epsilon);
      if (!clamp_active) {
        for (int b = 0; b < pi_theta.n_actions(); ++b)
          out.gradient(s, b) += ratio * adv *
                                ((b == a ? 1.0 : 0.0) - pi_theta.prob(s, b));
      }
      ++steps;
    }
  }
  if (steps > 0) {
    out.value /= static_cast<double>(steps);
    out.gradient /= static_cast<double>(steps);
  }
  return out;
}

ObjectiveValue projection_objective(const Mat& theta, const Mat& theta_half,
                                    const Mat& theta_k, double nu,
                                    const SurrogateData& data,
                                    const CupConfig& config, double j_cost_k,
                                    double b) {
  const SoftmaxPolicy pi_theta(theta);
  const SoftmaxPolicy pi_half(theta_half);
  const SoftmaxPolicy pi_k(theta_k);
  const double scale = 1.0 / (1.0 - data.gamma_tilde);

  ObjectiveValue out;
  double cost_surr = 0.0;
  Mat cost_grad;
  if (data.sampled()) {
    out.value = batch_kl(*data.batch, pi_half, pi_theta);
    out.gradient = batch_kl_grad(*data.batch, pi_half, pi_theta);
    const BatchSurrogate surr =
        batch_ratio_surrogate(*data.batch, pi_theta, pi_k, Signal::cost);
    cost_surr = surr.value;
    cost_grad = surr.gradient;
  } else {
    out.value = weighted_kl(data.d_lambda, pi_half, pi_theta);
    out.gradient =
        data.d_lambda.asDiagonal() * (pi_theta.probs() - pi_half.probs());
    const Vec expected =
        (pi_theta.probs().cwiseProduct(data.gae_cost)).rowwise().sum();
    cost_surr = data.d_lambda.dot(expected);
    cost_grad =
        weighted_advantage_grad(data.d_lambda, pi_theta, data.gae_cost);
  }

  double constraint = j_cost_k + scale * cost_surr - b;
  Mat constraint_grad = scale * cost_grad;
  if (config.beta_k > 0.0) {
    double kl_k = 0.0;
    Mat kl_k_grad;
    if (data.sampled()) {
      kl_k = batch_kl(*data.batch, pi_k, pi_theta);
      kl_k_grad = batch_kl_grad(*data.batch, pi_k, pi_theta);
    } else {
      kl_k = weighted_kl(data.d_lambda, pi_k, pi_theta);
      kl_k_grad = data.d_lambda.asDiagonal() * (pi_theta.probs() - pi_k.probs());
    }
    constraint += config.beta_k * std::sqrt(std::max(kl_k, 0.0));
    if (kl_k > kKlCusp)
      constraint_grad += (config.beta_k / (2.0 * std::sqrt(kl_k))) * kl_k_grad;
  }
  out.value += nu * constraint;
  out.gradient += nu * constraint_grad;
  return out;
}

Mat improvement_step(const Mat& theta_k, const CupConfig& config,
                     const SurrogateData& data, double alpha_k) {
  auto evaluate = [&](const Mat& theta) {
    return config.surrogate == SurrogateKind::clip
               ? clip_objective(theta, theta_k, *data.batch, config.clip_epsilon)
               : improvement_objective(theta, theta_k, data, alpha_k);
  };
  // Fixed-step ascent, returning the best visited iterate. Keeping the best
  // preserves the MM property L(theta_half) >= L(theta_k) even when a large
  // alpha makes the sqrt-KL penalty stiff for the fixed step size.
  Mat theta = theta_k;
  Mat best = theta_k;
  double best_value = evaluate(theta_k).value;
  for (int i = 0; i < config.inner_steps; ++i) {
    ObjectiveValue obj = evaluate(theta);
    check_finite(obj.gradient, "improvement_step");
    if (obj.value > best_value) {
      best_value = obj.value;
      best = theta;
    }
    theta += config.eta * obj.gradient;
  }
  if (evaluate(theta).value > best_value) best = theta;
  return best;
}

Mat projection_step(const Mat& theta_half, const Mat& theta_k, double nu,
                    const CupConfig& config, const SurrogateData& data,
                    double j_cost_k, double b) {
  Mat theta = theta_half;
  Mat best = theta_half;
  double best_value =
      projection_objective(theta_half, theta_half, theta_k, nu, data, config,
                           j_cost_k, b)
          .value;
  for (int i = 0; i < config.inner_steps; ++i) {
    ObjectiveValue obj = projection_objective(theta, theta_half, theta_k, nu,
                                              data, config, j_cost_k, b);
    check_finite(obj.gradient, "projection_step");
    if (obj.value < best_value) {
      best_value = obj.value;
      best = theta;
    }
    theta -= config.eta * obj.gradient;
  }
  const double last = projection_objective(theta, theta_half, theta_k, nu,
                                           data, config, j_cost_k, b)
                          .value;
  if (last < best_value) best = theta;
  return best;
}

double dual_update(double nu, double j_cost_hat, double b, double eta,
                   double nu_max) {
  if (nu < 0.0) throw ConfigError("nu must be >= 0");
  return std::min(nu_max, std::max(0.0, nu + eta * (j_cost_hat - b)));
}

std::pair<double, double> theorem2_certificate(double chi_k, double alpha_k,
                                               double beta_k, double eps_v,
                                               double eps_c, double gamma,
                                               double lambda, int n_states,
                                               double b) {
  const double gt = gamma_tilde(gamma, lambda);
  const double gl = gamma * lambda;
  const double iota =
      gt * (gl * (n_states - 1) + 1.0) / ((1.0 - gt) * (1.0 - gl));
  const double spread = std::sqrt(2.0 * std::max(chi_k, 0.0)) / (1.0 - gt);
  return {-iota * alpha_k * spread * eps_v, b + iota * beta_k * spread * eps_c};
}

CupState make_initial_state(const CmdpModel& model, const CupConfig& config,
                            std::uint64_t seed, double init_scale) {
  config.validate();
  CupState state;
  Rng rng(seed);
  state.theta = Mat(model.n_states(), model.n_actions());
  for (int s = 0; s < model.n_states(); ++s)
    for (int a = 0; a < model.n_actions(); ++a)
      state.theta(s, a) = init_scale * rng.normal();
  state.nu = config.nu_init;
  state.v_estimate = Vec::Zero(model.n_states());
  state.c_estimate = Vec::Zero(model.n_states());
  state.iter = 0;
  state.seed = seed;
  return state;
}

IterationReport cup_iterate(const CmdpModel& model, CupState& state,
                            const CupConfig& config) {
  const SoftmaxPolicy pi_k(state.theta);
  const double alpha_k =
      config.alpha_k * std::pow(config.alpha_decay, state.iter);
  const double b = model.cost_limit_b();

  // Exact diagnostics of the current policy are always available at desk
  // scale, in both modes.
  const PolicyEvaluation eval_r = evaluate_policy(model, pi_k, Signal::reward);
  const PolicyEvaluation eval_c = evaluate_policy(model, pi_k, Signal::cost);
  const double j_reward = model.rho0().dot(eval_r.v);
  const double j_cost = model.rho0().dot(eval_c.v);

  EstimatorBatch batch;
  SurrogateData data(pi_k);
  double j_cost_hat = j_cost;
  if (config.mode == CupMode::sampled) {
    batch = collect_batch(model, pi_k, config.episodes, config.horizon,
                          Rng::stream(state.seed, state.iter).next_u64(),
                          state.v_estimate, state.c_estimate, config.lambda);
    j_cost_hat = batch.j_cost_hat;
    data = make_sampled_data(pi_k, config.lambda, model.gamma(), batch);
  } else {
    data = make_exact_data(model, pi_k, config.lambda);
  }

  // Step 1: performance improvement.
  const Mat theta_half = improvement_step(state.theta, config, data, alpha_k);
  const SoftmaxPolicy pi_half(theta_half);
  double chi_k = 0.0;
  if (config.mode == CupMode::sampled) {
    chi_k = batch_kl(batch, pi_k, pi_half);
  } else {
    chi_k = weighted_kl(data.d_lambda, pi_k, pi_half);
  }
  const ObjectiveValue surr_at_half =
      config.surrogate == SurrogateKind::clip
          ? clip_objective(theta_half, state.theta, batch, config.clip_epsilon)
          : improvement_objective(theta_half, state.theta, data, alpha_k);

  // Dual ascent on the constraint, then step 2: projection.
  state.nu = dual_update(state.nu, j_cost_hat, b, config.eta, config.nu_max);
  const Mat theta_next = projection_step(theta_half, state.theta, state.nu,
                                         config, data, j_cost_hat, b);
  const SoftmaxPolicy pi_next(theta_next);

  if (config.mode == CupMode::sampled) {
    state.v_estimate = fit_tabular_value(batch, batch.v_targets, state.v_estimate);
    state.c_estimate = fit_tabular_value(batch, batch.c_targets, state.c_estimate);
  }

  IterationReport report;
  report.j_reward = j_reward;
  report.j_cost = j_cost;
  report.nu = state.nu;
  report.kl_step1 = chi_k;
  report.surrogate_value = surr_at_half.value;
  report.feasible = j_cost <= b;
  report.j_reward_next = objective(model, pi_next, Signal::reward);
  report.j_cost_next = objective(model, pi_next, Signal::cost);

  // Theorem-2 certificate inputs, evaluated exactly.
  const double eps_v = epsilon_sup(model, pi_next, eval_r.v, 200, Signal::reward);
  const double eps_c = epsilon_sup(model, pi_next, eval_c.v, 200, Signal::cost);
  report.certificate =
      theorem2_certificate(chi_k, alpha_k, config.beta_k, eps_v, eps_c,
                           model.gamma(), config.lambda, model.n_states(), b);
  // Premise of the ceiling: the projected policy satisfies the surrogate
  // constraint of the projection problem.
  {
    const SurrogateData exact = config.mode == CupMode::sampled
                                    ? make_exact_data(model, pi_k, config.lambda)
                                    : data;
    const Vec expected =
        (pi_next.probs().cwiseProduct(exact.gae_cost)).rowwise().sum();
    double constraint = j_cost + exact.d_lambda.dot(expected) /
                                     (1.0 - exact.gamma_tilde) - b;
    if (config.beta_k > 0.0) {
      const double kl_k = weighted_kl(exact.d_lambda, pi_k, pi_next);
      constraint += config.beta_k * std::sqrt(std::max(kl_k, 0.0));
    }
    report.projection_premise = constraint <= 1e-9;
    report.kl_next = weighted_kl(exact.d_lambda, pi_k, pi_next);
  }

  state.theta = theta_next;
  state.iter += 1;
  return report;
}

}  // namespace cup
