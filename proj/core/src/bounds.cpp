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

#include "cup/bounds.hpp"

#include <cmath>
#include <limits>

#include "cup/lambda_dynamics.hpp"
#include "json.hpp"

namespace cup {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

/// E_s'[sig + gamma*phi(s') - phi(s)] per (s,a).
Mat td_table(const CmdpModel& model, const Vec& phi, Signal signal) {
  return expected_backup(model, signal, phi).colwise() - phi;
}

Vec policy_dbar(const SoftmaxPolicy& policy, const Mat& table) {
  return (policy.probs().cwiseProduct(table)).rowwise().sum();
}

double q_norm(const Vec& v, int p_norm) {
  return p_norm == 1 ? v.cwiseAbs().maxCoeff() : v.norm();
}

}  // namespace

std::string to_string(BoundVariant v) {
  switch (v) {
    case BoundVariant::theorem1_tv: return "theorem1_tv";
    case BoundVariant::prop1_tv: return "prop1_tv";
    case BoundVariant::prop1_kl: return "prop1_kl";
    case BoundVariant::prop2_tv: return "prop2_tv";
    case BoundVariant::prop2_kl: return "prop2_kl";
  }
  return "unknown";
}

DivergencePair divergences(const SoftmaxPolicy& pi_new,
                           const SoftmaxPolicy& pi_old,
                           const StateDistribution& weight) {
  const int S = pi_new.n_states();
  DivergencePair out;
  out.tv_per_state.resize(S);
  out.kl_per_state.resize(S);
  for (int s = 0; s < S; ++s) {
    out.tv_per_state(s) =
        0.5 * (pi_new.probs().row(s) - pi_old.probs().row(s)).cwiseAbs().sum();
    double kl = 0.0;
    for (int a = 0; a < pi_new.n_actions(); ++a)
      kl += pi_old.prob(s, a) *
            (pi_old.log_prob(s, a) - pi_new.log_prob(s, a));
    out.kl_per_state(s) = kl;
  }
  out.mean_tv = weight.dist.dot(out.tv_per_state);
  out.mean_kl = weight.dist.dot(out.kl_per_state);
  return out;
}

Vec expected_td_vector(const CmdpModel& model, const SoftmaxPolicy& policy,
                       const Vec& phi, int t, Signal signal) {
  if (t < 0) throw ConfigError("t must be >= 0");
  const Mat p_pi = transition_matrix(model, policy);
  Vec v = policy_dbar(policy, td_table(model, phi, signal));
  for (int i = 0; i < t; ++i) v = p_pi * v;
  return v;
}

Vec delta_vector(const CmdpModel& model, const SoftmaxPolicy& pi_new,
                 const SoftmaxPolicy& pi_old, const Vec& phi, int t,
                 Signal signal) {
  return expected_td_vector(model, pi_new, phi, t, signal) -
         expected_td_vector(model, pi_old, phi, t, signal);
}

int default_truncation(double gamma, double lambda) {
  const double gl = gamma * lambda;
  if (gl <= 0.0) return 0;
  const int t = static_cast<int>(std::ceil(std::log(1e-10) / std::log(gl)));
  return std::min(t, 5000);
}

BoundReport theorem1_bounds(const CmdpModel& model, const SoftmaxPolicy& pi_new,
                            const SoftmaxPolicy& pi_old, const Vec& phi,
                            double lambda, int p_norm, int T_trunc,
                            Signal signal) {
  if (p_norm != 1 && p_norm != 2)
    throw ConfigError("p_norm must be 1 (dual max-norm) or 2 (self-dual), got " +
                      std::to_string(p_norm));
  if (T_trunc < 1) throw ConfigError("T_trunc must be >= 1");
  const double gamma = model.gamma();
  const double gl = gamma * lambda;
  const double gt = gamma_tilde(gamma, lambda);

  const Vec d_new = lambda_visitation(model, pi_new, lambda).dist;
  const Vec d_old = lambda_visitation(model, pi_old, lambda).dist;
  const Vec d_gap = d_new - d_old;
  const double gap_p = p_norm == 1 ? d_gap.cwiseAbs().sum() : d_gap.norm();

  const Mat p_new = transition_matrix(model, pi_new);
  const Mat p_old = transition_matrix(model, pi_old);
  const Mat table = td_table(model, phi, signal);
  Vec td_new = policy_dbar(pi_new, table);
  Vec td_old = policy_dbar(pi_old, table);
  const double dbar_new_inf = td_new.cwiseAbs().maxCoeff();
  const double dbar_old_inf = td_old.cwiseAbs().maxCoeff();

  double lower = 0.0, upper = 0.0;
  double weight = 1.0;
  double sup_q = 0.0;
  const int T = gl == 0.0 ? 0 : T_trunc;
  for (int t = 0;; ++t) {
    const double q = q_norm(td_new, p_norm);
    sup_q = std::max(sup_q, q);
    const double eps = gap_p * q;
    const double base = d_old.dot(td_new - td_old);
    lower += weight * (base - eps);
    upper += weight * (base + eps);
    if (t == T) break;
    td_new = p_new * td_new;
    td_old = p_old * td_old;
    weight *= gl;
  }
  const double scale = 1.0 / (1.0 - gt);
  BoundReport report;
  report.variant = BoundVariant::theorem1_tv;
  report.lower = scale * lower;
  report.upper = scale * upper;
  report.truncation_T = T;
  // Every summand is bounded by |<d_old, delta_t>| + eps_t, itself bounded by
  // the t=0 norms since P^t is a contraction in the max norm.
  const double q_factor = p_norm == 1 ? 1.0 : std::sqrt(model.n_states());
  const double summand_cap =
      dbar_new_inf + dbar_old_inf + gap_p * q_factor * dbar_new_inf;
  report.truncation_tail =
      gl == 0.0 ? 0.0
                : scale * std::pow(gl, T + 1) / (1.0 - gl) * summand_cap;
  report.actual_diff = objective(model, pi_new, signal) -
                       objective(model, pi_old, signal);
  report.epsilon_sup = sup_q;
  StateDistribution w{d_old, DistributionKind::d_lambda};
  const DivergencePair div = divergences(pi_new, pi_old, w);
  report.mean_tv = div.mean_tv;
  report.mean_kl = div.mean_kl;
  return report;
}

double epsilon_sup(const CmdpModel& model, const SoftmaxPolicy& policy,
                   const Vec& phi, int T_sup, Signal signal) {
  if (T_sup < 0) throw ConfigError("T_sup must be >= 0");
  const int S = model.n_states();
  const int A = model.n_actions();
  // e(s) = sum_a pi(a|s) sum_s' P(s'|s,a) |sig + gamma*phi(s') - phi(s)|
  Vec e = Vec::Zero(S);
  for (int s = 0; s < S; ++s) {
    for (int a = 0; a < A; ++a) {
      double acc = 0.0;
      for (int sp = 0; sp < S; ++sp) {
        const double sig = signal == Signal::reward ? model.reward(a)(s, sp)
                                                    : model.cost()(s, a);
        acc += model.transition(a)(s, sp) *
               std::abs(sig + model.gamma() * phi(sp) - phi(s));
      }
      e(s) += policy.prob(s, a) * acc;
    }
  }
  const Mat p_pi = transition_matrix(model, policy);
  double sup = e.maxCoeff();
  for (int t = 1; t <= T_sup; ++t) {
    e = p_pi * e;
    sup = std::max(sup, e.maxCoeff());
  }
  return sup;
}

namespace {

BoundReport proposition_bound(const CmdpModel& model,
                              const SoftmaxPolicy& pi_new,
                              const SoftmaxPolicy& pi_old, double lambda,
                              int T_sup, Signal signal) {
  const double gamma = model.gamma();
  const double gl = gamma * lambda;
  const double gt = gamma_tilde(gamma, lambda);
  const int S = model.n_states();

  const StateDistribution d_old = lambda_visitation(model, pi_old, lambda);
  const GaeTable gae =
      exact_gae(model, pi_old, lambda, signal, GaeBaseline::true_value);
  const Vec surrogate_per_state =
      (pi_new.probs().cwiseProduct(gae.values)).rowwise().sum();
  const double surrogate = d_old.dist.dot(surrogate_per_state) / (1.0 - gt);

  const Vec v_old = evaluate_policy(model, pi_old, signal).v;
  const double eps = epsilon_sup(model, pi_new, v_old, T_sup, signal);
  // 2 gt (gl(S-1)+1) eps / ((1-gt)(1-gl)), applied inside the 1/(1-gt)-scaled
  // expectation over d_old.
  const double coeff =
      2.0 * gt * (gl * (S - 1) + 1.0) * eps / ((1.0 - gt) * (1.0 - gl)) /
      (1.0 - gt);

  const DivergencePair div = divergences(pi_new, pi_old, d_old);

  BoundReport report;
  report.surrogate_term = surrogate;
  report.divergence_coefficient = coeff;
  report.epsilon_sup = eps;
  report.mean_tv = div.mean_tv;
  report.mean_kl = div.mean_kl;
  report.truncation_T = T_sup;
  report.truncation_tail = 0.0;
  report.actual_diff = objective(model, pi_new, signal) -
                       objective(model, pi_old, signal);
  if (signal == Signal::reward) {
    report.variant = BoundVariant::prop1_tv;
    report.lower = surrogate - coeff * div.mean_tv;
    report.upper = kInf;
  } else {
    report.variant = BoundVariant::prop2_tv;
    report.lower = -kInf;
    report.upper = surrogate + coeff * div.mean_tv;
  }
  return report;
}

}  // namespace

BoundReport prop1_lower(const CmdpModel& model, const SoftmaxPolicy& pi_new,
                        const SoftmaxPolicy& pi_old, double lambda, int T_sup) {
  return proposition_bound(model, pi_new, pi_old, lambda, T_sup,
                           Signal::reward);
}

BoundReport prop2_upper(const CmdpModel& model, const SoftmaxPolicy& pi_new,
                        const SoftmaxPolicy& pi_old, double lambda, int T_sup) {
  return proposition_bound(model, pi_new, pi_old, lambda, T_sup, Signal::cost);
}

BoundReport prop3_substitute(const BoundReport& report,
                             const DivergencePair& divergences) {
  if (report.variant != BoundVariant::prop1_tv &&
      report.variant != BoundVariant::prop2_tv)
    throw ConfigError("prop3_substitute expects a prop1_tv or prop2_tv report");
  BoundReport out = report;
  const double div = std::sqrt(0.5 * divergences.mean_kl);
  if (report.variant == BoundVariant::prop1_tv) {
    out.variant = BoundVariant::prop1_kl;
    out.lower = report.surrogate_term - report.divergence_coefficient * div;
  } else {
    out.variant = BoundVariant::prop2_kl;
    out.upper = report.surrogate_term + report.divergence_coefficient * div;
  }
  return out;
}

std::pair<double, double> visitation_gap(const CmdpModel& model,
                                         const SoftmaxPolicy& pi_new,
                                         const SoftmaxPolicy& pi_old,
                                         double lambda) {
  const double gamma = model.gamma();
  const double gl = gamma * lambda;
  const double gt = gamma_tilde(gamma, lambda);
  const int S = model.n_states();
  const Vec d_new = lambda_visitation(model, pi_new, lambda).dist;
  const StateDistribution d_old = lambda_visitation(model, pi_old, lambda);
  const double lhs = (d_new - d_old.dist).cwiseAbs().sum();
  const DivergencePair div = divergences(pi_new, pi_old, d_old);
  const double rhs = (gt * (gl * (S - 1) + 1.0)) / ((1.0 - gt) * (1.0 - gl)) *
                     2.0 * div.mean_tv;
  return {lhs, rhs};
}

std::string bound_report_to_json(const BoundReport& report) {
  nlohmann::json j;
  j["variant"] = to_string(report.variant);
  j["actual_diff"] = report.actual_diff;
  j["lower"] = std::isfinite(report.lower) ? nlohmann::json(report.lower)
                                           : nlohmann::json();
  j["upper"] = std::isfinite(report.upper) ? nlohmann::json(report.upper)
                                           : nlohmann::json();
  j["truncation_T"] = report.truncation_T;
  j["truncation_tail"] = report.truncation_tail;
  j["epsilon_sup"] = report.epsilon_sup;
  j["mean_tv"] = report.mean_tv;
  j["mean_kl"] = report.mean_kl;
  return j.dump();
}

}  // namespace cup
