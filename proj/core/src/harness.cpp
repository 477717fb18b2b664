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

#include "cup/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "cup/bounds.hpp"
#include "cup/lambda_dynamics.hpp"
#include "cup/rng.hpp"
#include "json.hpp"

namespace cup {

using nlohmann::json;

GridworldSpec GridworldSpec::from_json_string(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("gridworld JSON parse error: ") + e.what());
  }
  GridworldSpec spec;
  auto get = [&j](const char* key, auto& out) {
    if (j.contains(key)) out = j.at(key).template get<std::decay_t<decltype(out)>>();
  };
  get("width", spec.width);
  get("height", spec.height);
  get("goal_cell", spec.goal_cell);
  get("hazard_cells", spec.hazard_cells);
  get("step_reward", spec.step_reward);
  get("goal_reward", spec.goal_reward);
  get("hazard_cost", spec.hazard_cost);
  get("slip_prob", spec.slip_prob);
  get("gamma", spec.gamma);
  get("cost_limit_b", spec.cost_limit_b);
  return spec;
}

std::string GridworldSpec::to_json_string() const {
  json j;
  j["width"] = width;
  j["height"] = height;
  j["goal_cell"] = goal_cell;
  j["hazard_cells"] = hazard_cells;
  j["step_reward"] = step_reward;
  j["goal_reward"] = goal_reward;
  j["hazard_cost"] = hazard_cost;
  j["slip_prob"] = slip_prob;
  j["gamma"] = gamma;
  j["cost_limit_b"] = cost_limit_b;
  return j.dump(2);
}

CmdpModel build_gridworld(const GridworldSpec& spec) {
  if (spec.width < 1) throw ConfigError("gridworld width must be >= 1");
  if (spec.height < 1) throw ConfigError("gridworld height must be >= 1");
  const int S = spec.width * spec.height;
  if (spec.goal_cell < 0 || spec.goal_cell >= S)
    throw ConfigError("gridworld goal_cell out of range");
  for (int h : spec.hazard_cells) {
    if (h < 0 || h >= S) throw ConfigError("gridworld hazard_cells out of range");
    if (h == spec.goal_cell)
      throw ConfigError("gridworld goal_cell must not be a hazard");
  }
  if (!(spec.slip_prob >= 0.0 && spec.slip_prob < 1.0))
    throw ConfigError("gridworld slip_prob must lie in [0,1)");
  if (!(spec.gamma > 0.0 && spec.gamma < 1.0))
    throw ConfigError("gridworld gamma must lie strictly inside (0,1)");
  if (spec.cost_limit_b < 0.0)
    throw ConfigError("gridworld cost_limit_b must be >= 0");

  constexpr int kActions = 4;  // up, right, down, left
  const int dx[kActions] = {0, 1, 0, -1};
  const int dy[kActions] = {-1, 0, 1, 0};
  // Slip goes to the two perpendicular directions, half each.
  const int lateral[kActions][2] = {{3, 1}, {0, 2}, {1, 3}, {2, 0}};

  std::vector<Mat> P(kActions, Mat::Zero(S, S));
  std::vector<Mat> R(kActions, Mat::Zero(S, S));
  Mat C = Mat::Zero(S, kActions);

  auto cell = [&](int x, int y) { return y * spec.width + x; };
  auto target = [&](int x, int y, int a) {
    const int nx = x + dx[a], ny = y + dy[a];
    if (nx < 0 || nx >= spec.width || ny < 0 || ny >= spec.height)
      return cell(x, y);
    return cell(nx, ny);
  };
  auto is_hazard = [&](int c) {
    return std::find(spec.hazard_cells.begin(), spec.hazard_cells.end(), c) !=
           spec.hazard_cells.end();
  };

  for (int y = 0; y < spec.height; ++y) {
    for (int x = 0; x < spec.width; ++x) {
      const int s = cell(x, y);
      for (int a = 0; a < kActions; ++a) {
        if (s == spec.goal_cell) {
          P[a](s, s) = 1.0;  // absorbing, zero reward and cost
          continue;
        }
        P[a](s, target(x, y, a)) += 1.0 - spec.slip_prob;
        P[a](s, target(x, y, lateral[a][0])) += spec.slip_prob / 2.0;
        P[a](s, target(x, y, lateral[a][1])) += spec.slip_prob / 2.0;
        for (int sp = 0; sp < S; ++sp) {
          if (P[a](s, sp) <= 0.0) continue;
          R[a](s, sp) = spec.step_reward +
                        (sp == spec.goal_cell ? spec.goal_reward : 0.0);
          if (is_hazard(sp)) C(s, a) += spec.hazard_cost * P[a](s, sp);
        }
      }
    }
  }

  Vec rho0 = Vec::Zero(S);
  rho0(0) = 1.0;
  return CmdpModel(S, kActions, std::move(P), std::move(R), std::move(C),
                   std::move(rho0), spec.gamma, spec.cost_limit_b);
}

CmdpModel random_cmdp(std::uint64_t seed, int n_states, int n_actions,
                      double gamma, double b) {
  if (n_states < 1 || n_actions < 1)
    throw ConfigError("random_cmdp sizes must be >= 1");
  Rng rng(seed);
  const int S = n_states, A = n_actions;

  std::vector<Mat> P(A, Mat::Zero(S, S)), R(A, Mat::Zero(S, S));
  Mat C(S, A);
  for (int s = 0; s < S; ++s) {
    for (int a = 0; a < A; ++a) {
      double total = 0.0;
      for (int sp = 0; sp < S; ++sp) {
        // Normalized exponentials give a flat Dirichlet row.
        const double e = -std::log(1.0 - rng.uniform());
        P[a](s, sp) = e;
        total += e;
      }
      P[a].row(s) /= total;
      // Renormalize exactly so validation's 1e-12 row check passes.
      P[a](s, S - 1) = 1.0 - (P[a].row(s).sum() - P[a](s, S - 1));
      for (int sp = 0; sp < S; ++sp) R[a](s, sp) = rng.uniform(-1.0, 1.0);
    }
  }
  for (int s = 0; s < S; ++s)
    for (int a = 0; a < A; ++a) C(s, a) = rng.uniform();
  Vec rho0(S);
  double total = 0.0;
  for (int s = 0; s < S; ++s) {
    rho0(s) = -std::log(1.0 - rng.uniform());
    total += rho0(s);
  }
  rho0 /= total;
  rho0(S - 1) = 1.0 - (rho0.sum() - rho0(S - 1));
  return CmdpModel(S, A, std::move(P), std::move(R), std::move(C),
                   std::move(rho0), gamma, b);
}

ValueIterationResult value_iteration(const CmdpModel& model, double tol,
                                     int max_iters) {
  const int S = model.n_states();
  const int A = model.n_actions();
  Vec v = Vec::Zero(S);
  Mat q(S, A);
  for (int it = 0; it < max_iters; ++it) {
    q = expected_backup(model, Signal::reward, v);
    Vec next = q.rowwise().maxCoeff();
    const double residual = (next - v).cwiseAbs().maxCoeff();
    v = next;
    if (residual < tol) break;
  }
  ValueIterationResult out;
  out.v = v;
  out.greedy_actions.resize(S);
  q = expected_backup(model, Signal::reward, v);
  for (int s = 0; s < S; ++s) {
    int best = 0;
    for (int a = 1; a < A; ++a)
      if (q(s, a) > q(s, best)) best = a;
    out.greedy_actions[s] = best;
  }
  return out;
}

namespace {

/// Exact (J, Jc) of a deterministic policy given by an action table.
std::pair<double, double> evaluate_deterministic(const CmdpModel& model,
                                                 const std::vector<int>& act) {
  const int S = model.n_states();
  Mat p(S, S);
  Vec r(S), c(S);
  for (int s = 0; s < S; ++s) {
    const int a = act[s];
    p.row(s) = model.transition(a).row(s);
    r(s) = model.transition(a).row(s).dot(model.reward(a).row(s));
    c(s) = model.cost()(s, a);
  }
  const Mat system = Mat::Identity(S, S) - model.gamma() * p;
  Eigen::PartialPivLU<Mat> lu(system);
  const Vec v = lu.solve(r);
  const Vec vc = lu.solve(c);
  return {model.rho0().dot(v), model.rho0().dot(vc)};
}

}  // namespace

OracleResult deterministic_feasible_oracle(const CmdpModel& model) {
  const int S = model.n_states();
  const int A = model.n_actions();
  double count = 1.0;
  for (int s = 0; s < S; ++s) {
    count *= A;
    if (count > 1e6)
      throw ConfigError(
          "deterministic enumeration cap exceeded: n_actions^n_states > 10^6");
  }
  OracleResult out;
  std::vector<int> act(S, 0);
  const long total = static_cast<long>(count);
  for (long k = 0; k < total; ++k) {
    long kk = k;
    for (int s = 0; s < S; ++s) {
      act[s] = static_cast<int>(kk % A);
      kk /= A;
    }
    const auto [j, jc] = evaluate_deterministic(model, act);
    if (jc <= model.cost_limit_b() + 1e-12 &&
        (!out.best_feasible_return || j > *out.best_feasible_return)) {
      out.best_feasible_return = j;
      out.actions = act;
    }
  }
  return out;
}

namespace {

struct VariantTracker {
  std::map<std::string, AuditReport::VariantStats> stats;

  void record(const std::string& name, double slack, double tol, AuditReport& top) {
    auto& v = stats[name];
    v.name = name;
    v.checks += 1;
    top.checks += 1;
    if (slack < -tol) {
      v.violations += 1;
      top.violations += 1;
    }
    v.worst_margin = std::min(v.worst_margin, slack);
    top.worst_margin = std::min(top.worst_margin, slack);
  }
};

}  // namespace

AuditReport audit_bounds(const AuditOptions& options,
                         std::vector<std::string>* reports_json) {
  AuditReport report;
  report.draws = options.draws;
  VariantTracker tracker;
  const double tol = options.tolerance;

  for (int draw = 0; draw < options.draws; ++draw) {
    Rng rng = Rng::stream(options.seed, draw);
    const CmdpModel model = random_cmdp(rng.next_u64(), options.n_states,
                                        options.n_actions, options.gamma, 1.0);
    const SoftmaxPolicy pi_new = SoftmaxPolicy::random(
        options.n_states, options.n_actions, rng, options.policy_scale);
    const SoftmaxPolicy pi_old = SoftmaxPolicy::random(
        options.n_states, options.n_actions, rng, options.policy_scale);
    Vec phi(options.n_states);
    for (int s = 0; s < options.n_states; ++s) phi(s) = 2.0 * rng.normal();

    for (double lambda : options.lambdas) {
      const int T = std::max(1, default_truncation(options.gamma, lambda));
      for (int p : {1, 2}) {
        const BoundReport t1 = theorem1_bounds(model, pi_new, pi_old, phi,
                                               lambda, p, T);
        const double low_slack =
            t1.actual_diff - (t1.lower - t1.truncation_tail);
        const double up_slack =
            (t1.upper + t1.truncation_tail) - t1.actual_diff;
        tracker.record("theorem1_p" + std::to_string(p),
                       std::min(low_slack, up_slack), tol, report);
        if (reports_json) reports_json->push_back(bound_report_to_json(t1));
      }

      const BoundReport p1 = prop1_lower(model, pi_new, pi_old, lambda, 200);
      tracker.record("prop1_tv", p1.actual_diff - p1.lower, tol, report);
      const BoundReport p2 = prop2_upper(model, pi_new, pi_old, lambda, 200);
      tracker.record("prop2_tv", p2.upper - p2.actual_diff, tol, report);

      const StateDistribution d_old = lambda_visitation(model, pi_old, lambda);
      const DivergencePair div = divergences(pi_new, pi_old, d_old);
      const BoundReport p1kl = prop3_substitute(p1, div);
      const BoundReport p2kl = prop3_substitute(p2, div);
      tracker.record("prop1_kl", p1kl.actual_diff - p1kl.lower, tol, report);
      tracker.record("prop2_kl", p2kl.upper - p2kl.actual_diff, tol, report);
      // Pinsker ordering: the KL variant is never tighter.
      tracker.record("prop3_ordering_p1", p1.lower - p1kl.lower, tol, report);
      tracker.record("prop3_ordering_p2", p2kl.upper - p2.upper, tol, report);

      const auto [lhs, rhs] = visitation_gap(model, pi_new, pi_old, lambda);
      tracker.record("visitation_gap", rhs - lhs, tol, report);
      if (reports_json) {
        for (const BoundReport* r : {&p1, &p2, &p1kl, &p2kl})
          reports_json->push_back(bound_report_to_json(*r));
      }
    }
  }
  for (auto& [name, stats] : tracker.stats) report.per_variant.push_back(stats);
  return report;
}

std::string audit_report_to_json(const AuditReport& report) {
  json j;
  j["draws"] = report.draws;
  j["checks"] = report.checks;
  j["violations"] = report.violations;
  j["worst_margin"] = report.worst_margin;
  json variants = json::array();
  for (const auto& v : report.per_variant) {
    json row;
    row["name"] = v.name;
    row["checks"] = v.checks;
    row["violations"] = v.violations;
    row["worst_margin"] = v.worst_margin;
    variants.push_back(std::move(row));
  }
  j["per_variant"] = std::move(variants);
  return j.dump(2);
}

ExperimentConfig ExperimentConfig::from_json_string(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("experiment JSON parse error: ") + e.what());
  }
  ExperimentConfig c;
  if (!j.contains("model"))
    throw ConfigError("experiment JSON missing key \"model\"");
  c.model_path = j.at("model").get<std::string>();
  if (j.contains("cup")) c.cup = CupConfig::from_json_string(j.at("cup").dump());
  if (j.contains("iters")) c.iters = j.at("iters").get<int>();
  if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("out_csv")) c.out_csv = j.at("out_csv").get<std::string>();
  if (j.contains("summary")) c.summary_path = j.at("summary").get<std::string>();
  if (j.contains("init_scale")) c.init_scale = j.at("init_scale").get<double>();
  if (c.iters < 1) throw ConfigError("iters must be >= 1");
  return c;
}

ExperimentConfig ExperimentConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open experiment config: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return from_json_string(ss.str());
}

std::string run_csv(const std::vector<IterationReport>& reports) {
  std::string out =
      "iter,j_reward_exact,j_cost_exact,nu,kl_step1,surrogate,feasible\n";
  char line[256];
  for (size_t i = 0; i < reports.size(); ++i) {
    const IterationReport& r = reports[i];
    std::snprintf(line, sizeof(line), "%zu,%.12g,%.12g,%.12g,%.12g,%.12g,%d\n",
                  i, r.j_reward, r.j_cost, r.nu, r.kl_step1, r.surrogate_value,
                  r.feasible ? 1 : 0);
    out += line;
  }
  return out;
}

ExperimentResult run_experiment(const CmdpModel& model,
                                const ExperimentConfig& config) {
  config.cup.validate();
  const auto start = std::chrono::steady_clock::now();
  CupState state =
      make_initial_state(model, config.cup, config.seed, config.init_scale);
  ExperimentResult result;
  result.reports.reserve(config.iters);
  for (int k = 0; k < config.iters; ++k)
    result.reports.push_back(cup_iterate(model, state, config.cup));
  result.iters = config.iters;
  result.j_initial = result.reports.front().j_reward;
  result.j_final = result.reports.back().j_reward_next;
  result.jc_final = result.reports.back().j_cost_next;
  result.feasible = result.jc_final <= model.cost_limit_b();
  atomic_write(config.out_csv, run_csv(result.reports));
  if (!config.summary_path.empty()) {
    const double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
            .count();
    json j;
    j["final_j_reward"] = result.j_final;
    j["final_j_cost"] = result.jc_final;
    j["feasible"] = result.feasible;
    j["wall_time_s"] = wall;
    j["seed"] = config.seed;
    j["iters"] = config.iters;
    atomic_write(config.summary_path, j.dump(2));
  }
  return result;
}

}  // namespace cup
