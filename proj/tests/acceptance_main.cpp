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

// End-to-end acceptance suite. Each criterion runs at its stated tolerance
// and prints exactly one [PASS]/[FAIL] line; the binary exits nonzero if any
// criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "cup/bounds.hpp"
#include "cup/harness.hpp"
#include "cup/lambda_dynamics.hpp"
#include "cup/optimizer.hpp"
#include "cup/sampler.hpp"

using namespace cup;

namespace {

int g_failures = 0;

struct Outcome {
  bool pass = true;
  std::string detail;
};

void criterion(int number, const std::string& name,
               const std::function<Outcome()>& body, double time_limit_s = 0) {
  const auto start = std::chrono::steady_clock::now();
  Outcome outcome;
  try {
    outcome = body();
  } catch (const std::exception& e) {
    outcome.pass = false;
    outcome.detail = std::string("exception: ") + e.what();
  }
  const double elapsed =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
          .count();
  if (time_limit_s > 0 && elapsed > time_limit_s) {
    outcome.pass = false;
    outcome.detail += " [exceeded " + std::to_string(time_limit_s) + "s limit]";
  }
  std::printf("[%s] criterion %2d: %s (%s%.2fs)\n",
              outcome.pass ? "PASS" : "FAIL", number, name.c_str(),
              outcome.detail.empty() ? "" : (outcome.detail + ", ").c_str(),
              elapsed);
  std::fflush(stdout);
  if (!outcome.pass) ++g_failures;
}

std::string golden_path(const std::string& file) {
  return std::string(CUP_GOLDEN_DIR) + "/" + file;
}

CupConfig golden_config() {
  CupConfig config;
  config.alpha_k = 1.5;
  config.alpha_decay = 0.99;
  config.eta = 0.3;
  config.inner_steps = 15;
  config.lambda = 0.5;
  return config;
}

struct GoldenRun {
  std::vector<IterationReport> reports;
  double j_initial = 0.0;
};

GoldenRun run_fixture(const CmdpModel& model, std::uint64_t seed, int iters) {
  const CupConfig config = golden_config();
  CupState state = make_initial_state(model, config, seed);
  GoldenRun run;
  run.reports.reserve(iters);
  for (int k = 0; k < iters; ++k)
    run.reports.push_back(cup_iterate(model, state, config));
  run.j_initial = run.reports.front().j_reward;
  return run;
}

double grad_check(const std::function<double(const Mat&)>& f, const Mat& theta,
                  const Mat& grad) {
  const double h = 1e-5;
  double worst = 0.0;
  for (int s = 0; s < theta.rows(); ++s) {
    for (int a = 0; a < theta.cols(); ++a) {
      Mat up = theta, dn = theta;
      up(s, a) += h;
      dn(s, a) -= h;
      const double fd = (f(up) - f(dn)) / (2.0 * h);
      const double scale = std::max({std::abs(fd), std::abs(grad(s, a)), 1e-6});
      worst = std::max(worst, std::abs(fd - grad(s, a)) / scale);
    }
  }
  return worst;
}

}  // namespace

int main() {
  std::printf("cup acceptance suite\n");

  // ---------------------------------------------------------------- 1
  criterion(1, "lambda-objective and TD-decomposition identities", [] {
    Outcome out;
    double worst = 0.0;
    int draws = 0;
    for (int draw = 0; draw < 120; ++draw) {
      Rng rng = Rng::stream(7, draw);
      const int S = 2 + static_cast<int>(rng.next_u64() % 7);
      const CmdpModel model = random_cmdp(rng.next_u64(), S, 3, 0.9, 0.5);
      const SoftmaxPolicy pi = SoftmaxPolicy::random(S, 3, rng);
      const double lambda = rng.uniform();
      const auto [jp, jl] = lambda_objective_identity(model, pi, lambda);
      worst = std::max(worst, std::abs(jp - jl));
      Vec phi(S);
      for (int s = 0; s < S; ++s) phi(s) = 3.0 * rng.normal();
      const auto [p, d] = td_decomposition_identity(model, pi, lambda, phi);
      worst = std::max(worst, std::abs(p - d));
      ++draws;
    }
    out.pass = worst < 1e-8 && draws >= 100;
    char buf[96];
    std::snprintf(buf, sizeof(buf), "%d draws, worst gap %.2e", draws, worst);
    out.detail = buf;
    return out;
  }, 10.0);

  // ------------------------------------------------------------- 2, 3
  AuditOptions corpus;
  corpus.seed = 42;
  corpus.draws = 200;
  corpus.n_states = 6;
  corpus.n_actions = 3;
  corpus.lambdas = {0.0, 0.5, 0.95};
  corpus.policy_scale = 1.0;
  corpus.gamma = 0.9;
  AuditReport corpus_report;

  criterion(2, "theorem-1 sandwich on the 200-draw corpus", [&] {
    corpus_report = audit_bounds(corpus);
    Outcome out;
    int violations = 0, checks = 0;
    for (const auto& v : corpus_report.per_variant) {
      if (v.name.rfind("theorem1_", 0) == 0) {
        violations += v.violations;
        checks += v.checks;
      }
    }
    out.pass = violations == 0 && checks == 200 * 3 * 2;
    char buf[96];
    std::snprintf(buf, sizeof(buf), "%d checks, %d violations", checks,
                  violations);
    out.detail = buf;
    return out;
  }, 60.0);

  criterion(3, "proposition 1/2/3 audits and Pinsker ordering", [&] {
    Outcome out;
    int violations = 0, checks = 0;
    for (const auto& v : corpus_report.per_variant) {
      if (v.name.rfind("prop", 0) == 0) {
        violations += v.violations;
        checks += v.checks;
      }
    }
    out.pass = violations == 0 && checks > 0;
    char buf[96];
    std::snprintf(buf, sizeof(buf), "%d checks, %d violations", checks,
                  violations);
    out.detail = buf;
    return out;
  });

  // ---------------------------------------------------------------- 4
  criterion(4, "visitation-gap lemma incl. near-deterministic policies", [] {
    Outcome out;
    int violations = 0, checks = 0;
    double worst = 0.0;
    for (int draw = 0; draw < 520; ++draw) {
      Rng rng = Rng::stream(1042, draw);
      const CmdpModel model = random_cmdp(rng.next_u64(), 6, 3, 0.9, 0.5);
      const double scale = draw % 2 == 0 ? 1.0 : 6.0;
      const SoftmaxPolicy a = SoftmaxPolicy::random(6, 3, rng, scale);
      const SoftmaxPolicy b = SoftmaxPolicy::random(6, 3, rng, scale);
      for (double lambda : {0.0, 0.5, 0.95, 1.0}) {
        const auto [lhs, rhs] = visitation_gap(model, a, b, lambda);
        if (lhs > rhs + 1e-9) ++violations;
        worst = std::max(worst, lhs - rhs);
        ++checks;
        if (lambda == 1.0 && (std::abs(lhs) > 1e-12 || std::abs(rhs) > 1e-12))
          ++violations;  // degenerate case must give 0 = 0
      }
    }
    out.pass = violations == 0;
    char buf[96];
    std::snprintf(buf, sizeof(buf), "%d checks, %d violations", checks,
                  violations);
    out.detail = buf;
    return out;
  });

  // ---------------------------------------------------------------- 5
  criterion(5, "lambda=0 reductions and prop-1 structural collapse", [] {
    Outcome out;
    double worst = 0.0;
    for (int draw = 0; draw < 25; ++draw) {
      Rng rng = Rng::stream(5005, draw);
      const CmdpModel model = random_cmdp(rng.next_u64(), 6, 3, 0.9, 0.5);
      const SoftmaxPolicy pi = SoftmaxPolicy::random(6, 3, rng);
      worst = std::max(worst,
                       std::abs(gamma_tilde(model.gamma(), 0.0) - model.gamma()));
      worst = std::max(worst, (lambda_transition(model, pi, 0.0) -
                               transition_matrix(model, pi))
                                  .cwiseAbs()
                                  .maxCoeff());
      worst = std::max(worst, (lambda_reward(model, pi, 0.0, Signal::reward) -
                               reward_vector(model, pi, Signal::reward))
                                  .cwiseAbs()
                                  .maxCoeff());
      worst = std::max(worst, (lambda_visitation(model, pi, 0.0).dist -
                               discounted_visitation(model, pi).dist)
                                  .cwiseAbs()
                                  .maxCoeff());
    }
    bool structural = worst < 1e-12;

    // prop-1 at lambda 0 collapses to the classic single-term form
    Rng rng = Rng::stream(5005, 1000);
    const CmdpModel model = random_cmdp(rng.next_u64(), 6, 3, 0.9, 0.5);
    const SoftmaxPolicy pi_new = SoftmaxPolicy::random(6, 3, rng);
    const SoftmaxPolicy pi_old = SoftmaxPolicy::random(6, 3, rng);
    const BoundReport p1 = prop1_lower(model, pi_new, pi_old, 0.0, 200);
    const double gamma = model.gamma();
    const double coeff =
        2.0 * gamma * p1.epsilon_sup / (1.0 - gamma) / (1.0 - gamma);
    const Vec d_old = discounted_visitation(model, pi_old).dist;
    const Mat adv = evaluate_policy(model, pi_old, Signal::reward).adv;
    const double surr =
        d_old.dot((pi_new.probs().cwiseProduct(adv)).rowwise().sum()) /
        (1.0 - gamma);
    structural = structural &&
                 std::abs(p1.divergence_coefficient - coeff) < 1e-10 &&
                 std::abs(p1.surrogate_term - surr) < 1e-10 &&
                 std::abs(p1.lower - (surr - coeff * p1.mean_tv)) < 1e-10;
    Outcome o;
    o.pass = structural;
    char buf[64];
    std::snprintf(buf, sizeof(buf), "worst reduction gap %.2e", worst);
    o.detail = buf;
    return o;
  });

  // ---------------------------------------------------------------- 6
  criterion(6, "GAE correctness: recursion, collapse, sampled consistency", [] {
    Outcome out;
    Rng rng = Rng::stream(6006, 0);
    // backward recursion equals the forward sum on every trajectory
    double worst_rec = 0.0;
    for (int rep = 0; rep < 50; ++rep) {
      const CmdpModel model = random_cmdp(rng.next_u64(), 5, 3, 0.9, 0.5);
      const SoftmaxPolicy pi = SoftmaxPolicy::random(5, 3, rng);
      const Trajectory traj = sample_trajectory(model, pi, 50, rng.next_u64());
      Vec v(5);
      for (int s = 0; s < 5; ++s) v(s) = rng.normal();
      const double lambda = rng.uniform();
      for (Signal sig : {Signal::reward, Signal::cost}) {
        const auto adv = compute_gae(traj, v, model.gamma(), lambda, sig);
        const int T = static_cast<int>(traj.actions.size());
        for (int t = 0; t < T; ++t) {
          double forward = 0.0;
          for (int j = t; j < T; ++j) {
            const double sig_j =
                sig == Signal::reward ? traj.rewards[j] : traj.costs[j];
            forward += std::pow(model.gamma() * lambda, j - t) *
                       (sig_j + model.gamma() * v(traj.states[j + 1]) -
                        v(traj.states[j]));
          }
          worst_rec = std::max(worst_rec, std::abs(adv[t] - forward));
        }
      }
    }

    // exact GAE with the true value equals the exact advantage
    double worst_collapse = 0.0;
    for (int rep = 0; rep < 20; ++rep) {
      const CmdpModel model = random_cmdp(rng.next_u64(), 6, 3, 0.9, 0.5);
      const SoftmaxPolicy pi = SoftmaxPolicy::random(6, 3, rng);
      const double lambda = rng.uniform();
      for (Signal sig : {Signal::reward, Signal::cost}) {
        const Mat adv = evaluate_policy(model, pi, sig).adv;
        const GaeTable g =
            exact_gae(model, pi, lambda, sig, GaeBaseline::true_value);
        worst_collapse =
            std::max(worst_collapse, (g.values - adv).cwiseAbs().maxCoeff());
      }
    }

    // sampled surrogate converges to the exact surrogate (3 sigma, 1e4 episodes)
    const CmdpModel model = random_cmdp(31904, 4, 2, 0.9, 0.5);
    Rng prng = Rng::stream(6006, 1);
    const SoftmaxPolicy pi_old = SoftmaxPolicy::random(4, 2, prng);
    const SoftmaxPolicy pi_new = SoftmaxPolicy::random(4, 2, prng);
    const double lambda = 0.5;
    const Vec v_true = evaluate_policy(model, pi_old, Signal::reward).v;
    const Vec c_true = evaluate_policy(model, pi_old, Signal::cost).v;
    const EstimatorBatch batch =
        collect_batch(model, pi_old, 10000, 140, 23, v_true, c_true, lambda);
    const Vec d_old = lambda_visitation(model, pi_old, lambda).dist;
    const GaeTable g = exact_gae(model, pi_old, lambda, Signal::reward,
                                 GaeBaseline::true_value);
    const double exact =
        d_old.dot((pi_new.probs().cwiseProduct(g.values)).rowwise().sum());
    std::vector<double> contributions;
    for (size_t i = 0; i < batch.trajectories.size(); ++i) {
      EstimatorBatch single;
      single.gamma = batch.gamma;
      single.lambda = batch.lambda;
      single.trajectories.push_back(batch.trajectories[i]);
      single.adv_hat.push_back(batch.adv_hat[i]);
      single.cost_adv_hat.push_back(batch.cost_adv_hat[i]);
      contributions.push_back(
          dlam_surrogate_estimate(single, pi_new, pi_old, Signal::reward));
    }
    double mean = 0.0;
    for (double c : contributions) mean += c;
    mean /= contributions.size();
    double var = 0.0;
    for (double c : contributions) var += (c - mean) * (c - mean);
    const double se = std::sqrt(var / (contributions.size() - 1.0) /
                                contributions.size());
    const bool mc_ok = std::abs(mean - exact) < 3.0 * se + 1e-4;

    out.pass = worst_rec < 1e-12 && worst_collapse < 1e-8 && mc_ok;
    char buf[128];
    std::snprintf(buf, sizeof(buf),
                  "recursion %.1e, collapse %.1e, MC gap %.2e (3se %.2e)",
                  worst_rec, worst_collapse, std::abs(mean - exact), 3.0 * se);
    out.detail = buf;
    return out;
  });

  // ---------------------------------------------------------------- 7
  criterion(7, "analytic gradients vs central differences (50 points each)", [] {
    Outcome out;
    Rng rng = Rng::stream(7007, 0);
    double worst = 0.0;
    // exact improvement and projection
    for (int rep = 0; rep < 10; ++rep) {
      const CmdpModel model = random_cmdp(rng.next_u64(), 4, 3, 0.9, 0.5);
      const SoftmaxPolicy pi_k = SoftmaxPolicy::random(4, 3, rng);
      const SurrogateData data = make_exact_data(model, pi_k, 0.5);
      CupConfig config;
      config.beta_k = 0.3;
      const double jc = objective(model, pi_k, Signal::cost);
      for (int pt = 0; pt < 5; ++pt) {
        Mat theta = pi_k.theta();
        for (int s = 0; s < 4; ++s)
          for (int a = 0; a < 3; ++a) theta(s, a) += 0.4 * rng.normal();
        const ObjectiveValue impr =
            improvement_objective(theta, pi_k.theta(), data, 0.7);
        worst = std::max(
            worst, grad_check(
                       [&](const Mat& th) {
                         return improvement_objective(th, pi_k.theta(), data,
                                                      0.7)
                             .value;
                       },
                       theta, impr.gradient));
        Mat theta_half = pi_k.theta();
        for (int s = 0; s < 4; ++s)
          for (int a = 0; a < 3; ++a) theta_half(s, a) += 0.2 * rng.normal();
        const double nu = rng.uniform(0.0, 2.0);
        const ObjectiveValue proj = projection_objective(
            theta, theta_half, pi_k.theta(), nu, data, config, jc, 0.5);
        worst = std::max(
            worst, grad_check(
                       [&](const Mat& th) {
                         return projection_objective(th, theta_half,
                                                     pi_k.theta(), nu, data,
                                                     config, jc, 0.5)
                             .value;
                       },
                       theta, proj.gradient));
      }
    }
    // sampled improvement and clip
    for (int rep = 0; rep < 5; ++rep) {
      const CmdpModel model = random_cmdp(rng.next_u64(), 4, 2, 0.9, 0.5);
      const SoftmaxPolicy pi_k = SoftmaxPolicy::random(4, 2, rng);
      const EstimatorBatch batch = collect_batch(
          model, pi_k, 20, 60, rng.next_u64(), Vec::Zero(4), Vec::Zero(4), 0.5);
      const SurrogateData data =
          make_sampled_data(pi_k, 0.5, model.gamma(), batch);
      for (int pt = 0; pt < 10; ++pt) {
        Mat theta = pi_k.theta();
        for (int s = 0; s < 4; ++s)
          for (int a = 0; a < 2; ++a) theta(s, a) += 0.3 * rng.normal();
        const ObjectiveValue impr =
            improvement_objective(theta, pi_k.theta(), data, 0.5);
        worst = std::max(
            worst, grad_check(
                       [&](const Mat& th) {
                         return improvement_objective(th, pi_k.theta(), data,
                                                      0.5)
                             .value;
                       },
                       theta, impr.gradient));
        const ObjectiveValue clip =
            clip_objective(theta, pi_k.theta(), batch, 0.2);
        worst = std::max(
            worst, grad_check(
                       [&](const Mat& th) {
                         return clip_objective(th, pi_k.theta(), batch, 0.2)
                             .value;
                       },
                       theta, clip.gradient));
      }
    }
    out.pass = worst < 1e-5;
    char buf[64];
    std::snprintf(buf, sizeof(buf), "worst relative error %.2e", worst);
    out.detail = buf;
    return out;
  });

  // ---------------------------------------------------- 8, 10, 11 fixtures
  const CmdpModel model4 = CmdpModel::load(golden_path("gridworld_4x4.json"));
  const CmdpModel model3 = CmdpModel::load(golden_path("gridworld_3x3.json"));
  std::vector<GoldenRun> runs4, runs3;

  criterion(8, "end-to-end CUP on the committed gridworld fixtures", [&] {
    Outcome out;
    out.pass = true;
    const double b4 = model4.cost_limit_b();
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      runs4.push_back(run_fixture(model4, seed, 300));
      const GoldenRun& run = runs4.back();
      const IterationReport& last = run.reports.back();
      if (last.j_cost_next > 1.05 * b4 || last.j_reward_next < run.j_initial)
        out.pass = false;
    }
    // the 4x4 exceeds the deterministic enumeration cap (4^16 policies), so
    // the oracle clause is checked on the committed 3x3 fixture
    bool oracle4_unavailable = false;
    try {
      deterministic_feasible_oracle(model4);
    } catch (const ConfigError&) {
      oracle4_unavailable = true;
    }
    const OracleResult oracle3 = deterministic_feasible_oracle(model3);
    const double b3 = model3.cost_limit_b();
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      runs3.push_back(run_fixture(model3, seed, 300));
      const GoldenRun& run = runs3.back();
      const IterationReport& last = run.reports.back();
      if (last.j_cost_next > 1.05 * b3 || last.j_reward_next < run.j_initial ||
          last.j_reward_next < 0.9 * *oracle3.best_feasible_return)
        out.pass = false;
    }
    out.detail = std::string("4x4 oracle ") +
                 (oracle4_unavailable ? "unavailable (cap), 3x3 within 10%"
                                      : "available");
    return out;
  }, 120.0);

  // ---------------------------------------------------------------- 9
  criterion(9, "dual dynamics: positive part, cap, strict increase", [] {
    Outcome out;
    out.pass = dual_update(0.0, 20.0, 25.0, 0.1, 2.0) == 0.0 &&
               std::abs(dual_update(0.5, 30.0, 25.0, 0.01, 2.0) - 0.55) < 1e-15 &&
               dual_update(0.2, 25.0, 25.0, 0.7, 2.0) == 0.2;
    Rng rng = Rng::stream(9009, 0);
    for (int rep = 0; rep < 500 && out.pass; ++rep) {
      const double nu = rng.uniform(0.0, 2.0);
      const double jc = rng.uniform(0.0, 3.0);
      const double b = rng.uniform(0.0, 3.0);
      const double next = dual_update(nu, jc, b, 0.3, 2.0);
      if (next < 0.0 || next > 2.0) out.pass = false;
      if (jc > b && nu < 2.0 && !(next > nu)) out.pass = false;
      if (jc <= b && next > nu) out.pass = false;
    }
    return out;
  });

  // ---------------------------------------------------------------- 10
  criterion(10, "theorem-2 certificates on the exact-mode corpus", [&] {
    Outcome out;
    int audited = 0, excluded = 0, violations = 0;
    auto audit = [&](const CmdpModel& model, const std::vector<GoldenRun>& runs) {
      for (const GoldenRun& run : runs) {
        for (const IterationReport& r : run.reports) {
          // premises of the theorem: feasible reference policy and a
          // projection that keeps the Bregman contraction
          const bool premise = r.j_cost <= model.cost_limit_b() &&
                               r.kl_next <= r.kl_step1 + 1e-12;
          if (!premise) {
            ++excluded;
            continue;
          }
          const auto [floor_v, ceil_v] = *r.certificate;
          ++audited;
          if (r.j_reward_next - r.j_reward < floor_v - 1e-9) ++violations;
          if (r.projection_premise && r.j_cost_next > ceil_v + 1e-9)
            ++violations;
        }
      }
    };
    audit(model4, runs4);
    audit(model3, runs3);
    out.pass = violations == 0 && audited > 0;
    char buf[96];
    std::snprintf(buf, sizeof(buf), "%d audited, %d premise-excluded, %d violations",
                  audited, excluded, violations);
    out.detail = buf;
    return out;
  });

  // ---------------------------------------------------------------- 11
  criterion(11, "golden-run CSV reproduces byte-for-byte", [&] {
    Outcome out;
    std::ifstream in(golden_path("run_4x4_seed1.csv"), std::ios::binary);
    if (!in) {
      out.pass = false;
      out.detail = "missing golden CSV";
      return out;
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    const std::string expected = ss.str();
    const std::string actual = run_csv(runs4.front().reports);
    out.pass = actual == expected;
    if (!out.pass) out.detail = "CSV differs from the committed golden file";
    return out;
  });

  std::printf("%d of 11 criteria passed\n", 11 - g_failures);
  return g_failures == 0 ? 0 : 1;
}
