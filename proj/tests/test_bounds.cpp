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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "cup/bounds.hpp"
#include "cup/harness.hpp"
#include "cup/lambda_dynamics.hpp"
#include "cup/sampler.hpp"
#include "test_util.hpp"

using namespace cup;

TEST_CASE("expected_td_vector vanishes under the true value") {
  Rng rng(83);
  const CmdpModel model = random_cmdp(rng.next_u64(), 5, 3, 0.9, 0.5);
  const SoftmaxPolicy pi = test::random_policy(model, rng);
  const Vec v = evaluate_policy(model, pi, Signal::reward).v;
  for (int t : {0, 1, 5})
    CHECK(expected_td_vector(model, pi, v, t).cwiseAbs().maxCoeff() < 1e-10);

  // t=0 with phi = 0 is the expected one-step reward
  const Vec zero = Vec::Zero(5);
  CHECK((expected_td_vector(model, pi, zero, 0) -
         reward_vector(model, pi, Signal::reward))
            .cwiseAbs()
            .maxCoeff() < 1e-13);
}

TEST_CASE("expected_td_vector agrees with a Monte-Carlo rollout") {
  Rng rng(89);
  const CmdpModel model = random_cmdp(rng.next_u64(), 4, 2, 0.9, 0.5);
  const SoftmaxPolicy pi = test::random_policy(model, rng);
  Vec phi(4);
  for (int s = 0; s < 4; ++s) phi(s) = rng.normal();
  const int t = 3;
  const Vec exact = expected_td_vector(model, pi, phi, t);

  const int start = 1;
  std::vector<double> samples;
  samples.reserve(100000);
  for (int n = 0; n < 100000; ++n) {
    int s = start;
    for (int step = 0; step < t; ++step) {
      Eigen::RowVectorXd row = pi.probs().row(s);
      const int a = rng.categorical({row.data(), (size_t)row.size()});
      Eigen::RowVectorXd next = model.transition(a).row(s);
      s = rng.categorical({next.data(), (size_t)next.size()});
    }
    Eigen::RowVectorXd row = pi.probs().row(s);
    const int a = rng.categorical({row.data(), (size_t)row.size()});
    Eigen::RowVectorXd next = model.transition(a).row(s);
    const int sp = rng.categorical({next.data(), (size_t)next.size()});
    samples.push_back(model.reward(a)(s, sp) + model.gamma() * phi(sp) -
                      phi(s));
  }
  const auto [mean, se] = test::mean_se(samples);
  CHECK(std::abs(mean - exact(start)) < 3.0 * se);
}

TEST_CASE("delta_vector basics and the exact-difference sum identity") {
  Rng rng(97);
  const CmdpModel model = random_cmdp(rng.next_u64(), 5, 3, 0.9, 0.5);
  const SoftmaxPolicy pi = test::random_policy(model, rng);
  Vec phi(5);
  for (int s = 0; s < 5; ++s) phi(s) = rng.normal();

  for (int t : {0, 2})
    CHECK(delta_vector(model, pi, pi, phi, t).cwiseAbs().maxCoeff() < 1e-14);

  const SoftmaxPolicy pi_old = test::random_policy(model, rng);
  // t=0 equals kappa via the naive per-(s,a,s') loop
  const Vec d0 = delta_vector(model, pi, pi_old, phi, 0);
  for (int s = 0; s < 5; ++s) {
    double kappa = 0.0;
    for (int a = 0; a < 3; ++a) {
      double inner = 0.0;
      for (int sp = 0; sp < 5; ++sp)
        inner += model.transition(a)(s, sp) *
                 (model.reward(a)(s, sp) + model.gamma() * phi(sp) - phi(s));
      kappa += (pi.prob(s, a) - pi_old.prob(s, a)) * inner;
    }
    CHECK(d0(s) == doctest::Approx(kappa).epsilon(1e-10));
  }

  // summing the decomposition recovers the exact difference
  const double lambda = 0.6;
  const double gl = model.gamma() * lambda;
  const double gt = gamma_tilde(model.gamma(), lambda);
  const Vec d_new = lambda_visitation(model, pi, lambda).dist;
  const Vec d_old = lambda_visitation(model, pi_old, lambda).dist;
  double total = 0.0, w = 1.0;
  for (int t = 0; t <= 400; ++t) {
    total += w * (d_old.dot(delta_vector(model, pi, pi_old, phi, t)) +
                  (d_new - d_old).dot(expected_td_vector(model, pi, phi, t)));
    w *= gl;
  }
  total /= (1.0 - gt);
  const double diff = objective(model, pi, Signal::reward) -
                      objective(model, pi_old, Signal::reward);
  CHECK(total == doctest::Approx(diff).epsilon(1e-8));
}

TEST_CASE("theorem1 bounds are tight at equal policies") {
  Rng rng(101);
  const CmdpModel model = random_cmdp(rng.next_u64(), 5, 3, 0.9, 0.5);
  const SoftmaxPolicy pi = test::random_policy(model, rng);
  Vec phi(5);
  for (int s = 0; s < 5; ++s) phi(s) = rng.normal();
  const BoundReport r = theorem1_bounds(model, pi, pi, phi, 0.5, 1, 200);
  CHECK(std::abs(r.actual_diff) < 1e-10);
  CHECK(std::abs(r.lower) < 1e-10);
  CHECK(std::abs(r.upper) < 1e-10);
}

TEST_CASE("theorem1 at lambda 0 collapses to the single t=0 term") {
  Rng rng(103);
  const CmdpModel model = random_cmdp(rng.next_u64(), 5, 2, 0.9, 0.5);
  const SoftmaxPolicy pi_new = test::random_policy(model, rng);
  const SoftmaxPolicy pi_old = test::random_policy(model, rng);
  const Vec v_old = evaluate_policy(model, pi_old, Signal::reward).v;

  const BoundReport r = theorem1_bounds(model, pi_new, pi_old, v_old, 0.0, 1, 50);
  CHECK(r.truncation_tail == 0.0);
  // manual single-term evaluation
  const Vec d_new = lambda_visitation(model, pi_new, 0.0).dist;
  const Vec d_old = lambda_visitation(model, pi_old, 0.0).dist;
  const Vec kappa = delta_vector(model, pi_new, pi_old, v_old, 0);
  const Vec td_new = expected_td_vector(model, pi_new, v_old, 0);
  const double eps = (d_new - d_old).cwiseAbs().sum() *
                     td_new.cwiseAbs().maxCoeff();
  const double scale = 1.0 / (1.0 - model.gamma());
  CHECK(r.lower == doctest::Approx(scale * (d_old.dot(kappa) - eps)).epsilon(1e-10));
  CHECK(r.upper == doctest::Approx(scale * (d_old.dot(kappa) + eps)).epsilon(1e-10));
}

TEST_CASE("theorem1 rejects invalid dual pairings") {
  Rng rng(107);
  const CmdpModel model = random_cmdp(rng.next_u64(), 3, 2, 0.9, 0.5);
  const SoftmaxPolicy pi = test::random_policy(model, rng);
  CHECK_THROWS_AS(theorem1_bounds(model, pi, pi, Vec::Zero(3), 0.5, 3, 50),
                  ConfigError);
  CHECK_THROWS_AS(theorem1_bounds(model, pi, pi, Vec::Zero(3), 0.5, 1, 0),
                  ConfigError);
}

TEST_CASE("theorem1 sandwich holds across a randomized mini corpus") {
  Rng rng(109);
  int checks = 0;
  for (int rep = 0; rep < 40; ++rep) {
    const CmdpModel model = random_cmdp(rng.next_u64(), 5, 3, 0.9, 0.5);
    const SoftmaxPolicy pi_new = test::random_policy(model, rng, 1.5);
    const SoftmaxPolicy pi_old = test::random_policy(model, rng, 1.5);
    Vec phi(5);
    for (int s = 0; s < 5; ++s) phi(s) = 2.0 * rng.normal();
    for (double lam : {0.0, 0.5, 0.95}) {
      for (int p : {1, 2}) {
        const int T = std::max(1, default_truncation(model.gamma(), lam));
        const BoundReport r =
            theorem1_bounds(model, pi_new, pi_old, phi, lam, p, T);
        CHECK(r.actual_diff >= r.lower - r.truncation_tail - 1e-9);
        CHECK(r.actual_diff <= r.upper + r.truncation_tail + 1e-9);
        ++checks;
      }
    }
  }
  CHECK(checks == 240);
}

TEST_CASE("longer truncation never loosens the certified sandwich") {
  Rng rng(211);
  for (int rep = 0; rep < 20; ++rep) {
    const CmdpModel model = random_cmdp(rng.next_u64(), 5, 3, 0.9, 0.5);
    const SoftmaxPolicy pi_new = test::random_policy(model, rng);
    const SoftmaxPolicy pi_old = test::random_policy(model, rng);
    Vec phi(5);
    for (int s = 0; s < 5; ++s) phi(s) = rng.normal();
    const double lam = 0.8;
    const BoundReport coarse =
        theorem1_bounds(model, pi_new, pi_old, phi, lam, 1, 10);
    const BoundReport fine =
        theorem1_bounds(model, pi_new, pi_old, phi, lam, 1, 200);
    CHECK(fine.upper + fine.truncation_tail <=
          coarse.upper + coarse.truncation_tail + 1e-12);
    CHECK(fine.lower - fine.truncation_tail >=
          coarse.lower - coarse.truncation_tail - 1e-12);
  }
}

TEST_CASE("prop1 and prop2 are tight at equal policies") {
  Rng rng(113);
  const CmdpModel model = random_cmdp(rng.next_u64(), 5, 3, 0.9, 0.5);
  const SoftmaxPolicy pi = test::random_policy(model, rng);
  const BoundReport p1 = prop1_lower(model, pi, pi, 0.5, 100);
  CHECK(std::abs(p1.actual_diff) < 1e-12);
  CHECK(std::abs(p1.lower) < 1e-10);
  const BoundReport p2 = prop2_upper(model, pi, pi, 0.5, 100);
  CHECK(std::abs(p2.actual_diff) < 1e-12);
  CHECK(std::abs(p2.upper) < 1e-10);
}

TEST_CASE("prop2 on a cost-free model") {
  // zero cost: the GAE term is zero, the actual difference is zero, and the
  // bound is the non-negative TV term.
  std::vector<Mat> P(2, Mat::Zero(2, 2));
  P[0] << 1, 0, 0, 1;
  P[1] << 0, 1, 1, 0;
  std::vector<Mat> R(2, Mat::Ones(2, 2));
  Vec rho0(2);
  rho0 << 0.5, 0.5;
  const CmdpModel model(2, 2, P, R, Mat::Zero(2, 2), rho0, 0.9, 1.0);
  Rng rng(127);
  const SoftmaxPolicy pi_new = SoftmaxPolicy::random(2, 2, rng);
  const SoftmaxPolicy pi_old = SoftmaxPolicy::random(2, 2, rng);
  const BoundReport p2 = prop2_upper(model, pi_new, pi_old, 0.5, 100);
  CHECK(p2.actual_diff == doctest::Approx(0.0));
  CHECK(p2.surrogate_term == doctest::Approx(0.0).epsilon(1e-10));
  CHECK(p2.upper >= -1e-12);
}

TEST_CASE("prop1/prop2 randomized mini audit") {
  Rng rng(131);
  for (int rep = 0; rep < 60; ++rep) {
    const CmdpModel model = random_cmdp(rng.next_u64(), 6, 3, 0.9, 0.5);
    const SoftmaxPolicy pi_new = test::random_policy(model, rng);
    const SoftmaxPolicy pi_old = test::random_policy(model, rng);
    for (double lam : {0.0, 0.5, 0.95}) {
      const BoundReport p1 = prop1_lower(model, pi_new, pi_old, lam, 200);
      CHECK(p1.actual_diff >= p1.lower - 1e-9);
      const BoundReport p2 = prop2_upper(model, pi_new, pi_old, lam, 200);
      CHECK(p2.actual_diff <= p2.upper + 1e-9);
    }
  }
}

TEST_CASE("prop1 at lambda 0 has the classic single-term coefficient") {
  Rng rng(137);
  const CmdpModel model = random_cmdp(rng.next_u64(), 5, 2, 0.9, 0.5);
  const SoftmaxPolicy pi_new = test::random_policy(model, rng);
  const SoftmaxPolicy pi_old = test::random_policy(model, rng);
  const BoundReport p1 = prop1_lower(model, pi_new, pi_old, 0.0, 100);

  // coefficient reduces to 2 gamma eps / (1-gamma), applied inside the
  // 1/(1-gamma)-scaled expectation
  const double gamma = model.gamma();
  const double expect_coeff =
      2.0 * gamma * p1.epsilon_sup / (1.0 - gamma) / (1.0 - gamma);
  CHECK(p1.divergence_coefficient == doctest::Approx(expect_coeff).epsilon(1e-12));

  // surrogate term equals the plain advantage surrogate at lambda 0
  const Vec d_old = discounted_visitation(model, pi_old).dist;
  const Mat adv = evaluate_policy(model, pi_old, Signal::reward).adv;
  const double surr =
      d_old.dot((pi_new.probs().cwiseProduct(adv)).rowwise().sum()) /
      (1.0 - gamma);
  CHECK(p1.surrogate_term == doctest::Approx(surr).epsilon(1e-10));
}

TEST_CASE("prop3 substitution keeps validity and is never tighter") {
  Rng rng(139);
  for (int rep = 0; rep < 40; ++rep) {
    const CmdpModel model = random_cmdp(rng.next_u64(), 5, 3, 0.9, 0.5);
    const SoftmaxPolicy pi_new = test::random_policy(model, rng);
    const SoftmaxPolicy pi_old = test::random_policy(model, rng);
    const double lam = rng.uniform(0.0, 0.95);
    const StateDistribution d_old = lambda_visitation(model, pi_old, lam);
    const DivergencePair div = divergences(pi_new, pi_old, d_old);

    const BoundReport p1 = prop1_lower(model, pi_new, pi_old, lam, 100);
    const BoundReport p1kl = prop3_substitute(p1, div);
    CHECK(p1kl.lower <= p1.lower + 1e-12);
    CHECK(p1kl.actual_diff >= p1kl.lower - 1e-9);

    const BoundReport p2 = prop2_upper(model, pi_new, pi_old, lam, 100);
    const BoundReport p2kl = prop3_substitute(p2, div);
    CHECK(p2kl.upper >= p2.upper - 1e-12);
    CHECK(p2kl.actual_diff <= p2kl.upper + 1e-9);
  }

  // identical policies: zero divergence, substitution changes nothing
  const CmdpModel model = random_cmdp(rng.next_u64(), 4, 2, 0.9, 0.5);
  const SoftmaxPolicy pi = test::random_policy(model, rng);
  const StateDistribution d = lambda_visitation(model, pi, 0.5);
  const DivergencePair div = divergences(pi, pi, d);
  const BoundReport p1 = prop1_lower(model, pi, pi, 0.5, 100);
  const BoundReport p1kl = prop3_substitute(p1, div);
  CHECK(p1kl.lower == doctest::Approx(p1.lower).epsilon(1e-12));
}

TEST_CASE("divergence pair satisfies Pinsker and the Jensen chain") {
  Rng rng(149);
  for (int rep = 0; rep < 50; ++rep) {
    const CmdpModel model = random_cmdp(rng.next_u64(), 5, 4, 0.9, 0.5);
    const SoftmaxPolicy pi_new = test::random_policy(model, rng, 3.0);
    const SoftmaxPolicy pi_old = test::random_policy(model, rng, 3.0);
    const StateDistribution d = lambda_visitation(model, pi_old, 0.5);
    const DivergencePair div = divergences(pi_new, pi_old, d);
    for (int s = 0; s < 5; ++s)
      CHECK(div.tv_per_state(s) <=
            std::sqrt(div.kl_per_state(s) / 2.0) + 1e-12);
    CHECK(div.mean_tv <= std::sqrt(div.mean_kl / 2.0) + 1e-12);
  }
}

TEST_CASE("visitation gap lemma endpoints and audit") {
  Rng rng(151);
  const CmdpModel model = random_cmdp(rng.next_u64(), 5, 3, 0.9, 0.5);
  const SoftmaxPolicy pi = test::random_policy(model, rng);
  const auto [l_same, r_same] = visitation_gap(model, pi, pi, 0.5);
  CHECK(l_same == doctest::Approx(0.0));
  CHECK(r_same == doctest::Approx(0.0));

  const SoftmaxPolicy pi2 = test::random_policy(model, rng);
  const auto [l1, r1] = visitation_gap(model, pi, pi2, 1.0);
  CHECK(l1 == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(r1 == doctest::Approx(0.0).epsilon(1e-12));

  for (int rep = 0; rep < 120; ++rep) {
    const CmdpModel m = random_cmdp(rng.next_u64(), 6, 3, 0.9, 0.5);
    // include near-deterministic policies
    const double scale = rep % 3 == 0 ? 6.0 : 1.0;
    const SoftmaxPolicy a = test::random_policy(m, rng, scale);
    const SoftmaxPolicy b = test::random_policy(m, rng, scale);
    for (double lam : {0.0, 0.5, 0.95, 1.0}) {
      const auto [lhs, rhs] = visitation_gap(m, a, b, lam);
      CHECK(lhs <= rhs + 1e-9);
    }
  }
}

TEST_CASE("epsilon_sup is attained at t=0 and shrinks under the chain") {
  Rng rng(157);
  const CmdpModel model = random_cmdp(rng.next_u64(), 5, 2, 0.9, 0.5);
  const SoftmaxPolicy pi = test::random_policy(model, rng);
  Vec phi(5);
  for (int s = 0; s < 5; ++s) phi(s) = rng.normal();
  const double e0 = epsilon_sup(model, pi, phi, 0, Signal::reward);
  const double e200 = epsilon_sup(model, pi, phi, 200, Signal::reward);
  CHECK(e200 == doctest::Approx(e0).epsilon(1e-12));  // max over a shrinking tail
  CHECK(e0 >= 0.0);
}
