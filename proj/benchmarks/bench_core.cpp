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

#include <benchmark/benchmark.h>

#include "cup/bounds.hpp"
#include "cup/harness.hpp"
#include "cup/lambda_dynamics.hpp"
#include "cup/optimizer.hpp"
#include "cup/rng.hpp"

namespace {

using namespace cup;

static void BM_EvaluatePolicy(benchmark::State& state) {
  const int S = static_cast<int>(state.range(0));
  const CmdpModel model = random_cmdp(1, S, 4, 0.95, 0.5);
  Rng rng(2);
  const SoftmaxPolicy pi = SoftmaxPolicy::random(S, 4, rng);
  for (auto _ : state) {
    benchmark::DoNotOptimize(evaluate_policy(model, pi, Signal::reward));
  }
}
BENCHMARK(BM_EvaluatePolicy)->Arg(8)->Arg(16)->Arg(32)->Arg(64);

static void BM_LambdaVisitation(benchmark::State& state) {
  const int S = static_cast<int>(state.range(0));
  const CmdpModel model = random_cmdp(3, S, 4, 0.95, 0.5);
  Rng rng(4);
  const SoftmaxPolicy pi = SoftmaxPolicy::random(S, 4, rng);
  for (auto _ : state) {
    benchmark::DoNotOptimize(lambda_visitation(model, pi, 0.7));
  }
}
BENCHMARK(BM_LambdaVisitation)->Arg(8)->Arg(16)->Arg(32)->Arg(64);

static void BM_ExactGae(benchmark::State& state) {
  const int S = static_cast<int>(state.range(0));
  const CmdpModel model = random_cmdp(5, S, 4, 0.95, 0.5);
  Rng rng(6);
  const SoftmaxPolicy pi = SoftmaxPolicy::random(S, 4, rng);
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        exact_gae(model, pi, 0.8, Signal::reward, GaeBaseline::true_value));
  }
}
BENCHMARK(BM_ExactGae)->Arg(8)->Arg(32)->Arg(64);

static void BM_Theorem1Bounds(benchmark::State& state) {
  const int S = static_cast<int>(state.range(0));
  const CmdpModel model = random_cmdp(7, S, 3, 0.9, 0.5);
  Rng rng(8);
  const SoftmaxPolicy pi_new = SoftmaxPolicy::random(S, 3, rng);
  const SoftmaxPolicy pi_old = SoftmaxPolicy::random(S, 3, rng);
  Vec phi(S);
  for (int s = 0; s < S; ++s) phi(s) = rng.normal();
  const int T = default_truncation(0.9, 0.5);
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        theorem1_bounds(model, pi_new, pi_old, phi, 0.5, 1, T));
  }
}
BENCHMARK(BM_Theorem1Bounds)->Arg(8)->Arg(16)->Arg(32);

static void BM_CupIterateExact(benchmark::State& state) {
  const int S = static_cast<int>(state.range(0));
  const CmdpModel model = random_cmdp(9, S, 4, 0.9, 0.5);
  CupConfig config;
  CupState cup_state = make_initial_state(model, config, 1);
  for (auto _ : state) {
    benchmark::DoNotOptimize(cup_iterate(model, cup_state, config));
  }
}
BENCHMARK(BM_CupIterateExact)->Arg(8)->Arg(16)->Arg(32);

static void BM_SampleTrajectory(benchmark::State& state) {
  const CmdpModel model = random_cmdp(11, 16, 4, 0.9, 0.5);
  Rng rng(12);
  const SoftmaxPolicy pi = SoftmaxPolicy::random(16, 4, rng);
  std::uint64_t seed = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(sample_trajectory(model, pi, 200, ++seed));
  }
}
BENCHMARK(BM_SampleTrajectory);

}  // namespace

BENCHMARK_MAIN();
