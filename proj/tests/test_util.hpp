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

#include <cmath>
#include <vector>

#include "cup/cmdp.hpp"
#include "cup/harness.hpp"
#include "cup/policy.hpp"
#include "cup/rng.hpp"

namespace cup::test {

/// Single state, single action, fixed reward self-loop.
inline CmdpModel self_loop(double reward, double gamma, double cost = 0.0,
                           double b = 1.0) {
  std::vector<Mat> P{Mat::Ones(1, 1)};
  std::vector<Mat> R{Mat::Constant(1, 1, reward)};
  Mat C = Mat::Constant(1, 1, cost);
  Vec rho0 = Vec::Ones(1);
  return CmdpModel(1, 1, P, R, C, rho0, gamma, b);
}

/// Two states, s0 -> s1 deterministic under every action, s1 absorbing.
inline CmdpModel absorbing_chain(double gamma) {
  Mat p(2, 2);
  p << 0, 1, 0, 1;
  std::vector<Mat> P{p};
  std::vector<Mat> R{Mat::Zero(2, 2)};
  Mat C = Mat::Zero(2, 1);
  Vec rho0(2);
  rho0 << 1, 0;
  return CmdpModel(2, 1, P, R, C, rho0, gamma, 1.0);
}

inline SoftmaxPolicy random_policy(const CmdpModel& model, Rng& rng,
                                   double scale = 1.0) {
  return SoftmaxPolicy::random(model.n_states(), model.n_actions(), rng, scale);
}

/// Mean and standard error of a sample.
struct MeanSe {
  double mean = 0.0;
  double se = 0.0;
};

inline MeanSe mean_se(const std::vector<double>& xs) {
  MeanSe out;
  const double n = static_cast<double>(xs.size());
  for (double x : xs) out.mean += x;
  out.mean /= n;
  double var = 0.0;
  for (double x : xs) var += (x - out.mean) * (x - out.mean);
  var /= (n - 1.0);
  out.se = std::sqrt(var / n);
  return out;
}

}  // namespace cup::test
