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

#include "cup/policy.hpp"

#include <cmath>

namespace cup {

SoftmaxPolicy::SoftmaxPolicy(Mat theta) : theta_(std::move(theta)) {
  const int S = static_cast<int>(theta_.rows());
  const int A = static_cast<int>(theta_.cols());
  if (S < 1 || A < 1) throw ConfigError("policy logits must be non-empty");
  probs_.resize(S, A);
  log_probs_.resize(S, A);
  for (int s = 0; s < S; ++s) {
    const double m = theta_.row(s).maxCoeff();
    double z = 0.0;
    for (int a = 0; a < A; ++a) z += std::exp(theta_(s, a) - m);
    const double log_z = std::log(z);
    for (int a = 0; a < A; ++a) {
      log_probs_(s, a) = theta_(s, a) - m - log_z;
      probs_(s, a) = std::exp(log_probs_(s, a));
    }
  }
}

SoftmaxPolicy SoftmaxPolicy::uniform(int n_states, int n_actions) {
  return SoftmaxPolicy(Mat::Zero(n_states, n_actions));
}

SoftmaxPolicy SoftmaxPolicy::random(int n_states, int n_actions, Rng& rng,
                                    double scale) {
  Mat theta(n_states, n_actions);
  for (int s = 0; s < n_states; ++s)
    for (int a = 0; a < n_actions; ++a) theta(s, a) = scale * rng.normal();
  return SoftmaxPolicy(std::move(theta));
}

void check_dimensions(const CmdpModel& model, const SoftmaxPolicy& policy) {
  if (policy.n_states() != model.n_states() ||
      policy.n_actions() != model.n_actions())
    throw ConfigError("policy shape [" + std::to_string(policy.n_states()) +
                      "," + std::to_string(policy.n_actions()) +
                      "] does not match model [" +
                      std::to_string(model.n_states()) + "," +
                      std::to_string(model.n_actions()) + "]");
}

}  // namespace cup
