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

#include "cup/cmdp.hpp"
#include "cup/rng.hpp"

namespace cup {

/// Tabular softmax policy: pi(a|s) = exp(theta(s,a)) / sum_a' exp(theta(s,a')).
///
/// Probabilities are computed once at construction (row-max subtracted for
/// stability) and are strictly positive. The object is immutable; optimizer
/// steps build new policies from updated logits.
class SoftmaxPolicy {
 public:
  explicit SoftmaxPolicy(Mat theta);

  static SoftmaxPolicy uniform(int n_states, int n_actions);
  static SoftmaxPolicy random(int n_states, int n_actions, Rng& rng,
                              double scale = 1.0);

  int n_states() const { return static_cast<int>(theta_.rows()); }
  int n_actions() const { return static_cast<int>(theta_.cols()); }
  const Mat& theta() const { return theta_; }
  const Mat& probs() const { return probs_; }
  const Mat& log_probs() const { return log_probs_; }

  double prob(int s, int a) const { return probs_(s, a); }
  double log_prob(int s, int a) const { return log_probs_(s, a); }

 private:
  Mat theta_;
  Mat probs_;
  Mat log_probs_;
};

/// Throws ConfigError unless policy dimensions match the model.
void check_dimensions(const CmdpModel& model, const SoftmaxPolicy& policy);

}  // namespace cup
