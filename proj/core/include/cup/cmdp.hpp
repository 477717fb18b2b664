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

#include <Eigen/Dense>
#include <stdexcept>
#include <string>
#include <vector>

namespace cup {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Invalid model/config/CLI input. Messages name the offending field or index.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A numeric operation produced a non-finite or otherwise unusable result.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Signal { reward, cost };

/// Which quantity a state distribution represents.
enum class DistributionKind { rho0, d_rho0, d_lambda };

struct StateDistribution {
  Vec dist;
  DistributionKind kind = DistributionKind::rho0;
};

/// Finite constrained MDP with a single cost constraint.
///
/// Transition and reward are per-action dense matrices: transition[a](s, s')
/// is P(s'|s,a) and reward[a](s, s') is r(s'|s,a). Cost is a function of
/// (s, a) only, stored as cost(s, a). Immutable after construction; validate()
/// runs in the checked factory and names the first offending index.
class CmdpModel {
 public:
  CmdpModel(int n_states, int n_actions, std::vector<Mat> transition,
            std::vector<Mat> reward, Mat cost, Vec rho0, double gamma,
            double cost_limit_b);

  int n_states() const { return n_states_; }
  int n_actions() const { return n_actions_; }
  const Mat& transition(int a) const { return transition_[a]; }
  const Mat& reward(int a) const { return reward_[a]; }
  const Mat& cost() const { return cost_; }
  const Vec& rho0() const { return rho0_; }
  double gamma() const { return gamma_; }
  double cost_limit_b() const { return cost_limit_b_; }

  /// Parse from the on-disk JSON schema; throws ConfigError with the
  /// offending key or index on malformed input.
  static CmdpModel from_json_string(const std::string& text);
  static CmdpModel load(const std::string& path);
  std::string to_json_string() const;
  void save(const std::string& path) const;

 private:
  void validate() const;

  int n_states_;
  int n_actions_;
  std::vector<Mat> transition_;
  std::vector<Mat> reward_;
  Mat cost_;
  Vec rho0_;
  double gamma_;
  double cost_limit_b_;
};

/// Write `text` to `path` atomically (temp file + rename).
void atomic_write(const std::string& path, const std::string& text);

}  // namespace cup
