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

#include "cup/cmdp.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace cup {

using nlohmann::json;

namespace {

constexpr double kStochasticTol = 1e-12;

std::string idx(int s, int a) {
  return "(s=" + std::to_string(s) + ", a=" + std::to_string(a) + ")";
}

}  // namespace

CmdpModel::CmdpModel(int n_states, int n_actions, std::vector<Mat> transition,
                     std::vector<Mat> reward, Mat cost, Vec rho0, double gamma,
                     double cost_limit_b)
    : n_states_(n_states),
      n_actions_(n_actions),
      transition_(std::move(transition)),
      reward_(std::move(reward)),
      cost_(std::move(cost)),
      rho0_(std::move(rho0)),
      gamma_(gamma),
      cost_limit_b_(cost_limit_b) {
  validate();
}

void CmdpModel::validate() const {
  if (n_states_ < 1) throw ConfigError("n_states must be positive");
  if (n_actions_ < 1) throw ConfigError("n_actions must be positive");
  if (!(gamma_ > 0.0 && gamma_ < 1.0))
    throw ConfigError("gamma must lie strictly inside (0,1), got " +
                      std::to_string(gamma_));
  if (cost_limit_b_ < 0.0)
    throw ConfigError("cost_limit must be >= 0, got " +
                      std::to_string(cost_limit_b_));
  if (static_cast<int>(transition_.size()) != n_actions_)
    throw ConfigError("transition must have one matrix per action");
  if (static_cast<int>(reward_.size()) != n_actions_)
    throw ConfigError("reward must have one matrix per action");
  if (cost_.rows() != n_states_ || cost_.cols() != n_actions_)
    throw ConfigError("cost must have shape [n_states, n_actions]");
  if (rho0_.size() != n_states_)
    throw ConfigError("rho0 must have length n_states");

  for (int a = 0; a < n_actions_; ++a) {
    if (transition_[a].rows() != n_states_ || transition_[a].cols() != n_states_)
      throw ConfigError("transition matrix for action " + std::to_string(a) +
                        " must be [n_states, n_states]");
    if (reward_[a].rows() != n_states_ || reward_[a].cols() != n_states_)
      throw ConfigError("reward matrix for action " + std::to_string(a) +
                        " must be [n_states, n_states]");
    for (int s = 0; s < n_states_; ++s) {
      double row = 0.0;
      for (int sp = 0; sp < n_states_; ++sp) {
        const double p = transition_[a](s, sp);
        if (!(p >= 0.0))
          throw ConfigError("transition" + idx(s, a) +
                            " has negative entry at s'=" + std::to_string(sp));
        if (!std::isfinite(reward_[a](s, sp)))
          throw ConfigError("reward" + idx(s, a) +
                            " is not finite at s'=" + std::to_string(sp));
        row += p;
      }
      if (std::abs(row - 1.0) > kStochasticTol)
        throw ConfigError("transition row " + idx(s, a) +
                          " sums to " + std::to_string(row) + ", expected 1");
    }
  }
  for (int s = 0; s < n_states_; ++s)
    for (int a = 0; a < n_actions_; ++a)
      if (!(cost_(s, a) >= 0.0))
        throw ConfigError("cost" + idx(s, a) + " must be non-negative");
  double mass = 0.0;
  for (int s = 0; s < n_states_; ++s) {
    if (!(rho0_(s) >= 0.0))
      throw ConfigError("rho0 has negative entry at s=" + std::to_string(s));
    mass += rho0_(s);
  }
  if (std::abs(mass - 1.0) > kStochasticTol)
    throw ConfigError("rho0 sums to " + std::to_string(mass) + ", expected 1");
}

CmdpModel CmdpModel::from_json_string(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("model JSON parse error: ") + e.what());
  }
  for (const char* key : {"n_states", "n_actions", "gamma", "cost_limit",
                          "rho0", "transition", "reward", "cost"})
    if (!j.contains(key))
      throw ConfigError(std::string("model JSON missing key \"") + key + "\"");

  const int S = j.at("n_states").get<int>();
  const int A = j.at("n_actions").get<int>();
  if (S < 1 || A < 1) throw ConfigError("n_states and n_actions must be positive");

  auto expect_size = [](const json& arr, int n, const std::string& what) {
    if (!arr.is_array() || static_cast<int>(arr.size()) != n)
      throw ConfigError(what + " must be an array of length " + std::to_string(n));
  };

  Vec rho0(S);
  expect_size(j.at("rho0"), S, "rho0");
  for (int s = 0; s < S; ++s) rho0(s) = j.at("rho0")[s].get<double>();

  std::vector<Mat> P(A, Mat::Zero(S, S)), R(A, Mat::Zero(S, S));
  expect_size(j.at("transition"), S, "transition");
  expect_size(j.at("reward"), S, "reward");
  for (int s = 0; s < S; ++s) {
    expect_size(j.at("transition")[s], A, "transition[" + std::to_string(s) + "]");
    expect_size(j.at("reward")[s], A, "reward[" + std::to_string(s) + "]");
    for (int a = 0; a < A; ++a) {
      expect_size(j.at("transition")[s][a], S,
                  "transition[" + std::to_string(s) + "][" + std::to_string(a) + "]");
      expect_size(j.at("reward")[s][a], S,
                  "reward[" + std::to_string(s) + "][" + std::to_string(a) + "]");
      for (int sp = 0; sp < S; ++sp) {
        P[a](s, sp) = j.at("transition")[s][a][sp].get<double>();
        R[a](s, sp) = j.at("reward")[s][a][sp].get<double>();
      }
    }
  }

  Mat cost(S, A);
  expect_size(j.at("cost"), S, "cost");
  for (int s = 0; s < S; ++s) {
    expect_size(j.at("cost")[s], A, "cost[" + std::to_string(s) + "]");
    for (int a = 0; a < A; ++a) cost(s, a) = j.at("cost")[s][a].get<double>();
  }

  return CmdpModel(S, A, std::move(P), std::move(R), std::move(cost),
                   std::move(rho0), j.at("gamma").get<double>(),
                   j.at("cost_limit").get<double>());
}

std::string CmdpModel::to_json_string() const {
  json j;
  j["n_states"] = n_states_;
  j["n_actions"] = n_actions_;
  j["gamma"] = gamma_;
  j["cost_limit"] = cost_limit_b_;
  j["rho0"] = std::vector<double>(rho0_.data(), rho0_.data() + n_states_);
  json trans = json::array(), rew = json::array(), cost = json::array();
  for (int s = 0; s < n_states_; ++s) {
    json ts = json::array(), rs = json::array(), cs = json::array();
    for (int a = 0; a < n_actions_; ++a) {
      json tsa = json::array(), rsa = json::array();
      for (int sp = 0; sp < n_states_; ++sp) {
        tsa.push_back(transition_[a](s, sp));
        rsa.push_back(reward_[a](s, sp));
      }
      ts.push_back(std::move(tsa));
      rs.push_back(std::move(rsa));
      cs.push_back(cost_(s, a));
    }
    trans.push_back(std::move(ts));
    rew.push_back(std::move(rs));
    cost.push_back(std::move(cs));
  }
  j["transition"] = std::move(trans);
  j["reward"] = std::move(rew);
  j["cost"] = std::move(cost);
  return j.dump(2);
}

CmdpModel CmdpModel::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open model file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return from_json_string(ss.str());
}

void CmdpModel::save(const std::string& path) const {
  atomic_write(path, to_json_string());
}

void atomic_write(const std::string& path, const std::string& text) {
  namespace fs = std::filesystem;
  fs::path target(path);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  fs::path tmp = target;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw ConfigError("cannot open output file: " + tmp.string());
    out << text;
    if (!out) throw ConfigError("write failed: " + tmp.string());
  }
  fs::rename(tmp, target);
}

}  // namespace cup
