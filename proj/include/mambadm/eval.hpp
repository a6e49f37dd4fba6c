#pragma once

#include <cstdint>
#include <vector>

#include "mambadm/data.hpp"
#include "mambadm/envs.hpp"
#include "mambadm/gloma.hpp"

namespace mambadm {

// 100 * (raw - random) / (expert - random)
double normalized_score(double raw, double random_score, double expert_score);

struct EvalOptions {
  double target_rtg = 1.0;
  int episodes = 100;
  std::uint64_t seed = 0;
  bool sample_actions = false;  // default: argmax, lowest index on ties
};

struct RolloutStepTrace {
  double rtg_fed = 0.0;
  int action = 0;
  double reward = 0.0;
};

struct EvalReport {
  std::vector<double> returns;  // sorted ascending before aggregation
  double mean = 0.0;
  double stddev = 0.0;  // population
  double normalized = 0.0;
  double target_rtg = 0.0;
  std::uint64_t seed = 0;
  int episodes = 0;
};

// Return-conditioned evaluation: feed the last K steps with the current
// action slot empty, set l_s to the window's token count, decrement the
// target return by each observed reward.
EvalReport rollout(const GlomaModel<float>& model, const EnvSpec& spec,
                   const EvalOptions& opt, double random_score,
                   double expert_score, const StateNormalizer* norm = nullptr,
                   std::vector<std::vector<RolloutStepTrace>>* traces = nullptr);

}  // namespace mambadm
