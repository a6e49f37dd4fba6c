#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "mambadm/data.hpp"

// Desk-scale deterministic MDPs with exact dynamic-programming oracles and
// behavior-policy dataset generation.
namespace mambadm {

struct EnvSpec {
  enum class Kind { chain, key_door };

  Kind kind = Kind::chain;
  int n_cells = 5;
  int horizon = 10;
  int key_pos = -1;
  int door_pos = -1;

  static EnvSpec chain(int n, int horizon);
  static EnvSpec key_door(int length, int key_pos, int door_pos, int horizon);

  void validate() const;
  int state_dim() const;  // one-hot position, plus a has-key bit for key_door
  ActionSpace action_space() const { return {ActionSpace::Kind::discrete, 2}; }

  // Compact name carrying the full spec, e.g. "chain-n8-h12",
  // "keydoor-n9-k2-d8-h14"; parse_name inverts it.
  std::string name() const;
  static EnvSpec parse_name(const std::string& name);
};

struct EnvState {
  int pos = 0;
  bool has_key = false;
  int t = 0;
  bool done = false;
};

struct StepResult {
  EnvState next;
  double reward = 0.0;
  bool done = false;
};

// Deterministic start: cell 0 without the key. The seed is reserved for
// stochastic variants and is unused by the current environments.
EnvState env_reset(const EnvSpec& spec, std::uint64_t seed = 0);

VecX<double> encode_state(const EnvSpec& spec, const EnvState& s);

// Actions: 0 = left, 1 = right, positions clipped to the grid.
StepResult env_step(const EnvSpec& spec, const EnvState& s, int action);

// Exact optimal undiscounted return by finite-horizon dynamic programming.
double optimal_return(const EnvSpec& spec);

// Time-dependent greedy policy from the DP table. With undiscounted sparse
// rewards and a slack horizon many actions tie on return, so ties break
// first toward reaching the reward in fewer steps and then toward the lower
// action index.
class OptimalPolicy {
 public:
  explicit OptimalPolicy(const EnvSpec& spec);
  int action(const EnvState& s) const;
  double value_at_start() const;

 private:
  EnvSpec spec_;
  std::vector<double> value_;  // exact return, indexed by (t, pos, has_key)
  std::vector<double> pref_;   // return minus a per-step epsilon cost
  double value_of(int t, int pos, bool has_key) const;
  double pref_of(int t, int pos, bool has_key) const;
  Index idx(int t, int pos, bool has_key) const;
};

struct PolicySpec {
  double epsilon = 0.0;  // probability of acting uniformly at random
  std::string label;

  static PolicySpec random() { return {1.0, "random"}; }
  static PolicySpec medium() { return {0.5, "medium"}; }
  static PolicySpec expert() { return {0.05, "expert"}; }
  static PolicySpec by_label(const std::string& label);
};

// Rolls out one episode of the epsilon-greedy-against-optimal policy.
Episode rollout_policy(const EnvSpec& spec, const OptimalPolicy& pi,
                       double epsilon, Rng& rng);

// Generates the archive on disk: manifest line (measured random score,
// DP-exact expert score) followed by the rolled-out episodes.
Manifest generate_dataset(const EnvSpec& spec,
                          const std::vector<std::pair<PolicySpec, int>>& mix,
                          std::uint64_t seed, const std::string& out_path,
                          int random_score_episodes = 1000);

}  // namespace mambadm
