#include "mambadm/envs.hpp"

#include <algorithm>
#include <cstdio>

namespace mambadm {

EnvSpec EnvSpec::chain(int n, int horizon) {
  EnvSpec s;
  s.kind = Kind::chain;
  s.n_cells = n;
  s.horizon = horizon;
  s.validate();
  return s;
}

EnvSpec EnvSpec::key_door(int length, int key_pos, int door_pos, int horizon) {
  EnvSpec s;
  s.kind = Kind::key_door;
  s.n_cells = length;
  s.key_pos = key_pos;
  s.door_pos = door_pos;
  s.horizon = horizon;
  s.validate();
  return s;
}

void EnvSpec::validate() const {
  if (n_cells < 2) throw ConfigError("env: need at least 2 cells");
  if (horizon < 1) throw ConfigError("env: horizon must be >= 1");
  if (kind == Kind::key_door) {
    if (key_pos < 0 || key_pos >= n_cells || door_pos < 0 || door_pos >= n_cells)
      throw ConfigError("env: key/door position out of bounds");
    if (key_pos == door_pos) throw ConfigError("env: key and door must differ");
  }
}

int EnvSpec::state_dim() const {
  return kind == Kind::chain ? n_cells : n_cells + 1;
}

std::string EnvSpec::name() const {
  char buf[64];
  if (kind == Kind::chain)
    std::snprintf(buf, sizeof(buf), "chain-n%d-h%d", n_cells, horizon);
  else
    std::snprintf(buf, sizeof(buf), "keydoor-n%d-k%d-d%d-h%d", n_cells, key_pos,
                  door_pos, horizon);
  return buf;
}

EnvSpec EnvSpec::parse_name(const std::string& name) {
  int n = 0, h = 0, k = 0, d = 0;
  if (std::sscanf(name.c_str(), "chain-n%d-h%d", &n, &h) == 2)
    return chain(n, h);
  if (std::sscanf(name.c_str(), "keydoor-n%d-k%d-d%d-h%d", &n, &k, &d, &h) == 4)
    return key_door(n, k, d, h);
  throw ConfigError("cannot parse environment name: " + name);
}

EnvState env_reset(const EnvSpec& spec, std::uint64_t) {
  EnvState s;
  s.pos = 0;
  s.has_key = spec.kind == EnvSpec::Kind::key_door && spec.key_pos == 0;
  s.t = 0;
  s.done = false;
  return s;
}

VecX<double> encode_state(const EnvSpec& spec, const EnvState& s) {
  VecX<double> v = VecX<double>::Zero(spec.state_dim());
  v(s.pos) = 1.0;
  if (spec.kind == EnvSpec::Kind::key_door && s.has_key) v(spec.n_cells) = 1.0;
  return v;
}

StepResult env_step(const EnvSpec& spec, const EnvState& s, int action) {
  if (action != 0 && action != 1)
    throw DataError("env_step: invalid action index " + std::to_string(action));
  if (s.done) throw DataError("env_step: episode already finished");

  StepResult r;
  r.next = s;
  r.next.pos = std::clamp(s.pos + (action == 1 ? 1 : -1), 0, spec.n_cells - 1);
  r.next.t = s.t + 1;

  if (spec.kind == EnvSpec::Kind::chain) {
    if (r.next.pos == spec.n_cells - 1) {
      r.reward = 1.0;
      r.next.done = true;
    }
  } else {
    if (r.next.pos == spec.key_pos) r.next.has_key = true;
    if (r.next.pos == spec.door_pos && r.next.has_key) {
      r.reward = 1.0;
      r.next.done = true;
    }
  }
  if (r.next.t >= spec.horizon) r.next.done = true;
  r.done = r.next.done;
  return r;
}

Index OptimalPolicy::idx(int t, int pos, bool has_key) const {
  return (static_cast<Index>(t) * spec_.n_cells + pos) * 2 + (has_key ? 1 : 0);
}

double OptimalPolicy::value_of(int t, int pos, bool has_key) const {
  return value_[static_cast<std::size_t>(idx(t, pos, has_key))];
}

double OptimalPolicy::pref_of(int t, int pos, bool has_key) const {
  return pref_[static_cast<std::size_t>(idx(t, pos, has_key))];
}

// Per-step cost used only for tie-breaking in the greedy policy; horizons
// are tiny so the total never perturbs a 0/1 return comparison.
constexpr double kStepCost = 1e-9;

OptimalPolicy::OptimalPolicy(const EnvSpec& spec) : spec_(spec) {
  spec.validate();
  const int h = spec.horizon;
  const std::size_t cells = static_cast<std::size_t>((h + 1) * spec.n_cells * 2);
  value_.assign(cells, 0.0);
  pref_.assign(cells, 0.0);
  // backward induction; terminal transitions stop the episode, so their
  // continuation value is zero
  for (int t = h - 1; t >= 0; --t) {
    for (int pos = 0; pos < spec.n_cells; ++pos) {
      for (int key = 0; key < 2; ++key) {
        EnvState s{pos, key == 1, t, false};
        double best = 0.0;
        double best_pref = -kStepCost;  // doing nothing still burns the step
        for (int a = 0; a < 2; ++a) {
          StepResult r = env_step(spec, s, a);
          double v = r.reward;
          double p = r.reward - kStepCost;
          if (!r.done) {
            v += value_of(r.next.t, r.next.pos, r.next.has_key);
            p += pref_of(r.next.t, r.next.pos, r.next.has_key);
          }
          best = std::max(best, v);
          best_pref = std::max(best_pref, p);
        }
        value_[static_cast<std::size_t>(idx(t, pos, key == 1))] = best;
        pref_[static_cast<std::size_t>(idx(t, pos, key == 1))] = best_pref;
      }
    }
  }
}

int OptimalPolicy::action(const EnvState& s) const {
  if (s.t >= spec_.horizon) return 0;
  double best = -1.0;
  int best_a = 0;
  for (int a = 0; a < 2; ++a) {
    StepResult r = env_step(spec_, s, a);
    double p = r.reward - kStepCost;
    if (!r.done) p += pref_of(r.next.t, r.next.pos, r.next.has_key);
    if (p > best + 1e-15) {  // strict improvement; ties keep the lower index
      best = p;
      best_a = a;
    }
  }
  return best_a;
}

double OptimalPolicy::value_at_start() const {
  const EnvState s0 = env_reset(spec_);
  return value_of(0, s0.pos, s0.has_key);
}

double optimal_return(const EnvSpec& spec) {
  return OptimalPolicy(spec).value_at_start();
}

PolicySpec PolicySpec::by_label(const std::string& label) {
  if (label == "random") return random();
  if (label == "medium") return medium();
  if (label == "expert") return expert();
  throw ConfigError("unknown policy label: " + label);
}

Episode rollout_policy(const EnvSpec& spec, const OptimalPolicy& pi,
                       double epsilon, Rng& rng) {
  std::vector<VecX<double>> states;
  std::vector<int> actions;
  std::vector<double> rewards;

  EnvState s = env_reset(spec);
  while (!s.done) {
    states.push_back(encode_state(spec, s));
    const int a =
        rng.uniform() < epsilon ? rng.uniform_int(2) : pi.action(s);
    StepResult r = env_step(spec, s, a);
    actions.push_back(a);
    rewards.push_back(r.reward);
    s = r.next;
  }

  Episode ep;
  const Index len = static_cast<Index>(rewards.size());
  ep.states.resize(len, spec.state_dim());
  ep.rewards.resize(len);
  ep.actions_discrete = std::move(actions);
  for (Index t = 0; t < len; ++t) {
    ep.states.row(t) = states[static_cast<std::size_t>(t)].transpose();
    ep.rewards(t) = rewards[static_cast<std::size_t>(t)];
  }
  return ep;
}

Manifest generate_dataset(const EnvSpec& spec,
                          const std::vector<std::pair<PolicySpec, int>>& mix,
                          std::uint64_t seed, const std::string& out_path,
                          int random_score_episodes) {
  spec.validate();
  const OptimalPolicy pi(spec);
  Rng root(seed);

  // measured baseline: mean return of pure-random rollouts
  Rng rng_random = root.fork(0);
  double random_sum = 0.0;
  for (int i = 0; i < random_score_episodes; ++i) {
    Episode ep = rollout_policy(spec, pi, 1.0, rng_random);
    random_sum += ep.rewards.sum();
  }
  const double random_score = random_sum / random_score_episodes;

  std::vector<Episode> episodes;
  std::uint64_t stream = 1;
  for (const auto& [policy, count] : mix) {
    if (count < 0) throw ConfigError("generate_dataset: negative episode count");
    Rng rng_mix = root.fork(stream++);
    for (int i = 0; i < count; ++i)
      episodes.push_back(rollout_policy(spec, pi, policy.epsilon, rng_mix));
  }

  Manifest m;
  m.env_name = spec.name();
  m.state_dim = spec.state_dim();
  m.action_space = spec.action_space();
  m.random_score = random_score;
  m.expert_score = optimal_return(spec);
  if (m.expert_score <= m.random_score)
    throw ConfigError(
        "generate_dataset: random play already matches the optimal return; "
        "normalized scores would be undefined for " + spec.name());
  m.episode_count = static_cast<std::int64_t>(episodes.size());
  m.states_one_hot = true;
  save_archive(out_path, m, episodes);
  return m;
}

}  // namespace mambadm
