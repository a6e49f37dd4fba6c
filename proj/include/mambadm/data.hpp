#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "mambadm/errors.hpp"
#include "mambadm/linalg.hpp"
#include "mambadm/rng.hpp"

// Offline trajectory handling: the archive format, return-to-go, training
// window sampling, subsampling for sweeps, and state normalization.
namespace mambadm {

struct ActionSpace {
  enum class Kind { discrete, continuous };
  Kind kind = Kind::discrete;
  int size = 2;  // number of actions, or vector dimension

  bool operator==(const ActionSpace&) const = default;
};

struct Episode {
  MatX<double> states;               // T_e x state_dim
  std::vector<int> actions_discrete; // used when the manifest is discrete
  MatX<double> actions_continuous;   // T_e x dim otherwise
  VecX<double> rewards;

  Index length() const { return rewards.size(); }
};

struct Manifest {
  int schema_version = 1;
  std::string env_name;
  int state_dim = 0;
  ActionSpace action_space;
  double random_score = 0.0;
  double expert_score = 1.0;
  std::int64_t episode_count = 0;
  bool states_one_hot = false;
};

// One K-step slice of an episode, right-padded when it runs past the end.
struct TrainingWindow {
  VecX<double> rtg;
  MatX<double> states;
  std::vector<int> actions_discrete;
  MatX<double> actions_continuous;
  std::vector<int> timesteps;
  std::vector<std::uint8_t> step_mask;      // step holds real data
  std::vector<std::uint8_t> action_present; // action token should be embedded
  std::vector<std::uint8_t> loss_mask;      // step contributes to the loss

  Index steps() const { return rtg.size(); }
};

// Undiscounted suffix sums of the rewards.
VecX<double> compute_rtg(const VecX<double>& rewards);

void save_archive(const std::string& path, const Manifest& manifest,
                  const std::vector<Episode>& episodes);
std::pair<Manifest, std::vector<Episode>> load_archive(const std::string& path);

// Samples an episode weighted by length and a uniform start offset, so every
// transition is equally likely to start a window.
TrainingWindow sample_window(const std::vector<Episode>& episodes,
                             const Manifest& manifest, int k_context, Rng& rng);

// Whole episodes in a seed-fixed random order until the transition budget is
// reached; prefixes are nested across increasing targets for the same seed.
std::vector<Episode> subsample(const std::vector<Episode>& episodes,
                               std::int64_t target_transitions, Rng& rng);

std::int64_t total_transitions(const std::vector<Episode>& episodes);

struct StateNormalizer {
  VecX<double> mean;
  VecX<double> stddev;  // floored at 1e-6
  bool identity = true;

  VecX<double> apply(const VecX<double>& s) const {
    if (identity) return s;
    return (s - mean).cwiseQuotient(stddev);
  }
  MatX<double> apply_rows(const MatX<double>& s) const;
};

// Per-dimension moments over all transitions; identity for one-hot states.
StateNormalizer normalize_states(const std::vector<Episode>& episodes,
                                 const Manifest& manifest);

// In-place transform of every state row (no-op for identity normalizers).
void apply_normalizer(std::vector<Episode>& episodes, const StateNormalizer& n);

}  // namespace mambadm
