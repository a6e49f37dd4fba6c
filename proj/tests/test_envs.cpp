#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <fstream>

#include "mambadm/envs.hpp"

using namespace mambadm;

namespace {

// Exhaustive oracle: tries every action sequence up to the horizon. Only
// usable for small horizons; independent of the DP implementation.
double brute_force_return(const EnvSpec& spec) {
  const int h = spec.horizon;
  double best = 0.0;
  for (std::uint64_t bits = 0; bits < (1ull << h); ++bits) {
    EnvState s = env_reset(spec);
    double ret = 0.0;
    for (int t = 0; t < h && !s.done; ++t) {
      StepResult r = env_step(spec, s, static_cast<int>((bits >> t) & 1));
      ret += r.reward;
      s = r.next;
    }
    best = std::max(best, ret);
  }
  return best;
}

std::string slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(f)),
                     std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("reset: deterministic start states") {
  auto chain = EnvSpec::chain(5, 10);
  EnvState s = env_reset(chain);
  CHECK(s.pos == 0);
  CHECK_FALSE(s.done);
  VecX<double> enc = encode_state(chain, s);
  CHECK(enc(0) == 1.0);
  CHECK(enc.sum() == 1.0);

  auto kd = EnvSpec::key_door(7, 2, 6, 10);
  EnvState k = env_reset(kd);
  CHECK(k.pos == 0);
  CHECK_FALSE(k.has_key);
  VecX<double> kenc = encode_state(kd, k);
  CHECK(kenc.size() == 8);
  CHECK(kenc(7) == 0.0);

  EnvState again = env_reset(kd, 42);
  CHECK(again.pos == k.pos);
  CHECK(again.has_key == k.has_key);
}

TEST_CASE("step: chain rewards on first arrival and clips at the left edge") {
  auto spec = EnvSpec::chain(3, 10);
  EnvState s = env_reset(spec);
  s.pos = 1;
  StepResult r = env_step(spec, s, 1);
  CHECK(r.next.pos == 2);
  CHECK(r.reward == 1.0);
  CHECK(r.done);

  EnvState at0 = env_reset(spec);
  StepResult left = env_step(spec, at0, 0);
  CHECK(left.next.pos == 0);
  CHECK(left.reward == 0.0);

  CHECK_THROWS_AS(env_step(spec, at0, 2), DataError);
}

TEST_CASE("step: key_door needs the key before the door pays out") {
  auto spec = EnvSpec::key_door(5, 3, 1, 20);
  EnvState s = env_reset(spec);
  StepResult r = env_step(spec, s, 1);  // reach door without key
  CHECK(r.next.pos == 1);
  CHECK(r.reward == 0.0);
  CHECK_FALSE(r.done);

  // walk to the key, then back to the door
  s = r.next;
  s = env_step(spec, s, 1).next;
  StepResult got_key = env_step(spec, s, 1);
  CHECK(got_key.next.has_key);
  s = got_key.next;
  s = env_step(spec, s, 0).next;
  StepResult opened = env_step(spec, s, 0);
  CHECK(opened.reward == 1.0);
  CHECK(opened.done);
}

TEST_CASE("step: horizon terminates regardless of progress") {
  auto spec = EnvSpec::chain(10, 3);
  EnvState s = env_reset(spec);
  for (int t = 0; t < 3; ++t) {
    StepResult r = env_step(spec, s, 0);
    s = r.next;
  }
  CHECK(s.done);
  CHECK(s.pos == 0);
}

TEST_CASE("optimal_return matches the exhaustive oracle") {
  CHECK(optimal_return(EnvSpec::chain(5, 10)) == 1.0);
  CHECK(optimal_return(EnvSpec::chain(5, 3)) == 0.0);
  CHECK(optimal_return(EnvSpec::key_door(7, 2, 6, 8)) == 1.0);
  CHECK(optimal_return(EnvSpec::key_door(7, 2, 6, 12)) == 1.0);

  for (const auto& spec :
       {EnvSpec::chain(4, 6), EnvSpec::chain(8, 12), EnvSpec::chain(6, 4),
        EnvSpec::key_door(5, 3, 1, 9), EnvSpec::key_door(9, 2, 8, 12),
        EnvSpec::key_door(4, 1, 3, 5), EnvSpec::key_door(6, 4, 0, 10)}) {
    CAPTURE(spec.name());
    CHECK(optimal_return(spec) == brute_force_return(spec));
  }
}

TEST_CASE("env name round trip") {
  for (const auto& spec :
       {EnvSpec::chain(8, 12), EnvSpec::key_door(9, 2, 8, 14)}) {
    EnvSpec parsed = EnvSpec::parse_name(spec.name());
    CHECK(parsed.name() == spec.name());
  }
  CHECK_THROWS_AS(EnvSpec::parse_name("pong-v5"), ConfigError);
}

TEST_CASE("spec validation") {
  CHECK_THROWS_AS(EnvSpec::chain(5, 0), ConfigError);
  CHECK_THROWS_AS(EnvSpec::key_door(5, 2, 2, 10), ConfigError);
  CHECK_THROWS_AS(EnvSpec::key_door(5, 6, 2, 10), ConfigError);
}

TEST_CASE("generate_dataset: expert mix clears the Monte-Carlo bound") {
  const auto spec = EnvSpec::chain(5, 10);
  const std::string path = "envs_expert_test.tra";
  Manifest m = generate_dataset(spec, {{PolicySpec::expert(), 100}}, 1, path);
  auto [m2, episodes] = load_archive(path);
  CHECK(m2.episode_count == 100);
  CHECK(m2.expert_score == 1.0);
  CHECK(m2.states_one_hot);

  double mean = 0.0;
  for (const auto& ep : episodes) mean += ep.rewards.sum();
  mean /= 100.0;
  CHECK(mean >= 0.7);  // simulated bound for eps=0.05 on chain(5,10)
  std::remove(path.c_str());
}

TEST_CASE("generate_dataset: empty mix leaves a manifest-only archive") {
  const std::string path = "envs_empty_test.tra";
  Manifest m = generate_dataset(EnvSpec::chain(5, 10), {}, 3, path);
  CHECK(m.episode_count == 0);
  auto [m2, eps] = load_archive(path);
  CHECK(eps.empty());
  std::remove(path.c_str());
}

TEST_CASE("generate_dataset: same seed gives byte-identical archives") {
  const auto spec = EnvSpec::key_door(7, 2, 6, 10);
  const std::string p1 = "envs_det1.tra", p2 = "envs_det2.tra";
  generate_dataset(spec, {{PolicySpec::expert(), 20}, {PolicySpec::medium(), 20}},
                   9, p1, /*random_score_episodes=*/200);
  generate_dataset(spec, {{PolicySpec::expert(), 20}, {PolicySpec::medium(), 20}},
                   9, p2, /*random_score_episodes=*/200);
  CHECK(slurp(p1) == slurp(p2));
  CHECK_FALSE(slurp(p1).empty());
  std::remove(p1.c_str());
  std::remove(p2.c_str());
}

TEST_CASE("generated episodes replay through the environment exactly") {
  const auto spec = EnvSpec::key_door(9, 2, 8, 14);
  const std::string path = "envs_replay_test.tra";
  generate_dataset(spec, {{PolicySpec::medium(), 50}}, 11, path,
                   /*random_score_episodes=*/100);
  auto [m, episodes] = load_archive(path);

  for (const auto& ep : episodes) {
    EnvState s = env_reset(spec);
    double ret = 0.0;
    for (Index t = 0; t < ep.length(); ++t) {
      CHECK((ep.states.row(t).transpose() - encode_state(spec, s)).cwiseAbs().maxCoeff() == 0.0);
      StepResult r = env_step(spec, s, ep.actions_discrete[static_cast<std::size_t>(t)]);
      CHECK(ep.rewards(t) == r.reward);
      ret += r.reward;
      s = r.next;
    }
    CHECK(s.done);  // recorded episodes end exactly when the env says so
    // returns are binary, so RTG sequences are non-increasing and in {0,1}
    CHECK((ret == 0.0 || ret == 1.0));
    VecX<double> rtg = compute_rtg(ep.rewards);
    for (Index t = 0; t + 1 < rtg.size(); ++t) {
      CHECK(rtg(t) >= rtg(t + 1));
      CHECK((rtg(t) == 0.0 || rtg(t) == 1.0));
    }
  }
  std::remove(path.c_str());
}
