#include "mambadm/data.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>

#include <json.hpp>

namespace mambadm {

using nlohmann::json;

VecX<double> compute_rtg(const VecX<double>& rewards) {
  if (!all_finite(rewards))
    throw InvalidParameterError("compute_rtg: non-finite reward");
  VecX<double> rtg(rewards.size());
  double acc = 0.0;
  for (Index t = rewards.size() - 1; t >= 0; --t) {
    acc += rewards(t);
    rtg(t) = acc;
  }
  return rtg;
}

namespace {

json action_space_to_json(const ActionSpace& a) {
  if (a.kind == ActionSpace::Kind::discrete)
    return json{{"type", "discrete"}, {"n", a.size}};
  return json{{"type", "continuous"}, {"dim", a.size}};
}

ActionSpace action_space_from_json(const json& j) {
  ActionSpace a;
  const std::string type = j.at("type").get<std::string>();
  if (type == "discrete") {
    a.kind = ActionSpace::Kind::discrete;
    a.size = j.at("n").get<int>();
  } else if (type == "continuous") {
    a.kind = ActionSpace::Kind::continuous;
    a.size = j.at("dim").get<int>();
  } else {
    throw DataError("unknown action space type: " + type);
  }
  return a;
}

json mat_to_json(const MatX<double>& m) {
  json rows = json::array();
  for (Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

MatX<double> mat_from_json(const json& j, Index cols_expected,
                           const std::string& what) {
  if (!j.is_array()) throw DataError(what + ": expected an array");
  const Index rows = static_cast<Index>(j.size());
  MatX<double> m(rows, cols_expected);
  for (Index i = 0; i < rows; ++i) {
    const json& row = j[static_cast<std::size_t>(i)];
    if (!row.is_array() || static_cast<Index>(row.size()) != cols_expected)
      throw DataError(what + ": row " + std::to_string(i) + " has wrong width");
    for (Index c = 0; c < cols_expected; ++c)
      m(i, c) = row[static_cast<std::size_t>(c)].get<double>();
  }
  return m;
}

}  // namespace

void save_archive(const std::string& path, const Manifest& manifest,
                  const std::vector<Episode>& episodes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open archive for writing: " + path);

  json head{{"schema_version", manifest.schema_version},
            {"env_name", manifest.env_name},
            {"state_dim", manifest.state_dim},
            {"action_space", action_space_to_json(manifest.action_space)},
            {"random_score", manifest.random_score},
            {"expert_score", manifest.expert_score},
            {"episode_count", static_cast<std::int64_t>(episodes.size())},
            {"states_one_hot", manifest.states_one_hot}};
  out << head.dump() << "\n";

  const bool discrete = manifest.action_space.kind == ActionSpace::Kind::discrete;
  for (const auto& ep : episodes) {
    json line;
    line["states"] = mat_to_json(ep.states);
    if (discrete)
      line["actions"] = ep.actions_discrete;
    else
      line["actions"] = mat_to_json(ep.actions_continuous);
    json rewards = json::array();
    for (Index t = 0; t < ep.rewards.size(); ++t) rewards.push_back(ep.rewards(t));
    line["rewards"] = std::move(rewards);
    out << line.dump() << "\n";
  }
  if (!out) throw DataError("write failure on archive: " + path);
}

std::pair<Manifest, std::vector<Episode>> load_archive(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open archive: " + path);

  std::string line;
  if (!std::getline(in, line))
    throw DataError("archive missing manifest line: " + path);

  Manifest m;
  try {
    json head = json::parse(line);
    m.schema_version = head.at("schema_version").get<int>();
    m.env_name = head.at("env_name").get<std::string>();
    m.state_dim = head.at("state_dim").get<int>();
    m.action_space = action_space_from_json(head.at("action_space"));
    m.random_score = head.at("random_score").get<double>();
    m.expert_score = head.at("expert_score").get<double>();
    m.episode_count = head.at("episode_count").get<std::int64_t>();
    m.states_one_hot = head.value("states_one_hot", false);
  } catch (const json::exception& e) {
    throw DataError(std::string("bad archive manifest: ") + e.what());
  }
  if (m.expert_score <= m.random_score)
    throw DataError("archive manifest: expert_score must exceed random_score");

  const bool discrete = m.action_space.kind == ActionSpace::Kind::discrete;
  std::vector<Episode> episodes;
  std::int64_t idx = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const std::string where = "episode " + std::to_string(idx);
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw DataError(where + ": parse error: " + e.what());
    }
    Episode ep;
    try {
      ep.states = mat_from_json(j.at("states"), m.state_dim, where + " states");
      if (discrete) {
        ep.actions_discrete = j.at("actions").get<std::vector<int>>();
      } else {
        ep.actions_continuous =
            mat_from_json(j.at("actions"), m.action_space.size, where + " actions");
      }
      const auto& jr = j.at("rewards");
      ep.rewards.resize(static_cast<Index>(jr.size()));
      for (Index t = 0; t < ep.rewards.size(); ++t)
        ep.rewards(t) = jr[static_cast<std::size_t>(t)].get<double>();
    } catch (const json::exception& e) {
      throw DataError(where + ": " + e.what());
    }

    const Index len = ep.rewards.size();
    const Index alen = discrete ? static_cast<Index>(ep.actions_discrete.size())
                                : ep.actions_continuous.rows();
    if (len < 1) throw DataError(where + ": empty episode");
    if (ep.states.rows() != len || alen != len)
      throw DataError(where + ": states/actions/rewards length mismatch");
    if (discrete) {
      for (std::size_t t = 0; t < ep.actions_discrete.size(); ++t) {
        const int a = ep.actions_discrete[t];
        if (a < 0 || a >= m.action_space.size)
          throw DataError(where + ": action out of range at step " +
                          std::to_string(t));
      }
    }
    episodes.push_back(std::move(ep));
    ++idx;
  }
  if (idx != m.episode_count)
    throw DataError("archive episode count mismatch: manifest says " +
                    std::to_string(m.episode_count) + ", found " +
                    std::to_string(idx));
  return {std::move(m), std::move(episodes)};
}

std::int64_t total_transitions(const std::vector<Episode>& episodes) {
  std::int64_t n = 0;
  for (const auto& ep : episodes) n += ep.length();
  return n;
}

TrainingWindow sample_window(const std::vector<Episode>& episodes,
                             const Manifest& manifest, int k_context, Rng& rng) {
  if (episodes.empty()) throw DataError("sample_window: no episodes");
  if (k_context < 1) throw InvalidParameterError("sample_window: K must be >= 1");

  // draw a transition uniformly, take its episode and offset
  const std::int64_t total = total_transitions(episodes);
  std::int64_t pick = rng.uniform_int64(total);
  std::size_t ei = 0;
  while (pick >= episodes[ei].length()) {
    pick -= episodes[ei].length();
    ++ei;
  }
  const Episode& ep = episodes[ei];
  const Index len = ep.length();
  // clamp so episodes with at least K steps always yield full windows;
  // only short episodes produce right-padded tails
  const Index start =
      std::min<Index>(static_cast<Index>(pick), std::max<Index>(0, len - k_context));
  const Index have = std::min<Index>(k_context, len - start);

  const bool discrete = manifest.action_space.kind == ActionSpace::Kind::discrete;
  const Index adim = discrete ? 0 : manifest.action_space.size;
  const VecX<double> rtg_full = compute_rtg(ep.rewards);

  TrainingWindow w;
  w.rtg = VecX<double>::Zero(k_context);
  w.states = MatX<double>::Zero(k_context, manifest.state_dim);
  if (discrete)
    w.actions_discrete.assign(k_context, 0);
  else
    w.actions_continuous = MatX<double>::Zero(k_context, adim);
  w.timesteps.assign(k_context, 0);
  w.step_mask.assign(k_context, 0);
  w.action_present.assign(k_context, 0);
  w.loss_mask.assign(k_context, 0);

  for (Index i = 0; i < have; ++i) {
    const Index t = start + i;
    w.rtg(i) = rtg_full(t);
    w.states.row(i) = ep.states.row(t);
    if (discrete)
      w.actions_discrete[static_cast<std::size_t>(i)] =
          ep.actions_discrete[static_cast<std::size_t>(t)];
    else
      w.actions_continuous.row(i) = ep.actions_continuous.row(t);
    w.timesteps[static_cast<std::size_t>(i)] = static_cast<int>(t);
    w.step_mask[static_cast<std::size_t>(i)] = 1;
    w.action_present[static_cast<std::size_t>(i)] = 1;
    w.loss_mask[static_cast<std::size_t>(i)] = 1;
  }
  return w;
}

std::vector<Episode> subsample(const std::vector<Episode>& episodes,
                               std::int64_t target_transitions, Rng& rng) {
  const std::int64_t total = total_transitions(episodes);
  if (target_transitions > total)
    throw ConfigError("subsample: target exceeds available transitions");
  std::vector<std::size_t> order(episodes.size());
  std::iota(order.begin(), order.end(), 0);
  // Fisher-Yates with our own rng; the permutation depends only on the seed,
  // so larger targets take supersets of smaller ones.
  for (std::size_t i = order.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng.uniform_int64(
        static_cast<std::int64_t>(i)));
    std::swap(order[i - 1], order[j]);
  }
  std::vector<Episode> out;
  std::int64_t have = 0;
  for (std::size_t idx : order) {
    if (have >= target_transitions) break;
    out.push_back(episodes[idx]);
    have += episodes[idx].length();
  }
  return out;
}

MatX<double> StateNormalizer::apply_rows(const MatX<double>& s) const {
  if (identity) return s;
  MatX<double> out = s;
  out.rowwise() -= mean.transpose();
  out.array().rowwise() /= stddev.transpose().array();
  return out;
}

StateNormalizer normalize_states(const std::vector<Episode>& episodes,
                                 const Manifest& manifest) {
  if (episodes.empty()) throw DataError("normalize_states: no episodes");
  StateNormalizer n;
  if (manifest.states_one_hot) {
    n.identity = true;
    return n;
  }
  const Index dim = manifest.state_dim;
  VecX<double> sum = VecX<double>::Zero(dim);
  VecX<double> sumsq = VecX<double>::Zero(dim);
  std::int64_t count = 0;
  for (const auto& ep : episodes) {
    sum += ep.states.colwise().sum().transpose();
    sumsq += ep.states.array().square().colwise().sum().matrix().transpose();
    count += ep.states.rows();
  }
  n.identity = false;
  n.mean = sum / static_cast<double>(count);
  VecX<double> var =
      sumsq / static_cast<double>(count) - n.mean.cwiseProduct(n.mean);
  n.stddev = var.cwiseMax(0.0).cwiseSqrt().cwiseMax(1e-6);
  return n;
}

void apply_normalizer(std::vector<Episode>& episodes, const StateNormalizer& n) {
  if (n.identity) return;
  for (auto& ep : episodes) ep.states = n.apply_rows(ep.states);
}

}  // namespace mambadm
