#include "mambadm/eval.hpp"

#include <algorithm>
#include <cmath>

namespace mambadm {

double normalized_score(double raw, double random_score, double expert_score) {
  if (expert_score == random_score)
    throw DomainError("normalized_score: expert and random scores coincide");
  return 100.0 * (raw - random_score) / (expert_score - random_score);
}

namespace {

int pick_action(const MatX<float>& logits, bool sample, Rng& rng) {
  const Index n = logits.cols();
  if (!sample) {
    int best = 0;
    for (Index a = 1; a < n; ++a)
      if (logits(0, a) > logits(0, best)) best = static_cast<int>(a);
    return best;  // strict comparison keeps the lowest index on ties
  }
  const float mx = logits.row(0).maxCoeff();
  VecX<float> p = (logits.row(0).array() - mx).exp().transpose();
  p /= p.sum();
  double u = rng.uniform();
  for (Index a = 0; a < n; ++a) {
    u -= p(a);
    if (u <= 0.0) return static_cast<int>(a);
  }
  return static_cast<int>(n - 1);
}

}  // namespace

EvalReport rollout(const GlomaModel<float>& model, const EnvSpec& spec,
                   const EvalOptions& opt, double random_score,
                   double expert_score, const StateNormalizer* norm,
                   std::vector<std::vector<RolloutStepTrace>>* traces) {
  if (opt.episodes < 1) throw ConfigError("rollout: episodes must be >= 1");
  if (model.config().action != spec.action_space())
    throw ConfigError("rollout: model and environment action spaces differ");
  if (model.config().state_dim != spec.state_dim())
    throw ConfigError("rollout: model and environment state dims differ");

  const int k_max = model.config().context_k;
  Rng root(opt.seed);
  EvalReport report;
  report.target_rtg = opt.target_rtg;
  report.seed = opt.seed;
  report.episodes = opt.episodes;
  if (traces) traces->clear();

  for (int ep = 0; ep < opt.episodes; ++ep) {
    Rng rng_ep = root.fork(static_cast<std::uint64_t>(ep));
    EnvState s = env_reset(spec);
    double remaining = opt.target_rtg;
    double ep_return = 0.0;

    std::vector<double> rtg_hist;
    std::vector<VecX<double>> state_hist;
    std::vector<int> action_hist;
    std::vector<RolloutStepTrace> trace;

    while (!s.done) {
      VecX<double> enc = encode_state(spec, s);
      if (norm) enc = norm->apply(enc);
      rtg_hist.push_back(remaining);
      state_hist.push_back(enc);

      const int m = static_cast<int>(rtg_hist.size());
      const int lo = std::max(0, m - k_max);
      const int kw = m - lo;

      TrainingWindow w;
      w.rtg = VecX<double>::Zero(kw);
      w.states = MatX<double>::Zero(kw, spec.state_dim());
      w.actions_discrete.assign(static_cast<std::size_t>(kw), 0);
      w.timesteps.assign(static_cast<std::size_t>(kw), 0);
      w.step_mask.assign(static_cast<std::size_t>(kw), 1);
      w.action_present.assign(static_cast<std::size_t>(kw), 1);
      w.loss_mask.assign(static_cast<std::size_t>(kw), 0);
      for (int i = 0; i < kw; ++i) {
        const int src = lo + i;
        w.rtg(i) = rtg_hist[static_cast<std::size_t>(src)];
        w.states.row(i) = state_hist[static_cast<std::size_t>(src)].transpose();
        if (src < static_cast<int>(action_hist.size()))
          w.actions_discrete[static_cast<std::size_t>(i)] =
              action_hist[static_cast<std::size_t>(src)];
        w.timesteps[static_cast<std::size_t>(i)] = src;
      }
      // the action being predicted is unknown at inference time
      w.action_present[static_cast<std::size_t>(kw - 1)] = 0;

      MatX<float> preds =
          model.forward({w}, /*train=*/false, nullptr, nullptr,
                        /*l_s_override=*/Index(3) * kw);
      MatX<float> last = preds.row(kw - 1);
      const int action = pick_action(last, opt.sample_actions, rng_ep);

      StepResult r = env_step(spec, s, action);
      if (traces) trace.push_back({remaining, action, r.reward});
      action_hist.push_back(action);
      remaining -= r.reward;
      ep_return += r.reward;
      s = r.next;
    }
    report.returns.push_back(ep_return);
    if (traces) traces->push_back(std::move(trace));
  }

  std::sort(report.returns.begin(), report.returns.end());
  double sum = 0.0;
  for (double r : report.returns) sum += r;
  report.mean = sum / report.returns.size();
  double sq = 0.0;
  for (double r : report.returns) sq += (r - report.mean) * (r - report.mean);
  report.stddev = std::sqrt(sq / report.returns.size());
  report.normalized = normalized_score(report.mean, random_score, expert_score);
  return report;
}

}  // namespace mambadm
