#pragma once

#include <chrono>
#include <cmath>
#include <string>
#include <vector>

#include "mambadm/checkpoint.hpp"
#include "mambadm/data.hpp"
#include "mambadm/gloma.hpp"
#include "mambadm/optimizer.hpp"

namespace mambadm {

enum class LrSchedule { warmup_cosine, warmup_linear };

LrSchedule parse_lr_schedule(const std::string& s);
const char* to_string(LrSchedule s);

struct TrainConfig {
  int batch_size = 64;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.95;
  double weight_decay = 1e-4;
  double grad_clip = 1.0;
  // warmup_cosine counts progress in tokens (warmup tokens, cosine decay to
  // 10% of peak at final_budget); warmup_linear counts steps and stays at
  // the peak after warmup.
  LrSchedule schedule = LrSchedule::warmup_linear;
  std::int64_t warmup = 100;
  std::int64_t final_budget = 0;
  std::int64_t max_steps = 2000;
  std::uint64_t seed = 0;
  bool loss_dim_mean = false;  // continuous loss: mean over action dims
  bool normalize_states = true;
  int log_every = 1;
  std::string diag_checkpoint_path;  // written when the loss goes non-finite

  void validate() const {
    if (learning_rate < 0.0) throw ConfigError("train: negative learning rate");
    if (grad_clip <= 0.0) throw ConfigError("train: grad_clip must be > 0");
    if (beta1 <= 0.0 || beta1 >= 1.0 || beta2 <= 0.0 || beta2 >= 1.0)
      throw ConfigError("train: betas must lie in (0, 1)");
    if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
  }

  // Table-9 style: token-budget cosine schedule.
  static TrainConfig atari_style(int k_context) {
    TrainConfig c;
    c.batch_size = 256;
    c.learning_rate = 6e-4;
    c.beta1 = 0.9;
    c.beta2 = 0.95;
    c.weight_decay = 0.1;
    c.grad_clip = 1.0;
    c.schedule = LrSchedule::warmup_cosine;
    c.warmup = 512 * 20;
    c.final_budget = std::int64_t(2) * 500000 * k_context;
    return c;
  }

  // Table-12 style: step-based warmup, constant afterwards.
  static TrainConfig gym_style() {
    TrainConfig c;
    c.batch_size = 64;
    c.learning_rate = 1e-4;
    c.beta1 = 0.9;
    c.beta2 = 0.999;
    c.weight_decay = 1e-4;
    c.grad_clip = 0.25;
    c.schedule = LrSchedule::warmup_linear;
    c.warmup = 10000;
    c.max_steps = 100000;
    return c;
  }
};

double lr_schedule(std::int64_t progress, const TrainConfig& cfg);

// Eq.-style action loss averaged over masked steps: squared error for
// continuous actions (summed over dims unless dim_mean), cross entropy for
// discrete ones. Fills the prediction gradient when requested.
template <typename T>
T action_loss(const MatX<T>& preds, const std::vector<TrainingWindow>& windows,
              const ActionSpace& space, bool dim_mean, MatX<T>* gpreds) {
  const Index k = windows.front().steps();
  if (preds.rows() != static_cast<Index>(windows.size()) * k)
    throw ShapeError("action_loss: prediction/window mismatch");
  if (gpreds) *gpreds = MatX<T>::Zero(preds.rows(), preds.cols());

  Index masked = 0;
  for (const auto& w : windows)
    for (Index t = 0; t < k; ++t)
      if (w.loss_mask[static_cast<std::size_t>(t)]) ++masked;
  if (masked == 0) throw DomainError("action_loss: empty loss mask");

  T total = T(0);
  const T inv_m = T(1) / static_cast<T>(masked);
  for (Index wi = 0; wi < static_cast<Index>(windows.size()); ++wi) {
    const auto& w = windows[static_cast<std::size_t>(wi)];
    for (Index t = 0; t < k; ++t) {
      if (!w.loss_mask[static_cast<std::size_t>(t)]) continue;
      const Index row = wi * k + t;
      if (space.kind == ActionSpace::Kind::discrete) {
        const int target = w.actions_discrete[static_cast<std::size_t>(t)];
        const T mx = preds.row(row).maxCoeff();
        const T lse =
            mx + std::log((preds.row(row).array() - mx).exp().sum());
        total += lse - preds(row, target);
        if (gpreds) {
          gpreds->row(row) =
              ((preds.row(row).array() - lse).exp() * inv_m).matrix();
          (*gpreds)(row, target) -= inv_m;
        }
      } else {
        auto diff = (preds.row(row) -
                     w.actions_continuous.row(t).template cast<T>().eval())
                        .eval();
        T sq = diff.squaredNorm();
        T scale = T(2) * inv_m;
        if (dim_mean) {
          sq /= static_cast<T>(space.size);
          scale /= static_cast<T>(space.size);
        }
        total += sq;
        if (gpreds) gpreds->row(row) = scale * diff;
      }
    }
  }
  return total * inv_m;
}

struct TrainLogRow {
  std::int64_t step = 0;
  double loss = 0.0;
  double lr = 0.0;
  double wall_ms = 0.0;
};

struct TrainResult {
  std::vector<TrainLogRow> log;
  TrainState state;
};

// Adam updates with decoupled weight decay, global-norm clipping, and the
// configured schedule. Deterministic for a fixed seed in single-threaded
// builds; resume continues the step counter and token budget.
template <typename T>
TrainResult train(GlomaModel<T>& model, const std::vector<Episode>& episodes,
                  const Manifest& manifest, const TrainConfig& cfg,
                  AdamW<T>& opt, TrainState state = {}) {
  cfg.validate();
  if (model.config().action != manifest.action_space)
    throw ConfigError("train: model and manifest action spaces differ");
  if (model.config().state_dim != manifest.state_dim)
    throw ConfigError("train: model and manifest state dims differ");

  auto params = model.params();
  if (!opt.initialized()) {
    opt.beta1 = cfg.beta1;
    opt.beta2 = cfg.beta2;
    opt.init(params);
  }

  Rng root(cfg.seed);
  Rng rng_data = root.fork(1);
  Rng rng_drop = root.fork(2);

  const int k = model.config().context_k;
  const std::int64_t tokens_per_step =
      static_cast<std::int64_t>(cfg.batch_size) * 3 * k;

  TrainResult result;
  result.state = state;
  std::vector<TrainingWindow> batch(static_cast<std::size_t>(cfg.batch_size));
  typename GlomaModel<T>::ForwardCache cache;

  for (std::int64_t step = state.step + 1; step <= cfg.max_steps; ++step) {
    const auto t0 = std::chrono::steady_clock::now();
    for (auto& w : batch) w = sample_window(episodes, manifest, k, rng_data);

    MatX<T> preds = model.forward(batch, /*train=*/true, &rng_drop, &cache);
    MatX<T> gpreds;
    const double loss = static_cast<double>(action_loss<T>(
        preds, batch, manifest.action_space, cfg.loss_dim_mean, &gpreds));
    if (!std::isfinite(loss)) {
      if (!cfg.diag_checkpoint_path.empty())
        save_checkpoint(cfg.diag_checkpoint_path, model, result.state, &opt);
      throw TrainingError("non-finite loss at step " + std::to_string(step));
    }

    zero_grads(params);
    model.backward(cache, gpreds);
    clip_global_norm(params, cfg.grad_clip);

    result.state.tokens_seen += tokens_per_step;
    const std::int64_t progress = cfg.schedule == LrSchedule::warmup_cosine
                                      ? result.state.tokens_seen
                                      : step;
    const double lr = lr_schedule(progress, cfg);
    opt.step(params, lr, cfg.weight_decay);
    result.state.step = step;

    const double wall_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() -
                                                  t0)
            .count();
    if (step % cfg.log_every == 0 || step == cfg.max_steps)
      result.log.push_back({step, loss, lr, wall_ms});
  }
  return result;
}

}  // namespace mambadm
