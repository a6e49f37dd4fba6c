#include "mambadm/train.hpp"

namespace mambadm {

LrSchedule parse_lr_schedule(const std::string& s) {
  if (s == "warmup_cosine") return LrSchedule::warmup_cosine;
  if (s == "warmup_linear") return LrSchedule::warmup_linear;
  throw ConfigError("unknown lr schedule: " + s);
}

const char* to_string(LrSchedule s) {
  return s == LrSchedule::warmup_cosine ? "warmup_cosine" : "warmup_linear";
}

double lr_schedule(std::int64_t progress, const TrainConfig& cfg) {
  if (progress < 0) throw InvalidParameterError("lr_schedule: negative progress");
  const double peak = cfg.learning_rate;
  if (cfg.warmup > 0 && progress < cfg.warmup)
    return peak * static_cast<double>(progress) / static_cast<double>(cfg.warmup);
  if (cfg.schedule == LrSchedule::warmup_linear) return peak;

  // cosine decay from the peak down to 10% of it at the final budget
  const double span =
      static_cast<double>(std::max<std::int64_t>(1, cfg.final_budget - cfg.warmup));
  double frac = static_cast<double>(progress - cfg.warmup) / span;
  frac = std::clamp(frac, 0.0, 1.0);
  constexpr double pi = 3.14159265358979323846;
  return peak * (0.1 + 0.9 * 0.5 * (1.0 + std::cos(pi * frac)));
}

}  // namespace mambadm
