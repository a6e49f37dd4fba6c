#pragma once

#include <cstdint>
#include <string>

#include "mambadm/gloma.hpp"
#include "mambadm/optimizer.hpp"

namespace mambadm {

struct TrainState {
  std::int64_t step = 0;
  std::int64_t tokens_seen = 0;
};

// Self-describing binary container: magic, JSON header (config, train state,
// state normalizer, tensor table), then raw little-endian float32 payload.
// docs/formats.md describes the exact layout. Round trips are bit-exact.
template <typename T>
void save_checkpoint(const std::string& path, GlomaModel<T>& model,
                     const TrainState& state = {},
                     const AdamW<T>* opt = nullptr,
                     const StateNormalizer* norm = nullptr);

GlomaModel<float> load_checkpoint(const std::string& path,
                                  TrainState* state = nullptr,
                                  AdamW<float>* opt = nullptr,
                                  StateNormalizer* norm = nullptr,
                                  bool* has_opt = nullptr);

// Config metadata without instantiating the model.
GlomaConfig peek_checkpoint_config(const std::string& path);

}  // namespace mambadm
