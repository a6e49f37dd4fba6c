#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "mambadm/errors.hpp"
#include "mambadm/linalg.hpp"

namespace mambadm {

// Adam with decoupled weight decay. Decay touches only params flagged for it
// (projection weights); biases, norms and state matrices are exempt.
template <typename T>
struct AdamW {
  double beta1 = 0.9;
  double beta2 = 0.95;
  double eps = 1e-8;
  std::int64_t t = 0;
  std::vector<MatX<T>> m, v;

  bool initialized() const { return !m.empty(); }

  void init(const ParamRefs<T>& params) {
    t = 0;
    m.clear();
    v.clear();
    for (const auto* p : params) {
      m.push_back(MatX<T>::Zero(p->value.rows(), p->value.cols()));
      v.push_back(MatX<T>::Zero(p->value.rows(), p->value.cols()));
    }
  }

  void step(const ParamRefs<T>& params, double lr, double weight_decay) {
    if (m.size() != params.size())
      throw ConfigError("AdamW: optimizer state does not match parameters");
    ++t;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto& p = *params[i];
      m[i] = static_cast<T>(beta1) * m[i] + static_cast<T>(1.0 - beta1) * p.grad;
      v[i] = static_cast<T>(beta2) * v[i] +
             static_cast<T>(1.0 - beta2) * p.grad.cwiseProduct(p.grad);
      MatX<T> mhat = m[i] / static_cast<T>(bc1);
      MatX<T> denom = (v[i] / static_cast<T>(bc2)).cwiseSqrt();
      denom.array() += static_cast<T>(eps);
      p.value -= static_cast<T>(lr) * mhat.cwiseQuotient(denom);
      if (p.decay && weight_decay > 0.0)
        p.value -= static_cast<T>(lr * weight_decay) * p.value;
    }
  }
};

}  // namespace mambadm
