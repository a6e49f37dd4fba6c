#pragma once

#include <cmath>
#include <string>

#include "mambadm/errors.hpp"
#include "mambadm/linalg.hpp"
#include "mambadm/rng.hpp"

// Small layer zoo with hand-written backward passes. Every layer caches the
// values its adjoint needs; gradients accumulate into Param::grad.
namespace mambadm::nn {

template <typename T>
T sigmoid(T x) {
  if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
  const T e = std::exp(x);
  return e / (T(1) + e);
}

template <typename T>
T silu(T x) {
  return x * sigmoid(x);
}

template <typename T>
T silu_grad(T x) {
  const T s = sigmoid(x);
  return s * (T(1) + x * (T(1) - s));
}

template <typename T>
T gelu(T x) {
  constexpr double inv_sqrt2 = 0.70710678118654752440;
  return T(0.5) * x * (T(1) + std::erf(x * T(inv_sqrt2)));
}

template <typename T>
T gelu_grad(T x) {
  constexpr double inv_sqrt2 = 0.70710678118654752440;
  constexpr double inv_sqrt2pi = 0.39894228040143267794;
  return T(0.5) * (T(1) + std::erf(x * T(inv_sqrt2))) +
         x * T(inv_sqrt2pi) * std::exp(T(-0.5) * x * x);
}

template <typename T>
T softplus(T x) {
  return std::max(x, T(0)) + std::log1p(std::exp(-std::abs(x)));
}

// inverse of softplus: x such that softplus(x) = y, y > 0
template <typename T>
T softplus_inverse(T y) {
  return std::log(std::expm1(y));
}

// Matrix forms use Eigen's vectorized exponentials; the scalar forms above
// stay for one-off uses and agree to rounding.
template <typename T>
MatX<T> apply_sigmoid(const MatX<T>& x) {
  return (T(1) / (T(1) + (-x.array()).exp())).matrix();
}

template <typename T>
MatX<T> apply_silu(const MatX<T>& x) {
  return (x.array() / (T(1) + (-x.array()).exp())).matrix();
}

template <typename T>
MatX<T> apply_silu_grad(const MatX<T>& x) {
  auto s = T(1) / (T(1) + (-x.array()).exp());
  return (s * (T(1) + x.array() * (T(1) - s))).matrix();
}

template <typename T>
MatX<T> apply_softplus(const MatX<T>& x) {
  return (x.array().max(T(0)) + (-x.array().abs()).exp().log1p()).matrix();
}

template <typename T>
MatX<T> apply_gelu(const MatX<T>& x) {
  return x.unaryExpr([](T v) { return gelu(v); });
}

template <typename T>
MatX<T> apply_gelu_grad(const MatX<T>& x) {
  return x.unaryExpr([](T v) { return gelu_grad(v); });
}

template <typename T>
class Linear {
 public:
  void init(const std::string& prefix, Index in_dim, Index out_dim, Rng& rng,
            double stddev = 0.02, bool bias = true, bool weight_decay = true) {
    w.setup(prefix + ".w", in_dim, out_dim, weight_decay);
    w.fill_normal(rng, stddev);
    has_bias_ = bias;
    if (bias) b.setup(prefix + ".b", 1, out_dim, false);
  }

  MatX<T> forward(const MatX<T>& x) const {
    MatX<T> y = x * w.value;
    if (has_bias_) y.rowwise() += b.value.row(0);
    return y;
  }

  // x must be the forward input; returns the input gradient.
  MatX<T> backward(const MatX<T>& x, const MatX<T>& gy) {
    w.grad.noalias() += x.transpose() * gy;
    if (has_bias_) b.grad.row(0) += gy.colwise().sum();
    return gy * w.value.transpose();
  }

  void collect_params(ParamRefs<T>& out) {
    out.push_back(&w);
    if (has_bias_) out.push_back(&b);
  }

  Param<T> w, b;

 private:
  bool has_bias_ = true;
};

template <typename T>
class LayerNorm {
 public:
  struct Cache {
    MatX<T> xhat;
    VecX<T> rstd;
  };

  void init(const std::string& prefix, Index dim) {
    gamma.setup(prefix + ".gamma", 1, dim, false);
    gamma.value.setOnes();
    beta.setup(prefix + ".beta", 1, dim, false);
  }

  MatX<T> forward(const MatX<T>& x, Cache* cache = nullptr) const {
    const Index rows = x.rows(), d = x.cols();
    MatX<T> y(rows, d);
    MatX<T> xhat(rows, d);
    VecX<T> rstd(rows);
    for (Index i = 0; i < rows; ++i) {
      const T mean = x.row(i).mean();
      const T var = (x.row(i).array() - mean).square().mean();
      const T r = T(1) / std::sqrt(var + eps_);
      xhat.row(i) = (x.row(i).array() - mean) * r;
      rstd(i) = r;
    }
    y = xhat.cwiseProduct(gamma.value.row(0).replicate(rows, 1));
    y.rowwise() += beta.value.row(0);
    if (cache) {
      cache->xhat = std::move(xhat);
      cache->rstd = std::move(rstd);
    }
    return y;
  }

  MatX<T> backward(const Cache& cache, const MatX<T>& gy) {
    const Index rows = gy.rows(), d = gy.cols();
    gamma.grad.row(0) += gy.cwiseProduct(cache.xhat).colwise().sum();
    beta.grad.row(0) += gy.colwise().sum();
    MatX<T> gx(rows, d);
    for (Index i = 0; i < rows; ++i) {
      const auto gxhat = gy.row(i).cwiseProduct(gamma.value.row(0));
      const T m1 = gxhat.mean();
      const T m2 = gxhat.cwiseProduct(cache.xhat.row(i)).mean();
      gx.row(i) =
          cache.rstd(i) *
          (gxhat.array() - m1 - cache.xhat.row(i).array() * m2).matrix();
    }
    return gx;
  }

  void collect_params(ParamRefs<T>& out) {
    out.push_back(&gamma);
    out.push_back(&beta);
  }

  Param<T> gamma, beta;

 private:
  T eps_ = T(1e-5);
};

// Depthwise causal convolution across time, one kernel per feature channel.
// Input rows hold n_seq sequences of t_seq steps back to back; the left pad
// is zero, so y_t depends only on x_{t-w+1..t} within its own sequence.
template <typename T>
class CausalDepthwiseConv {
 public:
  void init(const std::string& prefix, Index channels, Index width, Rng& rng) {
    kernel.setup(prefix + ".kernel", channels, width, false);
    kernel.fill_uniform(rng, 1.0 / std::sqrt(static_cast<double>(width)));
  }

  // Identity tap: only the current-step coefficient is 1.
  void set_identity() {
    kernel.value.setZero();
    kernel.value.col(kernel.value.cols() - 1).setOnes();
  }

  MatX<T> forward(const MatX<T>& x, Index t_seq) const {
    check_rows(x, t_seq);
    const Index w = kernel.value.cols();
    MatX<T> y = MatX<T>::Zero(x.rows(), x.cols());
    for (Index s0 = 0; s0 < x.rows(); s0 += t_seq) {
      for (Index t = 0; t < t_seq; ++t) {
        for (Index j = 0; j < w; ++j) {
          const Index src = t - (w - 1) + j;
          if (src < 0) continue;
          y.row(s0 + t) +=
              x.row(s0 + src).cwiseProduct(kernel.value.col(j).transpose());
        }
      }
    }
    return y;
  }

  MatX<T> backward(const MatX<T>& x, Index t_seq, const MatX<T>& gy) {
    check_rows(x, t_seq);
    const Index w = kernel.value.cols();
    MatX<T> gx = MatX<T>::Zero(x.rows(), x.cols());
    for (Index s0 = 0; s0 < x.rows(); s0 += t_seq) {
      for (Index t = 0; t < t_seq; ++t) {
        for (Index j = 0; j < w; ++j) {
          const Index src = t - (w - 1) + j;
          if (src < 0) continue;
          gx.row(s0 + src) +=
              gy.row(s0 + t).cwiseProduct(kernel.value.col(j).transpose());
          kernel.grad.col(j) +=
              gy.row(s0 + t).cwiseProduct(x.row(s0 + src)).transpose();
        }
      }
    }
    return gx;
  }

  void collect_params(ParamRefs<T>& out) { out.push_back(&kernel); }

  Param<T> kernel;

 private:
  void check_rows(const MatX<T>& x, Index t_seq) const {
    if (t_seq < 1 || x.rows() % t_seq != 0)
      throw ShapeError("causal conv: rows not a multiple of sequence length");
    if (x.cols() != kernel.value.rows())
      throw ShapeError("causal conv: channel mismatch");
  }
};

// Inverted dropout. The mask holds 0 or 1/(1-rate); an empty mask means the
// layer ran in evaluation mode (identity).
template <typename T>
MatX<T> dropout_forward(const MatX<T>& x, double rate, bool train, Rng* rng,
                        MatX<T>* mask_out) {
  if (!train || rate <= 0.0) {
    if (mask_out) mask_out->resize(0, 0);
    return x;
  }
  const T keep_scale = static_cast<T>(1.0 / (1.0 - rate));
  MatX<T> mask(x.rows(), x.cols());
  for (Index i = 0; i < x.rows(); ++i)
    for (Index j = 0; j < x.cols(); ++j)
      mask(i, j) = rng->uniform() < rate ? T(0) : keep_scale;
  if (mask_out) *mask_out = mask;
  return x.cwiseProduct(mask);
}

template <typename T>
MatX<T> dropout_backward(const MatX<T>& gy, const MatX<T>& mask) {
  if (mask.size() == 0) return gy;
  return gy.cwiseProduct(mask);
}

}  // namespace mambadm::nn
