#pragma once

#include <cmath>
#include <string>

#include "mambadm/errors.hpp"
#include "mambadm/linalg.hpp"

// Diagonal state-space core: continuous parameters, exact zero-order-hold
// discretization, and the linear recurrence in sequential and
// associative-scan form.
namespace mambadm::ssm {

enum class InitScheme { neg_ramp, neg_half };
enum class ScanBackend { sequential, parallel };

inline InitScheme parse_init_scheme(const std::string& s) {
  if (s == "neg_ramp") return InitScheme::neg_ramp;
  if (s == "neg_half") return InitScheme::neg_half;
  throw ConfigError("unknown init scheme: " + s);
}

inline const char* to_string(InitScheme s) {
  return s == InitScheme::neg_ramp ? "neg_ramp" : "neg_half";
}

inline ScanBackend parse_scan_backend(const std::string& s) {
  if (s == "sequential") return ScanBackend::sequential;
  if (s == "parallel") return ScanBackend::parallel;
  throw ConfigError("unknown scan backend: " + s);
}

inline const char* to_string(ScanBackend b) {
  return b == ScanBackend::sequential ? "sequential" : "parallel";
}

// Below this magnitude the exact input weight (exp(dA)-1)/A is replaced by
// its series limit to avoid the 0/0.
inline constexpr double kSmallA = 1e-12;

template <typename T>
VecX<T> init_state_matrix(Index n, InitScheme scheme) {
  if (n < 1) throw InvalidParameterError("init_state_matrix: N must be >= 1");
  VecX<T> a(n);
  if (scheme == InitScheme::neg_ramp) {
    for (Index i = 0; i < n; ++i) a(i) = static_cast<T>(-(i + 1));
  } else {
    a.setConstant(static_cast<T>(-0.5));
  }
  return a;
}

template <typename T>
VecX<T> spectrum_log(const VecX<T>& a_diag) {
  VecX<T> out(a_diag.size());
  for (Index i = 0; i < a_diag.size(); ++i) {
    if (a_diag(i) == T(0))
      throw DomainError("spectrum_log: zero entry at index " + std::to_string(i));
    out(i) = std::log10(std::abs(a_diag(i)));
  }
  return out;
}

// phi(a, d) = (exp(d*a) - 1) / a, so b_bar = phi * b.
template <typename T>
T zoh_phi(T a, T delta) {
  if (std::abs(a) < static_cast<T>(kSmallA)) {
    // series: delta * (1 + x/2 + x^2/6), x = delta*a
    T x = delta * a;
    return delta * (T(1) + x / T(2) + x * x / T(6));
  }
  return (std::exp(delta * a) - T(1)) / a;
}

// d phi / d a, given a_bar = exp(delta*a) and phi for the same (a, delta).
template <typename T>
T zoh_phi_da(T a, T delta, T a_bar, T phi) {
  if (std::abs(a) < static_cast<T>(kSmallA)) {
    T x = delta * a;
    return delta * delta * (T(0.5) + x / T(3));
  }
  return delta * a_bar / a - phi / a;
}

template <typename T>
void discretize_zoh(const VecX<T>& a_diag, const VecX<T>& b, T delta,
                    VecX<T>& a_bar, VecX<T>& b_bar) {
  if (a_diag.size() != b.size())
    throw ShapeError("discretize_zoh: A and B size mismatch");
  if (!std::isfinite(static_cast<double>(delta)) || !all_finite(a_diag) || !all_finite(b))
    throw InvalidParameterError("discretize_zoh: non-finite input");
  if (delta <= T(0)) throw InvalidParameterError("discretize_zoh: delta must be > 0");
  const Index n = a_diag.size();
  a_bar.resize(n);
  b_bar.resize(n);
  for (Index i = 0; i < n; ++i) {
    a_bar(i) = std::exp(delta * a_diag(i));
    b_bar(i) = zoh_phi(a_diag(i), delta) * b(i);
  }
}

template <typename T>
struct ScanOutput {
  VecX<T> y;       // length T
  VecX<T> h_final; // state after the last step (h0 when T = 0)
  MatX<T> h;       // TxN state trajectory, kept for the backward pass
};

namespace detail {

template <typename T>
void check_scan_shapes(const MatX<T>& a_bar, const MatX<T>& b_bar,
                       const MatX<T>& c, const VecX<T>& x, const VecX<T>& h0) {
  const Index t = a_bar.rows();
  const Index n = h0.size();
  if (b_bar.rows() != t || c.rows() != t || x.size() != t)
    throw ShapeError("scan: sequence length mismatch");
  if (a_bar.cols() != n || b_bar.cols() != n || c.cols() != n)
    throw ShapeError("scan: state width mismatch");
}

}  // namespace detail

// h_t = a_bar_t (.) h_{t-1} + b_bar_t * x_t ; y_t = <c_t, h_t> + d * x_t
template <typename T>
ScanOutput<T> scan_sequential(const MatX<T>& a_bar, const MatX<T>& b_bar,
                              const MatX<T>& c, const VecX<T>& x, T d_skip,
                              const VecX<T>& h0) {
  detail::check_scan_shapes(a_bar, b_bar, c, x, h0);
  const Index t_len = a_bar.rows();
  const Index n = h0.size();
  ScanOutput<T> out;
  out.y.resize(t_len);
  out.h.resize(t_len, n);
  VecX<T> h = h0;
  for (Index t = 0; t < t_len; ++t) {
    h = (a_bar.row(t).transpose().array() * h.array()).matrix() +
        b_bar.row(t).transpose() * x(t);
    out.h.row(t) = h.transpose();
    out.y(t) = c.row(t).dot(h.transpose()) + d_skip * x(t);
  }
  out.h_final = h;
  return out;
}

// Same recurrence via the associative combinator
//   (a1, b1) o (a2, b2) = (a1.*a2, a2.*b1 + b2)
// computed with a fixed-order doubling sweep, so results are deterministic.
template <typename T>
ScanOutput<T> scan_parallel(const MatX<T>& a_bar, const MatX<T>& b_bar,
                            const MatX<T>& c, const VecX<T>& x, T d_skip,
                            const VecX<T>& h0) {
  detail::check_scan_shapes(a_bar, b_bar, c, x, h0);
  const Index t_len = a_bar.rows();
  const Index n = h0.size();
  ScanOutput<T> out;
  out.y.resize(t_len);
  out.h.resize(t_len, n);
  if (t_len == 0) {
    out.h_final = h0;
    return out;
  }

  MatX<T> pa = a_bar;                          // prefix map: multiplicative part
  MatX<T> pb(t_len, n);                        // prefix map: additive part
  for (Index t = 0; t < t_len; ++t) pb.row(t) = b_bar.row(t) * x(t);

  for (Index off = 1; off < t_len; off <<= 1) {
    // descending order leaves rows [t-off] untouched until they are read
    for (Index t = t_len - 1; t >= off; --t) {
      pb.row(t) = pa.row(t).cwiseProduct(pb.row(t - off)) + pb.row(t);
      pa.row(t) = pa.row(t).cwiseProduct(pa.row(t - off));
    }
  }

  for (Index t = 0; t < t_len; ++t) {
    out.h.row(t) = pa.row(t).cwiseProduct(h0.transpose()) + pb.row(t);
    out.y(t) = c.row(t).dot(out.h.row(t)) + d_skip * x(t);
  }
  out.h_final = out.h.row(t_len - 1).transpose();
  return out;
}

template <typename T>
ScanOutput<T> scan(const MatX<T>& a_bar, const MatX<T>& b_bar, const MatX<T>& c,
                   const VecX<T>& x, T d_skip, const VecX<T>& h0,
                   ScanBackend backend) {
  return backend == ScanBackend::sequential
             ? scan_sequential(a_bar, b_bar, c, x, d_skip, h0)
             : scan_parallel(a_bar, b_bar, c, x, d_skip, h0);
}

template <typename T>
struct ScanGrads {
  MatX<T> a_bar, b_bar, c;
  VecX<T> x;
  T d_skip;
  VecX<T> h0;
};

// Reverse-mode pass of the recurrence; h is the cached state trajectory.
template <typename T>
ScanGrads<T> scan_backward(const MatX<T>& a_bar, const MatX<T>& b_bar,
                           const MatX<T>& c, const VecX<T>& x, T d_skip,
                           const VecX<T>& h0, const MatX<T>& h,
                           const VecX<T>& gy) {
  detail::check_scan_shapes(a_bar, b_bar, c, x, h0);
  const Index t_len = a_bar.rows();
  if (gy.size() != t_len || h.rows() != t_len)
    throw ShapeError("scan_backward: sequence length mismatch");
  const Index n = h0.size();

  ScanGrads<T> g;
  g.a_bar = MatX<T>::Zero(t_len, n);
  g.b_bar = MatX<T>::Zero(t_len, n);
  g.c = MatX<T>::Zero(t_len, n);
  g.x = VecX<T>::Zero(t_len);
  g.d_skip = T(0);
  g.h0 = VecX<T>::Zero(n);

  VecX<T> gh = VecX<T>::Zero(n);
  Eigen::Matrix<T, 1, Eigen::Dynamic> h_prev(n);
  for (Index t = t_len - 1; t >= 0; --t) {
    gh += gy(t) * c.row(t).transpose();
    if (t == 0)
      h_prev = h0.transpose();
    else
      h_prev = h.row(t - 1);
    g.a_bar.row(t) = gh.transpose().cwiseProduct(h_prev);
    g.b_bar.row(t) = gh.transpose() * x(t);
    g.c.row(t) = gy(t) * h.row(t);
    g.x(t) = b_bar.row(t).dot(gh.transpose()) + d_skip * gy(t);
    g.d_skip += gy(t) * x(t);
    gh = gh.cwiseProduct(a_bar.row(t).transpose());
  }
  g.h0 = gh;
  return g;
}

// Continuous-parameter convenience: fixed diagonal A, per-step B/C/delta.
// This is the selective-scan core the Mamba block is assembled from.
template <typename T>
struct SsmCache {
  MatX<T> a_bar, phi, h;  // all TxN
};

template <typename T>
VecX<T> ssm_forward(const VecX<T>& a_diag, const MatX<T>& b_seq,
                    const MatX<T>& c_seq, const VecX<T>& delta_seq,
                    const VecX<T>& x, T d_skip, const VecX<T>& h0,
                    ScanBackend backend, SsmCache<T>* cache = nullptr) {
  const Index t_len = b_seq.rows();
  const Index n = a_diag.size();
  if (c_seq.rows() != t_len || delta_seq.size() != t_len || x.size() != t_len)
    throw ShapeError("ssm_forward: sequence length mismatch");
  if (b_seq.cols() != n || c_seq.cols() != n || h0.size() != n)
    throw ShapeError("ssm_forward: state width mismatch");
  if (!all_finite(a_diag) || !all_finite(b_seq) || !all_finite(c_seq) ||
      !all_finite(delta_seq) || !all_finite(x))
    throw InvalidParameterError("ssm_forward: non-finite input");
  if (t_len > 0 && delta_seq.minCoeff() <= T(0))
    throw InvalidParameterError("ssm_forward: delta must be > 0 at every step");

  MatX<T> a_bar(t_len, n), phi(t_len, n), b_bar(t_len, n);
  for (Index t = 0; t < t_len; ++t) {
    for (Index i = 0; i < n; ++i) {
      a_bar(t, i) = std::exp(delta_seq(t) * a_diag(i));
      phi(t, i) = zoh_phi(a_diag(i), delta_seq(t));
      b_bar(t, i) = phi(t, i) * b_seq(t, i);
    }
  }
  auto out = scan(a_bar, b_bar, c_seq, x, d_skip, h0, backend);
  if (cache) {
    cache->a_bar = std::move(a_bar);
    cache->phi = std::move(phi);
    cache->h = out.h;
  }
  return out.y;
}

template <typename T>
struct SsmGrads {
  VecX<T> a_diag;
  MatX<T> b_seq, c_seq;
  VecX<T> delta_seq, x;
  T d_skip;
  VecX<T> h0;
};

template <typename T>
SsmGrads<T> ssm_backward(const VecX<T>& a_diag, const MatX<T>& b_seq,
                         const VecX<T>& delta_seq, const VecX<T>& x, T d_skip,
                         const VecX<T>& h0, const MatX<T>& c_seq,
                         const SsmCache<T>& cache, const VecX<T>& gy) {
  const Index t_len = b_seq.rows();
  const Index n = a_diag.size();

  MatX<T> b_bar = cache.phi.cwiseProduct(b_seq);
  auto sg = scan_backward(cache.a_bar, b_bar, c_seq, x, d_skip, h0, cache.h, gy);

  SsmGrads<T> g;
  g.a_diag = VecX<T>::Zero(n);
  g.b_seq = sg.b_bar.cwiseProduct(cache.phi);
  g.c_seq = sg.c;
  g.delta_seq = VecX<T>::Zero(t_len);
  g.x = sg.x;
  g.d_skip = sg.d_skip;
  g.h0 = sg.h0;

  for (Index t = 0; t < t_len; ++t) {
    for (Index i = 0; i < n; ++i) {
      const T a = a_diag(i);
      const T ab = cache.a_bar(t, i);
      const T ph = cache.phi(t, i);
      const T gphi = sg.b_bar(t, i) * b_seq(t, i);
      // a_bar = exp(delta*a): d/da = delta*a_bar, d/ddelta = a*a_bar
      // phi:   d/da per zoh_phi_da, d/ddelta = a_bar
      g.a_diag(i) += sg.a_bar(t, i) * delta_seq(t) * ab +
                     gphi * zoh_phi_da(a, delta_seq(t), ab, ph);
      g.delta_seq(t) += sg.a_bar(t, i) * a * ab + gphi * ab;
    }
  }
  return g;
}

}  // namespace mambadm::ssm
