#pragma once

#include <Eigen/Dense>
#include <string>
#include <utility>
#include <vector>

#include "mambadm/rng.hpp"

namespace mambadm {

// Row-major so a time step is a contiguous row.
template <typename T>
using MatX = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename T>
using VecX = Eigen::Matrix<T, Eigen::Dynamic, 1>;

using Index = Eigen::Index;

template <typename T, typename U>
MatX<T> cast_mat(const MatX<U>& m) {
  return m.template cast<T>();
}

template <typename Derived>
bool all_finite(const Eigen::MatrixBase<Derived>& m) {
  return m.allFinite();
}

// A learnable tensor plus its gradient accumulator. Vectors are stored as
// 1xN matrices so the checkpoint layout stays uniform.
template <typename T>
struct Param {
  std::string name;
  MatX<T> value;
  MatX<T> grad;
  bool decay = false;  // participates in decoupled weight decay

  void setup(std::string n, Index rows, Index cols, bool weight_decay = false) {
    name = std::move(n);
    value = MatX<T>::Zero(rows, cols);
    grad = MatX<T>::Zero(rows, cols);
    decay = weight_decay;
  }

  void fill_normal(Rng& rng, double stddev) {
    for (Index i = 0; i < value.rows(); ++i)
      for (Index j = 0; j < value.cols(); ++j)
        value(i, j) = static_cast<T>(rng.normal() * stddev);
  }

  void fill_uniform(Rng& rng, double limit) {
    for (Index i = 0; i < value.rows(); ++i)
      for (Index j = 0; j < value.cols(); ++j)
        value(i, j) = static_cast<T>((2.0 * rng.uniform() - 1.0) * limit);
  }

  void zero_grad() { grad.setZero(); }
  Index size() const { return value.size(); }
};

template <typename T>
using ParamRefs = std::vector<Param<T>*>;

template <typename T>
void zero_grads(const ParamRefs<T>& params) {
  for (auto* p : params) p->zero_grad();
}

template <typename T>
double global_grad_norm(const ParamRefs<T>& params) {
  double sq = 0.0;
  for (const auto* p : params) sq += p->grad.template cast<double>().squaredNorm();
  return std::sqrt(sq);
}

// Scales every gradient so the global norm does not exceed max_norm.
// Returns the pre-clip norm.
template <typename T>
double clip_global_norm(const ParamRefs<T>& params, double max_norm) {
  double norm = global_grad_norm(params);
  if (norm > max_norm && norm > 0.0) {
    T scale = static_cast<T>(max_norm / norm);
    for (auto* p : params) p->grad *= scale;
  }
  return norm;
}

}  // namespace mambadm
