#pragma once

#include <algorithm>
#include <cmath>
#include <functional>

#include "mambadm/linalg.hpp"

// Shared helpers for the test suites: relative-error comparison and a
// central-difference oracle that stays independent of any analytic backward
// pass it is used to check.
namespace testutil {

inline double rel_err(double a, double b, double floor = 1e-6) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

template <typename T>
double max_rel_err(const mambadm::VecX<T>& a, const mambadm::VecX<T>& b,
                   double floor = 1e-6) {
  double worst = 0.0;
  for (mambadm::Index i = 0; i < a.size(); ++i)
    worst = std::max(worst, rel_err(static_cast<double>(a(i)),
                                    static_cast<double>(b(i)), floor));
  return worst;
}

template <typename T>
double max_rel_err_mat(const mambadm::MatX<T>& a, const mambadm::MatX<T>& b,
                       double floor = 1e-6) {
  double worst = 0.0;
  for (mambadm::Index i = 0; i < a.rows(); ++i)
    for (mambadm::Index j = 0; j < a.cols(); ++j)
      worst = std::max(worst, rel_err(static_cast<double>(a(i, j)),
                                      static_cast<double>(b(i, j)), floor));
  return worst;
}

// Relative error measured against the magnitude of the sequences being
// compared. Element-wise relative error is meaningless where the outputs
// cancel toward zero, so the denominator is the output scale.
template <typename T>
double max_rel_err_scaled(const mambadm::MatX<T>& a, const mambadm::MatX<T>& b,
                          double floor = 1e-6) {
  const double scale = std::max({floor,
                                 static_cast<double>(a.cwiseAbs().maxCoeff()),
                                 static_cast<double>(b.cwiseAbs().maxCoeff())});
  return static_cast<double>((a - b).cwiseAbs().maxCoeff()) / scale;
}

template <typename T>
double max_rel_err_scaled(const mambadm::VecX<T>& a, const mambadm::VecX<T>& b,
                          double floor = 1e-6) {
  const double scale = std::max({floor,
                                 static_cast<double>(a.cwiseAbs().maxCoeff()),
                                 static_cast<double>(b.cwiseAbs().maxCoeff())});
  return static_cast<double>((a - b).cwiseAbs().maxCoeff()) / scale;
}

// Central finite difference of a scalar function with respect to *x.
inline double central_diff(const std::function<double()>& f, double* x,
                           double step = 1e-5) {
  const double saved = *x;
  *x = saved + step;
  const double fp = f();
  *x = saved - step;
  const double fm = f();
  *x = saved;
  return (fp - fm) / (2.0 * step);
}

// Worst relative error between already-accumulated analytic gradients and
// central differences of `loss`, across every scalar in every parameter.
inline double max_param_grad_err(const mambadm::ParamRefs<double>& params,
                                 const std::function<double()>& loss,
                                 double step = 1e-5) {
  double worst = 0.0;
  for (auto* p : params) {
    for (mambadm::Index i = 0; i < p->value.rows(); ++i) {
      for (mambadm::Index j = 0; j < p->value.cols(); ++j) {
        const double fd = central_diff(loss, &p->value(i, j), step);
        worst = std::max(worst, rel_err(p->grad(i, j), fd));
      }
    }
  }
  return worst;
}

}  // namespace testutil
