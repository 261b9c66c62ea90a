// SPDX-License-Identifier: Apache-2.0
//
// Central finite-difference gradient checking.

#ifndef SCALENAV_TESTS_GRADCHECK_HPP_
#define SCALENAV_TESTS_GRADCHECK_HPP_

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "scalenav/tensor.hpp"

namespace gradcheck {

using scalenav::tensor::Tensor;

inline Tensor random_tensor(scalenav::tensor::Shape shape, std::mt19937_64& rng, double lo = -1.0,
                            double hi = 1.0, bool requires_grad = true) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(scalenav::tensor::shape_size(shape));
  for (double& x : v) x = u(rng);
  return Tensor::from(std::move(shape), std::move(v), requires_grad);
}

/// Values kept at least `gap` away from zero (for kinked ops).
inline Tensor away_from_zero(scalenav::tensor::Shape shape, std::mt19937_64& rng, double gap = 0.05) {
  Tensor t = random_tensor(std::move(shape), rng);
  for (double& x : t.values()) x = x < 0 ? x - gap : x + gap;
  return t;
}

/// Norm-wise relative error ||analytic - numeric|| / max(||analytic|| + ||numeric||, floor),
/// maximized over the inputs.
inline double max_relative_error(const std::function<Tensor()>& f, std::vector<Tensor> inputs,
                                 double h = 1e-5) {
  for (auto& t : inputs) t.zero_grad();
  f().backward();
  double worst = 0.0;
  for (auto& t : inputs) {
    const std::vector<double> analytic(t.grad().begin(), t.grad().end());
    std::vector<double> numeric(analytic.size());
    auto vals = t.values();
    {
      scalenav::tensor::NoGradGuard guard;
      for (std::size_t i = 0; i < vals.size(); ++i) {
        const double keep = vals[i];
        vals[i] = keep + h;
        const double fp = f().item();
        vals[i] = keep - h;
        const double fm = f().item();
        vals[i] = keep;
        numeric[i] = (fp - fm) / (2.0 * h);
      }
    }
    double diff = 0.0, na = 0.0, nn = 0.0;
    for (std::size_t i = 0; i < analytic.size(); ++i) {
      diff += (analytic[i] - numeric[i]) * (analytic[i] - numeric[i]);
      na += analytic[i] * analytic[i];
      nn += numeric[i] * numeric[i];
    }
    const double denom = std::max(std::sqrt(na) + std::sqrt(nn), 1e-7);
    worst = std::max(worst, std::sqrt(diff) / denom);
  }
  return worst;
}

/// Reduces any tensor to a scalar with fixed random weights so every output
/// element contributes a distinct gradient.
inline Tensor weighted_sum(const Tensor& y, std::uint64_t seed = 77) {
  std::mt19937_64 rng(seed);
  Tensor w = random_tensor(y.shape(), rng, -1.0, 1.0, false);
  return scalenav::tensor::reduce_sum(scalenav::tensor::mul(y, w));
}

}  // namespace gradcheck

#endif  // SCALENAV_TESTS_GRADCHECK_HPP_
