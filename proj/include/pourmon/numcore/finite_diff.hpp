#pragma once

#include "pourmon/numcore/tape.hpp"

#include <cmath>
#include <functional>

namespace pourmon::nc {

/// Central-difference gradient of a scalar function at `theta`.
template <typename Scalar>
Mat<Scalar> finite_diff_grad(const std::function<Scalar(const Mat<Scalar>&)>& f, const Mat<Scalar>& theta,
                             Scalar eps) {
  if (!(eps > 0)) throw std::invalid_argument("finite_diff_grad: step must be positive");
  Mat<Scalar> grad(theta.rows(), theta.cols());
  Mat<Scalar> probe = theta;
  for (Eigen::Index i = 0; i < theta.size(); ++i) {
    const Scalar orig = probe(i);
    probe(i) = orig + eps;
    const Scalar up = f(probe);
    probe(i) = orig - eps;
    const Scalar down = f(probe);
    probe(i) = orig;
    if (!std::isfinite(up) || !std::isfinite(down))
      throw NonFiniteError("finite_diff_grad: non-finite value at coordinate " + std::to_string(i));
    grad(i) = (up - down) / (Scalar(2) * eps);
  }
  return grad;
}

/// max_i |a_i - n_i| / max(|a_i|, |n_i|, floor).
template <typename Scalar>
Scalar max_relative_error(const Mat<Scalar>& analytic, const Mat<Scalar>& numeric, Scalar floor) {
  if (analytic.rows() != numeric.rows() || analytic.cols() != numeric.cols())
    throw ShapeError("max_relative_error: " + shape_str(analytic.rows(), analytic.cols()) + " vs " +
                     shape_str(numeric.rows(), numeric.cols()));
  Scalar worst = 0;
  for (Eigen::Index i = 0; i < analytic.size(); ++i) {
    const Scalar denom = std::max({std::abs(analytic(i)), std::abs(numeric(i)), floor});
    worst = std::max(worst, std::abs(analytic(i) - numeric(i)) / denom);
  }
  return worst;
}

}  // namespace pourmon::nc
