#pragma once

#include "pourmon/numcore/tape.hpp"

#include <cmath>
#include <span>

namespace pourmon::nc {

template <typename Scalar>
struct AdamHyper {
  Scalar learning_rate = Scalar(1e-4);
  Scalar beta1 = Scalar(0.9);
  Scalar beta2 = Scalar(0.999);
  Scalar epsilon = Scalar(1e-8);
};

/// Moments are keyed by parameter name and created on first use.
template <typename Scalar>
struct AdamState {
  struct Moments {
    Mat<Scalar> first;
    Mat<Scalar> second;
  };

  AdamHyper<Scalar> hyper;
  long step = 0;
  std::map<std::string, Moments> moments;
};

/// One bias-corrected Adam update of `params` using `grads`.
template <typename Scalar>
void adam_step(std::span<Parameter<Scalar>* const> params, const GradientMap<Scalar>& grads,
               AdamState<Scalar>& state) {
  for (const auto* p : params) {
    auto it = grads.find(p->name);
    if (it == grads.end()) throw std::invalid_argument("adam_step: missing gradient for parameter '" + p->name + "'");
    if (it->second.rows() != p->value.rows() || it->second.cols() != p->value.cols())
      throw ShapeError("adam_step: gradient for '" + p->name + "' is " +
                       shape_str(it->second.rows(), it->second.cols()) + ", parameter is " +
                       shape_str(p->value.rows(), p->value.cols()));
  }

  ++state.step;
  const auto& h = state.hyper;
  const Scalar c1 = Scalar(1) - std::pow(h.beta1, static_cast<Scalar>(state.step));
  const Scalar c2 = Scalar(1) - std::pow(h.beta2, static_cast<Scalar>(state.step));

  for (auto* p : params) {
    const auto& g = grads.at(p->name);
    auto [it, fresh] = state.moments.try_emplace(p->name);
    auto& m = it->second;
    if (fresh) {
      m.first.setZero(g.rows(), g.cols());
      m.second.setZero(g.rows(), g.cols());
    }
    m.first = h.beta1 * m.first + (Scalar(1) - h.beta1) * g;
    m.second = h.beta2 * m.second + (Scalar(1) - h.beta2) * g.cwiseProduct(g);
    p->value.array() -= h.learning_rate * (m.first.array() / c1) /
                        ((m.second.array() / c2).sqrt() + h.epsilon);
  }
}

/// Rescales all gradients so their joint L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
template <typename Scalar>
Scalar clip_global_norm(GradientMap<Scalar>& grads, Scalar max_norm) {
  Scalar sq = 0;
  for (const auto& [_, g] : grads) sq += g.squaredNorm();
  const Scalar norm = std::sqrt(sq);
  if (norm > max_norm) {
    const Scalar f = max_norm / norm;
    for (auto& [_, g] : grads) g *= f;
  }
  return norm;
}

}  // namespace pourmon::nc
