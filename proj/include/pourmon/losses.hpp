#pragma once

// Training objectives. Sequence-level losses return one value per batch
// column ([1 x B]); masked_mean reduces them to the scalar that is optimized.

#include "pourmon/model.hpp"

#include <span>
#include <vector>

namespace pourmon {

/// MSE over the three position coordinates plus sum_k (1 - cos(r_k - r'_k)),
/// rotations in degrees. [6 x B] inputs, [1 x B] result.
Var pose_distance(const Var& target, const Var& predicted);
double pose_distance(const Pose& target, const Pose& predicted);

/// Mean pose distance over steps t = 1..T-1; requires T - 1 >= 1 steps.
Var regression_loss(std::span<const Var> targets, std::span<const Var> predicted);

/// Mean of -log d_t over steps (non-saturating generator term).
Var adversarial_loss(std::span<const Var> fake_scores);

/// L_reg + lambda * L_adv.
Var generator_loss(const Var& regression, const Var& adversarial, double lambda);

/// Mean over steps of -log D(real) - log(1 - D(fake)).
Var discriminator_loss(std::span<const Var> real_scores, std::span<const Var> fake_scores);

/// -log q(z) per column. Labels must lie in [0, |Z|).
Var classification_loss(const Var& q, std::span<const int> labels);

/// Mean over steps of binary cross-entropy against the sequence label
/// (1 = success) broadcast to every step.
Var monitoring_loss(std::span<const Var> success_probs, std::span<const int> labels);

/// Weighted mean of a [1 x B] row over the columns with nonzero mask. An
/// all-zero mask yields a constant 0 that carries no gradient.
Var masked_mean(const Var& per_sequence, std::span<const double> mask);

struct LossBundle {
  double regression = 0;
  double adversarial = 0;
  double generator = 0;
  double discriminator = 0;
  double classification = 0;
  double monitoring = 0;
  double lambda = 1;
};

}  // namespace pourmon
