#include "pourmon/losses.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace pourmon {

namespace {

constexpr double kDegToRad = std::numbers::pi / 180.0;

void require_steps(const char* what, std::size_t steps) {
  if (steps == 0) throw std::invalid_argument(std::string(what) + ": needs T >= 2 (at least one step)");
}

Var mean_over_steps(std::span<const Var> per_step) {
  Var total = per_step.front();
  for (std::size_t t = 1; t < per_step.size(); ++t) total = nc::add(total, per_step[t]);
  return nc::scale(total, 1.0 / static_cast<double>(per_step.size()));
}

Var label_row(Tape& tape, std::span<const int> labels, bool positive) {
  Matrix row(1, static_cast<Eigen::Index>(labels.size()));
  for (std::size_t b = 0; b < labels.size(); ++b) row(0, Eigen::Index(b)) = (labels[b] == 1) == positive ? 1.0 : 0.0;
  return tape.constant(std::move(row));
}

}  // namespace

Var pose_distance(const Var& target, const Var& predicted) {
  if (target.rows() != 6 || predicted.rows() != 6 || target.cols() != predicted.cols())
    throw nc::ShapeError("pose_distance: expected matching [6 x B] poses, got " + target.shape() + " and " +
                         predicted.shape());
  const Var diff = nc::sub(target, predicted);
  const Var dp = nc::slice_rows(diff, 0, 3);
  const Var position = nc::scale(nc::sum_rows(nc::mul(dp, dp)), 1.0 / 3.0);
  const Var rotation = nc::sum_rows(nc::add_scalar(nc::scale(nc::cos(nc::scale(nc::slice_rows(diff, 3, 3), kDegToRad)), -1.0), 1.0));
  return nc::add(position, rotation);
}

double pose_distance(const Pose& target, const Pose& predicted) {
  const Eigen::Vector3d dp = target.position - predicted.position;
  double rot = 0;
  for (int k = 0; k < 3; ++k) rot += 1.0 - std::cos((target.rotation(k) - predicted.rotation(k)) * kDegToRad);
  return dp.squaredNorm() / 3.0 + rot;
}

Var regression_loss(std::span<const Var> targets, std::span<const Var> predicted) {
  require_steps("regression_loss", targets.size());
  if (targets.size() != predicted.size())
    throw std::invalid_argument("regression_loss: " + std::to_string(targets.size()) + " targets vs " +
                                std::to_string(predicted.size()) + " predictions");
  std::vector<Var> per_step;
  for (std::size_t t = 0; t < targets.size(); ++t) per_step.push_back(pose_distance(targets[t], predicted[t]));
  return mean_over_steps(per_step);
}

Var adversarial_loss(std::span<const Var> fake_scores) {
  require_steps("adversarial_loss", fake_scores.size());
  std::vector<Var> per_step;
  for (const auto& d : fake_scores) per_step.push_back(nc::scale(nc::clamped_log(d), -1.0));
  return mean_over_steps(per_step);
}

Var generator_loss(const Var& regression, const Var& adversarial, double lambda) {
  if (lambda < 0) throw std::invalid_argument("generator_loss: lambda must be >= 0");
  return nc::add(regression, nc::scale(adversarial, lambda));
}

Var discriminator_loss(std::span<const Var> real_scores, std::span<const Var> fake_scores) {
  require_steps("discriminator_loss", real_scores.size());
  if (real_scores.size() != fake_scores.size())
    throw std::invalid_argument("discriminator_loss: real/fake step counts differ");
  std::vector<Var> per_step;
  for (std::size_t t = 0; t < real_scores.size(); ++t) {
    const Var real = nc::clamped_log(real_scores[t]);
    const Var fake = nc::clamped_log(nc::add_scalar(nc::scale(fake_scores[t], -1.0), 1.0));
    per_step.push_back(nc::scale(nc::add(real, fake), -1.0));
  }
  return mean_over_steps(per_step);
}

Var classification_loss(const Var& q, std::span<const int> labels) {
  if (static_cast<Eigen::Index>(labels.size()) != q.cols())
    throw nc::ShapeError("classification_loss: " + std::to_string(labels.size()) + " labels for " + q.shape());
  Matrix onehot = Matrix::Zero(q.rows(), q.cols());
  for (std::size_t b = 0; b < labels.size(); ++b) {
    if (labels[b] < 0 || labels[b] >= q.rows())
      throw std::out_of_range("classification_loss: label " + std::to_string(labels[b]) + " outside [0, " +
                              std::to_string(q.rows()) + ")");
    onehot(labels[b], Eigen::Index(b)) = 1.0;
  }
  const Var picked = nc::sum_rows(nc::mul(q.tape()->constant(std::move(onehot)), q));
  return nc::scale(nc::clamped_log(picked), -1.0);
}

Var monitoring_loss(std::span<const Var> success_probs, std::span<const int> labels) {
  require_steps("monitoring_loss", success_probs.size());
  Tape& tape = *success_probs.front().tape();
  if (success_probs.front().cols() != static_cast<Eigen::Index>(labels.size()))
    throw nc::ShapeError("monitoring_loss: " + std::to_string(labels.size()) + " labels for " +
                         success_probs.front().shape());
  const Var pos = label_row(tape, labels, true);
  const Var neg = label_row(tape, labels, false);
  std::vector<Var> per_step;
  for (const auto& y : success_probs) {
    const Var ll = nc::add(nc::mul(pos, nc::clamped_log(y)),
                           nc::mul(neg, nc::clamped_log(nc::add_scalar(nc::scale(y, -1.0), 1.0))));
    per_step.push_back(nc::scale(ll, -1.0));
  }
  return mean_over_steps(per_step);
}

Var masked_mean(const Var& per_sequence, std::span<const double> mask) {
  if (per_sequence.rows() != 1 || per_sequence.cols() != static_cast<Eigen::Index>(mask.size()))
    throw nc::ShapeError("masked_mean: mask of " + std::to_string(mask.size()) + " for " + per_sequence.shape());
  double total = 0;
  for (double m : mask) total += m;
  Tape& tape = *per_sequence.tape();
  if (total == 0) return tape.constant(Matrix::Zero(1, 1));
  Matrix w(static_cast<Eigen::Index>(mask.size()), 1);
  for (std::size_t b = 0; b < mask.size(); ++b) w(Eigen::Index(b), 0) = mask[b] / total;
  return nc::matmul(per_sequence, tape.constant(std::move(w)));
}

}  // namespace pourmon
