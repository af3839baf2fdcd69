#pragma once

// Leave-one-out protocols, sequence-level verdicts and the metrics reported
// per fold: success/failure accuracy, initial-state classification accuracy,
// position error (m) and rotation error (deg).

#include "pourmon/train.hpp"

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace pourmon {

enum class Scheme { cross_trial, cross_container, cross_user };

std::string to_string(Scheme s);
Scheme parse_scheme(const std::string& name);
/// 36 classes, or 9 when the source container is held out.
int scheme_num_classes(Scheme s);

struct Fold {
  std::string holdout;  // trial id, container letter, or user id
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

/// cross-trial: 5 folds by trial; cross-user: 5 folds by user;
/// cross-container: 4 folds by source container.
std::vector<Fold> make_folds(const Dataset& data, Scheme scheme);

/// Success iff the mean of y'_t exceeds 0.5; a mean of exactly 0.5 is failure.
Label sequence_verdict(std::span<const double> success_probs);

struct TrajectoryErrors {
  double position = 0;  // mean Euclidean distance, m
  double rotation = 0;  // mean wrapped absolute angle difference, deg
};

TrajectoryErrors trajectory_errors(std::span<const Pose> predicted, std::span<const Pose> truth);

struct FoldMetrics {
  std::string holdout;
  std::size_t sequences = 0;
  double success_accuracy = 0;  // %, per sequence
  double step_accuracy = 0;     // %, per step
  std::optional<double> classification_accuracy;  // %
  std::optional<double> position_error;
  std::optional<double> rotation_error;
};

struct MetricsReport {
  std::string variant;
  std::string encoder;
  std::string scheme;
  std::vector<FoldMetrics> folds;
  FoldMetrics average;
};

/// Evaluates a checkpoint on `test` indices of `data`. Rejects a checkpoint
/// whose class count differs from the scheme's.
FoldMetrics evaluate_fold(const Checkpoint& ckpt, const Dataset& data, std::span<const std::size_t> test,
                          Scheme scheme);

/// Unweighted mean over folds; optional metrics stay empty if any fold lacks them.
FoldMetrics average_folds(std::span<const FoldMetrics> folds);

std::string format_table(std::span<const MetricsReport> reports);
std::string format_csv(std::span<const MetricsReport> reports);

}  // namespace pourmon
