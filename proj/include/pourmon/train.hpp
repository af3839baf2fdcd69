#pragma once

// Joint optimization of the encoder and heads. Each batch runs a
// discriminator phase (encoder and generator frozen) followed by one joint
// step on L_Gen + L_cls + L_mon (discriminator frozen).

#include "pourmon/losses.hpp"
#include "pourmon/model.hpp"
#include "pourmon/simulator.hpp"

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace pourmon {

enum class Variant { vanilla, iosc, tf, noadv, full };

std::string to_string(Variant v);
Variant parse_variant(const std::string& name);

/// Which auxiliary pieces a variant switches on.
struct VariantSpec {
  bool forecasting = false;     // generator + L_reg
  bool adversarial = false;     // discriminator phase + L_adv
  bool classification = false;  // L_cls
  bool score_to_monitor = false;  // d_t from D, otherwise a constant 0.5
};
VariantSpec variant_spec(Variant v);

struct TrainConfig {
  Variant variant = Variant::full;
  ModelConfig model = ModelConfig::desk();
  double lambda = 1.0;
  double learning_rate = 1e-4;
  int batch_size = 24;
  int epochs = 60;
  std::uint64_t seed = 1;
  double clip_norm = 5.0;
  /// Forecasting, adversarial and classification losses use success
  /// sequences only; the monitor always sees every sequence.
  bool aux_success_only = true;

  /// lambda actually applied (0 unless the variant is adversarial).
  double effective_lambda() const;
  void validate() const;
};

/// Class index for the initial-state classifier: 36-way, or 9-way over fills.
int class_label(const Sequence& seq, int num_classes);

/// Mean/std per channel over the given sequences (std floored at 1e-6).
InputNorm fit_input_norm(const Dataset& data, std::span<const std::size_t> indices);

class Trainer {
 public:
  Trainer(TrainConfig config, ModelParams params);

  /// Discriminator phase then joint phase. Throws on an empty batch or a
  /// non-finite loss.
  LossBundle train_step(std::span<const Sequence* const> batch);

  /// Updates only the discriminator on L_Dis. Returns L_Dis (0 when skipped).
  double discriminator_phase(std::span<const Sequence* const> batch);
  /// Updates encoder, generator, classifier and monitor as the variant allows.
  LossBundle joint_phase(std::span<const Sequence* const> batch);

  const TrainConfig& config() const { return config_; }
  const ModelParams& params() const { return params_; }
  ModelParams& params() { return params_; }
  long steps() const { return joint_opt_.step; }

 private:
  TrainConfig config_;
  ModelParams params_;
  AdamState joint_opt_;
  AdamState disc_opt_;
};

struct FoldTag {
  std::string scheme = "none";
  std::string holdout = "-";
};

struct Checkpoint {
  TrainConfig config;
  ModelParams params;
  FoldTag fold;
  std::vector<LossBundle> log;  // one entry per epoch
};

/// Trains from a seeded initialization on `train_indices` of `data`.
/// `on_epoch` (optional) sees each epoch's mean losses as they complete.
Checkpoint train_run(const TrainConfig& config, const Dataset& data, std::span<const std::size_t> train_indices,
                     FoldTag fold = {}, const std::function<void(int, const LossBundle&)>& on_epoch = {});

/// Forward pass of a trained model over equal-length sequences.
struct Inference {
  Matrix success_prob;                 // [(T-1) x B]
  Matrix scores;                       // [(T-1) x B], 0.5 when the variant has no score
  std::vector<Matrix> predicted_pose;  // per step [6 x B], raw generator output
  Matrix class_probs;                  // [|Z| x B] at the last encoded step
};

Inference infer(const ModelParams& params, Variant variant, std::span<const Sequence* const> batch);

/// "epoch L_reg L_adv L_Gen L_Dis L_cls L_mon", tab separated.
std::string format_log_line(int epoch, const LossBundle& l);

}  // namespace pourmon
