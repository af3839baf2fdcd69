#pragma once

// Hierarchical late-fusion LSTM encoder with generator, discriminator,
// initial-state classifier and monitor heads.
//
// All forward functions operate on a batch laid out as columns: a feature
// block is [dim x B], poses are [6 x B] (position m, rotation deg).

#include "pourmon/numcore.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace pourmon {

enum class EncoderKind { hier, flat2 };

std::string to_string(EncoderKind kind);
EncoderKind parse_encoder(const std::string& name);

struct ModelConfig {
  int feature_dim = 32;  // d_img
  int imu_samples = 38;  // N
  int img_hidden = 64;
  int pos_hidden = 16;
  int rot_hidden = 16;
  int fuse_hidden = 64;
  int gen_width = 32;
  int disc_width = 32;
  int monitor_width = 64;
  int num_classes = 36;
  EncoderKind encoder = EncoderKind::hier;

  static ModelConfig desk();
  /// Layer sizes used with 2048-dim pooled image features.
  static ModelConfig large();

  int imu_stream_dim() const { return 3 * imu_samples; }
  bool operator==(const ModelConfig&) const = default;
};

/// N six-axis samples: columns 0-2 acceleration (m/s^2), 3-5 angular velocity (deg/s).
struct ImuWindow {
  Eigen::Matrix<double, Eigen::Dynamic, 6> samples;
};

struct Pose {
  Eigen::Vector3d position = Eigen::Vector3d::Zero();  // m
  Eigen::Vector3d rotation = Eigen::Vector3d::Zero();  // deg, wrapped to [0, 360)

  Eigen::Matrix<double, 6, 1> packed() const;
  static Pose from_packed(const Eigen::Ref<const Eigen::VectorXd>& v);
};

struct Frame {
  Eigen::VectorXd feature;
  ImuWindow imu;
  Pose pose;
};

double wrap_degrees(double deg);

/// Acceleration stream A and angular-velocity stream B, each sample-major (3N).
struct ImuStreams {
  Eigen::VectorXd acceleration;
  Eigen::VectorXd angular_velocity;
};
ImuStreams split_imu(const ImuWindow& window);

// ---------------------------------------------------------------------------
// Parameters

struct LstmParams {
  Parameter weight;  // [4H x (in + H)], gate blocks i, f, g, o
  Parameter bias;    // [4H x 1]
  int input_size = 0;
  int hidden_size = 0;
};

struct DenseParams {
  Parameter weight;  // [out x in]
  Parameter bias;    // [out x 1]
};

/// Per-channel affine standardization of the observation streams; fitted on
/// the training fold and stored with the weights. Not trainable.
struct InputNorm {
  Eigen::VectorXd feature_mean;
  Eigen::VectorXd feature_scale;
  Eigen::Matrix<double, 6, 1> imu_mean = Eigen::Matrix<double, 6, 1>::Zero();
  Eigen::Matrix<double, 6, 1> imu_scale = Eigen::Matrix<double, 6, 1>::Ones();

  static InputNorm identity(int feature_dim);
};

enum class Group { encoder, generator, discriminator, classifier, monitor };
inline constexpr Group kAllGroups[] = {Group::encoder, Group::generator, Group::discriminator, Group::classifier,
                                       Group::monitor};

std::string to_string(Group g);

class ModelParams {
 public:
  /// All-zero weights with shapes derived from `config`.
  explicit ModelParams(const ModelConfig& config);
  /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, forget-gate bias 1.
  static ModelParams initialized(const ModelConfig& config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }

  /// Fixed order: encoder cells, generator, discriminator, classifier, monitor.
  std::vector<Parameter*> all();
  std::vector<const Parameter*> all() const;
  std::vector<Parameter*> group(Group g);
  Parameter* find(const std::string& name);

  std::size_t parameter_count() const;

  // hier: img, pos, rot, fuse. flat2: lower, upper.
  std::vector<LstmParams> encoder;
  std::vector<DenseParams> generator;      // 3 layers
  std::vector<DenseParams> discriminator;  // 3 layers
  DenseParams classifier;
  std::vector<DenseParams> monitor;  // hidden + output (2 logits)
  InputNorm norm;

 private:
  ModelConfig config_;
};

// ---------------------------------------------------------------------------
// Forward

struct BoundLstm {
  Var weight;
  Var bias;
  int hidden_size = 0;
};

struct BoundDense {
  Var weight;
  Var bias;
};

/// Parameters entered on one tape. Groups not listed as trainable are frozen
/// constants, so no gradient reaches them.
struct BoundModel {
  ModelConfig config;
  std::vector<BoundLstm> encoder;
  std::vector<BoundDense> generator;
  std::vector<BoundDense> discriminator;
  BoundDense classifier;
  std::vector<BoundDense> monitor;
};

BoundModel bind(Tape& tape, const ModelParams& params, std::span<const Group> trainable);

struct LstmState {
  Var h;
  Var c;
};

LstmState zero_lstm_state(Tape& tape, int hidden, Eigen::Index batch);
LstmState lstm_step(const BoundLstm& cell, const Var& x, const LstmState& state);

struct EncoderState {
  std::vector<LstmState> cells;  // same order as ModelParams::encoder
  const Var& fused() const { return cells.back().h; }
};

EncoderState initial_encoder_state(Tape& tape, const ModelConfig& config, Eigen::Index batch);

/// Advances the encoder one frame. hier: per-stream cells, concatenated
/// hidden states into the fusion cell. flat2: raw concatenation into two
/// stacked cells.
EncoderState encode_step(const BoundModel& model, const Var& feature, const Var& acceleration,
                         const Var& angular_velocity, const EncoderState& state);

Var dense(const BoundDense& layer, const Var& x);

/// Next-step pose [6 x B]. Rotations are unwrapped degrees.
Var generate_trajectory(const BoundModel& model, const Var& h);

/// (p, sin r, cos r) with r in radians: [9 x B].
Var encode_pose(const Var& pose);

/// Probability that (h, pose) is a real pair: [1 x B].
Var discriminate(const BoundModel& model, const Var& h, const Var& pose);

/// Softmax over initial states: [|Z| x B].
Var classify_initial_state(const BoundModel& model, const Var& h);

/// Column argmax with lowest-index tie-break.
std::vector<int> argmax_classes(const Matrix& q);

/// Success probability y' from h and discriminator score d: [1 x B].
Var monitor_step(const BoundModel& model, const Var& h, const Var& d);

/// Observation matrices for a batch. Frame t occupies index t (0-based).
struct BatchInputs {
  Eigen::Index batch = 0;
  std::vector<Matrix> features;          // [d_img x B]
  std::vector<Matrix> acceleration;      // [3N x B]
  std::vector<Matrix> angular_velocity;  // [3N x B]
  std::vector<Matrix> poses;             // [6 x B], raw units

  int frames() const { return static_cast<int>(features.size()); }
};

BatchInputs make_batch(std::span<const std::vector<Frame>* const> sequences, const InputNorm& norm);

/// Encodes frames 0..T-2, returning h for each (T-1 entries).
std::vector<Var> encode_sequence(Tape& tape, const BoundModel& model, const BatchInputs& inputs);

}  // namespace pourmon
