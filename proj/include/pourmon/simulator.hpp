#pragma once

// Seeded kinematic generator of pouring sequences: an approach arc followed
// by a tilt ramp, with IMU windows finite-differenced from the pose model on
// the sub-frame grid and visual features projected from a scene descriptor.

#include "pourmon/model.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace pourmon {

inline constexpr int kNumContainers = 4;  // source containers b, c, d, e
inline constexpr std::array<int, 3> kSourceFills = {10, 50, 80};  // alpha, %
inline constexpr std::array<int, 3> kTargetFills = {0, 30, 50};   // beta, %
inline constexpr int kNumInitialStates = kNumContainers * 3 * 3;
inline constexpr int kNumFillStates = 3 * 3;

enum class Label { failure = 0, success = 1 };
std::string to_string(Label label);

struct InitialState {
  int container = 0;  // 0..3 for b..e
  int alpha = 10;     // source fill, %
  int beta = 0;       // target fill, %

  char container_letter() const { return static_cast<char>('b' + container); }
  bool operator==(const InitialState&) const = default;
};

/// Container-major, then alpha, then beta: 0..35.
int initial_state_index(const InitialState& s);
InitialState initial_state_from_index(int index);
/// alpha-major index over the 9 fill combinations, ignoring the container.
int fill_state_index(const InitialState& s);

struct Sequence {
  std::string id;
  std::vector<Frame> frames;
  Label label = Label::success;
  InitialState state;
  int user = 0;
  int trial = 0;
  std::optional<int> spill_onset;  // 1-based frame index, failures only

  int length() const { return static_cast<int>(frames.size()); }
  bool success() const { return label == Label::success; }
};

struct UserStyle {
  double tilt_rate;       // deg/s during the pour ramp
  double arc_radius;      // m, height of the approach arc
  double approach_time;   // s
  double onset_fraction;  // where in the sequence a failure overshoots
  double heading;         // deg, wrist yaw
};

struct SimConfig {
  int frames = 16;  // T
  int feature_dim = 32;
  int imu_samples = 38;  // N per frame
  double frame_interval = 0.5;  // s between camera frames
  int users = 5;
  int trials = 5;
  std::uint64_t seed = 7;
  double noise_fraction = 0.05;
  std::array<UserStyle, 5> styles = {{
      {22.0, 0.20, 1.6, 0.45, 352.0},
      {27.0, 0.25, 1.2, 0.55, 8.0},
      {18.0, 0.16, 2.0, 0.40, 358.0},
      {31.0, 0.22, 1.4, 0.60, 3.0},
      {24.5, 0.28, 1.8, 0.50, 0.0},
  }};

  /// 2 x 5 users x 5 trials x 36 states.
  static SimConfig full();
  /// 360 sequences with all five users (one trial each).
  static SimConfig desk_cross_user();
  /// 360 sequences with five trials of a single user.
  static SimConfig desk_cross_trial();

  std::size_t sequence_count() const { return 2u * users * trials * kNumInitialStates; }
  void validate() const;
};

struct Dataset {
  std::vector<Sequence> sequences;

  std::size_t size() const { return sequences.size(); }
};

class Simulator {
 public:
  explicit Simulator(SimConfig config);

  const SimConfig& config() const { return config_; }
  /// Descriptor-to-feature projection [d_img x descriptor].
  const Matrix& projection() const { return projection_; }
  const Eigen::VectorXd& feature_noise() const { return feature_noise_; }
  const Eigen::Matrix<double, 6, 1>& imu_noise() const { return imu_noise_; }

  /// Deterministic in all arguments. `noise = false` gives the same sequence
  /// without the additive sensor noise.
  Sequence synth_sequence(const InitialState& state, int user, int trial, Label label, std::uint64_t seed,
                          bool noise = true) const;

  std::uint64_t sequence_seed(const InitialState& state, int user, int trial, Label label) const;

  /// Ordered by label (success first), user, trial, state.
  Dataset synth_dataset() const;

 private:
  SimConfig config_;
  Matrix projection_;
  Eigen::VectorXd feature_noise_;
  Eigen::Matrix<double, 6, 1> imu_noise_ = Eigen::Matrix<double, 6, 1>::Zero();
};

Dataset synth_dataset(const SimConfig& config);

/// Length of the scene descriptor fed through the projection.
inline constexpr int kDescriptorSize = 10;

}  // namespace pourmon
