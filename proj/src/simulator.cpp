#include "pourmon/simulator.hpp"

#include <algorithm>
#include <cstdio>
#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>

namespace pourmon {

namespace {

constexpr double kDegToRad = std::numbers::pi / 180.0;

// Source container volume relative to the target, and spout flow coefficient.
constexpr std::array<double, kNumContainers> kVolumeRatio = {0.6, 0.9, 1.2, 1.5};
constexpr std::array<double, kNumContainers> kFlowCoeff = {1.0, 1.3, 0.8, 1.15};

constexpr double kReadyTilt = 25.0;  // deg reached at the end of the approach
constexpr double kMaxTilt = 150.0;
constexpr double kStopFill = 0.8;
constexpr double kOvershootGain = 3.0;

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

int index_of(const std::array<int, 3>& values, int v, const char* what) {
  for (int k = 0; k < 3; ++k)
    if (values[static_cast<std::size_t>(k)] == v) return k;
  throw std::invalid_argument(std::string("illegal ") + what + " " + std::to_string(v));
}

double ease(double x) {
  x = std::clamp(x, 0.0, 1.0);
  return 0.5 * (1.0 - std::cos(std::numbers::pi * x));
}

// Pose and scene state on the sub-frame grid.
struct Trajectory {
  std::vector<Eigen::Vector3d> position;
  std::vector<Eigen::Vector3d> rotation;  // unwrapped degrees
  std::vector<double> source;
  std::vector<double> target;
  std::vector<double> spilled;
  std::vector<bool> spilling;
  std::optional<int> spill_onset;
};

struct Jitter {
  double rate = 1.0;
  double approach = 1.0;
  int onset_shift = 0;
};

Trajectory integrate(const SimConfig& cfg, const InitialState& state, int user, Label label, const Jitter& jit) {
  const UserStyle& style = cfg.styles[static_cast<std::size_t>(user)];
  const int n = cfg.imu_samples;
  const int points = cfg.frames * n + 2;
  const double h = cfg.frame_interval / n;
  const double alpha = state.alpha / 100.0;
  const double ratio = kVolumeRatio[static_cast<std::size_t>(state.container)];
  const double flow = kFlowCoeff[static_cast<std::size_t>(state.container)];

  const double rate = style.tilt_rate * (1.0 + 0.4 * (0.8 - alpha)) * jit.rate;
  const double approach = style.approach_time * jit.approach;

  Trajectory tr;
  const bool failure = label == Label::failure;
  int overshoot_index = points;  // grid index where the failure overshoot begins
  if (failure) {
    const int onset = std::clamp(static_cast<int>(std::lround(style.onset_fraction * cfg.frames)) + jit.onset_shift,
                                 2, cfg.frames);
    tr.spill_onset = onset;
    overshoot_index = (onset - 1) * n;
  }

  const Eigen::Vector3d start(0.35, -0.25 + 0.02 * user, 0.10);
  const Eigen::Vector3d above_target(0.05, 0.0, 0.20);

  double tilt = 0.0, source = alpha, target = state.beta / 100.0, spilled = 0.0;
  bool stopped = false;
  for (int j = 0; j < points; ++j) {
    const double tau = j * h;
    const bool overshooting = j > overshoot_index;

    if (tau < approach) {
      tilt = kReadyTilt * ease(tau / approach);
    } else {
      if (!stopped && (target >= kStopFill || source <= 1e-3)) stopped = true;
      if (overshooting)
        tilt = std::min(kMaxTilt, tilt + kOvershootGain * rate * h);
      else if (!stopped)
        tilt = std::min(kMaxTilt, tilt + rate * h);
      else
        tilt = std::max(kReadyTilt, tilt - 1.5 * rate * h);

      const double pour_threshold = 95.0 - 70.0 * source;
      double q = source > 0 ? flow * std::max(0.0, tilt - pour_threshold) / 60.0 * h : 0.0;
      q = std::min(q, source * ratio);
      source -= q / ratio;
      const double kept = overshooting ? 0.5 * q : q;
      spilled += q - kept;
      target += kept;
      if (target > 1.0) {
        spilled += target - 1.0;
        target = 1.0;
      }
    }

    const double e = ease(tau / approach);
    Eigen::Vector3d p = start + (above_target - start) * e;
    p.z() += 0.5 * style.arc_radius * std::sin(std::numbers::pi * e);
    p.z() -= 0.06 * std::sin(tilt * kDegToRad) * e;
    p.x() += 0.004 * std::sin(2.0 * std::numbers::pi * tau / 1.7);
    p.y() += 0.003 * std::cos(2.0 * std::numbers::pi * tau / 2.3);

    Eigen::Vector3d r(tilt, 6.0 * std::sin(2.0 * std::numbers::pi * tau / 2.5 + user),
                      style.heading + 4.0 * e);

    tr.position.push_back(p);
    tr.rotation.push_back(r);
    tr.source.push_back(source);
    tr.target.push_back(target);
    tr.spilled.push_back(spilled);
    tr.spilling.push_back(failure && overshooting);
  }
  return tr;
}

Eigen::Matrix<double, kDescriptorSize, 1> descriptor(const InitialState& state, const Trajectory& tr, int j) {
  Eigen::Matrix<double, kDescriptorSize, 1> d = Eigen::Matrix<double, kDescriptorSize, 1>::Zero();
  d(state.container) = 1.0;
  d(4) = tr.source[static_cast<std::size_t>(j)];
  d(5) = tr.target[static_cast<std::size_t>(j)];
  d(6) = std::sin(tr.rotation[static_cast<std::size_t>(j)].x() * kDegToRad);
  d(7) = std::cos(tr.rotation[static_cast<std::size_t>(j)].x() * kDegToRad);
  d(8) = tr.spilling[static_cast<std::size_t>(j)] ? 1.0 : 0.0;
  d(9) = tr.spilled[static_cast<std::size_t>(j)];
  return d;
}

}  // namespace

std::string to_string(Label label) { return label == Label::success ? "success" : "failure"; }

int initial_state_index(const InitialState& s) {
  if (s.container < 0 || s.container >= kNumContainers)
    throw std::invalid_argument("illegal container " + std::to_string(s.container));
  return s.container * 9 + index_of(kSourceFills, s.alpha, "alpha") * 3 + index_of(kTargetFills, s.beta, "beta");
}

InitialState initial_state_from_index(int index) {
  if (index < 0 || index >= kNumInitialStates)
    throw std::out_of_range("initial state index " + std::to_string(index) + " outside [0, 36)");
  return {index / 9, kSourceFills[static_cast<std::size_t>((index / 3) % 3)],
          kTargetFills[static_cast<std::size_t>(index % 3)]};
}

int fill_state_index(const InitialState& s) { return initial_state_index(s) % kNumFillStates; }

SimConfig SimConfig::full() { return {}; }

SimConfig SimConfig::desk_cross_user() {
  SimConfig c;
  c.trials = 1;
  return c;
}

SimConfig SimConfig::desk_cross_trial() {
  SimConfig c;
  c.users = 1;
  return c;
}

void SimConfig::validate() const {
  if (frames < 2) throw std::invalid_argument("SimConfig: frames must be >= 2");
  if (feature_dim < 1 || imu_samples < 1) throw std::invalid_argument("SimConfig: dimensions must be positive");
  if (!(frame_interval > 0)) throw std::invalid_argument("SimConfig: frame_interval must be positive");
  if (users < 1 || users > 5) throw std::invalid_argument("SimConfig: users must be in 1..5");
  if (trials < 1) throw std::invalid_argument("SimConfig: trials must be >= 1");
  if (noise_fraction < 0) throw std::invalid_argument("SimConfig: noise_fraction must be >= 0");
  for (const auto& s : styles) {
    if (!(s.tilt_rate > 0 && s.arc_radius > 0 && s.approach_time > 0 && s.onset_fraction > 0))
      throw std::invalid_argument("SimConfig: user style parameters must be positive");
  }
}

Simulator::Simulator(SimConfig config) : config_(std::move(config)) {
  config_.validate();
  std::mt19937_64 rng(splitmix64(config_.seed ^ 0x50524f4aull));
  std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(double(kDescriptorSize)));
  projection_.resize(config_.feature_dim, kDescriptorSize);
  for (Eigen::Index i = 0; i < projection_.size(); ++i) projection_(i) = normal(rng);

  // Noise scales follow the per-channel spread of a fixed noise-free
  // reference set (trial 0 of every state, user and label).
  const int d = config_.feature_dim;
  Eigen::VectorXd fsum = Eigen::VectorXd::Zero(d), fsq = Eigen::VectorXd::Zero(d);
  Eigen::Matrix<double, 6, 1> isum = Eigen::Matrix<double, 6, 1>::Zero(), isq = isum;
  double fcount = 0, icount = 0;
  for (int label = 0; label < 2; ++label) {
    for (int user = 0; user < 5; ++user) {
      for (int s = 0; s < kNumInitialStates; ++s) {
        const auto state = initial_state_from_index(s);
        const auto lab = static_cast<Label>(label);
        const Sequence seq = synth_sequence(state, user, 0, lab, sequence_seed(state, user, 0, lab), false);
        for (const auto& f : seq.frames) {
          fsum += f.feature;
          fsq += f.feature.cwiseAbs2();
          fcount += 1;
          isum += f.imu.samples.colwise().sum().transpose();
          isq += f.imu.samples.cwiseAbs2().colwise().sum().transpose();
          icount += static_cast<double>(f.imu.samples.rows());
        }
      }
    }
  }
  const Eigen::VectorXd fmean = fsum / fcount;
  feature_noise_ = ((fsq / fcount - fmean.cwiseAbs2()).cwiseMax(0.0).cwiseSqrt()) * config_.noise_fraction;
  const Eigen::Matrix<double, 6, 1> imean = isum / icount;
  imu_noise_ = ((isq / icount - imean.cwiseAbs2()).cwiseMax(0.0).cwiseSqrt()) * config_.noise_fraction;
}

std::uint64_t Simulator::sequence_seed(const InitialState& state, int user, int trial, Label label) const {
  std::uint64_t s = splitmix64(config_.seed);
  s = splitmix64(s ^ static_cast<std::uint64_t>(initial_state_index(state)));
  s = splitmix64(s ^ static_cast<std::uint64_t>(user));
  s = splitmix64(s ^ static_cast<std::uint64_t>(trial));
  return splitmix64(s ^ static_cast<std::uint64_t>(label));
}

Sequence Simulator::synth_sequence(const InitialState& state, int user, int trial, Label label, std::uint64_t seed,
                                   bool noise) const {
  initial_state_index(state);
  if (user < 0 || user >= 5) throw std::invalid_argument("user must be in 0..4, got " + std::to_string(user));
  if (trial < 0) throw std::invalid_argument("trial must be >= 0");

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Jitter jit;
  jit.rate = 0.93 + 0.14 * unit(rng);
  jit.approach = 0.9 + 0.2 * unit(rng);
  jit.onset_shift = static_cast<int>(unit(rng) * 3.0) - 1;

  const Trajectory tr = integrate(config_, state, user, label, jit);
  const int n = config_.imu_samples;
  const double h = config_.frame_interval / n;
  std::normal_distribution<double> normal(0.0, 1.0);

  Sequence seq;
  seq.label = label;
  seq.state = state;
  seq.user = user;
  seq.trial = trial;
  seq.spill_onset = tr.spill_onset;
  char id[64];
  std::snprintf(id, sizeof id, "s%02d_u%d_t%d_%s", initial_state_index(state), user, trial,
                label == Label::success ? "succ" : "fail");
  seq.id = id;

  for (int t = 1; t <= config_.frames; ++t) {
    Frame f;
    const int at = t * n;
    f.imu.samples.resize(n, 6);
    for (int i = 1; i <= n; ++i) {
      const auto j = static_cast<std::size_t>((t - 1) * n + i);
      const Eigen::Vector3d acc = (tr.position[j + 1] - 2.0 * tr.position[j] + tr.position[j - 1]) / (h * h);
      const Eigen::Vector3d gyro = (tr.rotation[j] - tr.rotation[j - 1]) / h;
      f.imu.samples.row(i - 1) << acc.transpose(), gyro.transpose();
    }
    f.feature = projection_ * descriptor(state, tr, at);
    f.pose.position = tr.position[static_cast<std::size_t>(at)];
    for (int k = 0; k < 3; ++k) f.pose.rotation(k) = wrap_degrees(tr.rotation[static_cast<std::size_t>(at)](k));

    if (noise) {
      for (Eigen::Index i = 0; i < f.imu.samples.rows(); ++i)
        for (int k = 0; k < 6; ++k) f.imu.samples(i, k) += imu_noise_(k) * normal(rng);
      for (Eigen::Index k = 0; k < f.feature.size(); ++k) f.feature(k) += feature_noise_(k) * normal(rng);
    }
    seq.frames.push_back(std::move(f));
  }
  return seq;
}

Dataset Simulator::synth_dataset() const {
  Dataset ds;
  ds.sequences.reserve(config_.sequence_count());
  for (Label label : {Label::success, Label::failure}) {
    for (int user = 0; user < config_.users; ++user) {
      for (int trial = 0; trial < config_.trials; ++trial) {
        for (int s = 0; s < kNumInitialStates; ++s) {
          const auto state = initial_state_from_index(s);
          ds.sequences.push_back(synth_sequence(state, user, trial, label, sequence_seed(state, user, trial, label)));
        }
      }
    }
  }
  return ds;
}

Dataset synth_dataset(const SimConfig& config) { return Simulator(config).synth_dataset(); }

}  // namespace pourmon
