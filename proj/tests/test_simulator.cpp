#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "pourmon/simulator.hpp"

#include <cmath>
#include <cstring>
#include <set>
#include <tuple>

using namespace pourmon;

namespace {

bool bitwise_equal(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() &&
         std::memcmp(a.data(), b.data(), sizeof(double) * static_cast<std::size_t>(a.size())) == 0;
}

bool frames_equal(const Frame& a, const Frame& b) {
  return bitwise_equal(a.feature, b.feature) && bitwise_equal(a.imu.samples, b.imu.samples) &&
         bitwise_equal(a.pose.packed(), b.pose.packed());
}

double signed_delta(double to, double from) {
  double d = std::fmod(to - from, 360.0);
  if (d > 180) d -= 360;
  if (d <= -180) d += 360;
  return d;
}

/// Plain logistic regression by gradient descent; returns test accuracy.
double logistic_probe(const Eigen::MatrixXd& xtr, const Eigen::VectorXd& ytr, const Eigen::MatrixXd& xte,
                      const Eigen::VectorXd& yte) {
  const Eigen::VectorXd mu = xtr.colwise().mean().transpose();
  const Eigen::VectorXd sd =
      ((xtr.rowwise() - mu.transpose()).array().square().colwise().mean().sqrt() + 1e-9).matrix().transpose();
  auto standardize = [&](const Eigen::MatrixXd& x) {
    Eigen::MatrixXd z = (x.rowwise() - mu.transpose()).array().rowwise() / sd.transpose().array();
    Eigen::MatrixXd out(z.rows(), z.cols() + 1);
    out << z, Eigen::VectorXd::Ones(z.rows());
    return out;
  };
  const Eigen::MatrixXd a = standardize(xtr), b = standardize(xte);
  Eigen::VectorXd w = Eigen::VectorXd::Zero(a.cols());
  for (int it = 0; it < 2000; ++it) {
    const Eigen::VectorXd p = (1.0 + (-(a * w).array()).exp()).inverse().matrix();
    w -= 0.1 * a.transpose() * (p - ytr) / static_cast<double>(a.rows());
  }
  const Eigen::VectorXd s = b * w;
  int correct = 0;
  for (Eigen::Index i = 0; i < s.size(); ++i) correct += (s(i) > 0) == (yte(i) > 0.5);
  return static_cast<double>(correct) / static_cast<double>(s.size());
}

}  // namespace

TEST_CASE("initial state index") {
  CHECK(initial_state_index({0, 10, 0}) == 0);
  CHECK(initial_state_index({3, 80, 50}) == 35);
  for (int i = 0; i < kNumInitialStates; ++i) CHECK(initial_state_index(initial_state_from_index(i)) == i);
  CHECK(fill_state_index({2, 50, 30}) == 4);
  CHECK_THROWS(initial_state_index({4, 10, 0}));
  CHECK_THROWS(initial_state_index({0, 20, 0}));
  CHECK_THROWS(initial_state_index({0, 10, 40}));
  CHECK_THROWS(initial_state_from_index(36));
}

TEST_CASE("synth_sequence is deterministic and labels are consistent") {
  const Simulator sim(SimConfig::desk_cross_trial());
  const InitialState st{1, 50, 30};
  const auto a = sim.synth_sequence(st, 0, 2, Label::failure, 99);
  const auto b = sim.synth_sequence(st, 0, 2, Label::failure, 99);
  REQUIRE(a.length() == 16);
  for (int t = 0; t < a.length(); ++t) CHECK(frames_equal(a.frames[t], b.frames[t]));
  REQUIRE(a.spill_onset);
  CHECK(*a.spill_onset >= 2);
  CHECK(*a.spill_onset <= 16);
  CHECK_FALSE(sim.synth_sequence(st, 0, 2, Label::success, 99).spill_onset);
  CHECK(a.frames.front().feature.size() == 32);
  CHECK(a.frames.front().imu.samples.rows() == 38);
}

TEST_CASE("frames before the spill onset do not reveal the label") {
  SimConfig cfg = SimConfig::desk_cross_trial();
  const Simulator sim(cfg);
  int compared = 0;
  for (int s = 0; s < kNumInitialStates; s += 5) {
    const auto st = initial_state_from_index(s);
    const auto ok = sim.synth_sequence(st, 0, 0, Label::success, 1234 + s, false);
    const auto bad = sim.synth_sequence(st, 0, 0, Label::failure, 1234 + s, false);
    const int onset = *bad.spill_onset;
    for (int k = 0; k + 2 < onset; ++k) {
      CHECK(frames_equal(ok.frames[k], bad.frames[k]));
      ++compared;
    }
    CHECK_FALSE(frames_equal(ok.frames.back(), bad.frames.back()));
  }
  CHECK(compared > 0);
}

TEST_CASE("integrated angular velocity recovers the rotation delta") {
  const Simulator sim(SimConfig::full());
  const double h = sim.config().frame_interval / sim.config().imu_samples;
  double worst = 0;
  for (int user = 0; user < 5; ++user) {
    for (int s = 0; s < kNumInitialStates; s += 7) {
      for (Label label : {Label::success, Label::failure}) {
        const auto st = initial_state_from_index(s);
        const auto seq = sim.synth_sequence(st, user, 1, label, sim.sequence_seed(st, user, 1, label), false);
        for (int k = 1; k < seq.length(); ++k) {
          const Eigen::Vector3d integrated = seq.frames[k].imu.samples.rightCols<3>().colwise().sum().transpose() * h;
          for (int a = 0; a < 3; ++a) {
            const double truth = signed_delta(seq.frames[k].pose.rotation(a), seq.frames[k - 1].pose.rotation(a));
            worst = std::max(worst, std::abs(integrated(a) - truth));
          }
        }
      }
    }
  }
  CHECK(worst < 0.5);
}

TEST_CASE("dataset sizes and coverage") {
  CHECK(SimConfig::full().sequence_count() == 1800);
  CHECK(SimConfig::desk_cross_user().sequence_count() == 360);
  CHECK(SimConfig::desk_cross_trial().sequence_count() == 360);

  const Dataset d = synth_dataset(SimConfig::desk_cross_user());
  REQUIRE(d.size() == 360);
  std::set<std::tuple<int, int, int, int>> seen;
  std::size_t successes = 0;
  std::set<std::string> ids;
  for (const auto& s : d.sequences) {
    CHECK(seen.emplace(initial_state_index(s.state), s.user, s.trial, static_cast<int>(s.label)).second);
    successes += s.success();
    ids.insert(s.id);
  }
  CHECK(successes * 2 == d.size());
  CHECK(ids.size() == d.size());
}

TEST_CASE("user styles are pairwise distinct") {
  const SimConfig cfg;
  std::set<double> rates;
  for (const auto& s : cfg.styles) rates.insert(s.tilt_rate);
  CHECK(rates.size() == 5);
}

TEST_CASE("invalid configurations are rejected") {
  SimConfig c;
  c.frames = 1;
  CHECK_THROWS(Simulator{c});
  c = SimConfig{};
  c.users = 6;
  CHECK_THROWS(Simulator{c});
  c = SimConfig{};
  c.noise_fraction = -0.1;
  CHECK_THROWS(Simulator{c});
  const Simulator sim{SimConfig{}};
  CHECK_THROWS(sim.synth_sequence({0, 10, 0}, 5, 0, Label::success, 1));
}

TEST_CASE("mean visual feature separates the labels on a held-out trial") {
  const Dataset d = synth_dataset(SimConfig::desk_cross_trial());
  std::vector<Eigen::VectorXd> xtr, xte;
  std::vector<double> ytr, yte;
  for (const auto& s : d.sequences) {
    Eigen::VectorXd m = Eigen::VectorXd::Zero(s.frames.front().feature.size());
    for (const auto& f : s.frames) m += f.feature / s.length();
    (s.trial == 0 ? xte : xtr).push_back(m);
    (s.trial == 0 ? yte : ytr).push_back(s.success() ? 1.0 : 0.0);
  }
  auto stack = [](const std::vector<Eigen::VectorXd>& rows) {
    Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()), rows.front().size());
    for (std::size_t i = 0; i < rows.size(); ++i) m.row(static_cast<Eigen::Index>(i)) = rows[i].transpose();
    return m;
  };
  const double acc = logistic_probe(stack(xtr), Eigen::Map<Eigen::VectorXd>(ytr.data(), ytr.size()), stack(xte),
                                    Eigen::Map<Eigen::VectorXd>(yte.data(), yte.size()));
  MESSAGE("held-out probe accuracy " << acc);
  CHECK(acc > 0.70);
}
