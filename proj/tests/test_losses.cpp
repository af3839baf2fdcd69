#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "pourmon/losses.hpp"

#include <cmath>
#include <cstring>
#include <random>

using namespace pourmon;

namespace {

Var pose_col(Tape& t, double px, double py, double pz, double rx, double ry, double rz) {
  Matrix m(6, 1);
  m << px, py, pz, rx, ry, rz;
  return t.constant(m);
}

std::vector<Var> steps_of(Tape& t, int n, double value, Eigen::Index batch = 1) {
  std::vector<Var> out;
  for (int k = 0; k < n; ++k) out.push_back(t.constant(Matrix::Constant(1, batch, value)));
  return out;
}

const double kLn2 = 0.69314718055994530942;

}  // namespace

TEST_CASE("pose_distance examples") {
  Tape t;
  const Var a = pose_col(t, 0.1, 0.2, 0.3, 10, 20, 30);
  CHECK(pose_distance(a, a).item() == 0.0);
  CHECK(pose_distance(pose_col(t, 0, 0, 0, 5, 5, 5), pose_col(t, 1, 0, 0, 5, 5, 5)).item() ==
        doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  const double d = pose_distance(pose_col(t, 0, 0, 0, 359, 0, 0), pose_col(t, 0, 0, 0, 0, 0, 0)).item();
  CHECK(d == doctest::Approx(1.523e-4).epsilon(1e-3));
  CHECK(std::abs(d - 1.5230484360873042e-4) < 1e-15);
}

TEST_CASE("pose_distance is 360-periodic in rotation and non-negative") {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> u(-500, 500);
  for (int trial = 0; trial < 50; ++trial) {
    Tape t;
    Matrix x(6, 1), y(6, 1);
    for (int k = 0; k < 6; ++k) {
      x(k) = u(rng) / (k < 3 ? 100 : 1);
      y(k) = u(rng) / (k < 3 ? 100 : 1);
    }
    const double base = pose_distance(t.constant(x), t.constant(y)).item();
    CHECK(base >= 0);
    Matrix x2 = x, y2 = y;
    x2(3 + trial % 3) += 360.0;
    y2(3 + (trial + 1) % 3) -= 720.0;
    CHECK(pose_distance(t.constant(x2), t.constant(y2)).item() == doctest::Approx(base).epsilon(1e-10));
    // Zero iff positions match and angles agree modulo 360.
    Matrix z = x;
    z(4) += 1080.0;
    CHECK(pose_distance(t.constant(x), t.constant(z)).item() < 1e-20);
  }
}

TEST_CASE("scalar pose_distance agrees with the tape version") {
  Pose a, b;
  a.position = {0.1, 0.4, -0.2};
  a.rotation = {350, 20, 90};
  b.position = {0.0, 0.5, 0.0};
  b.rotation = {10, 25, 80};
  Tape t;
  CHECK(pose_distance(a, b) == doctest::Approx(pose_distance(t.constant(a.packed()), t.constant(b.packed())).item()));
}

TEST_CASE("regression loss") {
  Tape t;
  const std::vector<Var> x = {pose_col(t, 0, 0, 0, 0, 0, 0), pose_col(t, 1, 1, 1, 10, 10, 10)};
  CHECK(regression_loss(x, x).value()(0) == 0.0);
  // Each step is 1/3 away: the mean over steps is 1/3 again.
  const std::vector<Var> y = {pose_col(t, 1, 0, 0, 0, 0, 0), pose_col(t, 1, 1, 0, 10, 10, 10)};
  CHECK(regression_loss(x, y).value()(0) == doctest::Approx(1.0 / 3.0));
  CHECK_THROWS_AS(regression_loss(std::span<const Var>{}, std::span<const Var>{}), std::invalid_argument);
}

TEST_CASE("adversarial loss") {
  Tape t;
  CHECK(adversarial_loss(steps_of(t, 5, 1.0)).value()(0) == doctest::Approx(0.0).epsilon(1e-11));
  CHECK(std::abs(adversarial_loss(steps_of(t, 5, 0.5)).value()(0) - kLn2) < 1e-9);
  CHECK(adversarial_loss(steps_of(t, 5, 0.0)).value()(0) == doctest::Approx(-std::log(1e-12)));
  CHECK(adversarial_loss(steps_of(t, 5, 0.0)).value()(0) == doctest::Approx(27.631021));
}

TEST_CASE("generator loss") {
  Tape t;
  const Var reg = t.constant(Matrix::Constant(1, 1, 0.2)), adv = t.constant(Matrix::Constant(1, 1, 0.3));
  CHECK(generator_loss(reg, adv, 0.0).item() == 0.2);
  CHECK(generator_loss(reg, adv, 1.0).item() == doctest::Approx(0.5).epsilon(1e-15));
  CHECK_THROWS_AS(generator_loss(reg, adv, -0.1), std::invalid_argument);
}

TEST_CASE("L_Gen identity holds bitwise") {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0, 3);
  for (int trial = 0; trial < 100; ++trial) {
    Tape t;
    const double r = u(rng), a = u(rng), lambda = u(rng);
    const double got = generator_loss(t.constant(Matrix::Constant(1, 1, r)), t.constant(Matrix::Constant(1, 1, a)),
                                      lambda)
                           .item();
    const double want = r + lambda * a;
    CHECK(std::memcmp(&got, &want, sizeof got) == 0);
  }
}

TEST_CASE("discriminator loss") {
  Tape t;
  CHECK(discriminator_loss(steps_of(t, 4, 1.0), steps_of(t, 4, 0.0)).value()(0) ==
        doctest::Approx(0.0).epsilon(1e-11));
  CHECK(std::abs(discriminator_loss(steps_of(t, 4, 0.5), steps_of(t, 4, 0.5)).value()(0) - 2 * kLn2) < 1e-9);
  CHECK_THROWS_AS(discriminator_loss(std::span<const Var>{}, std::span<const Var>{}), std::invalid_argument);
}

TEST_CASE("classification loss") {
  Tape t;
  const Var q36 = t.constant(Matrix::Constant(36, 2, 1.0 / 36));
  const int z36[] = {0, 35};
  CHECK(std::abs(classification_loss(q36, z36).value()(0) - std::log(36.0)) < 1e-9);
  CHECK(std::abs(classification_loss(q36, z36).value()(1) - 3.583519) < 1e-6);
  const Var q9 = t.constant(Matrix::Constant(9, 1, 1.0 / 9));
  const int z9[] = {4};
  CHECK(std::abs(classification_loss(q9, z9).value()(0) - 2.197225) < 1e-6);
  Matrix sure = Matrix::Zero(9, 1);
  sure(4) = 1.0;
  CHECK(classification_loss(t.constant(sure), z9).value()(0) == doctest::Approx(0.0).epsilon(1e-11));
  const int bad[] = {9};
  CHECK_THROWS_AS(classification_loss(q9, bad), std::out_of_range);
  const int negative[] = {-1};
  CHECK_THROWS_AS(classification_loss(q9, negative), std::out_of_range);
}

TEST_CASE("monitoring loss") {
  Tape t;
  const int labels[] = {1, 0};
  CHECK(std::abs(monitoring_loss(steps_of(t, 15, 0.5, 2), labels).value()(0) - kLn2) < 1e-9);
  // Perfect, confident predictions.
  std::vector<Var> y;
  Matrix perfect(1, 2);
  perfect << 1.0, 0.0;
  for (int k = 0; k < 15; ++k) y.push_back(t.constant(perfect));
  CHECK(monitoring_loss(y, labels).value().maxCoeff() < 1e-11);
  // A success column contributes -log y' at every step.
  Matrix half(1, 2);
  half << 0.8, 0.8;
  std::vector<Var> z(3, t.constant(half));
  CHECK(monitoring_loss(z, labels).value()(0) == doctest::Approx(-std::log(0.8)));
  CHECK(monitoring_loss(z, labels).value()(1) == doctest::Approx(-std::log(0.2)));
}

TEST_CASE("masked mean") {
  Tape t;
  Parameter row{"row", (Matrix(1, 4) << 1.0, 2.0, 3.0, 10.0).finished()};
  const double mask[] = {1, 1, 1, 0};
  const Var m = masked_mean(t.param(row), mask);
  CHECK(m.item() == doctest::Approx(2.0));
  const auto g = t.backward(m);
  CHECK(g.at("row")(3) == 0.0);
  CHECK(g.at("row")(0) == doctest::Approx(1.0 / 3));
  const double none[] = {0, 0, 0, 0};
  Tape t2;
  const Var z = masked_mean(t2.param(row), none);
  CHECK(z.item() == 0.0);
  CHECK(t2.backward(z).at("row").isZero(0));
}
