#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "pourmon/model.hpp"

#include <cmath>
#include <numbers>
#include <random>

using namespace pourmon;

namespace {

constexpr Group kEverything[] = {Group::encoder, Group::generator, Group::discriminator, Group::classifier,
                                 Group::monitor};

Matrix random_matrix(std::mt19937_64& rng, Eigen::Index r, Eigen::Index c, double scale = 1.0) {
  std::normal_distribution<double> d(0.0, scale);
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m(i) = d(rng);
  return m;
}

ImuWindow window_of(int n, double start) {
  ImuWindow w;
  w.samples.resize(n, 6);
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < 6; ++k) w.samples(i, k) = start + 6 * i + k;
  return w;
}

}  // namespace

TEST_CASE("split_imu keeps sample order per stream") {
  const auto s38 = split_imu(window_of(38, 0));
  CHECK(s38.acceleration.size() == 114);
  CHECK(s38.angular_velocity.size() == 114);
  CHECK(s38.acceleration(3) == 6.0);     // sample 1, a1
  CHECK(s38.angular_velocity(5) == 11.0);  // sample 1, a6

  const auto one = split_imu(window_of(1, 1));
  CHECK(one.acceleration == Eigen::Vector3d(1, 2, 3));
  CHECK(one.angular_velocity == Eigen::Vector3d(4, 5, 6));
}

TEST_CASE("lstm_step with zero weights from a zero cell stays at zero") {
  Tape t;
  LstmParams p;
  p.weight = {"w", Matrix::Zero(4 * 5, 3 + 5)};
  p.bias = {"b", Matrix::Zero(20, 1)};
  const BoundLstm cell{t.param(p.weight), t.param(p.bias), 5};
  const LstmState s = lstm_step(cell, t.constant(Matrix::Random(3, 2)), zero_lstm_state(t, 5, 2));
  CHECK(s.h.value().isZero(0));
  CHECK(s.c.value().isZero(0));
  CHECK(s.h.rows() == 5);
  CHECK_THROWS_AS(lstm_step(cell, t.constant(Matrix::Zero(4, 2)), zero_lstm_state(t, 5, 2)), nc::ShapeError);
}

TEST_CASE("large encoder shapes") {
  const ModelConfig cfg = ModelConfig::large();
  const ModelParams p(cfg);
  CHECK(p.encoder[3].input_size == 768);
  CHECK(p.encoder[3].hidden_size == 512);
  CHECK(p.monitor[0].weight.value.rows() == 256);
  CHECK(p.monitor[0].weight.value.cols() == 512 + 1);
  CHECK(p.generator[0].weight.value.rows() == 128);
  CHECK(p.generator[1].weight.value.rows() == 128);
  CHECK(p.generator[2].weight.value.rows() == 6);

  Tape t;
  const BoundModel m = bind(t, p, {});
  const EncoderState s = encode_step(m, t.constant(Matrix::Zero(2048, 1)), t.constant(Matrix::Zero(114, 1)),
                                     t.constant(Matrix::Zero(114, 1)), initial_encoder_state(t, cfg, 1));
  CHECK(s.fused().rows() == 512);
}

TEST_CASE("encode_step is deterministic and checks feature length") {
  const ModelConfig cfg;
  const ModelParams p = ModelParams::initialized(cfg, 4);
  std::mt19937_64 rng(8);
  const Matrix f = random_matrix(rng, 32, 3), a = random_matrix(rng, 114, 3), b = random_matrix(rng, 114, 3);
  Tape t;
  const BoundModel m = bind(t, p, {});
  const auto s0 = initial_encoder_state(t, cfg, 3);
  const auto x = encode_step(m, t.constant(f), t.constant(a), t.constant(b), s0);
  const auto y = encode_step(m, t.constant(f), t.constant(a), t.constant(b), s0);
  CHECK(x.fused().value() == y.fused().value());
  CHECK_THROWS_AS(encode_step(m, t.constant(Matrix::Zero(31, 3)), t.constant(a), t.constant(b), s0),
                  nc::ShapeError);
}

TEST_CASE("flat2 consumes the raw concatenation") {
  ModelConfig cfg;
  cfg.encoder = EncoderKind::flat2;
  const ModelParams p(cfg);
  REQUIRE(p.encoder.size() == 2);
  CHECK(p.encoder[0].input_size == cfg.feature_dim + 6 * cfg.imu_samples);
  CHECK(p.encoder[1].input_size == cfg.fuse_hidden);
}

TEST_CASE("late fusion: IMU perturbation leaves the image stream untouched") {
  const ModelConfig cfg;
  const ModelParams p = ModelParams::initialized(cfg, 2);
  std::mt19937_64 rng(1);
  const Matrix f = random_matrix(rng, 32, 2), a = random_matrix(rng, 114, 2), b = random_matrix(rng, 114, 2);
  Tape t;
  const BoundModel m = bind(t, p, {});
  const auto s0 = initial_encoder_state(t, cfg, 2);
  const auto base = encode_step(m, t.constant(f), t.constant(a), t.constant(b), s0);
  const auto bumped = encode_step(m, t.constant(f), t.constant(a + random_matrix(rng, 114, 2)),
                                  t.constant(b + random_matrix(rng, 114, 2)), s0);
  CHECK(base.cells[0].h.value() == bumped.cells[0].h.value());
  CHECK(base.cells[1].h.value() != bumped.cells[1].h.value());
  CHECK(base.fused().value() != bumped.fused().value());
}

TEST_CASE("generator: six outputs, zero weights give the bias") {
  ModelConfig cfg;
  ModelParams p(cfg);
  Matrix bias(6, 1);
  bias << 0.1, -0.2, 0.3, 0.5, -1.0, 2.0;
  p.generator[2].bias.value = bias;
  Tape t;
  const BoundModel m = bind(t, p, {});
  const Var out = generate_trajectory(m, t.constant(Matrix::Random(cfg.fuse_hidden, 1)));
  REQUIRE(out.rows() == 6);
  for (int k = 0; k < 3; ++k) CHECK(out.value()(k) == bias(k));
  // Rotation rows leave the last layer in radians.
  for (int k = 3; k < 6; ++k) CHECK(out.value()(k) == doctest::Approx(bias(k) * 180.0 / std::numbers::pi));
}

TEST_CASE("discriminator: zero weights give 0.5, rotations are periodic") {
  const ModelConfig cfg;
  Tape t;
  {
    const BoundModel m = bind(t, ModelParams(cfg), {});
    CHECK(discriminate(m, t.constant(Matrix::Random(cfg.fuse_hidden, 1)), t.constant(Matrix::Random(6, 1))).item() ==
          0.5);
  }
  const ModelParams p = ModelParams::initialized(cfg, 9);
  const BoundModel m = bind(t, p, {});
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 10; ++trial) {
    const Matrix h = random_matrix(rng, cfg.fuse_hidden, 1);
    Matrix x = random_matrix(rng, 6, 1, 100.0);
    const double d0 = discriminate(m, t.constant(h), t.constant(x)).item();
    CHECK(d0 > 0);
    CHECK(d0 < 1);
    x(3 + trial % 3) += 360.0;
    CHECK(discriminate(m, t.constant(h), t.constant(x)).item() == doctest::Approx(d0).epsilon(1e-12));
  }
}

TEST_CASE("classifier: zero logits are uniform, argmax breaks ties low") {
  for (int classes : {36, 9}) {
    ModelConfig cfg;
    cfg.num_classes = classes;
    Tape t;
    const BoundModel m = bind(t, ModelParams(cfg), {});
    const Var q = classify_initial_state(m, t.constant(Matrix::Random(cfg.fuse_hidden, 2)));
    CHECK(q.rows() == classes);
    CHECK(q.value()(0, 0) == doctest::Approx(1.0 / classes));
    CHECK(argmax_classes(q.value()) == std::vector<int>{0, 0});
  }
}

TEST_CASE("argmax is invariant to a constant logit shift") {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    Tape t;
    const Matrix logits = random_matrix(rng, 36, 3);
    const auto a = argmax_classes(nc::softmax(t.constant(logits)).value());
    const auto b = argmax_classes(nc::softmax(t.constant(logits.array() + 123.0)).value());
    CHECK(a == b);
  }
}

TEST_CASE("monitor: zero weights give 0.5, input is H + 1") {
  const ModelConfig cfg;
  const ModelParams p(cfg);
  CHECK(p.monitor[0].weight.value.cols() == cfg.fuse_hidden + 1);
  Tape t;
  const BoundModel m = bind(t, p, {});
  const Var y = monitor_step(m, t.constant(Matrix::Random(cfg.fuse_hidden, 4)), t.constant(Matrix::Constant(1, 4, 0.5)));
  CHECK(y.value() == Matrix::Constant(1, 4, 0.5));
}

TEST_CASE("parameter set is a function of the configuration") {
  for (const ModelConfig& cfg : {ModelConfig::desk(), ModelConfig::large()}) {
    const auto a = ModelParams(cfg).parameter_count();
    CHECK(a == ModelParams(cfg).parameter_count());
    CHECK(a == ModelParams::initialized(cfg, 77).parameter_count());
  }
  // Desk scale, counted by hand.
  const std::size_t enc = 4 * 64 * (32 + 64 + 1) + 2 * 4 * 16 * (114 + 16 + 1) + 4 * 64 * (96 + 64 + 1);
  const std::size_t gen = 32 * 65 + 32 * 33 + 6 * 33;
  const std::size_t disc = 32 * (64 + 9 + 1) + 32 * 33 + 33;
  const std::size_t cls = 36 * 65;
  const std::size_t mon = 64 * 66 + 2 * 65;
  CHECK(ModelParams(ModelConfig::desk()).parameter_count() == enc + gen + disc + cls + mon);
}

TEST_CASE("initialization is seeded and bounded") {
  const ModelConfig cfg;
  const ModelParams a = ModelParams::initialized(cfg, 3), b = ModelParams::initialized(cfg, 3),
                    c = ModelParams::initialized(cfg, 4);
  CHECK(a.encoder[0].weight.value == b.encoder[0].weight.value);
  CHECK(a.encoder[0].weight.value != c.encoder[0].weight.value);
  for (const auto* p : a.all()) {
    if (p->name.ends_with(".bias") && p->name.starts_with("enc.")) continue;
    const auto fan_in = p->name.ends_with(".bias") ? 0 : p->value.cols();
    if (fan_in) CHECK(p->value.cwiseAbs().maxCoeff() <= 1.0 / std::sqrt(static_cast<double>(fan_in)));
  }
  for (const auto& cell : a.encoder) {
    const int h = cell.hidden_size;
    CHECK(cell.bias.value.middleRows(h, h) == Matrix::Ones(h, 1));
  }
}

TEST_CASE("frozen groups receive no gradient") {
  const ModelConfig cfg;
  const ModelParams p = ModelParams::initialized(cfg, 5);
  Tape t;
  const Group trainable[] = {Group::generator};
  const BoundModel m = bind(t, p, trainable);
  const Var h = t.constant(Matrix::Random(cfg.fuse_hidden, 2));
  const Var loss = nc::add(nc::sum(generate_trajectory(m, h)), nc::sum(discriminate(m, h, generate_trajectory(m, h))));
  const auto g = t.backward(loss);
  CHECK(g.contains("gen.0.weight"));
  CHECK_FALSE(g.contains("disc.0.weight"));
}

TEST_CASE("heads stay finite on large inputs") {
  const ModelConfig cfg;
  const ModelParams p = ModelParams::initialized(cfg, 6);
  Tape t;
  const BoundModel m = bind(t, p, kEverything);
  const Var h = t.constant(Matrix::Constant(cfg.fuse_hidden, 1, 1e3));
  CHECK(generate_trajectory(m, h).value().allFinite());
  const double d = discriminate(m, h, t.constant(Matrix::Constant(6, 1, 1e4))).item();
  CHECK(std::isfinite(d));
  CHECK(classify_initial_state(m, h).value().allFinite());
  CHECK(std::isfinite(monitor_step(m, h, t.constant(Matrix::Constant(1, 1, d))).item()));
}

TEST_CASE("pose wrapping") {
  CHECK(wrap_degrees(-1.0) == doctest::Approx(359.0));
  CHECK(wrap_degrees(720.0) == 0.0);
  Eigen::Matrix<double, 6, 1> v;
  v << 1, 2, 3, 370, -10, 180;
  const Pose p = Pose::from_packed(v);
  CHECK(p.rotation(0) == doctest::Approx(10.0));
  CHECK(p.rotation(1) == doctest::Approx(350.0));
  CHECK(p.position == Eigen::Vector3d(1, 2, 3));
}
