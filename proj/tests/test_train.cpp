#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "pourmon/train.hpp"

#include <cmath>
#include <algorithm>
#include <cstring>
#include <limits>
#include <map>
#include <numeric>

using namespace pourmon;

namespace {

const Dataset& data() {
  static const Dataset d = synth_dataset(SimConfig::desk_cross_trial());
  return d;
}

/// k successes followed by k failures, spread across states.
std::vector<const Sequence*> mixed_batch(int k, bool successes = true, bool failures = true) {
  std::vector<const Sequence*> out;
  for (const auto& s : data().sequences) {
    const bool want = s.success() ? successes : failures;
    const int have = static_cast<int>(std::count_if(out.begin(), out.end(),
                                                    [&](const Sequence* x) { return x->success() == s.success(); }));
    if (want && have < k && initial_state_index(s.state) % 5 == have % 5) out.push_back(&s);
  }
  return out;
}

std::vector<Matrix> snapshot(ModelParams& p, Group g) {
  std::vector<Matrix> out;
  for (auto* q : p.group(g)) out.push_back(q->value);
  return out;
}

bool bitwise_same(const std::vector<Matrix>& a, const std::vector<Matrix>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].size() != b[i].size()) return false;
    if (std::memcmp(a[i].data(), b[i].data(), sizeof(double) * static_cast<std::size_t>(a[i].size())) != 0)
      return false;
  }
  return true;
}

Trainer make_trainer(Variant v, std::uint64_t seed = 3) {
  TrainConfig cfg;
  cfg.variant = v;
  ModelParams p = ModelParams::initialized(cfg.model, seed);
  std::vector<std::size_t> all(data().size());
  std::iota(all.begin(), all.end(), 0);
  p.norm = fit_input_norm(data(), all);
  return Trainer(cfg, std::move(p));
}

std::map<Group, std::vector<Matrix>> snapshot_all(ModelParams& p) {
  std::map<Group, std::vector<Matrix>> out;
  for (auto g : kAllGroups) out[g] = snapshot(p, g);
  return out;
}

}  // namespace

TEST_CASE("variant parsing") {
  for (auto v : {Variant::vanilla, Variant::iosc, Variant::tf, Variant::noadv, Variant::full})
    CHECK(parse_variant(to_string(v)) == v);
  CHECK_THROWS_AS(parse_variant("adv"), std::invalid_argument);
}

TEST_CASE("vanilla trains only the encoder and monitor") {
  Trainer tr = make_trainer(Variant::vanilla);
  auto before = snapshot_all(tr.params());
  const auto batch = mixed_batch(4);
  const LossBundle l = tr.train_step(batch);
  auto after = snapshot_all(tr.params());
  for (auto g : {Group::generator, Group::discriminator, Group::classifier}) CHECK(bitwise_same(before[g], after[g]));
  CHECK_FALSE(bitwise_same(before[Group::encoder], after[Group::encoder]));
  CHECK_FALSE(bitwise_same(before[Group::monitor], after[Group::monitor]));
  CHECK(l.regression == 0);
  CHECK(l.adversarial == 0);
  CHECK(l.generator == 0);
  CHECK(l.discriminator == 0);
  CHECK(l.classification == 0);
  CHECK(l.monitoring > 0);
}

TEST_CASE("noadv: L_Gen equals L_reg and the discriminator never moves") {
  Trainer tr = make_trainer(Variant::noadv);
  auto before = snapshot(tr.params(), Group::discriminator);
  const LossBundle l = tr.train_step(mixed_batch(4));
  CHECK(l.lambda == 0.0);
  CHECK(std::memcmp(&l.generator, &l.regression, sizeof(double)) == 0);
  CHECK(l.regression > 0);
  CHECK(l.discriminator == 0);
  CHECK(bitwise_same(before, snapshot(tr.params(), Group::discriminator)));
}

TEST_CASE("full variant on failures only updates the monitor path") {
  Trainer tr = make_trainer(Variant::full);
  auto before = snapshot_all(tr.params());
  const LossBundle l = tr.train_step(mixed_batch(6, false, true));
  auto after = snapshot_all(tr.params());
  CHECK(l.regression == 0);
  CHECK(l.adversarial == 0);
  CHECK(l.discriminator == 0);
  CHECK(l.classification == 0);
  for (auto g : {Group::generator, Group::discriminator, Group::classifier}) CHECK(bitwise_same(before[g], after[g]));
  CHECK_FALSE(bitwise_same(before[Group::monitor], after[Group::monitor]));
}

TEST_CASE("stop-gradient contract between the two phases") {
  for (Variant v : {Variant::full, Variant::tf}) {
    Trainer tr = make_trainer(v);
    const auto batch = mixed_batch(4);

    auto before = snapshot_all(tr.params());
    tr.joint_phase(batch);
    auto after = snapshot_all(tr.params());
    CHECK(bitwise_same(before[Group::discriminator], after[Group::discriminator]));
    CHECK_FALSE(bitwise_same(before[Group::encoder], after[Group::encoder]));
    CHECK_FALSE(bitwise_same(before[Group::generator], after[Group::generator]));

    before = after;
    CHECK(tr.discriminator_phase(batch) > 0);
    after = snapshot_all(tr.params());
    for (auto g : {Group::encoder, Group::generator, Group::classifier, Group::monitor})
      CHECK(bitwise_same(before[g], after[g]));
    CHECK_FALSE(bitwise_same(before[Group::discriminator], after[Group::discriminator]));
  }
}

TEST_CASE("the discriminator objective is trainable") {
  // Fakes sit at a fixed pose far from every real one, so real and fake
  // pairs are linearly separable.
  Trainer tr = make_trainer(Variant::full, 5);
  for (auto& layer : tr.params().generator) layer.weight.value.setZero();
  tr.params().generator[2].bias.value << 2.0, -2.0, 2.0, 0.0, 0.0, 0.0;
  const auto batch = mixed_batch(6, true, false);
  auto frozen = snapshot(tr.params(), Group::encoder);

  auto accuracy = [&] {
    Tape tape;
    const BoundModel m = bind(tape, tr.params(), {});
    std::vector<const std::vector<Frame>*> frames;
    for (const auto* s : batch) frames.push_back(&s->frames);
    const BatchInputs in = make_batch(frames, tr.params().norm);
    const auto hidden = encode_sequence(tape, m, in);
    int correct = 0, total = 0;
    for (std::size_t t = 0; t < hidden.size(); ++t) {
      const Matrix real = discriminate(m, hidden[t], tape.constant(in.poses[t + 1])).value();
      const Matrix fake = discriminate(m, hidden[t], generate_trajectory(m, hidden[t])).value();
      correct += static_cast<int>((real.array() > 0.5).count() + (fake.array() < 0.5).count());
      total += static_cast<int>(real.size() + fake.size());
    }
    return static_cast<double>(correct) / total;
  };
  for (int step = 0; step < 200; ++step) tr.discriminator_phase(batch);
  const double acc = accuracy();
  MESSAGE("real/fake accuracy after 200 steps: " << acc);
  CHECK(acc >= 0.9);
  CHECK(bitwise_same(frozen, snapshot(tr.params(), Group::encoder)));
}

TEST_CASE("monitoring loss with a zero head on a balanced batch is ln 2") {
  TrainConfig cfg;
  cfg.variant = Variant::vanilla;
  ModelParams p = ModelParams::initialized(cfg.model, 1);
  for (auto* q : p.group(Group::monitor)) q->value.setZero();
  Trainer tr(cfg, p);
  const LossBundle l = tr.joint_phase(mixed_batch(5));
  CHECK(std::abs(l.monitoring - std::log(2.0)) < 1e-6);
}

TEST_CASE("train_run is deterministic and logs every epoch") {
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.batch_size = 8;
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < data().size(); i += 15) idx.push_back(i);
  const Checkpoint a = train_run(cfg, data(), idx), b = train_run(cfg, data(), idx);
  CHECK(a.log.size() == 2);
  const auto pa = a.params.all(), pb = b.params.all();
  REQUIRE(pa.size() == pb.size());
  for (std::size_t k = 0; k < pa.size(); ++k)
    CHECK(std::memcmp(pa[k]->value.data(), pb[k]->value.data(), sizeof(double) * pa[k]->value.size()) == 0);
  CHECK(a.log[1].monitoring == b.log[1].monitoring);
  cfg.seed = 2;
  const Checkpoint c = train_run(cfg, data(), idx);
  CHECK(c.params.all()[0]->value != a.params.all()[0]->value);
}

TEST_CASE("training errors") {
  Trainer tr = make_trainer(Variant::full);
  CHECK_THROWS_AS(tr.train_step({}), std::invalid_argument);

  TrainConfig cfg;
  cfg.lambda = -1;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = TrainConfig{};
  cfg.model.num_classes = 10;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  CHECK_THROWS_AS(train_run(TrainConfig{}, data(), {}), std::invalid_argument);

  tr.params().monitor[1].weight.value(0, 0) = std::numeric_limits<double>::quiet_NaN();
  try {
    tr.train_step(mixed_batch(2));
    FAIL("expected a non-finite failure");
  } catch (const std::runtime_error& e) {
    const std::string msg = e.what();
    CHECK(msg.find("optimizer step") != std::string::npos);
    CHECK(msg.find("non-finite") != std::string::npos);
  }
}

TEST_CASE("class labels per regime") {
  Sequence s;
  s.state = {3, 80, 50};
  CHECK(class_label(s, 36) == 35);
  CHECK(class_label(s, 9) == 8);
  CHECK_THROWS(class_label(s, 4));
}

TEST_CASE("inference shapes and constant scores for vanilla") {
  Trainer tr = make_trainer(Variant::vanilla);
  const auto batch = mixed_batch(2);
  const Inference inf = infer(tr.params(), Variant::vanilla, batch);
  CHECK(inf.success_prob.rows() == 15);
  CHECK(inf.success_prob.cols() == 4);
  CHECK(inf.scores == Matrix::Constant(15, 4, 0.5));
  CHECK(inf.predicted_pose.empty());
  const Inference full = infer(tr.params(), Variant::full, batch);
  CHECK(full.predicted_pose.size() == 15);
  CHECK((full.scores.array() != 0.5).any());
  CHECK(std::abs(full.class_probs.col(0).sum() - 1.0) < 1e-12);
}

TEST_CASE("log line layout") {
  LossBundle l{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 1.0};
  CHECK(format_log_line(7, l) == "7\t0.100000\t0.200000\t0.300000\t0.400000\t0.500000\t0.600000");
}
