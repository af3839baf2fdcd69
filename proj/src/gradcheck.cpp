#include "pourmon/gradcheck.hpp"

#include "pourmon/losses.hpp"
#include "pourmon/model.hpp"

#include <algorithm>
#include <cstdio>
#include <numbers>

namespace pourmon {

namespace {

// Small shapes keep the full suite well under a second per instance.
ModelConfig tiny_config(EncoderKind encoder) {
  ModelConfig c;
  c.feature_dim = 4;
  c.imu_samples = 2;
  c.img_hidden = 3;
  c.pos_hidden = 2;
  c.rot_hidden = 2;
  c.fuse_hidden = 3;
  c.gen_width = 4;
  c.disc_width = 4;
  c.monitor_width = 4;
  c.num_classes = 5;
  c.encoder = encoder;
  return c;
}

constexpr Eigen::Index kBatch = 2;

Matrix uniform(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols, double lo, double hi) {
  std::uniform_real_distribution<double> d(lo, hi);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m(i) = d(rng);
  return m;
}

Matrix uniform(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols) { return uniform(rng, rows, cols, -1, 1); }

/// Rows 0-2 positions in m, rows 3-5 rotations anywhere in degrees.
Matrix random_pose(std::mt19937_64& rng) {
  Matrix p(6, kBatch);
  p.topRows(3) = uniform(rng, 3, kBatch);
  p.bottomRows(3) = uniform(rng, 3, kBatch, -400, 400);
  return p;
}

/// Adds a leaf and returns its index.
std::size_t leaf(GradProbe& p, std::string name, Matrix value) {
  p.leaves.push_back({std::move(name), std::move(value)});
  return p.leaves.size() - 1;
}

/// Random projection to a scalar so every output coordinate matters.
Var project(Tape& tape, const Var& out, const Matrix& weights) {
  return nc::sum(nc::mul(out, tape.constant(weights)));
}

void add_dense(GradProbe& p, std::mt19937_64& rng, const std::string& name, int in, int out) {
  leaf(p, name + ".weight", uniform(rng, out, in));
  leaf(p, name + ".bias", uniform(rng, out, 1));
}

BoundDense dense_at(Tape& t, const std::vector<Parameter>& l, std::size_t k) { return {t.param(l[k]), t.param(l[k + 1])}; }

void add_lstm(GradProbe& p, std::mt19937_64& rng, const std::string& name, int in, int hidden) {
  leaf(p, name + ".weight", uniform(rng, 4 * hidden, in + hidden));
  leaf(p, name + ".bias", uniform(rng, 4 * hidden, 1));
}

BoundLstm lstm_at(Tape& t, const std::vector<Parameter>& l, std::size_t k, int hidden) {
  return {t.param(l[k]), t.param(l[k + 1]), hidden};
}

/// Encoder over three frames for either encoder kind; leaves are the cell
/// weights followed by per-frame inputs.
GradComponent encoder_component(const std::string& name, EncoderKind kind) {
  return {name, [kind](std::mt19937_64& rng) {
            const ModelConfig c = tiny_config(kind);
            const int imu = c.imu_stream_dim();
            GradProbe p;
            std::vector<int> hidden;
            if (kind == EncoderKind::hier) {
              add_lstm(p, rng, "img", c.feature_dim, c.img_hidden);
              add_lstm(p, rng, "pos", imu, c.pos_hidden);
              add_lstm(p, rng, "rot", imu, c.rot_hidden);
              add_lstm(p, rng, "fuse", c.img_hidden + c.pos_hidden + c.rot_hidden, c.fuse_hidden);
              hidden = {c.img_hidden, c.pos_hidden, c.rot_hidden, c.fuse_hidden};
            } else {
              add_lstm(p, rng, "lower", c.feature_dim + 2 * imu, c.fuse_hidden);
              add_lstm(p, rng, "upper", c.fuse_hidden, c.fuse_hidden);
              hidden = {c.fuse_hidden, c.fuse_hidden};
            }
            const std::size_t first_input = p.leaves.size();
            constexpr int kFrames = 3;
            for (int t = 0; t < kFrames; ++t) {
              leaf(p, "F" + std::to_string(t), uniform(rng, c.feature_dim, kBatch));
              leaf(p, "A" + std::to_string(t), uniform(rng, imu, kBatch));
              leaf(p, "B" + std::to_string(t), uniform(rng, imu, kBatch));
            }
            const Matrix w = uniform(rng, c.fuse_hidden, kBatch);
            p.loss = [c, hidden, first_input, w](Tape& tape, const std::vector<Parameter>& l) {
              BoundModel m;
              m.config = c;
              for (std::size_t k = 0; k < hidden.size(); ++k) m.encoder.push_back(lstm_at(tape, l, 2 * k, hidden[k]));
              EncoderState s = initial_encoder_state(tape, c, kBatch);
              for (int t = 0; t < kFrames; ++t) {
                const std::size_t at = first_input + 3 * static_cast<std::size_t>(t);
                s = encode_step(m, tape.param(l[at]), tape.param(l[at + 1]), tape.param(l[at + 2]), s);
              }
              return project(tape, s.fused(), w);
            };
            return p;
          }};
}

/// A model holding only the dense heads, bound from leaves in add order:
/// generator (3), discriminator (3), classifier, monitor (2).
struct HeadLayout {
  ModelConfig config = tiny_config(EncoderKind::hier);
  bool generator = false, discriminator = false, classifier = false, monitor = false;
};

void add_heads(GradProbe& p, std::mt19937_64& rng, const HeadLayout& lay) {
  const auto& c = lay.config;
  const int h = c.fuse_hidden;
  if (lay.generator) {
    add_dense(p, rng, "gen.0", h, c.gen_width);
    add_dense(p, rng, "gen.1", c.gen_width, c.gen_width);
    add_dense(p, rng, "gen.2", c.gen_width, 6);
  }
  if (lay.discriminator) {
    add_dense(p, rng, "disc.0", h + 9, c.disc_width);
    add_dense(p, rng, "disc.1", c.disc_width, c.disc_width);
    add_dense(p, rng, "disc.2", c.disc_width, 1);
  }
  if (lay.classifier) add_dense(p, rng, "cls", h, c.num_classes);
  if (lay.monitor) {
    add_dense(p, rng, "mon.0", h + 1, c.monitor_width);
    add_dense(p, rng, "mon.1", c.monitor_width, 2);
  }
}

/// Binds heads from the front of the leaf list; returns the next leaf index.
std::size_t bind_heads(Tape& t, const std::vector<Parameter>& l, const HeadLayout& lay, BoundModel& m) {
  m.config = lay.config;
  std::size_t k = 0;
  auto take = [&] {
    BoundDense d = dense_at(t, l, k);
    k += 2;
    return d;
  };
  if (lay.generator)
    for (int i = 0; i < 3; ++i) m.generator.push_back(take());
  if (lay.discriminator)
    for (int i = 0; i < 3; ++i) m.discriminator.push_back(take());
  if (lay.classifier) m.classifier = take();
  if (lay.monitor)
    for (int i = 0; i < 2; ++i) m.monitor.push_back(take());
  return k;
}

GradComponent head_component(const std::string& name, HeadLayout lay,
                             std::function<Var(Tape&, const BoundModel&, const Var& h, std::mt19937_64*)> body) {
  return {name, [lay, body](std::mt19937_64& rng) {
            GradProbe p;
            add_heads(p, rng, lay);
            leaf(p, "h", uniform(rng, lay.config.fuse_hidden, kBatch));
            // Extra random constants are drawn now so the loss is a pure function.
            const std::uint64_t sub_seed = rng();
            p.loss = [lay, body, sub_seed](Tape& tape, const std::vector<Parameter>& l) {
              BoundModel m;
              const std::size_t k = bind_heads(tape, l, lay, m);
              std::mt19937_64 local(sub_seed);
              return body(tape, m, tape.param(l[k]), &local);
            };
            return p;
          }};
}

/// Steps of [1 x B] probabilities, kept away from the clamp.
void probability_steps(GradProbe& p, std::mt19937_64& rng, const std::string& prefix, int steps) {
  for (int t = 0; t < steps; ++t) leaf(p, prefix + std::to_string(t), uniform(rng, 1, kBatch, 0.05, 0.95));
}

std::vector<Var> params_range(Tape& t, const std::vector<Parameter>& l, std::size_t from, std::size_t count) {
  std::vector<Var> out;
  for (std::size_t k = 0; k < count; ++k) out.push_back(t.param(l[from + k]));
  return out;
}

constexpr int kSteps = 3;

}  // namespace

// ---------------------------------------------------------------------------

double check_probe(const GradProbe& probe, double eps, double floor) {
  GradientMap analytic;
  {
    Tape tape;
    const Var loss = probe.loss(tape, probe.leaves);
    analytic = tape.backward(loss);
  }
  double worst = 0;
  for (std::size_t k = 0; k < probe.leaves.size(); ++k) {
    std::vector<Parameter> work = probe.leaves;
    const std::function<double(const Matrix&)> f = [&](const Matrix& theta) {
      work[k].value = theta;
      Tape tape;
      return probe.loss(tape, work).item();
    };
    const Matrix numeric = nc::finite_diff_grad(f, probe.leaves[k].value, eps);
    const auto it = analytic.find(probe.leaves[k].name);
    const Matrix a = it == analytic.end() ? Matrix::Zero(numeric.rows(), numeric.cols()) : it->second;
    worst = std::max(worst, nc::max_relative_error(a, numeric, floor));
  }
  return worst;
}

std::vector<GradComponent> standard_components() {
  std::vector<GradComponent> out;

  out.push_back({"lstm_cell", [](std::mt19937_64& rng) {
                   constexpr int in = 4, hidden = 3;
                   GradProbe p;
                   add_lstm(p, rng, "cell", in, hidden);
                   leaf(p, "x", uniform(rng, in, kBatch));
                   leaf(p, "h", uniform(rng, hidden, kBatch));
                   leaf(p, "c", uniform(rng, hidden, kBatch));
                   const Matrix wh = uniform(rng, hidden, kBatch), wc = uniform(rng, hidden, kBatch);
                   p.loss = [wh, wc](Tape& tape, const std::vector<Parameter>& l) {
                     const LstmState s = lstm_step(lstm_at(tape, l, 0, hidden), tape.param(l[2]),
                                                   {tape.param(l[3]), tape.param(l[4])});
                     return nc::add(project(tape, s.h, wh), project(tape, s.c, wc));
                   };
                   return p;
                 }});

  out.push_back(encoder_component("fusion_encoder", EncoderKind::hier));
  out.push_back(encoder_component("flat2_encoder", EncoderKind::flat2));

  HeadLayout gen;
  gen.generator = true;
  out.push_back(head_component("generator", gen, [](Tape& t, const BoundModel& m, const Var& h, std::mt19937_64* r) {
    return project(t, generate_trajectory(m, h), uniform(*r, 6, kBatch));
  }));

  HeadLayout disc;
  disc.discriminator = true;
  out.push_back({"discriminator", [disc](std::mt19937_64& rng) {
                   GradProbe p;
                   add_heads(p, rng, disc);
                   leaf(p, "h", uniform(rng, disc.config.fuse_hidden, kBatch));
                   leaf(p, "pose", random_pose(rng));
                   const Matrix w = uniform(rng, 1, kBatch);
                   p.loss = [disc, w](Tape& tape, const std::vector<Parameter>& l) {
                     BoundModel m;
                     const std::size_t k = bind_heads(tape, l, disc, m);
                     return project(tape, discriminate(m, tape.param(l[k]), tape.param(l[k + 1])), w);
                   };
                   return p;
                 }});

  HeadLayout cls;
  cls.classifier = true;
  out.push_back(head_component("classifier", cls, [](Tape& t, const BoundModel& m, const Var& h, std::mt19937_64* r) {
    return project(t, classify_initial_state(m, h), uniform(*r, m.config.num_classes, kBatch));
  }));

  HeadLayout mon;
  mon.monitor = true;
  out.push_back({"monitor", [mon](std::mt19937_64& rng) {
                   GradProbe p;
                   add_heads(p, rng, mon);
                   leaf(p, "h", uniform(rng, mon.config.fuse_hidden, kBatch));
                   leaf(p, "d", uniform(rng, 1, kBatch, 0.05, 0.95));
                   const Matrix w = uniform(rng, 1, kBatch);
                   p.loss = [mon, w](Tape& tape, const std::vector<Parameter>& l) {
                     BoundModel m;
                     const std::size_t k = bind_heads(tape, l, mon, m);
                     return project(tape, monitor_step(m, tape.param(l[k]), tape.param(l[k + 1])), w);
                   };
                   return p;
                 }});

  out.push_back({"pose_distance", [](std::mt19937_64& rng) {
                   GradProbe p;
                   leaf(p, "X", random_pose(rng));
                   leaf(p, "X'", random_pose(rng));
                   const Matrix w = uniform(rng, 1, kBatch);
                   p.loss = [w](Tape& tape, const std::vector<Parameter>& l) {
                     return project(tape, pose_distance(tape.param(l[0]), tape.param(l[1])), w);
                   };
                   return p;
                 }});

  // Losses: per-sequence rows reduced through masked_mean with a random
  // partial mask, as in training.
  auto mask_for = [](std::mt19937_64& rng) {
    std::vector<double> m(kBatch, 1.0);
    m[std::uniform_int_distribution<std::size_t>(0, kBatch - 1)(rng)] = std::bernoulli_distribution(0.5)(rng);
    return m;
  };

  out.push_back({"L_reg", [mask_for](std::mt19937_64& rng) {
                   GradProbe p;
                   for (int t = 0; t < kSteps; ++t) leaf(p, "X" + std::to_string(t), random_pose(rng));
                   for (int t = 0; t < kSteps; ++t) leaf(p, "G" + std::to_string(t), random_pose(rng));
                   const auto mask = mask_for(rng);
                   p.loss = [mask](Tape& tape, const std::vector<Parameter>& l) {
                     const auto x = params_range(tape, l, 0, kSteps), g = params_range(tape, l, kSteps, kSteps);
                     return masked_mean(regression_loss(x, g), mask);
                   };
                   return p;
                 }});

  out.push_back({"L_adv", [mask_for](std::mt19937_64& rng) {
                   GradProbe p;
                   probability_steps(p, rng, "d", kSteps);
                   const auto mask = mask_for(rng);
                   p.loss = [mask](Tape& tape, const std::vector<Parameter>& l) {
                     return masked_mean(adversarial_loss(params_range(tape, l, 0, kSteps)), mask);
                   };
                   return p;
                 }});

  out.push_back({"L_Gen", [mask_for](std::mt19937_64& rng) {
                   GradProbe p;
                   for (int t = 0; t < kSteps; ++t) leaf(p, "X" + std::to_string(t), random_pose(rng));
                   for (int t = 0; t < kSteps; ++t) leaf(p, "G" + std::to_string(t), random_pose(rng));
                   probability_steps(p, rng, "d", kSteps);
                   const auto mask = mask_for(rng);
                   const double lambda = std::uniform_real_distribution<double>(0.0, 2.0)(rng);
                   p.loss = [mask, lambda](Tape& tape, const std::vector<Parameter>& l) {
                     const Var reg = masked_mean(
                         regression_loss(params_range(tape, l, 0, kSteps), params_range(tape, l, kSteps, kSteps)), mask);
                     const Var adv = masked_mean(adversarial_loss(params_range(tape, l, 2 * kSteps, kSteps)), mask);
                     return generator_loss(reg, adv, lambda);
                   };
                   return p;
                 }});

  out.push_back({"L_Dis", [mask_for](std::mt19937_64& rng) {
                   GradProbe p;
                   probability_steps(p, rng, "real", kSteps);
                   probability_steps(p, rng, "fake", kSteps);
                   const auto mask = mask_for(rng);
                   p.loss = [mask](Tape& tape, const std::vector<Parameter>& l) {
                     return masked_mean(
                         discriminator_loss(params_range(tape, l, 0, kSteps), params_range(tape, l, kSteps, kSteps)),
                         mask);
                   };
                   return p;
                 }});

  out.push_back({"L_cls", [mask_for](std::mt19937_64& rng) {
                   constexpr int classes = 5;
                   GradProbe p;
                   leaf(p, "logits", uniform(rng, classes, kBatch, -2, 2));
                   std::vector<int> labels(kBatch);
                   for (auto& z : labels) z = std::uniform_int_distribution<int>(0, classes - 1)(rng);
                   const auto mask = mask_for(rng);
                   p.loss = [labels, mask](Tape& tape, const std::vector<Parameter>& l) {
                     return masked_mean(classification_loss(nc::softmax(tape.param(l[0])), labels), mask);
                   };
                   return p;
                 }});

  out.push_back({"L_mon", [](std::mt19937_64& rng) {
                   GradProbe p;
                   probability_steps(p, rng, "y", kSteps);
                   std::vector<int> labels(kBatch);
                   for (auto& y : labels) y = std::bernoulli_distribution(0.5)(rng) ? 1 : 0;
                   p.loss = [labels](Tape& tape, const std::vector<Parameter>& l) {
                     return nc::mean(monitoring_loss(params_range(tape, l, 0, kSteps), labels));
                   };
                   return p;
                 }});

  return out;
}

GradComponent sign_bug_component() {
  return {"lstm_cell_sign_bug", [](std::mt19937_64& rng) {
            constexpr int in = 3, hidden = 2;
            GradProbe p;
            add_lstm(p, rng, "cell", in, hidden);
            leaf(p, "x", uniform(rng, in, kBatch));
            leaf(p, "h", uniform(rng, hidden, kBatch));
            leaf(p, "c", uniform(rng, hidden, kBatch));
            const Matrix w = uniform(rng, hidden, kBatch);
            p.loss = [w](Tape& tape, const std::vector<Parameter>& l) {
              const Var W = tape.param(l[0]), b = tape.param(l[1]);
              const Var x = tape.param(l[2]), h = tape.param(l[3]), c = tape.param(l[4]);
              const Var gates = nc::add(nc::matmul(W, nc::concat_rows({x, h})), b);
              // Input gate with its derivative negated.
              const Var i = nc::unary(
                  nc::slice_rows(gates, 0, hidden), [](double v) { return nc::sigmoid_scalar(v); },
                  [](double, double y) { return -y * (1 - y); });
              const Var f = nc::sigmoid(nc::slice_rows(gates, hidden, hidden));
              const Var g = nc::tanh(nc::slice_rows(gates, 2 * hidden, hidden));
              const Var o = nc::sigmoid(nc::slice_rows(gates, 3 * hidden, hidden));
              const Var c2 = nc::add(nc::mul(f, c), nc::mul(i, g));
              return project(tape, nc::mul(o, nc::tanh(c2)), w);
            };
            return p;
          }};
}

std::vector<GradcheckRow> run_gradcheck(const std::vector<GradComponent>& components, const GradcheckOptions& opt) {
  std::vector<GradcheckRow> rows;
  for (std::size_t k = 0; k < components.size(); ++k) {
    const auto& comp = components[k];
    GradcheckRow row{comp.name, opt.instances, 0.0, false};
    std::mt19937_64 rng(opt.seed * 0x9E3779B97F4A7C15ULL + k);
    for (int i = 0; i < opt.instances; ++i)
      row.max_relative_error = std::max(row.max_relative_error, check_probe(comp.make(rng), opt.eps, opt.floor));
    row.pass = row.max_relative_error < opt.tolerance;
    rows.push_back(row);
  }
  return rows;
}

std::string format_gradcheck(const std::vector<GradcheckRow>& rows, double tolerance) {
  std::string out;
  char line[160];
  std::snprintf(line, sizeof line, "%-22s %9s %14s  %s\n", "component", "instances", "max_rel_err", "status");
  out += line;
  for (const auto& r : rows) {
    std::snprintf(line, sizeof line, "%-22s %9d %14.3e  %s\n", r.component.c_str(), r.instances,
                  r.max_relative_error, r.pass ? "ok" : "FAIL");
    out += line;
  }
  const auto failed = std::count_if(rows.begin(), rows.end(), [](const auto& r) { return !r.pass; });
  std::snprintf(line, sizeof line, "%zu components, %td failed (tolerance %.0e)\n", rows.size(), failed, tolerance);
  out += line;
  return out;
}

}  // namespace pourmon
