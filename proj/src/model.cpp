#include "pourmon/model.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>

namespace pourmon {

namespace {

constexpr double kDegToRad = std::numbers::pi / 180.0;

enum CellIndex { kImg = 0, kPos = 1, kRot = 2, kFuse = 3 };

LstmParams make_lstm(const std::string& name, int input, int hidden) {
  LstmParams p;
  p.weight = {name + ".weight", Matrix::Zero(4 * hidden, input + hidden)};
  p.bias = {name + ".bias", Matrix::Zero(4 * hidden, 1)};
  p.input_size = input;
  p.hidden_size = hidden;
  return p;
}

DenseParams make_dense(const std::string& name, int input, int output) {
  return {{name + ".weight", Matrix::Zero(output, input)}, {name + ".bias", Matrix::Zero(output, 1)}};
}

void fill_uniform(Matrix& m, double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (Eigen::Index i = 0; i < m.size(); ++i) m(i) = dist(rng);
}

void check_dims(const char* what, const Var& x, Eigen::Index rows) {
  if (x.rows() != rows)
    throw nc::ShapeError(std::string(what) + ": expected " + std::to_string(rows) + " rows, got " + x.shape());
}

BoundDense bind_dense(Tape& tape, const DenseParams& p, bool trainable) {
  if (trainable) return {tape.param(p.weight), tape.param(p.bias)};
  return {tape.frozen(p.weight), tape.frozen(p.bias)};
}

Var mlp(const std::vector<BoundDense>& layers, const Var& x) {
  Var a = x;
  for (std::size_t k = 0; k + 1 < layers.size(); ++k) a = nc::tanh(dense(layers[k], a));
  return dense(layers.back(), a);
}

}  // namespace

std::string to_string(EncoderKind kind) { return kind == EncoderKind::hier ? "hier" : "flat2"; }

EncoderKind parse_encoder(const std::string& name) {
  if (name == "hier") return EncoderKind::hier;
  if (name == "flat2") return EncoderKind::flat2;
  throw std::invalid_argument("unknown encoder '" + name + "' (expected hier | flat2)");
}

std::string to_string(Group g) {
  switch (g) {
    case Group::encoder: return "encoder";
    case Group::generator: return "generator";
    case Group::discriminator: return "discriminator";
    case Group::classifier: return "classifier";
    case Group::monitor: return "monitor";
  }
  return "?";
}

ModelConfig ModelConfig::desk() { return {}; }

ModelConfig ModelConfig::large() {
  ModelConfig c;
  c.feature_dim = 2048;
  c.imu_samples = 38;
  c.img_hidden = 512;
  c.pos_hidden = 128;
  c.rot_hidden = 128;
  c.fuse_hidden = 512;
  c.gen_width = 128;
  c.disc_width = 128;
  c.monitor_width = 256;
  return c;
}

double wrap_degrees(double deg) {
  double w = std::fmod(deg, 360.0);
  if (w < 0) w += 360.0;
  if (w >= 360.0) w -= 360.0;
  return w;
}

Eigen::Matrix<double, 6, 1> Pose::packed() const {
  Eigen::Matrix<double, 6, 1> v;
  v << position, rotation;
  return v;
}

Pose Pose::from_packed(const Eigen::Ref<const Eigen::VectorXd>& v) {
  if (v.size() != 6) throw nc::ShapeError("Pose::from_packed: expected 6 values, got " + std::to_string(v.size()));
  Pose p;
  p.position = v.head<3>();
  for (int k = 0; k < 3; ++k) p.rotation(k) = wrap_degrees(v(3 + k));
  return p;
}

ImuStreams split_imu(const ImuWindow& window) {
  const Eigen::Index n = window.samples.rows();
  ImuStreams out{Eigen::VectorXd(3 * n), Eigen::VectorXd(3 * n)};
  for (Eigen::Index i = 0; i < n; ++i) {
    out.acceleration.segment<3>(3 * i) = window.samples.row(i).head<3>().transpose();
    out.angular_velocity.segment<3>(3 * i) = window.samples.row(i).tail<3>().transpose();
  }
  return out;
}

InputNorm InputNorm::identity(int feature_dim) {
  InputNorm n;
  n.feature_mean = Eigen::VectorXd::Zero(feature_dim);
  n.feature_scale = Eigen::VectorXd::Ones(feature_dim);
  return n;
}

// ---------------------------------------------------------------------------

ModelParams::ModelParams(const ModelConfig& config) : norm(InputNorm::identity(config.feature_dim)), config_(config) {
  const int imu = config.imu_stream_dim();
  if (config.encoder == EncoderKind::hier) {
    encoder.push_back(make_lstm("enc.img", config.feature_dim, config.img_hidden));
    encoder.push_back(make_lstm("enc.pos", imu, config.pos_hidden));
    encoder.push_back(make_lstm("enc.rot", imu, config.rot_hidden));
    encoder.push_back(
        make_lstm("enc.fuse", config.img_hidden + config.pos_hidden + config.rot_hidden, config.fuse_hidden));
  } else {
    encoder.push_back(make_lstm("enc.lower", config.feature_dim + 2 * imu, config.fuse_hidden));
    encoder.push_back(make_lstm("enc.upper", config.fuse_hidden, config.fuse_hidden));
  }
  const int h = config.fuse_hidden;
  generator = {make_dense("gen.0", h, config.gen_width), make_dense("gen.1", config.gen_width, config.gen_width),
               make_dense("gen.2", config.gen_width, 6)};
  discriminator = {make_dense("disc.0", h + 9, config.disc_width),
                   make_dense("disc.1", config.disc_width, config.disc_width),
                   make_dense("disc.2", config.disc_width, 1)};
  classifier = make_dense("cls", h, config.num_classes);
  monitor = {make_dense("mon.0", h + 1, config.monitor_width), make_dense("mon.1", config.monitor_width, 2)};
}

ModelParams ModelParams::initialized(const ModelConfig& config, std::uint64_t seed) {
  ModelParams p(config);
  std::mt19937_64 rng(seed);
  // all() yields (weight, bias) pairs; the bias shares its weight's fan-in.
  auto params = p.all();
  for (std::size_t k = 0; k + 1 < params.size(); k += 2) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(params[k]->value.cols()));
    fill_uniform(params[k]->value, bound, rng);
    fill_uniform(params[k + 1]->value, bound, rng);
  }
  for (auto& cell : p.encoder) cell.bias.value.middleRows(cell.hidden_size, cell.hidden_size).setOnes();
  return p;
}

std::vector<Parameter*> ModelParams::all() {
  std::vector<Parameter*> out;
  for (auto g : kAllGroups) {
    auto part = group(g);
    out.insert(out.end(), part.begin(), part.end());
  }
  return out;
}

std::vector<const Parameter*> ModelParams::all() const {
  auto mut = const_cast<ModelParams*>(this)->all();
  return {mut.begin(), mut.end()};
}

std::vector<Parameter*> ModelParams::group(Group g) {
  std::vector<Parameter*> out;
  auto add_dense = [&out](DenseParams& d) {
    out.push_back(&d.weight);
    out.push_back(&d.bias);
  };
  switch (g) {
    case Group::encoder:
      for (auto& c : encoder) {
        out.push_back(&c.weight);
        out.push_back(&c.bias);
      }
      break;
    case Group::generator:
      for (auto& d : generator) add_dense(d);
      break;
    case Group::discriminator:
      for (auto& d : discriminator) add_dense(d);
      break;
    case Group::classifier: add_dense(classifier); break;
    case Group::monitor:
      for (auto& d : monitor) add_dense(d);
      break;
  }
  return out;
}

Parameter* ModelParams::find(const std::string& name) {
  for (auto* p : all())
    if (p->name == name) return p;
  return nullptr;
}

std::size_t ModelParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto* p : all()) n += static_cast<std::size_t>(p->value.size());
  return n;
}

// ---------------------------------------------------------------------------

BoundModel bind(Tape& tape, const ModelParams& params, std::span<const Group> trainable) {
  auto is_trainable = [&](Group g) {
    for (auto t : trainable)
      if (t == g) return true;
    return false;
  };
  BoundModel m;
  m.config = params.config();
  const bool enc = is_trainable(Group::encoder);
  for (const auto& cell : params.encoder) {
    BoundLstm b;
    b.weight = enc ? tape.param(cell.weight) : tape.frozen(cell.weight);
    b.bias = enc ? tape.param(cell.bias) : tape.frozen(cell.bias);
    b.hidden_size = cell.hidden_size;
    m.encoder.push_back(b);
  }
  for (const auto& d : params.generator) m.generator.push_back(bind_dense(tape, d, is_trainable(Group::generator)));
  for (const auto& d : params.discriminator)
    m.discriminator.push_back(bind_dense(tape, d, is_trainable(Group::discriminator)));
  m.classifier = bind_dense(tape, params.classifier, is_trainable(Group::classifier));
  for (const auto& d : params.monitor) m.monitor.push_back(bind_dense(tape, d, is_trainable(Group::monitor)));
  return m;
}

LstmState zero_lstm_state(Tape& tape, int hidden, Eigen::Index batch) {
  return {tape.constant(Matrix::Zero(hidden, batch)), tape.constant(Matrix::Zero(hidden, batch))};
}

LstmState lstm_step(const BoundLstm& cell, const Var& x, const LstmState& state) {
  const int h = cell.hidden_size;
  const Eigen::Index expected_in = cell.weight.cols() - h;
  check_dims("lstm_step input", x, expected_in);
  check_dims("lstm_step hidden", state.h, h);
  check_dims("lstm_step cell", state.c, h);
  if (x.cols() != state.h.cols())
    throw nc::ShapeError("lstm_step: batch mismatch " + x.shape() + " vs " + state.h.shape());

  const Var gates = nc::add(nc::matmul(cell.weight, nc::concat_rows({x, state.h})), cell.bias);
  const Var i = nc::sigmoid(nc::slice_rows(gates, 0, h));
  const Var f = nc::sigmoid(nc::slice_rows(gates, h, h));
  const Var g = nc::tanh(nc::slice_rows(gates, 2 * h, h));
  const Var o = nc::sigmoid(nc::slice_rows(gates, 3 * h, h));
  const Var c = nc::add(nc::mul(f, state.c), nc::mul(i, g));
  return {nc::mul(o, nc::tanh(c)), c};
}

EncoderState initial_encoder_state(Tape& tape, const ModelConfig& config, Eigen::Index batch) {
  EncoderState s;
  if (config.encoder == EncoderKind::hier) {
    for (int hidden : {config.img_hidden, config.pos_hidden, config.rot_hidden, config.fuse_hidden})
      s.cells.push_back(zero_lstm_state(tape, hidden, batch));
  } else {
    s.cells.push_back(zero_lstm_state(tape, config.fuse_hidden, batch));
    s.cells.push_back(zero_lstm_state(tape, config.fuse_hidden, batch));
  }
  return s;
}

EncoderState encode_step(const BoundModel& model, const Var& feature, const Var& acceleration,
                         const Var& angular_velocity, const EncoderState& state) {
  const auto& cfg = model.config;
  check_dims("encode_step feature", feature, cfg.feature_dim);
  check_dims("encode_step acceleration", acceleration, cfg.imu_stream_dim());
  check_dims("encode_step angular velocity", angular_velocity, cfg.imu_stream_dim());
  if (state.cells.size() != model.encoder.size())
    throw nc::ShapeError("encode_step: state has " + std::to_string(state.cells.size()) + " cells, encoder has " +
                         std::to_string(model.encoder.size()));

  EncoderState next;
  if (cfg.encoder == EncoderKind::hier) {
    next.cells.resize(4);
    next.cells[kImg] = lstm_step(model.encoder[kImg], feature, state.cells[kImg]);
    next.cells[kPos] = lstm_step(model.encoder[kPos], acceleration, state.cells[kPos]);
    next.cells[kRot] = lstm_step(model.encoder[kRot], angular_velocity, state.cells[kRot]);
    const Var fused_in = nc::concat_rows({next.cells[kImg].h, next.cells[kPos].h, next.cells[kRot].h});
    next.cells[kFuse] = lstm_step(model.encoder[kFuse], fused_in, state.cells[kFuse]);
  } else {
    const Var raw = nc::concat_rows({feature, acceleration, angular_velocity});
    next.cells.resize(2);
    next.cells[0] = lstm_step(model.encoder[0], raw, state.cells[0]);
    next.cells[1] = lstm_step(model.encoder[1], next.cells[0].h, state.cells[1]);
  }
  return next;
}

Var dense(const BoundDense& layer, const Var& x) { return nc::add(nc::matmul(layer.weight, x), layer.bias); }

Var generate_trajectory(const BoundModel& model, const Var& h) {
  check_dims("generate_trajectory", h, model.config.fuse_hidden);
  const Var raw = mlp(model.generator, h);
  // Rotation rows come out of the last layer in radians.
  return nc::concat_rows({nc::slice_rows(raw, 0, 3), nc::scale(nc::slice_rows(raw, 3, 3), 1.0 / kDegToRad)});
}

Var encode_pose(const Var& pose) {
  check_dims("encode_pose", pose, 6);
  const Var rot = nc::scale(nc::slice_rows(pose, 3, 3), kDegToRad);
  return nc::concat_rows({nc::slice_rows(pose, 0, 3), nc::sin(rot), nc::cos(rot)});
}

Var discriminate(const BoundModel& model, const Var& h, const Var& pose) {
  check_dims("discriminate", h, model.config.fuse_hidden);
  return nc::sigmoid(mlp(model.discriminator, nc::concat_rows({h, encode_pose(pose)})));
}

Var classify_initial_state(const BoundModel& model, const Var& h) {
  check_dims("classify_initial_state", h, model.config.fuse_hidden);
  return nc::softmax(dense(model.classifier, h));
}

std::vector<int> argmax_classes(const Matrix& q) {
  std::vector<int> out(static_cast<std::size_t>(q.cols()));
  for (Eigen::Index c = 0; c < q.cols(); ++c) {
    Eigen::Index best = 0;
    for (Eigen::Index r = 1; r < q.rows(); ++r)
      if (q(r, c) > q(best, c)) best = r;
    out[static_cast<std::size_t>(c)] = static_cast<int>(best);
  }
  return out;
}

Var monitor_step(const BoundModel& model, const Var& h, const Var& d) {
  check_dims("monitor_step", h, model.config.fuse_hidden);
  check_dims("monitor_step score", d, 1);
  const Var hidden = nc::tanh(dense(model.monitor[0], nc::concat_rows({h, d})));
  // Row 1 of the two-way softmax is the success class.
  return nc::slice_rows(nc::softmax(dense(model.monitor[1], hidden)), 1, 1);
}

BatchInputs make_batch(std::span<const std::vector<Frame>* const> sequences, const InputNorm& norm) {
  if (sequences.empty()) throw std::invalid_argument("make_batch: empty batch");
  const auto& first = *sequences.front();
  const int frames = static_cast<int>(first.size());
  const Eigen::Index d = first.front().feature.size();
  const Eigen::Index n = first.front().imu.samples.rows();
  if (norm.feature_mean.size() != d)
    throw nc::ShapeError("make_batch: normalizer expects " + std::to_string(norm.feature_mean.size()) +
                         " features, sequence has " + std::to_string(d));

  BatchInputs b;
  b.batch = static_cast<Eigen::Index>(sequences.size());
  for (int t = 0; t < frames; ++t) {
    Matrix f(d, b.batch), acc(3 * n, b.batch), gyro(3 * n, b.batch), pose(6, b.batch);
    for (Eigen::Index s = 0; s < b.batch; ++s) {
      const auto& seq = *sequences[static_cast<std::size_t>(s)];
      if (static_cast<int>(seq.size()) != frames)
        throw nc::ShapeError("make_batch: sequences differ in length");
      const Frame& fr = seq[static_cast<std::size_t>(t)];
      if (fr.feature.size() != d || fr.imu.samples.rows() != n)
        throw nc::ShapeError("make_batch: frame dimensions differ within batch");
      f.col(s) = ((fr.feature - norm.feature_mean).array() / norm.feature_scale.array()).matrix();
      for (Eigen::Index i = 0; i < n; ++i) {
        for (int k = 0; k < 3; ++k) {
          acc(3 * i + k, s) = (fr.imu.samples(i, k) - norm.imu_mean(k)) / norm.imu_scale(k);
          gyro(3 * i + k, s) = (fr.imu.samples(i, 3 + k) - norm.imu_mean(3 + k)) / norm.imu_scale(3 + k);
        }
      }
      pose.col(s) = fr.pose.packed();
    }
    b.features.push_back(std::move(f));
    b.acceleration.push_back(std::move(acc));
    b.angular_velocity.push_back(std::move(gyro));
    b.poses.push_back(std::move(pose));
  }
  return b;
}

std::vector<Var> encode_sequence(Tape& tape, const BoundModel& model, const BatchInputs& inputs) {
  if (inputs.frames() < 2) throw std::invalid_argument("encode_sequence: need at least 2 frames");
  EncoderState state = initial_encoder_state(tape, model.config, inputs.batch);
  std::vector<Var> hidden;
  for (int t = 0; t + 1 < inputs.frames(); ++t) {
    state = encode_step(model, tape.constant(inputs.features[t]), tape.constant(inputs.acceleration[t]),
                        tape.constant(inputs.angular_velocity[t]), state);
    hidden.push_back(state.fused());
  }
  return hidden;
}

}  // namespace pourmon
