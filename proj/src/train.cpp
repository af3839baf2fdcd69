#include "pourmon/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>
#include <stdexcept>

namespace pourmon {

namespace {

std::vector<const std::vector<Frame>*> frame_lists(std::span<const Sequence* const> batch) {
  std::vector<const std::vector<Frame>*> out;
  out.reserve(batch.size());
  for (const auto* s : batch) out.push_back(&s->frames);
  return out;
}

std::vector<double> success_mask(std::span<const Sequence* const> batch, bool success_only) {
  std::vector<double> m;
  for (const auto* s : batch) m.push_back(!success_only || s->success() ? 1.0 : 0.0);
  return m;
}

bool any(std::span<const double> mask) {
  return std::any_of(mask.begin(), mask.end(), [](double v) { return v != 0; });
}

GradientMap select(const GradientMap& grads, std::span<Parameter* const> params) {
  GradientMap out;
  for (const auto* p : params) out.emplace(p->name, grads.at(p->name));
  return out;
}

void require_nonempty(std::span<const Sequence* const> batch) {
  if (batch.empty()) throw std::invalid_argument("train_step: empty batch");
}

std::runtime_error step_failure(const char* phase, long step, std::size_t batch, const std::exception& e) {
  return std::runtime_error(std::string(phase) + " failed at optimizer step " + std::to_string(step + 1) +
                            " (batch of " + std::to_string(batch) + "): " + e.what());
}

}  // namespace

std::string to_string(Variant v) {
  switch (v) {
    case Variant::vanilla: return "vanilla";
    case Variant::iosc: return "iosc";
    case Variant::tf: return "tf";
    case Variant::noadv: return "noadv";
    case Variant::full: return "full";
  }
  return "?";
}

Variant parse_variant(const std::string& name) {
  for (auto v : {Variant::vanilla, Variant::iosc, Variant::tf, Variant::noadv, Variant::full})
    if (to_string(v) == name) return v;
  throw std::invalid_argument("unknown variant '" + name + "' (expected vanilla | iosc | tf | noadv | full)");
}

VariantSpec variant_spec(Variant v) {
  switch (v) {
    case Variant::vanilla: return {false, false, false, false};
    case Variant::iosc: return {false, false, true, false};
    case Variant::tf: return {true, true, false, true};
    case Variant::noadv: return {true, false, true, false};
    case Variant::full: return {true, true, true, true};
  }
  return {};
}

double TrainConfig::effective_lambda() const { return variant_spec(variant).adversarial ? lambda : 0.0; }

void TrainConfig::validate() const {
  if (lambda < 0) throw std::invalid_argument("TrainConfig: lambda must be >= 0");
  if (!(learning_rate > 0)) throw std::invalid_argument("TrainConfig: learning_rate must be positive");
  if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
  if (epochs < 1) throw std::invalid_argument("TrainConfig: epochs must be >= 1");
  if (!(clip_norm > 0)) throw std::invalid_argument("TrainConfig: clip_norm must be positive");
  if (model.num_classes != kNumInitialStates && model.num_classes != kNumFillStates)
    throw std::invalid_argument("TrainConfig: num_classes must be 36 or 9");
}

int class_label(const Sequence& seq, int num_classes) {
  if (num_classes == kNumInitialStates) return initial_state_index(seq.state);
  if (num_classes == kNumFillStates) return fill_state_index(seq.state);
  throw std::invalid_argument("class_label: unsupported class count " + std::to_string(num_classes));
}

InputNorm fit_input_norm(const Dataset& data, std::span<const std::size_t> indices) {
  if (indices.empty()) throw std::invalid_argument("fit_input_norm: no sequences");
  const auto d = data.sequences.at(indices.front()).frames.front().feature.size();
  Eigen::VectorXd fsum = Eigen::VectorXd::Zero(d), fsq = Eigen::VectorXd::Zero(d);
  Eigen::Matrix<double, 6, 1> isum = Eigen::Matrix<double, 6, 1>::Zero(), isq = isum;
  double fn = 0, in = 0;
  for (auto idx : indices) {
    for (const auto& f : data.sequences.at(idx).frames) {
      fsum += f.feature;
      fsq += f.feature.cwiseAbs2();
      fn += 1;
      isum += f.imu.samples.colwise().sum().transpose();
      isq += f.imu.samples.cwiseAbs2().colwise().sum().transpose();
      in += static_cast<double>(f.imu.samples.rows());
    }
  }
  InputNorm norm;
  norm.feature_mean = fsum / fn;
  norm.feature_scale = (fsq / fn - norm.feature_mean.cwiseAbs2()).cwiseMax(0.0).cwiseSqrt().cwiseMax(1e-6);
  norm.imu_mean = isum / in;
  norm.imu_scale = (isq / in - norm.imu_mean.cwiseAbs2()).cwiseMax(0.0).cwiseSqrt().cwiseMax(1e-6);
  return norm;
}

// ---------------------------------------------------------------------------

Trainer::Trainer(TrainConfig config, ModelParams params) : config_(std::move(config)), params_(std::move(params)) {
  config_.validate();
  if (!(params_.config() == config_.model))
    throw std::invalid_argument("Trainer: parameter shapes do not match the model configuration");
  joint_opt_.hyper.learning_rate = config_.learning_rate;
  disc_opt_.hyper.learning_rate = config_.learning_rate;
}

double Trainer::discriminator_phase(std::span<const Sequence* const> batch) {
  require_nonempty(batch);
  const VariantSpec spec = variant_spec(config_.variant);
  const auto mask = success_mask(batch, config_.aux_success_only);
  if (!spec.adversarial || !any(mask)) return 0.0;

  try {
    Tape tape;
    const Group trainable[] = {Group::discriminator};
    const BoundModel model = pourmon::bind(tape, params_, trainable);
    const auto frames = frame_lists(batch);
    const BatchInputs inputs = make_batch(frames, params_.norm);
    const auto hidden = encode_sequence(tape, model, inputs);

    std::vector<Var> real, fake;
    for (std::size_t t = 0; t < hidden.size(); ++t) {
      const Var h = tape.stop_gradient(hidden[t]);
      const Var generated = tape.stop_gradient(generate_trajectory(model, h));
      real.push_back(discriminate(model, h, tape.constant(inputs.poses[t + 1])));
      fake.push_back(discriminate(model, h, generated));
    }
    const Var loss = masked_mean(discriminator_loss(real, fake), mask);
    GradientMap grads = tape.backward(loss);
    auto params = params_.group(Group::discriminator);
    GradientMap selected = select(grads, params);
    nc::clip_global_norm(selected, config_.clip_norm);
    nc::adam_step<Scalar>(params, selected, disc_opt_);
    return loss.item();
  } catch (const nc::NonFiniteError& e) {
    throw step_failure("discriminator phase", disc_opt_.step, batch.size(), e);
  }
}

LossBundle Trainer::joint_phase(std::span<const Sequence* const> batch) {
  require_nonempty(batch);
  const VariantSpec spec = variant_spec(config_.variant);
  const auto aux_mask = success_mask(batch, config_.aux_success_only);
  const std::vector<double> all_mask(batch.size(), 1.0);
  const bool has_aux = any(aux_mask);

  std::vector<Group> trainable = {Group::encoder, Group::monitor};
  if (spec.forecasting && has_aux) trainable.push_back(Group::generator);
  if (spec.classification && has_aux) trainable.push_back(Group::classifier);

  LossBundle out;
  out.lambda = config_.effective_lambda();
  try {
    Tape tape;
    const BoundModel model = pourmon::bind(tape, params_, trainable);
    const auto frames = frame_lists(batch);
    const BatchInputs inputs = make_batch(frames, params_.norm);
    const auto hidden = encode_sequence(tape, model, inputs);
    const Var half = tape.constant(Matrix::Constant(1, inputs.batch, 0.5));

    std::vector<Var> targets, predicted, fake_scores, success;
    for (std::size_t t = 0; t < hidden.size(); ++t) {
      const Var& h = hidden[t];
      Var score = half;
      if (spec.forecasting) {
        const Var pred = generate_trajectory(model, h);
        targets.push_back(tape.constant(inputs.poses[t + 1]));
        predicted.push_back(pred);
        if (spec.adversarial) fake_scores.push_back(discriminate(model, h, pred));
        if (spec.score_to_monitor) score = discriminate(model, h, tape.stop_gradient(pred));
      }
      success.push_back(monitor_step(model, h, score));
    }

    std::vector<int> labels;
    for (const auto* s : batch) labels.push_back(s->success() ? 1 : 0);
    Var total = masked_mean(monitoring_loss(success, labels), all_mask);
    out.monitoring = total.item();

    if (spec.forecasting) {
      const Var reg = masked_mean(regression_loss(targets, predicted), aux_mask);
      Var adv = tape.constant(Matrix::Zero(1, 1));
      if (spec.adversarial) adv = masked_mean(adversarial_loss(fake_scores), aux_mask);
      const Var gen = generator_loss(reg, adv, out.lambda);
      out.regression = reg.item();
      out.adversarial = adv.item();
      out.generator = gen.item();
      total = nc::add(total, gen);
    }
    if (spec.classification) {
      std::vector<int> classes;
      for (const auto* s : batch) classes.push_back(class_label(*s, config_.model.num_classes));
      const Var q = classify_initial_state(model, hidden.back());
      const Var cls = masked_mean(classification_loss(q, classes), aux_mask);
      out.classification = cls.item();
      total = nc::add(total, cls);
    }

    GradientMap grads = tape.backward(total);
    std::vector<Parameter*> params;
    for (auto g : trainable) {
      auto part = params_.group(g);
      params.insert(params.end(), part.begin(), part.end());
    }
    GradientMap selected = select(grads, params);
    nc::clip_global_norm(selected, config_.clip_norm);
    nc::adam_step<Scalar>(params, selected, joint_opt_);
  } catch (const nc::NonFiniteError& e) {
    throw step_failure("joint phase", joint_opt_.step, batch.size(), e);
  }
  return out;
}

LossBundle Trainer::train_step(std::span<const Sequence* const> batch) {
  require_nonempty(batch);
  const double dis = discriminator_phase(batch);
  LossBundle out = joint_phase(batch);
  out.discriminator = dis;
  return out;
}

// ---------------------------------------------------------------------------

Checkpoint train_run(const TrainConfig& config, const Dataset& data, std::span<const std::size_t> train_indices,
                     FoldTag fold, const std::function<void(int, const LossBundle&)>& on_epoch) {
  config.validate();
  if (train_indices.empty()) throw std::invalid_argument("train_run: training fold is empty");

  ModelParams params = ModelParams::initialized(config.model, config.seed);
  params.norm = fit_input_norm(data, train_indices);
  Trainer trainer(config, std::move(params));

  std::vector<std::size_t> order(train_indices.begin(), train_indices.end());
  std::mt19937_64 rng(config.seed ^ 0x5348554646ull);
  std::vector<LossBundle> log;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    LossBundle mean;
    mean.lambda = config.effective_lambda();
    int batches = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
      std::vector<const Sequence*> batch;
      for (std::size_t k = start; k < stop; ++k) batch.push_back(&data.sequences.at(order[k]));
      LossBundle l;
      try {
        l = trainer.train_step(batch);
      } catch (const std::runtime_error& e) {
        throw std::runtime_error("epoch " + std::to_string(epoch + 1) + ": " + e.what());
      }
      mean.regression += l.regression;
      mean.adversarial += l.adversarial;
      mean.generator += l.generator;
      mean.discriminator += l.discriminator;
      mean.classification += l.classification;
      mean.monitoring += l.monitoring;
      ++batches;
    }
    for (double* v : {&mean.regression, &mean.adversarial, &mean.generator, &mean.discriminator,
                      &mean.classification, &mean.monitoring})
      *v /= batches;
    log.push_back(mean);
    if (on_epoch) on_epoch(epoch + 1, mean);
  }
  return {config, trainer.params(), std::move(fold), std::move(log)};
}

Inference infer(const ModelParams& params, Variant variant, std::span<const Sequence* const> batch) {
  if (batch.empty()) throw std::invalid_argument("infer: empty batch");
  const VariantSpec spec = variant_spec(variant);
  Tape tape;
  const BoundModel model = pourmon::bind(tape, params, {});
  const auto frames = frame_lists(batch);
  const BatchInputs inputs = make_batch(frames, params.norm);
  const auto hidden = encode_sequence(tape, model, inputs);
  const auto steps = static_cast<Eigen::Index>(hidden.size());

  Inference out;
  out.success_prob.resize(steps, inputs.batch);
  out.scores = Matrix::Constant(steps, inputs.batch, 0.5);
  const Var half = tape.constant(Matrix::Constant(1, inputs.batch, 0.5));
  for (Eigen::Index t = 0; t < steps; ++t) {
    const Var& h = hidden[static_cast<std::size_t>(t)];
    Var score = half;
    if (spec.forecasting) {
      const Var pred = generate_trajectory(model, h);
      out.predicted_pose.push_back(pred.value());
      if (spec.score_to_monitor) score = discriminate(model, h, pred);
    }
    out.scores.row(t) = score.value();
    out.success_prob.row(t) = monitor_step(model, h, score).value();
  }
  out.class_probs = classify_initial_state(model, hidden.back()).value();
  return out;
}

std::string format_log_line(int epoch, const LossBundle& l) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%d\t%.6f\t%.6f\t%.6f\t%.6f\t%.6f\t%.6f", epoch, l.regression, l.adversarial,
                l.generator, l.discriminator, l.classification, l.monitoring);
  return buf;
}

}  // namespace pourmon
