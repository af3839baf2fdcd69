#include "pourmon/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>

namespace pourmon {

namespace {

int identity_of(const Sequence& s, Scheme scheme) {
  switch (scheme) {
    case Scheme::cross_trial: return s.trial;
    case Scheme::cross_container: return s.state.container;
    case Scheme::cross_user: return s.user;
  }
  return -1;
}

std::string identity_name(int id, Scheme scheme) {
  if (scheme == Scheme::cross_container) return std::string(1, static_cast<char>('b' + id));
  return std::to_string(id);
}

std::string fmt(const std::optional<double>& v, const char* spec) {
  if (!v) return "N/A";
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, *v);
  return buf;
}

}  // namespace

std::string to_string(Scheme s) {
  switch (s) {
    case Scheme::cross_trial: return "cross-trial";
    case Scheme::cross_container: return "cross-container";
    case Scheme::cross_user: return "cross-user";
  }
  return "?";
}

Scheme parse_scheme(const std::string& name) {
  for (auto s : {Scheme::cross_trial, Scheme::cross_container, Scheme::cross_user})
    if (to_string(s) == name) return s;
  throw std::invalid_argument("unknown scheme '" + name + "' (expected cross-trial | cross-container | cross-user)");
}

int scheme_num_classes(Scheme s) { return s == Scheme::cross_container ? kNumFillStates : kNumInitialStates; }

std::vector<Fold> make_folds(const Dataset& data, Scheme scheme) {
  const int expected = scheme == Scheme::cross_container ? kNumContainers : 5;
  std::map<int, std::vector<std::size_t>> by_id;
  for (std::size_t i = 0; i < data.sequences.size(); ++i)
    by_id[identity_of(data.sequences[i], scheme)].push_back(i);
  for (int id = 0; id < expected; ++id) {
    if (!by_id.contains(id))
      throw std::invalid_argument(to_string(scheme) + ": dataset has no sequences for held-out identity " +
                                  identity_name(id, scheme));
  }
  if (static_cast<int>(by_id.size()) != expected)
    throw std::invalid_argument(to_string(scheme) + ": unexpected identities in dataset");

  std::vector<Fold> folds;
  for (const auto& [id, test] : by_id) {
    Fold f;
    f.holdout = identity_name(id, scheme);
    f.test = test;
    for (std::size_t i = 0; i < data.sequences.size(); ++i)
      if (identity_of(data.sequences[i], scheme) != id) f.train.push_back(i);
    folds.push_back(std::move(f));
  }
  return folds;
}

Label sequence_verdict(std::span<const double> success_probs) {
  if (success_probs.empty()) throw std::invalid_argument("sequence_verdict: no steps");
  const double mean = std::accumulate(success_probs.begin(), success_probs.end(), 0.0) /
                      static_cast<double>(success_probs.size());
  return mean > 0.5 ? Label::success : Label::failure;
}

TrajectoryErrors trajectory_errors(std::span<const Pose> predicted, std::span<const Pose> truth) {
  if (predicted.size() != truth.size() || predicted.empty())
    throw std::invalid_argument("trajectory_errors: need equal, non-empty pose lists");
  TrajectoryErrors e;
  for (std::size_t k = 0; k < predicted.size(); ++k) {
    e.position += (predicted[k].position - truth[k].position).norm();
    for (int a = 0; a < 3; ++a) {
      const double d = std::abs(wrap_degrees(predicted[k].rotation(a)) - wrap_degrees(truth[k].rotation(a)));
      e.rotation += std::min(d, 360.0 - d);
    }
  }
  e.position /= static_cast<double>(predicted.size());
  e.rotation /= 3.0 * static_cast<double>(predicted.size());
  return e;
}

FoldMetrics evaluate_fold(const Checkpoint& ckpt, const Dataset& data, std::span<const std::size_t> test,
                          Scheme scheme) {
  if (ckpt.config.model.num_classes != scheme_num_classes(scheme))
    throw std::invalid_argument("evaluate_fold: checkpoint classifies " + std::to_string(ckpt.config.model.num_classes) +
                                " initial states, " + to_string(scheme) + " requires " +
                                std::to_string(scheme_num_classes(scheme)));
  if (test.empty()) throw std::invalid_argument("evaluate_fold: empty test fold");

  std::vector<const Sequence*> batch;
  for (auto i : test) batch.push_back(&data.sequences.at(i));
  const Inference inf = infer(ckpt.params, ckpt.config.variant, batch);
  const VariantSpec spec = variant_spec(ckpt.config.variant);

  FoldMetrics m;
  m.sequences = batch.size();
  std::size_t correct = 0, step_correct = 0, steps = 0;
  std::size_t cls_correct = 0, cls_total = 0;
  std::vector<Pose> predicted, truth;
  const auto classes = argmax_classes(inf.class_probs);
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const Sequence& s = *batch[b];
    const auto col = static_cast<Eigen::Index>(b);
    std::vector<double> y(static_cast<std::size_t>(inf.success_prob.rows()));
    for (Eigen::Index t = 0; t < inf.success_prob.rows(); ++t) {
      y[static_cast<std::size_t>(t)] = inf.success_prob(t, col);
      step_correct += (inf.success_prob(t, col) > 0.5) == s.success();
      ++steps;
    }
    correct += sequence_verdict(y) == s.label;
    if (!s.success()) continue;
    if (spec.classification) {
      cls_correct += classes[b] == class_label(s, ckpt.config.model.num_classes);
      ++cls_total;
    }
    if (spec.forecasting) {
      for (std::size_t t = 0; t < inf.predicted_pose.size(); ++t) {
        predicted.push_back(Pose::from_packed(inf.predicted_pose[t].col(col)));
        truth.push_back(s.frames[t + 1].pose);
      }
    }
  }
  m.success_accuracy = 100.0 * static_cast<double>(correct) / static_cast<double>(batch.size());
  m.step_accuracy = 100.0 * static_cast<double>(step_correct) / static_cast<double>(steps);
  if (spec.classification && cls_total > 0)
    m.classification_accuracy = 100.0 * static_cast<double>(cls_correct) / static_cast<double>(cls_total);
  if (spec.forecasting && !predicted.empty()) {
    const auto e = trajectory_errors(predicted, truth);
    m.position_error = e.position;
    m.rotation_error = e.rotation;
  }
  return m;
}

FoldMetrics average_folds(std::span<const FoldMetrics> folds) {
  if (folds.empty()) throw std::invalid_argument("average_folds: no folds");
  FoldMetrics avg;
  avg.holdout = "avg";
  const double n = static_cast<double>(folds.size());
  auto mean_opt = [&](auto member) -> std::optional<double> {
    double total = 0;
    for (const auto& f : folds) {
      if (!(f.*member)) return std::nullopt;
      total += *(f.*member);
    }
    return total / n;
  };
  for (const auto& f : folds) {
    avg.sequences += f.sequences;
    avg.success_accuracy += f.success_accuracy / n;
    avg.step_accuracy += f.step_accuracy / n;
  }
  avg.classification_accuracy = mean_opt(&FoldMetrics::classification_accuracy);
  avg.position_error = mean_opt(&FoldMetrics::position_error);
  avg.rotation_error = mean_opt(&FoldMetrics::rotation_error);
  return avg;
}

std::string format_table(std::span<const MetricsReport> reports) {
  std::ostringstream os;
  os << "# sequence verdict: mean per-step success probability > 0.5; position error: mean Euclidean distance\n";
  char line[256];
  std::snprintf(line, sizeof line, "%-16s %-7s %-16s %-6s %16s %20s %15s %15s\n", "variant", "encoder", "scheme",
                "fold", "succ./fail. acc.", "classification acc.", "position error", "rotation error");
  os << line;
  for (const auto& r : reports) {
    auto row = [&](const FoldMetrics& f) {
      std::snprintf(line, sizeof line, "%-16s %-7s %-16s %-6s %15.2f%% %20s %15s %15s\n", r.variant.c_str(),
                    r.encoder.c_str(), r.scheme.c_str(), f.holdout.c_str(), f.success_accuracy,
                    fmt(f.classification_accuracy, "%.2f%%").c_str(), fmt(f.position_error, "%.4f m").c_str(),
                    fmt(f.rotation_error, "%.2f deg").c_str());
      os << line;
    };
    for (const auto& f : r.folds) row(f);
    row(r.average);
  }
  return os.str();
}

std::string format_csv(std::span<const MetricsReport> reports) {
  std::ostringstream os;
  os << "variant,encoder,scheme,fold,sequences,success_failure_accuracy,classification_accuracy,position_error_m,"
        "rotation_error_deg,step_accuracy\n";
  for (const auto& r : reports) {
    auto row = [&](const FoldMetrics& f) {
      os << r.variant << ',' << r.encoder << ',' << r.scheme << ',' << f.holdout << ',' << f.sequences << ','
         << fmt(f.success_accuracy, "%.6f") << ',' << fmt(f.classification_accuracy, "%.6f") << ','
         << fmt(f.position_error, "%.6f") << ',' << fmt(f.rotation_error, "%.6f") << ','
         << fmt(f.step_accuracy, "%.6f") << '\n';
    };
    for (const auto& f : r.folds) row(f);
    row(r.average);
  }
  return os.str();
}

}  // namespace pourmon
