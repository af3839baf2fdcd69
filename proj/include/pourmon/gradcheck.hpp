#pragma once

// Finite-difference verification of every differentiable component at small
// sizes. Each component draws seeded random leaves (weights and inputs),
// reduces its output to a scalar, and compares the tape's gradient with
// central differences on every coordinate of every leaf.

#include "pourmon/numcore.hpp"

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

namespace pourmon {

/// One random instance: the leaves to differentiate and the scalar they feed.
struct GradProbe {
  std::vector<Parameter> leaves;
  std::function<Var(Tape&, const std::vector<Parameter>&)> loss;
};

struct GradComponent {
  std::string name;
  std::function<GradProbe(std::mt19937_64&)> make;
};

struct GradcheckOptions {
  std::uint64_t seed = 1;
  int instances = 5;
  double eps = 1e-5;
  double tolerance = 1e-4;
  /// Denominator floor of the relative error; keeps gradients that are
  /// zero up to round-off from dominating the ratio.
  double floor = 1e-6;
};

struct GradcheckRow {
  std::string component;
  int instances = 0;
  double max_relative_error = 0;
  bool pass = false;
};

/// Max relative error of one probe over all leaves.
double check_probe(const GradProbe& probe, double eps, double floor);

/// LSTM cell, fusion encoder, flat2 encoder, G, D, classifier, monitor,
/// pose distance and the six training losses.
std::vector<GradComponent> standard_components();

/// Negative control: an LSTM cell whose input-gate derivative has the wrong
/// sign. Must fail the check.
GradComponent sign_bug_component();

std::vector<GradcheckRow> run_gradcheck(const std::vector<GradComponent>& components, const GradcheckOptions& opt);

std::string format_gradcheck(const std::vector<GradcheckRow>& rows, double tolerance);

}  // namespace pourmon
