#pragma once

#include "pourmon/numcore/adam.hpp"
#include "pourmon/numcore/finite_diff.hpp"
#include "pourmon/numcore/ops.hpp"
#include "pourmon/numcore/tape.hpp"

namespace pourmon {

using Scalar = double;
using Matrix = nc::Mat<Scalar>;
using Tape = nc::Tape<Scalar>;
using Var = nc::Var<Scalar>;
using Parameter = nc::Parameter<Scalar>;
using GradientMap = nc::GradientMap<Scalar>;
using AdamState = nc::AdamState<Scalar>;

}  // namespace pourmon
