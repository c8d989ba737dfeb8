#pragma once

// Central finite-difference gradient oracle. Independent of the tape: it only
// evaluates the forward pass on perturbed copies of the inputs.

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "dprobe/numerics/ops.hpp"

namespace dprobe::testing {

using numerics::Tape;
using numerics::Tensor;
using numerics::Var;

using LossBuilder = std::function<Var(Tape&, const std::vector<Var>&)>;

inline double forward_value(const LossBuilder& f, const std::vector<Tensor>& inputs) {
  Tape tape(false);
  std::vector<Var> vars;
  for (const auto& t : inputs) vars.push_back(tape.constant(t));
  return f(tape, vars).value().item();
}

inline double relative_error(const Tensor& analytic, const Tensor& numeric) {
  double diff = 0.0, na = 0.0, nn = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    diff += (analytic[i] - numeric[i]) * (analytic[i] - numeric[i]);
    na += analytic[i] * analytic[i];
    nn += numeric[i] * numeric[i];
  }
  const double denom = std::max({std::sqrt(na), std::sqrt(nn), 1e-12});
  return std::sqrt(diff) / denom;
}

// Largest norm-relative error between tape gradients and central differences
// over all inputs.
inline double gradcheck(const LossBuilder& f, const std::vector<Tensor>& inputs, double h = 1e-6) {
  Tape tape(true);
  std::vector<Var> vars;
  for (const auto& t : inputs) vars.push_back(tape.variable(t));
  tape.backward(f(tape, vars));

  double worst = 0.0;
  std::vector<Tensor> work = inputs;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    Tensor numeric(inputs[k].shape());
    for (std::size_t i = 0; i < inputs[k].size(); ++i) {
      const double orig = work[k][i];
      work[k][i] = orig + h;
      const double up = forward_value(f, work);
      work[k][i] = orig - h;
      const double down = forward_value(f, work);
      work[k][i] = orig;
      numeric[i] = (up - down) / (2.0 * h);
    }
    worst = std::max(worst, relative_error(tape.grad(vars[k]), numeric));
  }
  return worst;
}

// sum(out * weights) with fixed pseudo-random weights: a scalar whose gradient
// exercises every output element differently.
inline Var weighted_sum(const Var& out, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto w = out.tape().constant(Tensor::uniform(out.shape(), -1.0, 1.0, rng));
  return numerics::sum(numerics::mul(out, w));
}

}  // namespace dprobe::testing
