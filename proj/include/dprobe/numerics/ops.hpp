#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "dprobe/numerics/dropout.hpp"
#include "dprobe/numerics/tape.hpp"

// Differentiable tensor ops. Every op records its output on the tape that
// owns its inputs; all inputs of one op must share a tape.
namespace dprobe::numerics {

// [..., i, k] x [..., k, j] -> [..., i, j]; leading batch dims broadcast.
Var matmul(const Var& a, const Var& b);

// Elementwise with numpy-style broadcasting.
Var add(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& x, double factor);

// tanh approximation used by GPT-2.
Var gelu(const Var& x);

// Max-subtracted softmax along one axis.
Var softmax(const Var& x, std::ptrdiff_t axis);

// Normalizes the last axis, then applies gain and bias (both of last-axis size).
Var layer_norm(const Var& x, const Var& gain, const Var& bias, double eps);

// Inverted dropout. Identity when !spec.active.
Var dropout(const Var& x, const DropoutSpec& spec);

inline constexpr int kIgnoreTarget = -1;

// Mean negative log-likelihood over rows of [positions, vocab] logits.
// Rows whose target is kIgnoreTarget are skipped.
Var cross_entropy(const Var& logits, std::span<const int> targets);

// Gathers rows of a [vocab, width] table: output [ids.size(), width].
Var embedding(const Var& table, std::span<const int> ids);

Var reshape(const Var& x, Shape shape);
Var permute(const Var& x, const std::vector<std::size_t>& order);

// Replaces scores above the diagonal of the last two axes with a large
// negative constant so a following softmax gives them zero weight.
Var causal_mask(const Var& scores);

Var sum(const Var& x);

inline constexpr double kMaskedScore = -1e30;

}  // namespace dprobe::numerics
