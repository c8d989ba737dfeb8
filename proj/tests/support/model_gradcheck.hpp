#pragma once

// Finite-difference check of every weight of a small decoder against the
// tape gradients, with dropout active under a fixed mask seed.

#include <random>
#include <vector>

#include "gradcheck.hpp"
#include "dprobe/lm/model.hpp"

namespace dprobe::testing {

struct ModelCheckCase {
  lm::Transformer model;
  lm::TokenBatch batch;
  std::vector<int> targets;
  std::uint64_t mask_seed;
};

inline ModelCheckCase make_model_case(std::uint64_t seed, std::size_t layers = 2) {
  lm::ModelConfig cfg;
  cfg.layers = layers;
  cfg.heads = 2;
  cfg.width = 8;
  cfg.context_length = 8;
  cfg.dropout_rate = 0.1;
  cfg.vocab_size = 16;
  lm::Transformer model(cfg, seed);
  // Larger than the training init so every path carries visible gradient.
  std::mt19937_64 rng(seed ^ 0x5bd1e995u);
  for (auto& p : model.parameters()) p.value = Tensor::uniform(p.value.shape(), -0.5, 0.5, rng);
  std::uniform_int_distribution<int> tok(0, 15);
  lm::TokenBatch batch{{}, 2, 5};
  for (std::size_t i = 0; i < 10; ++i) batch.ids.push_back(tok(rng));
  std::vector<int> targets;
  for (std::size_t i = 0; i < 10; ++i) targets.push_back(i % 4 == 3 ? numerics::kIgnoreTarget : tok(rng));
  return {std::move(model), std::move(batch), std::move(targets), seed * 31 + 7};
}

inline double model_loss(const ModelCheckCase& c) {
  Tape tape(false);
  lm::DropoutStream stream(c.model.config().dropout_rate, true, c.mask_seed);
  return numerics::cross_entropy(c.model.logits(tape, c.batch, stream), c.targets).value().item();
}

// Norm-relative error of the gradient over all weights jointly.
inline double model_gradcheck(ModelCheckCase& c, double h = 1e-6) {
  auto& params = c.model.parameters();
  for (auto& p : params) p.zero_grad();
  {
    Tape tape(true);
    lm::DropoutStream stream(c.model.config().dropout_rate, true, c.mask_seed);
    tape.backward(numerics::cross_entropy(c.model.logits(tape, c.batch, stream), c.targets));
  }
  std::vector<double> analytic, numeric;
  for (auto& p : params) {
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      analytic.push_back(p.grad[i]);
      const double orig = p.value[i];
      p.value[i] = orig + h;
      const double up = model_loss(c);
      p.value[i] = orig - h;
      const double down = model_loss(c);
      p.value[i] = orig;
      numeric.push_back((up - down) / (2.0 * h));
    }
  }
  const numerics::Shape shape{analytic.size()};
  return relative_error(Tensor(shape, analytic), Tensor(shape, numeric));
}

}  // namespace dprobe::testing
