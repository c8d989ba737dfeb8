#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "dprobe/lm/vocab.hpp"
#include "dprobe/numerics/ops.hpp"

namespace dprobe::lm {

struct ModelConfig {
  std::size_t layers = 4;
  std::size_t heads = 4;
  std::size_t width = 128;
  std::size_t context_length = 256;
  double dropout_rate = 0.1;
  std::size_t vocab_size = 16;

  void validate() const;
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

// Hands out one DropoutSpec per dropout call site, in forward order. Every
// spec is derived from (seed, step, site index), so a pass is reproducible
// from its seed alone and each generation step gets fresh masks.
class DropoutStream {
 public:
  DropoutStream(double rate, bool active, std::uint64_t seed, std::uint64_t step = 0);
  static DropoutStream inactive() { return DropoutStream(0.0, false, 0); }

  numerics::DropoutSpec next();
  std::uint64_t sites_used() const noexcept { return site_; }

 private:
  double rate_;
  bool active_;
  std::uint64_t seed_;
  std::uint64_t step_;
  std::uint64_t site_ = 0;
};

// `rows` right-padded sequences of `length` tokens each, row-major.
struct TokenBatch {
  std::vector<TokenId> ids;
  std::size_t rows = 0;
  std::size_t length = 0;
};

// GPT-2 style decoder: learned positional embeddings, pre-norm blocks, GELU
// MLP of 4x width. Dropout sits on the embedding sum, the attention
// probabilities, the attention output projection, and the MLP output.
class Transformer {
 public:
  Transformer(ModelConfig config, std::uint64_t init_seed);
  // Adopts existing weights; names and shapes must match layout(config).
  Transformer(ModelConfig config, std::vector<numerics::Parameter> parameters);

  const ModelConfig& config() const noexcept { return config_; }
  std::vector<numerics::Parameter>& parameters() noexcept { return params_; }
  const std::vector<numerics::Parameter>& parameters() const noexcept { return params_; }
  std::size_t parameter_count() const;

  // [rows * length, vocab] logits. The non-const overload records the weights
  // as trainable parameters; the const overload treats them as constants and
  // is safe to call from several threads at once.
  numerics::Var logits(numerics::Tape& tape, const TokenBatch& batch, DropoutStream& dropout);
  numerics::Var logits(numerics::Tape& tape, const TokenBatch& batch, DropoutStream& dropout) const;

  static std::vector<std::pair<std::string, numerics::Shape>> layout(const ModelConfig& config);

 private:
  template <typename ParamFn>
  numerics::Var forward(numerics::Tape& tape, const TokenBatch& batch, DropoutStream& dropout, ParamFn param) const;

  ModelConfig config_;
  std::vector<numerics::Parameter> params_;
};

}  // namespace dprobe::lm
