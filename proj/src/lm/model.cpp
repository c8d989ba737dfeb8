#include "dprobe/lm/model.hpp"

#include <cmath>
#include <random>

#include "dprobe/errors.hpp"

namespace dprobe::lm {

using numerics::Parameter;
using numerics::Shape;
using numerics::Tape;
using numerics::Tensor;
using numerics::Var;

namespace {

constexpr double kLayerNormEps = 1e-5;
constexpr double kInitStd = 0.02;

// Parameter slots, in layout order.
constexpr std::size_t kTokenEmbedding = 0;
constexpr std::size_t kPositionEmbedding = 1;
constexpr std::size_t kGlobalsBefore = 2;
constexpr std::size_t kPerLayer = 16;

enum LayerSlot : std::size_t {
  kLn1Gain,
  kLn1Bias,
  kQueryWeight,
  kQueryBias,
  kKeyWeight,
  kKeyBias,
  kValueWeight,
  kValueBias,
  kAttnProjWeight,
  kAttnProjBias,
  kLn2Gain,
  kLn2Bias,
  kFcWeight,
  kFcBias,
  kMlpProjWeight,
  kMlpProjBias,
};

enum FinalSlot : std::size_t { kLnFGain, kLnFBias, kHeadWeight, kHeadBias };

}  // namespace

void ModelConfig::validate() const {
  if (layers < 1 || heads < 1 || width < 1 || context_length < 1 || vocab_size < 1) {
    throw ParameterError("model sizes must be positive");
  }
  if (width % heads != 0) {
    throw ParameterError("model width " + std::to_string(width) + " is not divisible by " + std::to_string(heads) +
                         " heads");
  }
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw ParameterError("dropout rate must lie in [0, 1)");
}

DropoutStream::DropoutStream(double rate, bool active, std::uint64_t seed, std::uint64_t step)
    : rate_(rate), active_(active), seed_(seed), step_(step) {
  numerics::DropoutSpec{rate, 0, active}.validate();
}

numerics::DropoutSpec DropoutStream::next() {
  return {rate_, numerics::derive_seed(seed_, step_, site_++), active_};
}

std::vector<std::pair<std::string, Shape>> Transformer::layout(const ModelConfig& c) {
  const std::size_t w = c.width;
  std::vector<std::pair<std::string, Shape>> out{
      {"tok_emb", {c.vocab_size, w}},
      {"pos_emb", {c.context_length, w}},
  };
  for (std::size_t l = 0; l < c.layers; ++l) {
    const std::string p = "blocks." + std::to_string(l) + ".";
    out.insert(out.end(), {
                              {p + "ln1.gain", {w}},
                              {p + "ln1.bias", {w}},
                              {p + "attn.query.weight", {w, w}},
                              {p + "attn.query.bias", {w}},
                              {p + "attn.key.weight", {w, w}},
                              {p + "attn.key.bias", {w}},
                              {p + "attn.value.weight", {w, w}},
                              {p + "attn.value.bias", {w}},
                              {p + "attn.proj.weight", {w, w}},
                              {p + "attn.proj.bias", {w}},
                              {p + "ln2.gain", {w}},
                              {p + "ln2.bias", {w}},
                              {p + "mlp.fc.weight", {w, 4 * w}},
                              {p + "mlp.fc.bias", {4 * w}},
                              {p + "mlp.proj.weight", {4 * w, w}},
                              {p + "mlp.proj.bias", {w}},
                          });
  }
  out.insert(out.end(), {
                            {"ln_f.gain", {w}},
                            {"ln_f.bias", {w}},
                            {"head.weight", {w, c.vocab_size}},
                            {"head.bias", {c.vocab_size}},
                        });
  return out;
}

Transformer::Transformer(ModelConfig config, std::uint64_t init_seed) : config_(config) {
  config_.validate();
  std::mt19937_64 rng(init_seed);
  const double residual_std = kInitStd / std::sqrt(2.0 * static_cast<double>(config_.layers));
  for (auto& [name, shape] : layout(config_)) {
    Tensor value;
    if (name.ends_with(".gain")) {
      value = Tensor(shape, 1.0);
    } else if (name.ends_with(".bias")) {
      value = Tensor(shape, 0.0);
    } else if (name.ends_with("proj.weight")) {
      value = Tensor::normal(shape, residual_std, rng);
    } else {
      value = Tensor::normal(shape, kInitStd, rng);
    }
    params_.push_back(Parameter{name, std::move(value), Tensor{}});
  }
}

Transformer::Transformer(ModelConfig config, std::vector<Parameter> parameters)
    : config_(config), params_(std::move(parameters)) {
  config_.validate();
  const auto expected = layout(config_);
  if (expected.size() != params_.size()) {
    throw ConsistencyError("model expects " + std::to_string(expected.size()) + " parameter tensors, got " +
                           std::to_string(params_.size()));
  }
  for (std::size_t i = 0; i < expected.size(); ++i) {
    if (params_[i].name != expected[i].first || params_[i].value.shape() != expected[i].second) {
      throw ConsistencyError("parameter " + std::to_string(i) + " is " + params_[i].name +
                             numerics::shape_string(params_[i].value.shape()) + ", expected " + expected[i].first +
                             numerics::shape_string(expected[i].second));
    }
  }
}

std::size_t Transformer::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

Var Transformer::logits(Tape& tape, const TokenBatch& batch, DropoutStream& dropout) {
  return forward(tape, batch, dropout, [&](std::size_t i) { return tape.parameter(params_[i]); });
}

Var Transformer::logits(Tape& tape, const TokenBatch& batch, DropoutStream& dropout) const {
  return forward(tape, batch, dropout, [&](std::size_t i) { return tape.constant_view(params_[i].value); });
}

template <typename ParamFn>
Var Transformer::forward(Tape& /*tape*/, const TokenBatch& batch, DropoutStream& stream, ParamFn param) const {
  using namespace numerics;
  const std::size_t rows = batch.rows;
  const std::size_t len = batch.length;
  const std::size_t width = config_.width;
  const std::size_t heads = config_.heads;
  const std::size_t head_dim = width / heads;
  if (rows == 0 || len == 0 || batch.ids.size() != rows * len) {
    throw DimensionError("token batch holds " + std::to_string(batch.ids.size()) + " ids for " + std::to_string(rows) +
                         " x " + std::to_string(len));
  }
  if (len > config_.context_length) {
    throw ParameterError("sequence of " + std::to_string(len) + " tokens exceeds context length " +
                         std::to_string(config_.context_length));
  }

  std::vector<int> positions(rows * len);
  for (std::size_t i = 0; i < positions.size(); ++i) positions[i] = static_cast<int>(i % len);
  Var x = add(embedding(param(kTokenEmbedding), batch.ids), embedding(param(kPositionEmbedding), positions));
  x = dropout(x, stream.next());

  const double score_scale = 1.0 / std::sqrt(static_cast<double>(head_dim));
  for (std::size_t l = 0; l < config_.layers; ++l) {
    const std::size_t base = kGlobalsBefore + l * kPerLayer;
    auto p = [&](std::size_t slot) { return param(base + slot); };
    auto linear = [&](const Var& in, std::size_t w, std::size_t b) { return add(matmul(in, p(w)), p(b)); };

    Var h = layer_norm(x, p(kLn1Gain), p(kLn1Bias), kLayerNormEps);
    Var q = permute(reshape(linear(h, kQueryWeight, kQueryBias), {rows, len, heads, head_dim}), {0, 2, 1, 3});
    Var k = permute(reshape(linear(h, kKeyWeight, kKeyBias), {rows, len, heads, head_dim}), {0, 2, 3, 1});
    Var v = permute(reshape(linear(h, kValueWeight, kValueBias), {rows, len, heads, head_dim}), {0, 2, 1, 3});
    Var scores = causal_mask(scale(matmul(q, k), score_scale));
    Var probs = dropout(softmax(scores, -1), stream.next());
    Var context = reshape(permute(matmul(probs, v), {0, 2, 1, 3}), {rows * len, width});
    x = add(x, dropout(linear(context, kAttnProjWeight, kAttnProjBias), stream.next()));

    Var m = layer_norm(x, p(kLn2Gain), p(kLn2Bias), kLayerNormEps);
    m = linear(gelu(linear(m, kFcWeight, kFcBias)), kMlpProjWeight, kMlpProjBias);
    x = add(x, dropout(m, stream.next()));
  }

  const std::size_t final_base = kGlobalsBefore + config_.layers * kPerLayer;
  x = layer_norm(x, param(final_base + kLnFGain), param(final_base + kLnFBias), kLayerNormEps);
  return add(matmul(x, param(final_base + kHeadWeight)), param(final_base + kHeadBias));
}

}  // namespace dprobe::lm
