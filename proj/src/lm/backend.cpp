#include "dprobe/lm/backend.hpp"

#include <algorithm>
#include <cmath>

#include "dprobe/errors.hpp"

namespace dprobe::lm {

TokenId argmax(std::span<const double> values) {
  if (values.empty()) throw DimensionError("argmax of an empty distribution");
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return static_cast<TokenId>(best);
}

BackendOutput Backend::forward(std::span<const TokenId> context, const PassContext& pass) const {
  if (context.empty()) throw ParameterError("forward needs a non-empty context");
  if (context.size() > context_length()) {
    throw CapacityError("context of " + std::to_string(context.size()) + " tokens exceeds capacity " +
                            std::to_string(context_length()),
                        {});
  }
  return step(context, pass, 0);
}

std::vector<TokenId> Backend::greedy_generate(std::span<const TokenId> context, const PassContext& pass,
                                              std::size_t max_new) const {
  if (max_new < 1) throw ParameterError("greedy_generate needs max_new >= 1");
  if (context.empty()) throw ParameterError("greedy_generate needs a non-empty context");
  std::vector<TokenId> running(context.begin(), context.end());
  std::vector<TokenId> generated;
  for (std::size_t s = 0; s < max_new; ++s) {
    if (running.size() > context_length()) {
      throw CapacityError("context overflow after " + std::to_string(generated.size()) + " generated tokens",
                          generated);
    }
    const TokenId next = step(running, pass, s).argmax_id;
    generated.push_back(next);
    if (next == vocab().end_id()) break;
    running.push_back(next);
  }
  return generated;
}

ModelBackend::ModelBackend(std::shared_ptr<const ModelCheckpoint> checkpoint) : checkpoint_(std::move(checkpoint)) {
  if (!checkpoint_) throw ParameterError("ModelBackend needs a checkpoint");
}

namespace {

std::vector<double> softmax_row(const double* row, std::size_t n) {
  std::vector<double> p(row, row + n);
  const double mx = *std::max_element(p.begin(), p.end());
  double total = 0.0;
  for (auto& v : p) {
    v = std::exp(v - mx);
    total += v;
  }
  for (auto& v : p) v /= total;
  return p;
}

}  // namespace

std::vector<std::vector<double>> ModelBackend::all_positions(std::span<const TokenId> context, const PassContext& pass,
                                                             std::size_t step) const {
  const auto& model = checkpoint_->model;
  numerics::Tape tape(false);
  DropoutStream stream(pass.dropout_rate, pass.dropout_active, pass.seed, step);
  TokenBatch batch{std::vector<TokenId>(context.begin(), context.end()), 1, context.size()};
  const auto logits = model.logits(tape, batch, stream);
  const std::size_t vocab = model.config().vocab_size;
  std::vector<std::vector<double>> out;
  for (std::size_t t = 0; t < context.size(); ++t) out.push_back(softmax_row(logits.value().ptr() + t * vocab, vocab));
  return out;
}

BackendOutput ModelBackend::step(std::span<const TokenId> context, const PassContext& pass, std::size_t step) const {
  const auto& model = checkpoint_->model;
  numerics::Tape tape(false);
  DropoutStream stream(pass.dropout_rate, pass.dropout_active, pass.seed, step);
  TokenBatch batch{std::vector<TokenId>(context.begin(), context.end()), 1, context.size()};
  const auto logits = model.logits(tape, batch, stream);
  const std::size_t vocab = model.config().vocab_size;
  BackendOutput out;
  const double* last = logits.value().ptr() + (context.size() - 1) * vocab;
  out.probabilities = softmax_row(last, vocab);
  out.argmax_id = argmax(std::span<const double>(last, vocab));
  return out;
}

}  // namespace dprobe::lm
