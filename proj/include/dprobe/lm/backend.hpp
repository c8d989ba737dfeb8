#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "dprobe/lm/checkpoint.hpp"
#include "dprobe/lm/vocab.hpp"

namespace dprobe::lm {

struct BackendOutput {
  std::vector<double> probabilities;
  TokenId argmax_id = 0;
};

// Lowest id wins ties.
TokenId argmax(std::span<const double> values);

// Identifies one Monte-Carlo pass. `seed` drives every dropout mask of the
// pass; `index` is the pass number within a probe call.
struct PassContext {
  std::uint64_t seed = 0;
  std::size_t index = 0;
  bool dropout_active = false;
  double dropout_rate = 0.1;
};

// What the probe talks to. Implementations must be safe to call concurrently
// with distinct PassContexts.
class Backend {
 public:
  virtual ~Backend() = default;

  virtual const Vocab& vocab() const = 0;
  virtual std::size_t context_length() const = 0;

  // Next-token distribution after `context`, using the pass's first mask set.
  BackendOutput forward(std::span<const TokenId> context, const PassContext& pass) const;

  // Appends argmax tokens until END (included in the result) or max_new
  // tokens. Step s of the generation uses mask set s of the pass.
  std::vector<TokenId> greedy_generate(std::span<const TokenId> context, const PassContext& pass,
                                       std::size_t max_new) const;

 protected:
  virtual BackendOutput step(std::span<const TokenId> context, const PassContext& pass, std::size_t step) const = 0;
};

class ModelBackend final : public Backend {
 public:
  explicit ModelBackend(std::shared_ptr<const ModelCheckpoint> checkpoint);

  const Vocab& vocab() const override { return checkpoint_->vocab; }
  std::size_t context_length() const override { return checkpoint_->model.config().context_length; }
  const ModelCheckpoint& checkpoint() const noexcept { return *checkpoint_; }

  // Distribution at every position of `context` (for causality checks).
  std::vector<std::vector<double>> all_positions(std::span<const TokenId> context, const PassContext& pass,
                                                 std::size_t step = 0) const;

 protected:
  BackendOutput step(std::span<const TokenId> context, const PassContext& pass, std::size_t step) const override;

 private:
  std::shared_ptr<const ModelCheckpoint> checkpoint_;
};

}  // namespace dprobe::lm
