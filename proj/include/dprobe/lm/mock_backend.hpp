#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "dprobe/lm/backend.hpp"

namespace dprobe::lm {

// What one scripted pass writes after the final '='. END always follows.
struct MockEmission {
  // Fixed text. When absent the pass writes the exact answer of the question
  // found in the context, modified by `perturb` and `truncate`.
  std::optional<std::string> literal;
  // Answer positions (negative counts from the end) whose digit d becomes (d+1) mod 10.
  std::vector<long> perturb;
  // Stop after this many characters.
  std::optional<std::size_t> truncate;
};

// JSON form:
//   {"passes": [{"repeat": 20, "emit": "232064"},
//               {"repeat": 80, "oracle": true, "perturb": [-1], "truncate": 4}],
//    "cells": {"2x3": [ ...same entry list... ]}}
// "cells" overrides "passes" for questions with that many operand digits.
struct MockScript {
  std::vector<MockEmission> passes;
  std::map<std::pair<std::size_t, std::size_t>, std::vector<MockEmission>> cells;

  static MockScript parse(std::string_view json_text);
  static MockScript load(const std::filesystem::path& path);
};

// Pass k emits the k-th scripted entry whatever the context. With dropout
// inactive every pass behaves like pass 0.
class MockBackend final : public Backend {
 public:
  explicit MockBackend(MockScript script, Vocab vocab = Vocab::standard());

  const Vocab& vocab() const override { return vocab_; }
  std::size_t context_length() const override { return 1u << 20; }

  // Full emission of a pass for the question found in `context`.
  std::string emission(std::span<const TokenId> context, std::size_t pass_index) const;

 protected:
  BackendOutput step(std::span<const TokenId> context, const PassContext& pass, std::size_t step) const override;

 private:
  MockScript script_;
  Vocab vocab_;
};

}  // namespace dprobe::lm
