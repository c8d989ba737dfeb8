#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dprobe/lm/backend.hpp"
#include "dprobe/lm/checkpoint.hpp"
#include "dprobe/taskgen/corpus.hpp"

namespace dprobe::trainer {

// Which target tokens carry loss.
enum class LossRegion {
  kFinalAnswer,  // digits after the last '=' plus END
  kAllAnswers,   // additionally every shot's digits and its closing '.'
};

struct TrainConfig {
  std::size_t steps = 5000;
  std::size_t batch_size = 64;
  double learning_rate = 3e-4;
  std::size_t warmup_steps = 200;
  double dropout_rate = 0.1;
  std::uint64_t seed = 0;
  std::size_t eval_every = 500;
  // Holdout lines scored at each evaluation (0 = all).
  std::size_t eval_limit = 0;
  double grad_clip = 1.0;
  double weight_decay = 0.0;
  LossRegion loss_region = LossRegion::kFinalAnswer;
  // Stop once a periodic holdout evaluation reaches this exact-match (> 1 disables).
  double stop_at_exact_match = 2.0;

  void validate() const;
};

struct TrainReport {
  std::vector<std::pair<std::size_t, double>> loss;
  std::vector<std::pair<std::size_t, double>> holdout_exact_match;
  std::size_t steps_run = 0;
  std::string checkpoint_path;

  // step,loss,exact_match (exact_match empty where not evaluated)
  std::string to_csv() const;
};

struct TrainResult {
  lm::ModelCheckpoint checkpoint;
  TrainReport report;
};

// Invoked after every logged step: (step, loss).
using ProgressFn = std::function<void(std::size_t, double, std::optional<double>)>;

TrainResult train(const TrainConfig& config, const taskgen::Corpus& corpus, lm::ModelConfig model_config,
                  const ProgressFn& progress = {});

// Encodes a solved line plus END and the per-target loss weights for it.
struct EncodedLine {
  std::vector<lm::TokenId> tokens;
  std::vector<bool> target_in_loss;  // size tokens.size()-1; entry t covers tokens[t+1]
};
EncodedLine encode_line(const taskgen::CorpusLine& line, const lm::Vocab& vocab, LossRegion region);

// Fraction of prompts whose greedy answer (empty prefix) is exactly the
// product digits followed by END. Prompt i runs as pass i with seed
// derive_seed(pass_seed, i).
double exact_match(const lm::Backend& backend, std::span<const taskgen::PromptSpec> prompts, bool dropout_active,
                   std::uint64_t pass_seed, double dropout_rate = 0.1);

double exact_match(const lm::Backend& backend, std::span<const taskgen::CorpusLine> lines, bool dropout_active,
                   std::uint64_t pass_seed, double dropout_rate = 0.1);

// Plain-text "key = value" lines, '#' comments. Keys: layers, heads, width,
// context_length, vocab_size, and every TrainConfig field by name.
struct RunConfig {
  lm::ModelConfig model;
  TrainConfig train;
};
RunConfig parse_run_config(std::string_view text);
RunConfig load_run_config(const std::filesystem::path& path);

}  // namespace dprobe::trainer
