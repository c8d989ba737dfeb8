#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "dprobe/lm/backend.hpp"
#include "dprobe/taskgen/corpus.hpp"
#include "dprobe/taskgen/prompt.hpp"

namespace dprobe::probe {

// Histogram outcomes: digits 0..9, then END, then OTHER.
inline constexpr std::size_t kOutcomeCount = 12;
inline constexpr std::size_t kEnd = 10;
inline constexpr std::size_t kOther = 11;

std::string outcome_label(std::size_t outcome);
// Inverse of outcome_label; ParameterError on unknown labels.
std::size_t parse_outcome(std::string_view label);
// Maps a generated token onto the outcome alphabet.
std::size_t outcome_of(lm::TokenId token, const lm::Vocab& vocab);

struct ProbeConfig {
  std::size_t passes = 100;
  double dropout_rate = 0.1;
  bool dropout_active = true;
  std::size_t shots = 2;
  std::uint64_t base_seed = 0;
  // Worker threads for the passes; results do not depend on this.
  std::size_t threads = 1;
  // Solved examples for the prompt. Empty means the reference pair, which
  // only supports shots <= 2.
  std::vector<taskgen::MultProblem> shot_examples;

  void validate() const;
  // Seed of pass k.
  std::uint64_t pass_seed(std::size_t k) const noexcept { return base_seed ^ static_cast<std::uint64_t>(k); }
};

struct DigitHistogram {
  std::size_t position = 0;
  std::array<std::uint64_t, kOutcomeCount> counts{};
  std::uint64_t passes = 0;

  void add(std::size_t outcome);
  double confidence(std::size_t outcome) const;
  // Most frequent outcome; lowest index on ties.
  std::size_t mode() const;
  std::size_t nonzero_cells() const;
};

enum class ProbeMode { kUnconditional, kConditional };
std::string mode_name(ProbeMode mode);

struct ProbeResult {
  taskgen::MultProblem problem;
  ProbeMode mode = ProbeMode::kUnconditional;
  std::string prompt;  // rendered text of the unconditional prompt
  std::vector<DigitHistogram> histograms;
  std::vector<double> correct_confidence;
  // Unconditional mode: fraction of passes reproducing the answer exactly, END-terminated.
  std::optional<double> exact_match;
  std::uint64_t base_seed = 0;
  std::size_t passes = 0;
  double dropout_rate = 0.0;
  bool dropout_active = false;
};

// The prompt a probe uses for `problem` under `config` (prefix left empty).
taskgen::PromptSpec probe_prompt(const taskgen::MultProblem& problem, const ProbeConfig& config);

// K greedy generations; histogram p tallies the token emitted at answer index p
// (END once a pass has terminated before p, OTHER for non-digit tokens).
ProbeResult mc_unconditional(const lm::Backend& backend, const taskgen::MultProblem& problem,
                             const ProbeConfig& config);
ProbeResult mc_unconditional(const lm::Backend& backend, const taskgen::PromptSpec& prompt, const ProbeConfig& config);

// K single-step passes with the correct digits before `position` supplied in the prompt.
DigitHistogram mc_conditional_digit(const lm::Backend& backend, const taskgen::MultProblem& problem,
                                    std::size_t position, const ProbeConfig& config);
DigitHistogram mc_conditional_digit(const lm::Backend& backend, const taskgen::PromptSpec& prompt,
                                    std::size_t position, const ProbeConfig& config);

// mc_conditional_digit at every answer position.
ProbeResult mc_conditional_scan(const lm::Backend& backend, const taskgen::MultProblem& problem,
                                const ProbeConfig& config);
ProbeResult mc_conditional_scan(const lm::Backend& backend, const taskgen::PromptSpec& prompt,
                                const ProbeConfig& config);

// counts[truth digit] / K for each histogram, matched by position.
std::vector<double> correct_confidence(std::span<const DigitHistogram> histograms, std::string_view truth);
double correct_confidence(const DigitHistogram& histogram, std::string_view truth);

enum class GridKind { kFirstDigit, kLastDigitUnconditional, kLastDigitConditional };
inline constexpr std::array<GridKind, 3> kGridKinds = {GridKind::kFirstDigit, GridKind::kLastDigitUnconditional,
                                                       GridKind::kLastDigitConditional};
std::string grid_kind_name(GridKind kind);
GridKind parse_grid_kind(std::string_view name);

struct GridCell {
  std::size_t n = 0;
  std::size_t m = 0;
  double mean = 0.0;
  double stddev = 0.0;  // sample deviation; 0 when count == 1
  std::size_t count = 0;
  bool single_sample = false;
  std::vector<double> values;
  std::vector<std::string> questions;
};

struct GridResult {
  GridKind kind = GridKind::kFirstDigit;
  std::size_t passes = 0;
  std::size_t problems_per_cell = 0;
  std::vector<GridCell> cells;  // row-major over n, then m

  const GridCell& cell(std::size_t n, std::size_t m) const;
  std::vector<std::size_t> n_values() const;
  std::vector<std::size_t> m_values() const;
};

struct GridSpec {
  taskgen::DigitRange n_range{2, 5};
  taskgen::DigitRange m_range{2, 5};
  std::size_t problems_per_cell = 10;
  std::uint64_t problem_seed = 0;
  // Optional fixed prompts per (n, m) cell, used in order instead of sampled
  // problems (e.g. a trained model's holdout set).
  std::map<std::pair<std::size_t, std::size_t>, std::vector<taskgen::PromptSpec>> prompts;
};

// Distinct solved examples with the question's digit counts, excluding the question.
std::vector<taskgen::MultProblem> sample_shots(const taskgen::MultProblem& question, std::size_t count,
                                               std::uint64_t seed);

// The prompts probed in cell (n, m): supplied ones if present, else sampled.
std::vector<taskgen::PromptSpec> cell_prompts(const GridSpec& spec, std::size_t n, std::size_t m,
                                              std::size_t shots);

// Per cell and problem: first-digit conditional probe, unconditional last
// digit, and conditional last digit with the full correct prefix, in the
// order of kGridKinds.
std::array<GridResult, 3> grid_ablation(const lm::Backend& backend, const GridSpec& spec, const ProbeConfig& config);

// Groups fully answered lines by the digit counts of their question.
std::map<std::pair<std::size_t, std::size_t>, std::vector<taskgen::PromptSpec>> group_by_cell(
    std::span<const taskgen::CorpusLine> lines);

// Derives the sample mean, deviation, and flags of a cell from its values.
void summarize(GridCell& cell);

}  // namespace dprobe::probe
