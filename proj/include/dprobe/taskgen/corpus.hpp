#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dprobe/taskgen/prompt.hpp"

namespace dprobe::taskgen {

struct DigitRange {
  std::size_t min = 1;
  std::size_t max = 1;
};

// kQuestions holds out whole problems: a held-out question never appears in
// training text. kContexts trains on every problem and holds out fresh
// renderings of some of them with newly drawn examples, which tests recall of
// a memorized table under unseen prompts.
enum class HoldoutSplit { kQuestions, kContexts };

struct CorpusSpec {
  DigitRange n_range;
  DigitRange m_range;
  std::size_t count_per_cell = 1;
  std::size_t shots_per_line = 2;
  std::uint64_t rng_seed = 0;
  double holdout_fraction = 0.2;
  HoldoutSplit split = HoldoutSplit::kQuestions;
  // Training lines per training problem, each with independently drawn shots.
  std::size_t lines_per_problem = 1;
};

HoldoutSplit parse_holdout_split(std::string_view name);
std::string holdout_split_name(HoldoutSplit split);

// A fully answered prompt. The END token follows `text` implicitly.
struct CorpusLine {
  PromptSpec prompt;
  std::string text;
};

struct Corpus {
  CorpusSpec spec;
  std::vector<CorpusLine> train;
  std::vector<CorpusLine> holdout;
};

// Per (n, m) cell: samples count_per_cell distinct ordered operand pairs and
// picks round(count * holdout_fraction) of them for the holdout set (moved out
// of training under kQuestions, re-rendered under kContexts). Shots are drawn
// from the same cell's training problems.
Corpus build_corpus(const CorpusSpec& spec);

// Number of ordered pairs with exactly n and m digits (saturating).
std::uintmax_t cell_size(std::size_t n, std::size_t m);

// DIR/train.txt, DIR/holdout.txt (one line per example) and DIR/manifest.json.
void write_corpus(const Corpus& corpus, const std::filesystem::path& dir);
Corpus read_corpus(const std::filesystem::path& dir);

std::vector<CorpusLine> read_lines(const std::filesystem::path& file);

}  // namespace dprobe::taskgen
