#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "dprobe/taskgen/problem.hpp"

namespace dprobe::taskgen {

struct PromptSpec {
  std::vector<MultProblem> shots;
  MultProblem question;
  // Empty for unconditional probing; otherwise a prefix of question.answer_digits.
  std::string given_prefix;
};

// "{a1}*{b1}={ans1}. {a2}*{b2}={ans2}. {a}*{b}={given_prefix}"
std::string render_prompt(const PromptSpec& p);

// The two fixed solved examples: 111*472=52392 and 362*194=70228.
std::vector<MultProblem> reference_shots();

// Inverse of render_prompt for fully answered lines. Verifies every stored
// product against the oracle (ConsistencyError on mismatch).
PromptSpec parse_solved_line(std::string_view line);

// Index of the first character after the final '='.
std::size_t answer_offset(std::string_view rendered);

}  // namespace dprobe::taskgen
