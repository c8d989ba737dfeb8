#pragma once

#include <cstddef>
#include <cstdint>
#include <string>

#include "dprobe/taskgen/bigint.hpp"

namespace dprobe::taskgen {

// One multiplication task with its exact answer.
struct MultProblem {
  BigUint a;
  BigUint b;
  std::size_t n_digits = 0;
  std::size_t m_digits = 0;
  BigUint product;
  std::string answer_digits;

  friend bool operator==(const MultProblem&, const MultProblem&) = default;
};

inline constexpr std::size_t kMaxOperandDigits = 40;

MultProblem make_problem(BigUint a, BigUint b);
MultProblem make_problem(std::string_view a, std::string_view b);

// Operands uniform over n-digit / m-digit integers with nonzero leading digit.
MultProblem gen_problem(std::size_t n, std::size_t m, std::uint64_t rng_seed);

// Exact decimal expansion of a*b.
std::string oracle_digits(const MultProblem& p);

// ((a mod 10)(b mod 10)) mod 10
unsigned last_digit_rule(const BigUint& a, const BigUint& b);

// Rounds both operands to one significant digit (half up), multiplies, and
// returns the leading digit of that product. a, b >= 1.
unsigned leading_digit_estimate(const BigUint& a, const BigUint& b);

// "a*b" as written in prompts.
std::string question_text(const MultProblem& p);

}  // namespace dprobe::taskgen
