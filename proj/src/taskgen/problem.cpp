#include "dprobe/taskgen/problem.hpp"

#include <random>

#include "dprobe/errors.hpp"

namespace dprobe::taskgen {

namespace {

BigUint round_to_one_significant_digit(const BigUint& x) {
  const std::string s = x.to_decimal();
  unsigned lead = static_cast<unsigned>(s[0] - '0');
  std::size_t zeros = s.size() - 1;
  if (s.size() > 1 && s[1] >= '5') ++lead;
  if (lead == 10) {
    lead = 1;
    ++zeros;
  }
  return BigUint::from_decimal(std::to_string(lead) + std::string(zeros, '0'));
}

}  // namespace

MultProblem make_problem(BigUint a, BigUint b) {
  MultProblem p;
  p.n_digits = a.digit_count();
  p.m_digits = b.digit_count();
  p.product = a * b;
  p.answer_digits = p.product.to_decimal();
  p.a = std::move(a);
  p.b = std::move(b);
  return p;
}

MultProblem make_problem(std::string_view a, std::string_view b) {
  return make_problem(BigUint::from_decimal(a), BigUint::from_decimal(b));
}

MultProblem gen_problem(std::size_t n, std::size_t m, std::uint64_t rng_seed) {
  if (n < 1 || m < 1 || n > kMaxOperandDigits || m > kMaxOperandDigits) {
    throw ParameterError("operand digit counts must lie in [1, " + std::to_string(kMaxOperandDigits) + "], got " +
                         std::to_string(n) + " and " + std::to_string(m));
  }
  std::mt19937_64 rng(rng_seed);
  auto a = BigUint::random_with_digits(n, rng);
  auto b = BigUint::random_with_digits(m, rng);
  return make_problem(std::move(a), std::move(b));
}

std::string oracle_digits(const MultProblem& p) { return (p.a * p.b).to_decimal(); }

unsigned last_digit_rule(const BigUint& a, const BigUint& b) { return (a.last_digit() * b.last_digit()) % 10u; }

unsigned leading_digit_estimate(const BigUint& a, const BigUint& b) {
  if (a.is_zero() || b.is_zero()) throw ParameterError("leading_digit_estimate needs operands >= 1");
  const auto estimate = round_to_one_significant_digit(a) * round_to_one_significant_digit(b);
  return static_cast<unsigned>(estimate.to_decimal()[0] - '0');
}

std::string question_text(const MultProblem& p) { return p.a.to_decimal() + "*" + p.b.to_decimal(); }

}  // namespace dprobe::taskgen
