#include <filesystem>
#include <fstream>
#include <random>
#include <set>

#include "../support/oracles.hpp"
#include "doctest.h"
#include "dprobe/errors.hpp"
#include "dprobe/taskgen/corpus.hpp"
#include "dprobe/taskgen/problem.hpp"
#include "dprobe/taskgen/prompt.hpp"

using namespace dprobe;
using namespace dprobe::taskgen;

TEST_CASE("bigint parses, prints and multiplies") {
  CHECK(BigUint::from_decimal("000123").to_decimal() == "123");
  CHECK(BigUint::from_decimal("0").to_decimal() == "0");
  CHECK((BigUint(999'999'999) * BigUint(999'999'999)).to_decimal() == "999999998000000001");
  CHECK((BigUint::from_decimal("123456789012345678901234567890") + BigUint(10)).to_decimal() ==
        "123456789012345678901234567900");
  CHECK(BigUint(7) < BigUint(12));
  CHECK(BigUint::from_decimal("1000000000000").digit_count() == 13);
  CHECK_THROWS_AS(BigUint::from_decimal(""), ParameterError);
  try {
    BigUint::from_decimal("12x4");
    FAIL("expected ParameterError");
  } catch (const ParameterError& e) {
    CHECK(std::string(e.what()).find('2') != std::string::npos);
  }
}

TEST_CASE("oracle agrees with digit convolution on random pairs") {
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<std::size_t> len(1, kMaxOperandDigits);
  for (int i = 0; i < 5000; ++i) {
    const auto a = testing::random_digits(len(rng), rng);
    const auto b = testing::random_digits(len(rng), rng);
    REQUIRE(oracle_digits(make_problem(a, b)) == testing::convolution_multiply(a, b));
  }
}

TEST_CASE("hand products") {
  CHECK(make_problem("592", "392").answer_digits == "232064");
  CHECK(make_problem("111", "472").answer_digits == "52392");
  CHECK(make_problem("362", "194").answer_digits == "70228");
  CHECK(make_problem("9", "9").answer_digits == "81");
  CHECK(make_problem("10", "10").answer_digits == "100");
}

TEST_CASE("last digit rule is exhaustive below 1000") {
  for (unsigned a = 0; a < 1000; a += 7) {
    for (unsigned b = 0; b < 1000; ++b) {
      const auto p = make_problem(BigUint(a), BigUint(b));
      REQUIRE(static_cast<unsigned>(p.answer_digits.back() - '0') == last_digit_rule(p.a, p.b));
    }
  }
}

TEST_CASE("leading digit estimate rounds each operand half up") {
  const auto hi = BigUint::from_decimal("31622776601683793319");
  const auto lo = BigUint::from_decimal("31622776601683793320");
  CHECK(make_problem(hi, hi).answer_digits.front() == '9');
  CHECK(make_problem(lo, lo).answer_digits.front() == '1');
  CHECK(leading_digit_estimate(hi, hi) == 9);
  CHECK(leading_digit_estimate(lo, lo) == 9);
  CHECK(leading_digit_estimate(BigUint(95), BigUint(3)) == 3);  // 100 * 3
  CHECK(leading_digit_estimate(BigUint(592), BigUint(392)) == 2);  // 600 * 400
  CHECK_THROWS_AS(leading_digit_estimate(BigUint(0), BigUint(5)), ParameterError);
}

TEST_CASE("gen_problem respects digit counts and seeds") {
  for (std::size_t n = 1; n <= 6; ++n) {
    for (std::size_t m = 1; m <= 6; ++m) {
      const auto p = gen_problem(n, m, n * 10 + m);
      CHECK(p.a.digit_count() == n);
      CHECK(p.b.digit_count() == m);
      CHECK(p.n_digits == n);
      CHECK(p.m_digits == m);
      CHECK(p == gen_problem(n, m, n * 10 + m));
    }
  }
  CHECK_THROWS_AS(gen_problem(0, 3, 1), ParameterError);
  CHECK_THROWS_AS(gen_problem(3, kMaxOperandDigits + 1, 1), ParameterError);
}

TEST_CASE("reference prompt is byte exact") {
  PromptSpec spec{reference_shots(), make_problem("592", "392"), ""};
  const std::string expected = "111*472=52392. 362*194=70228. 592*392=";
  CHECK(render_prompt(spec) == expected);
  spec.given_prefix = "23206";
  CHECK(render_prompt(spec) == expected + "23206");
  spec.given_prefix = "99";
  CHECK_THROWS_AS(render_prompt(spec), ConsistencyError);
  spec.given_prefix = "";
  spec.shots[0].answer_digits = "52393";
  CHECK_THROWS_AS(render_prompt(spec), ConsistencyError);
}

TEST_CASE("solved lines parse back") {
  const auto p = parse_solved_line("12*34=408. 56*78=4368. 91*23=2093");
  CHECK(p.shots.size() == 2);
  CHECK(p.question.answer_digits == "2093");
  CHECK(p.given_prefix == "2093");
  CHECK(answer_offset("12*34=408. 91*23=") == 17);
  CHECK_THROWS_AS(parse_solved_line("12*34=409. 91*23=2093"), ConsistencyError);
  CHECK_THROWS_AS(parse_solved_line("12*34"), ConsistencyError);
}

TEST_CASE("corpus cells are distinct, split and deterministic") {
  CorpusSpec spec;
  spec.n_range = {1, 2};
  spec.m_range = {1, 1};
  spec.count_per_cell = 50;
  spec.rng_seed = 5;
  const auto c = build_corpus(spec);
  CHECK(c.train.size() == 80);
  CHECK(c.holdout.size() == 20);
  std::set<std::string> train_q, hold_q;
  for (const auto& l : c.train) train_q.insert(question_text(l.prompt.question));
  for (const auto& l : c.holdout) hold_q.insert(question_text(l.prompt.question));
  CHECK(train_q.size() == 80);
  CHECK(hold_q.size() == 20);
  for (const auto& q : hold_q) CHECK(train_q.count(q) == 0);
  // Shots come from the training side only.
  for (const auto& l : c.holdout) {
    for (const auto& s : l.prompt.shots) {
      CHECK(train_q.count(question_text(s)) == 1);
      CHECK(s.n_digits == l.prompt.question.n_digits);
    }
  }
  const auto again = build_corpus(spec);
  REQUIRE(again.train.size() == c.train.size());
  for (std::size_t i = 0; i < c.train.size(); ++i) CHECK(again.train[i].text == c.train[i].text);
}

TEST_CASE("context split re-renders trained problems") {
  CorpusSpec spec;
  spec.count_per_cell = 81;
  spec.rng_seed = 5;
  spec.split = HoldoutSplit::kContexts;
  const auto c = build_corpus(spec);
  CHECK(c.train.size() == 81);
  CHECK(c.holdout.size() == 16);
  std::set<std::string> train_q, train_text;
  for (const auto& l : c.train) {
    train_q.insert(question_text(l.prompt.question));
    train_text.insert(l.text);
  }
  CHECK(train_q.size() == 81);
  for (const auto& l : c.holdout) {
    CHECK(train_q.count(question_text(l.prompt.question)) == 1);
    CHECK(train_text.count(l.text) == 0);
    for (const auto& s : l.prompt.shots) CHECK_FALSE(s == l.prompt.question);
  }
  spec.lines_per_problem = 3;
  const auto triple = build_corpus(spec);
  CHECK(triple.train.size() == 243);
  CHECK(triple.holdout.size() == 16);
  spec.lines_per_problem = 0;
  CHECK_THROWS_AS(build_corpus(spec), ParameterError);
  CHECK(parse_holdout_split("contexts") == HoldoutSplit::kContexts);
  CHECK(holdout_split_name(HoldoutSplit::kQuestions) == "questions");
  CHECK_THROWS_AS(parse_holdout_split("lines"), ParameterError);
}

TEST_CASE("exhaustive 1x1 corpus and exhaustion errors") {
  CHECK(cell_size(1, 1) == 81);
  CHECK(cell_size(2, 3) == 90 * 900);
  CorpusSpec spec;
  spec.count_per_cell = 81;
  const auto c = build_corpus(spec);
  CHECK(c.train.size() + c.holdout.size() == 81);
  spec.count_per_cell = 82;
  CHECK_THROWS_AS(build_corpus(spec), ExhaustionError);
  spec.count_per_cell = 10;
  spec.holdout_fraction = 1.0;
  CHECK_THROWS_AS(build_corpus(spec), ParameterError);
}

TEST_CASE("corpus writes and reads back") {
  CorpusSpec spec;
  spec.n_range = {2, 2};
  spec.m_range = {1, 2};
  spec.count_per_cell = 30;
  spec.rng_seed = 17;
  const auto c = build_corpus(spec);
  const auto dir = std::filesystem::temp_directory_path() / "dprobe_corpus_test";
  std::filesystem::remove_all(dir);
  write_corpus(c, dir);
  const auto back = read_corpus(dir);
  REQUIRE(back.train.size() == c.train.size());
  REQUIRE(back.holdout.size() == c.holdout.size());
  for (std::size_t i = 0; i < c.holdout.size(); ++i) {
    CHECK(back.holdout[i].text == c.holdout[i].text);
    CHECK(back.holdout[i].prompt.question == c.holdout[i].prompt.question);
  }
  CHECK(back.spec.rng_seed == 17);
  CHECK(back.spec.count_per_cell == 30);
  CHECK(back.spec.split == HoldoutSplit::kQuestions);
  {
    std::ofstream bad(dir / "train.txt", std::ios::app);
    bad << "12*34=999\n";
  }
  try {
    read_corpus(dir);
    FAIL("expected ConsistencyError");
  } catch (const ConsistencyError& e) {
    CHECK(std::string(e.what()).find("train.txt:") != std::string::npos);
  }
  std::filesystem::remove_all(dir);
}
