#include "dprobe/taskgen/prompt.hpp"

#include "dprobe/errors.hpp"

namespace dprobe::taskgen {

namespace {

void check_solved(const MultProblem& p, const char* what) {
  if (p.answer_digits != oracle_digits(p)) {
    throw ConsistencyError(std::string(what) + " " + question_text(p) + " stores answer " + p.answer_digits +
                           ", exact product is " + oracle_digits(p));
  }
}

struct Equation {
  std::string_view a, b, answer;
};

Equation split_equation(std::string_view eq, std::string_view line) {
  const auto star = eq.find('*');
  const auto equals = eq.find('=');
  if (star == std::string_view::npos || equals == std::string_view::npos || equals < star) {
    throw ConsistencyError("malformed equation \"" + std::string(eq) + "\" in line \"" + std::string(line) + "\"");
  }
  return {eq.substr(0, star), eq.substr(star + 1, equals - star - 1), eq.substr(equals + 1)};
}

}  // namespace

std::string render_prompt(const PromptSpec& p) {
  std::string out;
  for (const auto& shot : p.shots) {
    check_solved(shot, "shot");
    out += question_text(shot);
    out += '=';
    out += shot.answer_digits;
    out += ". ";
  }
  if (!p.question.answer_digits.starts_with(p.given_prefix)) {
    throw ConsistencyError("given prefix \"" + p.given_prefix + "\" is not a prefix of " +
                           p.question.answer_digits);
  }
  out += question_text(p.question);
  out += '=';
  out += p.given_prefix;
  return out;
}

std::vector<MultProblem> reference_shots() { return {make_problem("111", "472"), make_problem("362", "194")}; }

PromptSpec parse_solved_line(std::string_view line) {
  PromptSpec spec;
  std::size_t start = 0;
  while (true) {
    const auto sep = line.find(". ", start);
    const bool last = sep == std::string_view::npos;
    const auto eq_text = line.substr(start, last ? std::string_view::npos : sep - start);
    const auto eq = split_equation(eq_text, line);
    MultProblem p;
    try {
      p = make_problem(eq.a, eq.b);
    } catch (const ParameterError& e) {
      throw ConsistencyError(std::string("bad operand in line \"") + std::string(line) + "\": " + e.what());
    }
    if (p.answer_digits != eq.answer) {
      throw ConsistencyError("line \"" + std::string(line) + "\" claims " + question_text(p) + "=" +
                             std::string(eq.answer) + ", exact product is " + p.answer_digits);
    }
    if (last) {
      spec.given_prefix = p.answer_digits;
      spec.question = std::move(p);
      return spec;
    }
    spec.shots.push_back(std::move(p));
    start = sep + 2;
  }
}

std::size_t answer_offset(std::string_view rendered) {
  const auto pos = rendered.rfind('=');
  if (pos == std::string_view::npos) throw ConsistencyError("no '=' in \"" + std::string(rendered) + "\"");
  return pos + 1;
}

}  // namespace dprobe::taskgen
