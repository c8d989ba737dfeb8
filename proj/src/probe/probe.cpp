#include "dprobe/probe/probe.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <random>
#include <set>
#include <thread>

#include "dprobe/errors.hpp"
#include "dprobe/numerics/dropout.hpp"

namespace dprobe::probe {

namespace {

// Runs fn(k) for k in [0, count) on `threads` workers. Results are stored by
// index; the error of the lowest failing index is rethrown.
template <typename T, typename Fn>
std::vector<T> run_passes(std::size_t count, std::size_t threads, Fn fn) {
  std::vector<T> results(count);
  std::vector<std::exception_ptr> errors(count);
  auto work = [&](std::size_t begin, std::size_t end) {
    for (std::size_t k = begin; k < end; ++k) {
      try {
        results[k] = fn(k);
      } catch (...) {
        errors[k] = std::current_exception();
      }
    }
  };
  threads = std::clamp<std::size_t>(threads, 1, count);
  if (threads == 1) {
    work(0, count);
  } else {
    std::vector<std::thread> pool;
    const std::size_t chunk = (count + threads - 1) / threads;
    for (std::size_t t = 0; t < threads; ++t) {
      const std::size_t begin = t * chunk;
      const std::size_t end = std::min(count, begin + chunk);
      if (begin < end) pool.emplace_back(work, begin, end);
    }
    for (auto& th : pool) th.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return results;
}

lm::PassContext pass_context(const ProbeConfig& config, std::size_t k) {
  return lm::PassContext{config.pass_seed(k), k, config.dropout_active, config.dropout_rate};
}

std::vector<lm::TokenId> encode_prompt(const lm::Backend& backend, taskgen::PromptSpec prompt, std::string prefix) {
  prompt.given_prefix = std::move(prefix);
  return backend.vocab().encode(taskgen::render_prompt(prompt));
}

void check_last_digit(const taskgen::MultProblem& p) {
  const unsigned rule = taskgen::last_digit_rule(p.a, p.b);
  if (p.answer_digits.empty() || static_cast<unsigned>(p.answer_digits.back() - '0') != rule) {
    throw ConsistencyError("answer " + p.answer_digits + " of " + taskgen::question_text(p) +
                           " disagrees with the last-digit rule (" + std::to_string(rule) + ")");
  }
}

}  // namespace

std::string outcome_label(std::size_t outcome) {
  if (outcome < 10) return std::string(1, static_cast<char>('0' + outcome));
  if (outcome == kEnd) return "END";
  if (outcome == kOther) return "OTHER";
  throw ParameterError("outcome index " + std::to_string(outcome) + " out of range");
}

std::size_t parse_outcome(std::string_view label) {
  for (std::size_t o = 0; o < kOutcomeCount; ++o) {
    if (label == outcome_label(o)) return o;
  }
  throw ParameterError("unknown outcome label \"" + std::string(label) + "\"");
}

std::size_t outcome_of(lm::TokenId token, const lm::Vocab& vocab) {
  if (auto d = vocab.digit_of(token)) return *d;
  if (token == vocab.end_id()) return kEnd;
  return kOther;
}

void ProbeConfig::validate() const {
  if (passes < 1) throw ParameterError("passes must be at least 1");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw ParameterError("dropout_rate must lie in [0, 1)");
  if (threads < 1) throw ParameterError("threads must be at least 1");
  if (!shot_examples.empty() && shot_examples.size() < shots) {
    throw ParameterError("config asks for " + std::to_string(shots) + " shots but supplies " +
                         std::to_string(shot_examples.size()));
  }
  if (shot_examples.empty() && shots > 2) {
    throw ParameterError("only 2 reference shots exist; supply shot_examples for " + std::to_string(shots));
  }
}

void DigitHistogram::add(std::size_t outcome) {
  if (outcome >= kOutcomeCount) throw ParameterError("outcome index out of range");
  ++counts[outcome];
  ++passes;
}

double DigitHistogram::confidence(std::size_t outcome) const {
  if (outcome >= kOutcomeCount) throw ParameterError("outcome index out of range");
  if (passes == 0) throw ParameterError("confidence of an empty histogram");
  return static_cast<double>(counts[outcome]) / static_cast<double>(passes);
}

std::size_t DigitHistogram::mode() const {
  return static_cast<std::size_t>(std::max_element(counts.begin(), counts.end()) - counts.begin());
}

std::size_t DigitHistogram::nonzero_cells() const {
  return static_cast<std::size_t>(std::count_if(counts.begin(), counts.end(), [](auto c) { return c != 0; }));
}

std::string mode_name(ProbeMode mode) {
  return mode == ProbeMode::kUnconditional ? "unconditional" : "conditional";
}

taskgen::PromptSpec probe_prompt(const taskgen::MultProblem& problem, const ProbeConfig& config) {
  config.validate();
  taskgen::PromptSpec spec;
  spec.question = problem;
  if (config.shot_examples.empty()) {
    auto ref = taskgen::reference_shots();
    spec.shots.assign(ref.begin(), ref.begin() + static_cast<std::ptrdiff_t>(config.shots));
  } else {
    spec.shots.assign(config.shot_examples.begin(),
                      config.shot_examples.begin() + static_cast<std::ptrdiff_t>(config.shots));
  }
  return spec;
}

ProbeResult mc_unconditional(const lm::Backend& backend, const taskgen::MultProblem& problem,
                             const ProbeConfig& config) {
  return mc_unconditional(backend, probe_prompt(problem, config), config);
}

ProbeResult mc_unconditional(const lm::Backend& backend, const taskgen::PromptSpec& prompt, const ProbeConfig& config) {
  config.validate();
  const auto& vocab = backend.vocab();
  const auto& truth = prompt.question.answer_digits;
  const auto context = encode_prompt(backend, prompt, "");
  auto expected = vocab.encode(truth);
  expected.push_back(vocab.end_id());

  auto generations = run_passes<std::vector<lm::TokenId>>(config.passes, config.threads, [&](std::size_t k) {
    try {
      return backend.greedy_generate(context, pass_context(config, k), truth.size() + 1);
    } catch (const CapacityError& e) {
      throw CapacityError("pass " + std::to_string(k) + ": " + e.what(), e.partial_output());
    }
  });

  ProbeResult r;
  r.problem = prompt.question;
  r.mode = ProbeMode::kUnconditional;
  r.prompt = taskgen::render_prompt(taskgen::PromptSpec{prompt.shots, prompt.question, ""});
  r.base_seed = config.base_seed;
  r.passes = config.passes;
  r.dropout_rate = config.dropout_rate;
  r.dropout_active = config.dropout_active;
  r.histograms.resize(truth.size());
  for (std::size_t p = 0; p < truth.size(); ++p) r.histograms[p].position = p;
  std::size_t exact = 0;
  for (const auto& gen : generations) {
    bool ended = false;
    for (std::size_t p = 0; p < truth.size(); ++p) {
      std::size_t outcome = kEnd;
      if (!ended && p < gen.size()) {
        outcome = outcome_of(gen[p], vocab);
        if (outcome == kEnd) ended = true;
      }
      r.histograms[p].add(outcome);
    }
    if (gen == expected) ++exact;
  }
  r.correct_confidence = correct_confidence(r.histograms, truth);
  r.exact_match = static_cast<double>(exact) / static_cast<double>(config.passes);
  return r;
}

DigitHistogram mc_conditional_digit(const lm::Backend& backend, const taskgen::MultProblem& problem,
                                    std::size_t position, const ProbeConfig& config) {
  return mc_conditional_digit(backend, probe_prompt(problem, config), position, config);
}

DigitHistogram mc_conditional_digit(const lm::Backend& backend, const taskgen::PromptSpec& prompt,
                                    std::size_t position, const ProbeConfig& config) {
  config.validate();
  const auto& truth = prompt.question.answer_digits;
  if (position >= truth.size()) {
    throw ParameterError("position " + std::to_string(position) + " outside answer " + truth + " of length " +
                         std::to_string(truth.size()));
  }
  const auto context = encode_prompt(backend, prompt, truth.substr(0, position));
  const auto outcomes = run_passes<std::size_t>(config.passes, config.threads, [&](std::size_t k) {
    return outcome_of(backend.forward(context, pass_context(config, k)).argmax_id, backend.vocab());
  });
  DigitHistogram h;
  h.position = position;
  for (auto o : outcomes) h.add(o);
  return h;
}

ProbeResult mc_conditional_scan(const lm::Backend& backend, const taskgen::MultProblem& problem,
                                const ProbeConfig& config) {
  return mc_conditional_scan(backend, probe_prompt(problem, config), config);
}

ProbeResult mc_conditional_scan(const lm::Backend& backend, const taskgen::PromptSpec& prompt,
                                const ProbeConfig& config) {
  ProbeResult r;
  r.problem = prompt.question;
  r.mode = ProbeMode::kConditional;
  r.prompt = taskgen::render_prompt(taskgen::PromptSpec{prompt.shots, prompt.question, ""});
  r.base_seed = config.base_seed;
  r.passes = config.passes;
  r.dropout_rate = config.dropout_rate;
  r.dropout_active = config.dropout_active;
  for (std::size_t p = 0; p < prompt.question.answer_digits.size(); ++p) {
    r.histograms.push_back(mc_conditional_digit(backend, prompt, p, config));
  }
  r.correct_confidence = correct_confidence(r.histograms, prompt.question.answer_digits);
  return r;
}

double correct_confidence(const DigitHistogram& histogram, std::string_view truth) {
  if (histogram.position >= truth.size()) {
    throw ConsistencyError("histogram position " + std::to_string(histogram.position) + " outside truth \"" +
                           std::string(truth) + "\"");
  }
  const char c = truth[histogram.position];
  if (c < '0' || c > '9') throw ConsistencyError("truth \"" + std::string(truth) + "\" is not a digit string");
  return histogram.confidence(static_cast<std::size_t>(c - '0'));
}

std::vector<double> correct_confidence(std::span<const DigitHistogram> histograms, std::string_view truth) {
  if (histograms.size() != truth.size()) {
    throw ConsistencyError(std::to_string(histograms.size()) + " histograms for truth \"" + std::string(truth) +
                           "\" of length " + std::to_string(truth.size()));
  }
  std::vector<double> out;
  out.reserve(histograms.size());
  for (const auto& h : histograms) out.push_back(correct_confidence(h, truth));
  return out;
}

std::string grid_kind_name(GridKind kind) {
  switch (kind) {
    case GridKind::kFirstDigit: return "first-digit";
    case GridKind::kLastDigitUnconditional: return "last-digit-unconditional";
    case GridKind::kLastDigitConditional: return "last-digit-conditional";
  }
  throw ParameterError("unknown grid kind");
}

GridKind parse_grid_kind(std::string_view name) {
  for (auto k : kGridKinds) {
    if (name == grid_kind_name(k)) return k;
  }
  throw ParameterError("unknown grid kind \"" + std::string(name) + "\"");
}

const GridCell& GridResult::cell(std::size_t n, std::size_t m) const {
  for (const auto& c : cells) {
    if (c.n == n && c.m == m) return c;
  }
  throw ParameterError("grid has no cell (" + std::to_string(n) + ", " + std::to_string(m) + ")");
}

std::vector<std::size_t> GridResult::n_values() const {
  std::set<std::size_t> s;
  for (const auto& c : cells) s.insert(c.n);
  return {s.begin(), s.end()};
}

std::vector<std::size_t> GridResult::m_values() const {
  std::set<std::size_t> s;
  for (const auto& c : cells) s.insert(c.m);
  return {s.begin(), s.end()};
}

std::vector<taskgen::MultProblem> sample_shots(const taskgen::MultProblem& question, std::size_t count,
                                               std::uint64_t seed) {
  const std::size_t n = question.n_digits;
  const std::size_t m = question.m_digits;
  if (taskgen::cell_size(n, m) <= count) {
    throw ExhaustionError("cell " + std::to_string(n) + "x" + std::to_string(m) + " has too few problems for " +
                          std::to_string(count) + " distinct shots");
  }
  std::mt19937_64 rng(seed);
  std::set<std::string> seen{taskgen::question_text(question)};
  std::vector<taskgen::MultProblem> shots;
  while (shots.size() < count) {
    auto a = taskgen::BigUint::random_with_digits(n, rng);
    auto b = taskgen::BigUint::random_with_digits(m, rng);
    auto p = taskgen::make_problem(std::move(a), std::move(b));
    if (seen.insert(taskgen::question_text(p)).second) shots.push_back(std::move(p));
  }
  return shots;
}

std::vector<taskgen::PromptSpec> cell_prompts(const GridSpec& spec, std::size_t n, std::size_t m,
                                              std::size_t shots) {
  if (auto it = spec.prompts.find({n, m}); it != spec.prompts.end()) {
    if (it->second.size() < spec.problems_per_cell) {
      throw ParameterError("cell (" + std::to_string(n) + ", " + std::to_string(m) + ") supplies " +
                           std::to_string(it->second.size()) + " prompts, " +
                           std::to_string(spec.problems_per_cell) + " needed");
    }
    std::vector<taskgen::PromptSpec> out(it->second.begin(),
                                         it->second.begin() + static_cast<std::ptrdiff_t>(spec.problems_per_cell));
    for (auto& p : out) {
      if (p.shots.size() < shots) throw ParameterError("supplied prompt has fewer shots than configured");
      p.shots.resize(shots);
      p.given_prefix.clear();
    }
    return out;
  }
  if (taskgen::cell_size(n, m) < spec.problems_per_cell) {
    throw ExhaustionError("cell (" + std::to_string(n) + ", " + std::to_string(m) + ") cannot supply " +
                          std::to_string(spec.problems_per_cell) + " distinct problems");
  }
  const std::uint64_t cell_seed = numerics::derive_seed(spec.problem_seed, n, m);
  std::mt19937_64 rng(cell_seed);
  std::set<std::string> seen;
  std::vector<taskgen::PromptSpec> out;
  while (out.size() < spec.problems_per_cell) {
    auto a = taskgen::BigUint::random_with_digits(n, rng);
    auto b = taskgen::BigUint::random_with_digits(m, rng);
    auto q = taskgen::make_problem(std::move(a), std::move(b));
    if (!seen.insert(taskgen::question_text(q)).second) continue;
    taskgen::PromptSpec p;
    p.shots = sample_shots(q, shots, numerics::derive_seed(cell_seed, out.size()));
    p.question = std::move(q);
    out.push_back(std::move(p));
  }
  return out;
}

void summarize(GridCell& cell) {
  cell.count = cell.values.size();
  if (cell.count == 0) throw ParameterError("cannot summarize an empty cell");
  double total = 0.0;
  for (double v : cell.values) total += v;
  cell.mean = total / static_cast<double>(cell.count);
  cell.single_sample = cell.count == 1;
  if (cell.single_sample) {
    cell.stddev = 0.0;
    return;
  }
  double ss = 0.0;
  for (double v : cell.values) ss += (v - cell.mean) * (v - cell.mean);
  cell.stddev = std::sqrt(ss / static_cast<double>(cell.count - 1));
}

std::array<GridResult, 3> grid_ablation(const lm::Backend& backend, const GridSpec& spec, const ProbeConfig& config) {
  config.validate();
  if (spec.n_range.min < 1 || spec.n_range.min > spec.n_range.max || spec.m_range.min < 1 ||
      spec.m_range.min > spec.m_range.max) {
    throw ParameterError("grid ranges must be nonempty and start at 1 or more");
  }
  if (spec.problems_per_cell < 1) throw ParameterError("problems_per_cell must be at least 1");

  std::array<GridResult, 3> results;
  for (std::size_t k = 0; k < results.size(); ++k) {
    results[k].kind = kGridKinds[k];
    results[k].passes = config.passes;
    results[k].problems_per_cell = spec.problems_per_cell;
  }
  for (std::size_t n = spec.n_range.min; n <= spec.n_range.max; ++n) {
    for (std::size_t m = spec.m_range.min; m <= spec.m_range.max; ++m) {
      std::array<GridCell, 3> cells;
      for (auto& c : cells) {
        c.n = n;
        c.m = m;
      }
      const auto prompts = cell_prompts(spec, n, m, config.shots);
      for (std::size_t i = 0; i < prompts.size(); ++i) {
        const auto& prompt = prompts[i];
        const auto& q = prompt.question;
        ProbeConfig pc = config;
        pc.base_seed = numerics::derive_seed(config.base_seed, n * 1000 + m, i);
        try {
          check_last_digit(q);
          const std::size_t last = q.answer_digits.size() - 1;
          const double first = correct_confidence(mc_conditional_digit(backend, prompt, 0, pc), q.answer_digits);
          const double uncond_last = mc_unconditional(backend, prompt, pc).correct_confidence.back();
          const double cond_last =
              correct_confidence(mc_conditional_digit(backend, prompt, last, pc), q.answer_digits);
          const std::array<double, 3> values{first, uncond_last, cond_last};
          for (std::size_t k = 0; k < 3; ++k) {
            cells[k].values.push_back(values[k]);
            cells[k].questions.push_back(taskgen::question_text(q));
          }
        } catch (const std::exception& e) {
          throw GridCellError("grid cell (" + std::to_string(n) + ", " + std::to_string(m) + ") problem " +
                              std::to_string(i) + " " + taskgen::question_text(q) + ": " + e.what());
        }
      }
      for (std::size_t k = 0; k < 3; ++k) {
        summarize(cells[k]);
        results[k].cells.push_back(std::move(cells[k]));
      }
    }
  }
  return results;
}

std::map<std::pair<std::size_t, std::size_t>, std::vector<taskgen::PromptSpec>> group_by_cell(
    std::span<const taskgen::CorpusLine> lines) {
  std::map<std::pair<std::size_t, std::size_t>, std::vector<taskgen::PromptSpec>> out;
  for (const auto& l : lines) {
    auto p = l.prompt;
    p.given_prefix.clear();
    out[{p.question.n_digits, p.question.m_digits}].push_back(std::move(p));
  }
  return out;
}

}  // namespace dprobe::probe
