#include "dprobe/taskgen/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include "json.hpp"
#include <random>
#include <set>

#include "dprobe/errors.hpp"
#include "dprobe/numerics/dropout.hpp"

namespace dprobe::taskgen {

namespace {

constexpr std::uintmax_t kEnumerateLimit = 200'000;

std::uint64_t pow10(std::size_t e) {
  std::uint64_t v = 1;
  for (std::size_t i = 0; i < e; ++i) v *= 10;
  return v;
}

std::vector<MultProblem> sample_distinct(std::size_t n, std::size_t m, std::size_t count, std::mt19937_64& rng) {
  const auto size = cell_size(n, m);
  if (count > size) {
    throw ExhaustionError("cell (" + std::to_string(n) + ", " + std::to_string(m) + ") has " + std::to_string(size) +
                          " distinct problems, " + std::to_string(count) + " requested");
  }
  std::vector<MultProblem> out;
  out.reserve(count);
  if (size <= kEnumerateLimit) {
    const std::uint64_t a_lo = n == 1 ? 1 : pow10(n - 1), a_hi = pow10(n);
    const std::uint64_t b_lo = m == 1 ? 1 : pow10(m - 1), b_hi = pow10(m);
    std::vector<std::pair<std::uint64_t, std::uint64_t>> all;
    all.reserve(size);
    for (auto a = a_lo; a < a_hi; ++a) {
      for (auto b = b_lo; b < b_hi; ++b) all.emplace_back(a, b);
    }
    // partial Fisher-Yates
    for (std::size_t i = 0; i < count; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, all.size() - 1);
      std::swap(all[i], all[pick(rng)]);
      out.push_back(make_problem(BigUint(all[i].first), BigUint(all[i].second)));
    }
    return out;
  }
  std::set<std::pair<std::string, std::string>> seen;
  while (out.size() < count) {
    auto a = BigUint::random_with_digits(n, rng);
    auto b = BigUint::random_with_digits(m, rng);
    if (seen.emplace(a.to_decimal(), b.to_decimal()).second) out.push_back(make_problem(std::move(a), std::move(b)));
  }
  return out;
}

std::vector<MultProblem> pick_shots(const std::vector<MultProblem>& pool, const MultProblem& question,
                                    std::size_t shots, std::mt19937_64& rng) {
  std::vector<const MultProblem*> candidates;
  for (const auto& p : pool) {
    if (!(p == question)) candidates.push_back(&p);
  }
  if (candidates.empty()) candidates.push_back(&question);
  std::vector<MultProblem> out;
  std::uniform_int_distribution<std::size_t> pick(0, candidates.size() - 1);
  for (std::size_t i = 0; i < shots; ++i) out.push_back(*candidates[pick(rng)]);
  return out;
}

CorpusLine make_line(PromptSpec spec) {
  spec.given_prefix = spec.question.answer_digits;
  CorpusLine line{std::move(spec), {}};
  line.text = render_prompt(line.prompt);
  return line;
}

void validate(const CorpusSpec& spec) {
  if (spec.n_range.min < 1 || spec.m_range.min < 1 || spec.n_range.min > spec.n_range.max ||
      spec.m_range.min > spec.m_range.max || spec.n_range.max > kMaxOperandDigits ||
      spec.m_range.max > kMaxOperandDigits) {
    throw ParameterError("digit ranges must be nonempty and within [1, " + std::to_string(kMaxOperandDigits) + "]");
  }
  if (spec.count_per_cell < 1) throw ParameterError("count_per_cell must be at least 1");
  if (spec.lines_per_problem < 1) throw ParameterError("lines_per_problem must be at least 1");
  if (!(spec.holdout_fraction >= 0.0 && spec.holdout_fraction < 1.0)) {
    throw ParameterError("holdout_fraction must lie in [0, 1)");
  }
}

void write_lines(const std::vector<CorpusLine>& lines, const std::filesystem::path& file) {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw IoError("cannot write " + file.string());
  for (const auto& l : lines) out << l.text << '\n';
  if (!out) throw IoError("write failed for " + file.string());
}

}  // namespace

std::uintmax_t cell_size(std::size_t n, std::size_t m) {
  const double approx = 81.0 * std::pow(10.0, static_cast<double>(n + m - 2));
  if (approx >= static_cast<double>(std::numeric_limits<std::uintmax_t>::max() / 2)) {
    return std::numeric_limits<std::uintmax_t>::max();
  }
  return 81 * pow10(n - 1) * pow10(m - 1);
}

HoldoutSplit parse_holdout_split(std::string_view name) {
  if (name == "questions") return HoldoutSplit::kQuestions;
  if (name == "contexts") return HoldoutSplit::kContexts;
  throw ParameterError("holdout split must be questions or contexts, got \"" + std::string(name) + "\"");
}

std::string holdout_split_name(HoldoutSplit split) {
  return split == HoldoutSplit::kQuestions ? "questions" : "contexts";
}

Corpus build_corpus(const CorpusSpec& spec) {
  validate(spec);
  Corpus corpus{spec, {}, {}};
  for (std::size_t n = spec.n_range.min; n <= spec.n_range.max; ++n) {
    for (std::size_t m = spec.m_range.min; m <= spec.m_range.max; ++m) {
      std::mt19937_64 rng(numerics::derive_seed(spec.rng_seed, n, m));
      auto problems = sample_distinct(n, m, spec.count_per_cell, rng);
      const auto n_holdout =
          static_cast<std::size_t>(std::llround(static_cast<double>(spec.count_per_cell) * spec.holdout_fraction));
      std::vector<MultProblem> train(problems.begin(), problems.end() - static_cast<std::ptrdiff_t>(n_holdout));
      std::vector<MultProblem> holdout(problems.end() - static_cast<std::ptrdiff_t>(n_holdout), problems.end());
      if (train.empty()) throw ExhaustionError("holdout fraction leaves no training problems");
      if (spec.split == HoldoutSplit::kContexts) train = problems;
      for (std::size_t r = 0; r < spec.lines_per_problem; ++r) {
        for (const auto& q : train) {
          corpus.train.push_back(make_line({pick_shots(train, q, spec.shots_per_line, rng), q, {}}));
        }
      }
      for (const auto& q : holdout) {
        corpus.holdout.push_back(make_line({pick_shots(train, q, spec.shots_per_line, rng), q, {}}));
      }
    }
  }
  return corpus;
}

void write_corpus(const Corpus& corpus, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_lines(corpus.train, dir / "train.txt");
  write_lines(corpus.holdout, dir / "holdout.txt");
  const auto& s = corpus.spec;
  nlohmann::json manifest = {
      {"format", "dprobe-corpus"},
      {"version", 1},
      {"seed", s.rng_seed},
      {"n_range", {s.n_range.min, s.n_range.max}},
      {"m_range", {s.m_range.min, s.m_range.max}},
      {"per_cell", s.count_per_cell},
      {"shots", s.shots_per_line},
      {"holdout_fraction", s.holdout_fraction},
      {"holdout_split", holdout_split_name(s.split)},
      {"lines_per_problem", s.lines_per_problem},
      {"split", {{"train", corpus.train.size()}, {"holdout", corpus.holdout.size()}}},
      {"end_token", "implicit after each line"},
  };
  std::ofstream out(dir / "manifest.json");
  if (!out) throw IoError("cannot write manifest in " + dir.string());
  out << manifest.dump(2) << '\n';
}

std::vector<CorpusLine> read_lines(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw IoError("cannot read " + file.string());
  std::vector<CorpusLine> lines;
  std::string text;
  std::size_t number = 0;
  while (std::getline(in, text)) {
    ++number;
    if (text.empty()) continue;
    try {
      lines.push_back(make_line(parse_solved_line(text)));
    } catch (const ConsistencyError& e) {
      throw ConsistencyError(file.string() + ":" + std::to_string(number) + ": " + e.what());
    }
  }
  return lines;
}

Corpus read_corpus(const std::filesystem::path& dir) {
  Corpus corpus;
  const auto manifest_path = dir / "manifest.json";
  if (std::filesystem::exists(manifest_path)) {
    std::ifstream in(manifest_path);
    const auto j = nlohmann::json::parse(in, nullptr, false);
    if (j.is_discarded() || j.value("format", "") != "dprobe-corpus") {
      throw ConsistencyError("bad corpus manifest " + manifest_path.string());
    }
    auto& s = corpus.spec;
    s.rng_seed = j.at("seed").get<std::uint64_t>();
    s.n_range = {j.at("n_range")[0].get<std::size_t>(), j.at("n_range")[1].get<std::size_t>()};
    s.m_range = {j.at("m_range")[0].get<std::size_t>(), j.at("m_range")[1].get<std::size_t>()};
    s.count_per_cell = j.at("per_cell").get<std::size_t>();
    s.shots_per_line = j.at("shots").get<std::size_t>();
    s.holdout_fraction = j.at("holdout_fraction").get<double>();
    s.split = parse_holdout_split(j.value("holdout_split", "questions"));
    s.lines_per_problem = j.value("lines_per_problem", std::size_t{1});
  }
  corpus.train = read_lines(dir / "train.txt");
  corpus.holdout = read_lines(dir / "holdout.txt");
  return corpus;
}

}  // namespace dprobe::taskgen
