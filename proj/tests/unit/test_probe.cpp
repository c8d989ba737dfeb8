#include <set>

#include "doctest.h"
#include "dprobe/errors.hpp"
#include "dprobe/lm/checkpoint.hpp"
#include "dprobe/lm/mock_backend.hpp"
#include "dprobe/probe/probe.hpp"
#include "dprobe/probe/serialize.hpp"

using namespace dprobe;
using namespace dprobe::probe;

namespace {

const auto kQuestion = taskgen::make_problem("592", "392");

lm::MockBackend mock(const char* json) { return lm::MockBackend(lm::MockScript::parse(json)); }

// 20 right, 35 stop after "23", 45 spread over wrong final digits.
constexpr const char* kEarlyStopScript = R"({"passes": [
  {"repeat": 20, "emit": "232064"},
  {"repeat": 35, "emit": "23"},
  {"repeat": 15, "emit": "232061"},
  {"repeat": 15, "emit": "232068"},
  {"repeat": 15, "emit": "232069"}]})";

std::shared_ptr<const lm::ModelCheckpoint> tiny_model(std::uint64_t seed) {
  lm::ModelConfig c;
  c.layers = 1;
  c.heads = 2;
  c.width = 16;
  c.context_length = 64;
  return std::make_shared<const lm::ModelCheckpoint>(
      lm::ModelCheckpoint{lm::Transformer(c, seed), lm::Vocab::standard(), {}});
}

void check_conservation(const std::vector<DigitHistogram>& hs, std::uint64_t k) {
  for (const auto& h : hs) {
    std::uint64_t total = 0;
    for (auto c : h.counts) total += c;
    CHECK(total == k);
    CHECK(h.passes == k);
  }
}

}  // namespace

TEST_CASE("outcome alphabet") {
  CHECK(outcome_label(4) == "4");
  CHECK(outcome_label(kEnd) == "END");
  CHECK(outcome_label(kOther) == "OTHER");
  CHECK(parse_outcome("END") == kEnd);
  CHECK_THROWS_AS(parse_outcome("x"), ParameterError);
  const auto v = lm::Vocab::standard();
  CHECK(outcome_of(v.digit_id(7), v) == 7);
  CHECK(outcome_of(v.end_id(), v) == kEnd);
  CHECK(outcome_of(v.encode("*")[0], v) == kOther);
}

TEST_CASE("unconditional probe tallies emissions by index") {
  auto backend = mock(kEarlyStopScript);
  ProbeConfig cfg;
  const auto r = mc_unconditional(backend, kQuestion, cfg);
  REQUIRE(r.histograms.size() == 6);
  check_conservation(r.histograms, 100);
  const auto& last = r.histograms.back();
  CHECK(last.confidence(4) == 0.20);
  CHECK(last.confidence(kEnd) == 0.35);
  CHECK(last.mode() == kEnd);
  CHECK(r.correct_confidence.back() == 0.20);
  CHECK(r.correct_confidence.front() == 1.0);  // all passes start with "2"
  CHECK(r.histograms[2].confidence(kEnd) == 0.35);
  CHECK(*r.exact_match == 0.20);
  CHECK(r.prompt == "111*472=52392. 362*194=70228. 592*392=");
}

TEST_CASE("all-correct script and single pass") {
  auto backend = mock(R"({"passes":[{"repeat":100,"emit":"232064"}]})");
  ProbeConfig cfg;
  const auto r = mc_unconditional(backend, kQuestion, cfg);
  for (double c : r.correct_confidence) CHECK(c == 1.0);
  cfg.passes = 1;
  const auto one = mc_unconditional(backend, kQuestion, cfg);
  check_conservation(one.histograms, 1);
  for (const auto& h : one.histograms) {
    for (std::size_t o = 0; o < kOutcomeCount; ++o) CHECK((h.confidence(o) == 0.0 || h.confidence(o) == 1.0));
  }
}

TEST_CASE("non-digit emissions count as OTHER") {
  auto backend = mock(R"({"passes":[{"repeat":4,"emit":"23*0"}]})");
  ProbeConfig cfg;
  cfg.passes = 4;
  const auto r = mc_unconditional(backend, kQuestion, cfg);
  CHECK(r.histograms[2].confidence(kOther) == 1.0);
  CHECK(r.histograms[3].confidence(0) == 1.0);
  CHECK(r.histograms[4].confidence(kEnd) == 1.0);
  CHECK(r.histograms[5].confidence(kEnd) == 1.0);
}

TEST_CASE("conditional digit probe") {
  auto backend = mock(R"({"passes":[{"repeat":60,"emit":"232064"},{"repeat":40,"emit":"232067"}]})");
  ProbeConfig cfg;
  const auto h = mc_conditional_digit(backend, kQuestion, 5, cfg);
  CHECK(h.confidence(4) == 0.60);
  CHECK(h.confidence(7) == 0.40);
  CHECK(correct_confidence(h, kQuestion.answer_digits) == 0.60);
  CHECK_THROWS_AS(mc_conditional_digit(backend, kQuestion, 6, cfg), ParameterError);

  auto first = mock(R"({"passes":[{"repeat":100,"emit":"2"}]})");
  CHECK(mc_conditional_digit(first, kQuestion, 0, cfg).confidence(2) == 1.0);

  cfg.dropout_active = false;
  const auto off = mc_conditional_digit(backend, kQuestion, 5, cfg);
  CHECK(off.nonzero_cells() == 1);
  CHECK(off.confidence(4) == 1.0);

  const auto scan = mc_conditional_scan(backend, kQuestion, ProbeConfig{});
  CHECK(scan.histograms.size() == 6);
  CHECK(scan.correct_confidence.back() == 0.60);
  CHECK_FALSE(scan.exact_match.has_value());
}

TEST_CASE("correct confidence checks its inputs") {
  DigitHistogram uniform;
  for (std::size_t d = 0; d < 10; ++d) {
    for (int i = 0; i < 10; ++i) uniform.add(d);
  }
  CHECK(correct_confidence(uniform, "7") == 0.10);
  std::vector<DigitHistogram> two(2);
  CHECK_THROWS_AS(correct_confidence(two, "123"), ConsistencyError);
  DigitHistogram far;
  far.position = 3;
  far.add(1);
  CHECK_THROWS_AS(correct_confidence(far, "12"), ConsistencyError);
}

TEST_CASE("probe config validation") {
  ProbeConfig cfg;
  cfg.passes = 0;
  CHECK_THROWS_AS(cfg.validate(), ParameterError);
  cfg = ProbeConfig{};
  cfg.shots = 3;
  CHECK_THROWS_AS(cfg.validate(), ParameterError);
  cfg.shot_examples = sample_shots(kQuestion, 3, 1);
  CHECK_NOTHROW(cfg.validate());
  const auto prompt = probe_prompt(kQuestion, cfg);
  CHECK(prompt.shots.size() == 3);
  for (const auto& s : prompt.shots) {
    CHECK(s.n_digits == 3);
    CHECK(s.m_digits == 3);
    CHECK_FALSE(s == kQuestion);
  }
  std::set<std::uint64_t> seeds;
  for (std::size_t k = 0; k < 100; ++k) seeds.insert(ProbeConfig{}.pass_seed(k));
  CHECK(seeds.size() == 100);
}

TEST_CASE("real model: reproducible, schedule independent, dropout-off collapse") {
  lm::ModelBackend backend(tiny_model(4));
  ProbeConfig cfg;
  cfg.passes = 24;
  cfg.base_seed = 77;
  const auto a = mc_unconditional(backend, kQuestion, cfg);
  cfg.threads = 3;
  const auto b = mc_unconditional(backend, kQuestion, cfg);
  CHECK(to_json(a) == to_json(b));
  check_conservation(a.histograms, 24);

  // Position 0 of the unconditional probe equals the conditional first-digit probe.
  const auto first = mc_conditional_digit(backend, kQuestion, 0, cfg);
  CHECK(first.counts == a.histograms[0].counts);

  cfg.dropout_active = false;
  const auto off = mc_unconditional(backend, kQuestion, cfg);
  for (const auto& h : off.histograms) CHECK(h.nonzero_cells() == 1);
  cfg.base_seed = 78;
  cfg.dropout_active = true;
  const auto other_seed = mc_unconditional(backend, kQuestion, cfg);
  CHECK(to_json(other_seed) != to_json(a));
}

TEST_CASE("grid over a constant script") {
  auto backend = mock(R"({"passes":[{"repeat":10,"oracle":true}],
    "cells":{"2x3":[{"repeat":3,"oracle":true},{"repeat":7,"oracle":true,"perturb":[0,-1]}]}})");
  GridSpec spec;
  spec.n_range = {2, 2};
  spec.m_range = {2, 3};
  spec.problems_per_cell = 4;
  ProbeConfig cfg;
  cfg.passes = 10;
  const auto grids = grid_ablation(backend, spec, cfg);
  for (const auto& g : grids) {
    REQUIRE(g.cells.size() == 2);
    CHECK(g.cell(2, 2).mean == 1.0);
    CHECK(g.cell(2, 2).stddev == 0.0);
    CHECK(g.cell(2, 2).count == 4);
    CHECK(g.cell(2, 3).mean == doctest::Approx(0.3).epsilon(1e-15));
    CHECK(g.cell(2, 3).stddev == 0.0);
  }
  // Conditional probes see the correct prefix, so only position 0 and the last position move.
  CHECK(grids[0].kind == GridKind::kFirstDigit);
  spec.problems_per_cell = 1;
  const auto single = grid_ablation(backend, spec, cfg);
  CHECK(single[1].cell(2, 2).single_sample);
  CHECK(single[1].cell(2, 2).stddev == 0.0);
  const auto back = grids_from_json(to_json(grids));
  REQUIRE(back.size() == 3);
  CHECK(back[2].cell(2, 3).values == grids[2].cell(2, 3).values);
}

TEST_CASE("grid problems are distinct and reproducible") {
  GridSpec spec;
  spec.problems_per_cell = 10;
  spec.problem_seed = 4;
  const auto a = cell_prompts(spec, 3, 4, 2);
  const auto b = cell_prompts(spec, 3, 4, 2);
  std::set<std::string> qs;
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].question == b[i].question);
    qs.insert(taskgen::question_text(a[i].question));
    CHECK(a[i].shots.size() == 2);
    for (const auto& s : a[i].shots) {
      CHECK(s.n_digits == 3);
      CHECK(s.m_digits == 4);
    }
  }
  CHECK(qs.size() == 10);
  spec.problems_per_cell = 82;
  CHECK_THROWS_AS(cell_prompts(spec, 1, 1, 2), ExhaustionError);
}

TEST_CASE("grid failures name the cell") {
  auto backend = mock(R"({"passes":[{"repeat":2,"oracle":true}]})");
  GridSpec spec;
  spec.n_range = {2, 2};
  spec.m_range = {2, 2};
  spec.problems_per_cell = 1;
  ProbeConfig cfg;
  cfg.passes = 5;
  try {
    grid_ablation(backend, spec, cfg);
    FAIL("expected GridCellError");
  } catch (const GridCellError& e) {
    CHECK(std::string(e.what()).find("(2, 2)") != std::string::npos);
  }
}

TEST_CASE("probe JSON and histogram CSV") {
  auto backend = mock(kEarlyStopScript);
  const auto r = mc_unconditional(backend, kQuestion, ProbeConfig{});
  const auto json = to_json(r);
  CHECK(json.find("\"schema_version\": 1") != std::string::npos);
  const auto back = probe_result_from_json(json);
  CHECK(to_json(back) == json);
  const auto csv = histogram_csv(r.histograms);
  CHECK(csv.rfind("position,outcome,count\n0,0,0\n", 0) == 0);
  CHECK(csv.find("5,4,20\n") != std::string::npos);
  CHECK(csv.find("5,END,35\n") != std::string::npos);
  CHECK_THROWS_AS(probe_result_from_json("{\"schema_version\": 7}"), ConsistencyError);
}
