#include <cctype>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "dprobe/errors.hpp"
#include "dprobe/lm/checkpoint.hpp"
#include "dprobe/lm/mock_backend.hpp"
#include "dprobe/probe/probe.hpp"
#include "dprobe/probe/serialize.hpp"
#include "dprobe/report/report.hpp"
#include "dprobe/taskgen/corpus.hpp"
#include "dprobe/taskgen/problem.hpp"
#include "dprobe/trainer/train.hpp"

namespace fs = std::filesystem;
using namespace dprobe;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitDivergence = 4;

void write_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed for " + path.string());
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// "2..5" or "3"
taskgen::DigitRange parse_range(const std::string& text) {
  const auto dots = text.find("..");
  try {
    if (dots == std::string::npos) {
      const auto v = std::stoul(text);
      return {v, v};
    }
    return {std::stoul(text.substr(0, dots)), std::stoul(text.substr(dots + 2))};
  } catch (const std::exception&) {
    throw ParameterError("range \"" + text + "\" is not N or N..M");
  }
}

std::unique_ptr<lm::Backend> open_backend(const std::string& ckpt, const std::string& mock) {
  if (ckpt.empty() == mock.empty()) throw ParameterError("give exactly one of --ckpt or --mock");
  if (!mock.empty()) return std::make_unique<lm::MockBackend>(lm::MockScript::load(mock));
  return std::make_unique<lm::ModelBackend>(std::make_shared<const lm::ModelCheckpoint>(lm::load_checkpoint(ckpt)));
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Monte-Carlo dropout digit-confidence probing for multiplication"};
  app.require_subcommand(1);

  // gen-corpus
  auto* gen = app.add_subcommand("gen-corpus", "Write a multiplication training corpus");
  std::size_t n_min = 1, n_max = 1, m_min = 1, m_max = 1, per_cell = 0, shots = 2;
  std::uint64_t corpus_seed = 0;
  double holdout_fraction = 0.2;
  std::string corpus_out;
  gen->add_option("--n-min", n_min)->required();
  gen->add_option("--n-max", n_max)->required();
  gen->add_option("--m-min", m_min)->required();
  gen->add_option("--m-max", m_max)->required();
  gen->add_option("--per-cell", per_cell, "Problems per (n, m) cell")->required();
  gen->add_option("--shots", shots, "Solved examples before each question")->capture_default_str();
  gen->add_option("--seed", corpus_seed)->capture_default_str();
  gen->add_option("--holdout-fraction", holdout_fraction)->capture_default_str();
  std::size_t lines_per_problem = 1;
  gen->add_option("--lines-per-problem", lines_per_problem, "Training renderings of each problem")
      ->capture_default_str();
  std::string holdout_split = "questions";
  gen->add_option("--holdout-split", holdout_split,
                  "questions: held-out problems never trained; contexts: held-out lines re-render trained problems")
      ->check(CLI::IsMember({"questions", "contexts"}))
      ->capture_default_str();
  gen->add_option("--out", corpus_out)->required();

  // train
  auto* train = app.add_subcommand("train", "Train a toy model on a corpus");
  std::string train_corpus, train_config, train_out, train_report;
  bool quiet = false;
  train->add_option("--corpus", train_corpus)->required();
  train->add_option("--config", train_config, "key = value file")->required();
  train->add_option("--out", train_out, "Checkpoint path")->required();
  train->add_option("--report", train_report, "Training curve CSV (default: <out>.train.csv)");
  train->add_flag("--quiet", quiet);

  // eval
  auto* eval = app.add_subcommand("eval", "Holdout exact-match of a checkpoint");
  std::string eval_ckpt, eval_holdout;
  bool eval_dropout = false;
  double eval_rate = 0.1;
  std::uint64_t eval_seed = 0;
  std::size_t eval_limit = 0;
  eval->add_option("--ckpt", eval_ckpt)->required();
  eval->add_option("--holdout", eval_holdout, "Corpus directory")->required();
  eval->add_flag("--dropout-on", eval_dropout);
  eval->add_option("--dropout", eval_rate)->capture_default_str();
  eval->add_option("--seed", eval_seed)->capture_default_str();
  eval->add_option("--limit", eval_limit, "Score only the first N holdout lines");

  // probe
  auto* probe_cmd = app.add_subcommand("probe", "MC-dropout probe of one problem");
  std::string probe_ckpt, probe_mock, probe_a, probe_b, probe_mode = "uncond", probe_position = "last", probe_out,
                                                          shots_from = "reference";
  probe::ProbeConfig pc;
  bool probe_no_dropout = false;
  probe_cmd->add_option("--ckpt", probe_ckpt);
  probe_cmd->add_option("--mock", probe_mock, "Scripted backend JSON");
  probe_cmd->add_option("--a", probe_a)->required();
  probe_cmd->add_option("--b", probe_b)->required();
  probe_cmd->add_option("--mode", probe_mode)->check(CLI::IsMember({"uncond", "cond"}))->capture_default_str();
  probe_cmd->add_option("--position", probe_position, "last, first, all, or an index")->capture_default_str();
  probe_cmd->add_option("--passes", pc.passes)->capture_default_str();
  probe_cmd->add_option("--dropout", pc.dropout_rate)->capture_default_str();
  probe_cmd->add_flag("--no-dropout", probe_no_dropout, "Run every pass with dropout off");
  probe_cmd->add_option("--seed", pc.base_seed)->capture_default_str();
  probe_cmd->add_option("--threads", pc.threads)->capture_default_str();
  probe_cmd->add_option("--shots-from", shots_from, "reference or cell (fresh examples with the same digit counts)")
      ->check(CLI::IsMember({"reference", "cell"}))
      ->capture_default_str();
  probe_cmd->add_option("--out", probe_out)->required();

  // grid
  auto* grid = app.add_subcommand("grid", "Confidence grid over operand digit counts");
  std::string grid_ckpt, grid_mock, grid_n = "2..5", grid_m = "2..5", grid_out, grid_holdout;
  probe::GridSpec gs;
  probe::ProbeConfig gc;
  grid->add_option("--ckpt", grid_ckpt);
  grid->add_option("--mock", grid_mock);
  grid->add_option("--n", grid_n)->capture_default_str();
  grid->add_option("--m", grid_m)->capture_default_str();
  grid->add_option("--per-cell", gs.problems_per_cell)->capture_default_str();
  grid->add_option("--passes", gc.passes)->capture_default_str();
  grid->add_option("--dropout", gc.dropout_rate)->capture_default_str();
  grid->add_option("--seed", gc.base_seed)->capture_default_str();
  grid->add_option("--problem-seed", gs.problem_seed)->capture_default_str();
  grid->add_option("--threads", gc.threads)->capture_default_str();
  grid->add_option("--holdout", grid_holdout, "Probe this corpus's holdout prompts instead of fresh problems");
  grid->add_option("--out", grid_out)->required();

  // report
  auto* rep = app.add_subcommand("report", "Render grids and compare against baselines");
  std::string rep_grid, rep_baselines, rep_format = "csv", rep_out;
  rep->add_option("--grid", rep_grid, "Directory holding grid.json")->required();
  rep->add_option("--baselines", rep_baselines)->required();
  rep->add_option("--format", rep_format)->check(CLI::IsMember({"csv", "svg"}))->capture_default_str();
  rep->add_option("--out", rep_out)->required();

  // oracle
  auto* oracle = app.add_subcommand("oracle", "Exact product and digit rules");
  std::string oracle_a, oracle_b;
  oracle->add_option("--a", oracle_a)->required();
  oracle->add_option("--b", oracle_b)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (*gen) {
      taskgen::CorpusSpec spec;
      spec.n_range = {n_min, n_max};
      spec.m_range = {m_min, m_max};
      spec.count_per_cell = per_cell;
      spec.shots_per_line = shots;
      spec.rng_seed = corpus_seed;
      spec.holdout_fraction = holdout_fraction;
      spec.split = taskgen::parse_holdout_split(holdout_split);
      spec.lines_per_problem = lines_per_problem;
      const auto corpus = taskgen::build_corpus(spec);
      taskgen::write_corpus(corpus, corpus_out);
      std::cout << "wrote " << corpus.train.size() << " training and " << corpus.holdout.size()
                << " holdout lines to " << corpus_out << "\n";
    } else if (*train) {
      const auto rc = trainer::load_run_config(train_config);
      const auto corpus = taskgen::read_corpus(train_corpus);
      const auto t0 = std::chrono::steady_clock::now();
      auto progress = [&](std::size_t step, double loss, std::optional<double> em) {
        if (quiet) return;
        if (em || step % 100 == 0) {
          std::printf("step %zu loss %.4f", step, loss);
          if (em) std::printf(" holdout_exact_match %.4f", *em);
          std::printf(" (%.0fs)\n", seconds_since(t0));
          std::fflush(stdout);
        }
      };
      auto result = trainer::train(rc.train, corpus, rc.model, progress);
      lm::save_checkpoint(result.checkpoint, train_out);
      const fs::path report_path = train_report.empty() ? fs::path(train_out + ".train.csv") : fs::path(train_report);
      write_file(report_path, result.report.to_csv());
      std::cout << "trained " << result.report.steps_run << " steps in " << seconds_since(t0) << " s; checkpoint "
                << train_out << ", curve " << report_path.string() << "\n";
      if (!result.report.holdout_exact_match.empty()) {
        std::cout << "final holdout exact-match " << result.report.holdout_exact_match.back().second << "\n";
      }
    } else if (*eval) {
      auto ckpt = std::make_shared<const lm::ModelCheckpoint>(lm::load_checkpoint(eval_ckpt));
      lm::ModelBackend backend(ckpt);
      auto lines = taskgen::read_lines(fs::path(eval_holdout) / "holdout.txt");
      if (eval_limit && lines.size() > eval_limit) lines.resize(eval_limit);
      const double em = trainer::exact_match(backend, std::span<const taskgen::CorpusLine>(lines), eval_dropout,
                                             eval_seed, eval_rate);
      std::cout << "exact_match " << em << " over " << lines.size() << " holdout lines (dropout "
                << (eval_dropout ? "on" : "off") << ")\n";
    } else if (*probe_cmd) {
      const auto backend = open_backend(probe_ckpt, probe_mock);
      const auto problem = taskgen::make_problem(probe_a, probe_b);
      pc.dropout_active = !probe_no_dropout;
      if (shots_from == "cell") pc.shot_examples = probe::sample_shots(problem, pc.shots, pc.base_seed);
      const std::size_t len = problem.answer_digits.size();
      std::optional<std::size_t> position;
      if (probe_position == "last") {
        position = len - 1;
      } else if (probe_position == "first") {
        position = 0;
      } else if (probe_position != "all") {
        try {
          position = std::stoul(probe_position);
        } catch (const std::exception&) {
          throw ParameterError("--position must be last, first, all, or an index");
        }
      }
      probe::ProbeResult result;
      if (probe_mode == "uncond") {
        result = probe::mc_unconditional(*backend, problem, pc);
      } else if (!position) {
        result = probe::mc_conditional_scan(*backend, problem, pc);
      } else {
        result = probe::ProbeResult{};
        result.problem = problem;
        result.mode = probe::ProbeMode::kConditional;
        result.prompt = taskgen::render_prompt(probe::probe_prompt(problem, pc));
        result.base_seed = pc.base_seed;
        result.passes = pc.passes;
        result.dropout_rate = pc.dropout_rate;
        result.dropout_active = pc.dropout_active;
        result.histograms.push_back(probe::mc_conditional_digit(*backend, problem, *position, pc));
        result.correct_confidence.push_back(probe::correct_confidence(result.histograms[0], problem.answer_digits));
      }
      const fs::path out(probe_out);
      write_file(out / "probe.json", probe::to_json(result));
      write_file(out / "histograms.csv", probe::histogram_csv(result.histograms));
      const probe::DigitHistogram* focus = &result.histograms.back();
      if (position) {
        for (const auto& h : result.histograms) {
          if (h.position == *position) focus = &h;
        }
        if (focus->position != *position) throw ParameterError("position outside the answer");
      }
      const auto truth = problem.answer_digits[focus->position] - '0';
      write_file(out / "histogram.svg",
                 report::render_histogram_svg(*focus, taskgen::question_text(problem) + " position " +
                                                          std::to_string(focus->position)));
      std::printf("%s = %s, %s probe, K=%zu\n", taskgen::question_text(problem).c_str(), problem.answer_digits.c_str(),
                  probe::mode_name(result.mode).c_str(), pc.passes);
      std::printf("position %zu: confidence(%d) = %.3f, mode %s\n", focus->position, truth,
                  focus->confidence(static_cast<std::size_t>(truth)), probe::outcome_label(focus->mode()).c_str());
      if (result.exact_match) std::printf("exact-match across passes %.3f\n", *result.exact_match);
    } else if (*grid) {
      const auto backend = open_backend(grid_ckpt, grid_mock);
      gs.n_range = parse_range(grid_n);
      gs.m_range = parse_range(grid_m);
      if (!grid_holdout.empty()) {
        const auto lines = taskgen::read_lines(fs::path(grid_holdout) / "holdout.txt");
        gs.prompts = probe::group_by_cell(lines);
      }
      const auto t0 = std::chrono::steady_clock::now();
      const auto grids = probe::grid_ablation(*backend, gs, gc);
      const fs::path out(grid_out);
      write_file(out / "grid.json", probe::to_json(grids));
      for (const auto& g : grids) {
        write_file(out / (probe::grid_kind_name(g.kind) + ".csv"), report::render_grid_csv(g, true));
      }
      std::printf("grid done in %.1f s\n", seconds_since(t0));
      for (const auto& g : grids) {
        std::printf("%s\n%s", probe::grid_kind_name(g.kind).c_str(), report::render_grid_csv(g, true).c_str());
      }
    } else if (*rep) {
      const auto grids = probe::grids_from_json(read_file(fs::path(rep_grid) / "grid.json"));
      const auto baselines = report::load_baselines(rep_baselines);
      const auto format = report::parse_format(rep_format);
      const fs::path out(rep_out);
      const std::string ext = format == report::Format::kCsv ? ".csv" : ".svg";
      for (const auto& g : grids) {
        const auto name = probe::grid_kind_name(g.kind);
        write_file(out / ("ours_" + name + ext), report::render_grid(g, format, true, "toy model: " + name));
      }
      for (const auto& t : baselines.tables) {
        std::string slug = t.model;
        for (auto& c : slug) c = std::isalnum(static_cast<unsigned char>(c)) ? static_cast<char>(std::tolower(c)) : '-';
        write_file(out / ("baseline_" + slug + "_" + probe::grid_kind_name(t.kind) + ext),
                   report::render_grid(t.as_grid(), format, t.has_deviation(),
                                       t.model + ": " + probe::grid_kind_name(t.kind) + " (" + t.source + ")"));
      }
      const auto cmp = report::compare(grids, baselines);
      write_file(out / "comparison.csv", report::comparison_csv(cmp));
      write_file(out / "comparison.json", report::comparison_json(cmp));
      std::printf("mean unconditional last-digit confidence %.4f\n", cmp.summary.mean_unconditional);
      std::printf("mean conditional last-digit confidence   %.4f\n", cmp.summary.mean_conditional);
      std::printf("delta (conditional - unconditional)      %+.4f over %zu problems\n", cmp.summary.delta,
                  cmp.summary.problems);
      bool all_match = true;
      for (const auto& k : cmp.claims) {
        std::printf("claim %s (%zu,%zu): %.2f -> %.2f = %+.1f%% vs quoted %s%d%% : %s\n", k.claim.model.c_str(),
                    k.claim.n, k.claim.m, k.table_from, k.table_to, k.recomputed_percent,
                    k.claim.qualifier == "over" ? "over " : "", k.claim.quoted_percent,
                    k.matches ? "consistent" : "MISMATCH");
        all_match = all_match && k.matches;
      }
      if (!all_match) return kExitData;
    } else if (*oracle) {
      const auto p = taskgen::make_problem(oracle_a, oracle_b);
      const unsigned estimate = taskgen::leading_digit_estimate(p.a, p.b);
      std::printf("%s = %s\n", taskgen::question_text(p).c_str(), p.answer_digits.c_str());
      std::printf("last digit %c, rule ((a mod 10)(b mod 10)) mod 10 gives %u\n", p.answer_digits.back(),
                  taskgen::last_digit_rule(p.a, p.b));
      std::printf("leading digit %c, rounding estimate gives %u (%s)\n", p.answer_digits.front(), estimate,
                  static_cast<unsigned>(p.answer_digits.front() - '0') == estimate ? "agrees" : "differs");
    }
  } catch (const TrainingDivergence& e) {
    std::cerr << "error: " << e.what() << " (last finite step " << e.last_finite_step() << ", loss "
              << e.last_finite_loss() << ")\n";
    return kExitDivergence;
  } catch (const ParameterError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  }
  return 0;
}
