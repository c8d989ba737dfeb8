#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "dprobe/errors.hpp"
#include "dprobe/lm/checkpoint.hpp"
#include "dprobe/lm/mock_backend.hpp"
#include "dprobe/probe/probe.hpp"
#include "dprobe/probe/serialize.hpp"
#include "dprobe/report/report.hpp"
#include "dprobe/taskgen/corpus.hpp"
#include "dprobe/taskgen/prompt.hpp"
#include "dprobe/trainer/train.hpp"

namespace py = pybind11;
using namespace dprobe;

namespace {

probe::ProbeConfig make_config(std::size_t passes, double dropout_rate, bool dropout_active, std::uint64_t seed,
                               std::size_t threads) {
  probe::ProbeConfig c;
  c.passes = passes;
  c.dropout_rate = dropout_rate;
  c.dropout_active = dropout_active;
  c.base_seed = seed;
  c.threads = threads;
  return c;
}

std::shared_ptr<lm::Backend> model_backend(const std::filesystem::path& path) {
  return std::make_shared<lm::ModelBackend>(std::make_shared<const lm::ModelCheckpoint>(lm::load_checkpoint(path)));
}

std::shared_ptr<lm::Backend> mock_backend(const std::string& script) {
  return std::make_shared<lm::MockBackend>(lm::MockScript::parse(script));
}

std::string run_probe(const lm::Backend& backend, const std::string& a, const std::string& b, const std::string& mode,
                      std::size_t passes, double dropout_rate, bool dropout_active, std::uint64_t seed,
                      std::size_t threads) {
  const auto problem = taskgen::make_problem(a, b);
  const auto cfg = make_config(passes, dropout_rate, dropout_active, seed, threads);
  py::gil_scoped_release release;
  if (mode == "uncond") return probe::to_json(probe::mc_unconditional(backend, problem, cfg));
  if (mode == "cond") return probe::to_json(probe::mc_conditional_scan(backend, problem, cfg));
  throw ParameterError("mode must be uncond or cond, got " + mode);
}

std::string run_grid(const lm::Backend& backend, std::size_t n_min, std::size_t n_max, std::size_t m_min,
                     std::size_t m_max, std::size_t per_cell, std::size_t passes, double dropout_rate,
                     std::uint64_t seed, std::uint64_t problem_seed, std::size_t threads) {
  probe::GridSpec spec;
  spec.n_range = {n_min, n_max};
  spec.m_range = {m_min, m_max};
  spec.problems_per_cell = per_cell;
  spec.problem_seed = problem_seed;
  const auto cfg = make_config(passes, dropout_rate, true, seed, threads);
  py::gil_scoped_release release;
  return probe::to_json(probe::grid_ablation(backend, spec, cfg));
}

py::dict compare_grids(const std::string& grid_json, const std::filesystem::path& baselines) {
  const auto grids = probe::grids_from_json(grid_json);
  const auto cmp = report::compare(grids, report::load_baselines(baselines));
  py::dict out;
  out["json"] = report::comparison_json(cmp);
  out["csv"] = report::comparison_csv(cmp);
  return out;
}

py::list verify_claims(const std::filesystem::path& baselines) {
  py::list out;
  for (const auto& c : report::verify_claims(report::load_baselines(baselines))) {
    py::dict d;
    d["model"] = c.claim.model;
    d["from"] = c.table_from;
    d["to"] = c.table_to;
    d["quoted_percent"] = c.claim.quoted_percent;
    d["recomputed_percent"] = c.recomputed_percent;
    d["matches"] = c.matches;
    out.append(d);
  }
  return out;
}

py::dict train_model(const std::filesystem::path& corpus_dir, const std::string& config_text,
                     const std::filesystem::path& out) {
  const auto run = trainer::parse_run_config(config_text);
  const auto corpus = taskgen::read_corpus(corpus_dir);
  trainer::TrainResult result = [&] {
    py::gil_scoped_release release;
    return trainer::train(run.train, corpus, run.model);
  }();
  lm::save_checkpoint(result.checkpoint, out);
  py::dict d;
  d["loss"] = result.report.loss;
  d["holdout_exact_match"] = result.report.holdout_exact_match;
  d["steps_run"] = result.report.steps_run;
  d["csv"] = result.report.to_csv();
  return d;
}

double holdout_exact_match(const lm::Backend& backend, const std::filesystem::path& corpus_dir, bool dropout_active,
                           std::uint64_t seed, double dropout_rate) {
  const auto corpus = taskgen::read_corpus(corpus_dir);
  py::gil_scoped_release release;
  return trainer::exact_match(backend, corpus.holdout, dropout_active, seed, dropout_rate);
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "MC-dropout digit-confidence probing of multiplication models";

  py::register_exception<Error>(m, "DprobeError", PyExc_RuntimeError);
  py::register_exception<ParameterError>(m, "ParameterError", PyExc_ValueError);

  m.def("oracle_digits", [](const std::string& a, const std::string& b) {
    return taskgen::oracle_digits(taskgen::make_problem(a, b));
  });
  m.def("last_digit_rule", [](const std::string& a, const std::string& b) {
    return taskgen::last_digit_rule(taskgen::BigUint::from_decimal(a), taskgen::BigUint::from_decimal(b));
  });
  m.def("leading_digit_estimate", [](const std::string& a, const std::string& b) {
    return taskgen::leading_digit_estimate(taskgen::BigUint::from_decimal(a), taskgen::BigUint::from_decimal(b));
  });
  m.def(
      "render_prompt",
      [](const std::string& a, const std::string& b, const std::string& prefix) {
        taskgen::PromptSpec p{taskgen::reference_shots(), taskgen::make_problem(a, b), prefix};
        return taskgen::render_prompt(p);
      },
      py::arg("a"), py::arg("b"), py::arg("prefix") = "");

  m.def(
      "gen_corpus",
      [](const std::filesystem::path& out, std::size_t n_min, std::size_t n_max, std::size_t m_min, std::size_t m_max,
         std::size_t per_cell, std::uint64_t seed, double holdout_fraction) {
        taskgen::CorpusSpec spec;
        spec.n_range = {n_min, n_max};
        spec.m_range = {m_min, m_max};
        spec.count_per_cell = per_cell;
        spec.rng_seed = seed;
        spec.holdout_fraction = holdout_fraction;
        const auto corpus = taskgen::build_corpus(spec);
        taskgen::write_corpus(corpus, out);
        return py::make_tuple(corpus.train.size(), corpus.holdout.size());
      },
      py::arg("out"), py::arg("n_min"), py::arg("n_max"), py::arg("m_min"), py::arg("m_max"), py::arg("per_cell"),
      py::arg("seed") = 0, py::arg("holdout_fraction") = 0.2);

  py::class_<lm::Backend, std::shared_ptr<lm::Backend>>(m, "Backend")
      .def_property_readonly("context_length", &lm::Backend::context_length);
  m.def("load_model", &model_backend, py::arg("path"));
  m.def("mock_backend", &mock_backend, py::arg("script"));

  m.def("probe_json", &run_probe, py::arg("backend"), py::arg("a"), py::arg("b"), py::arg("mode") = "uncond",
        py::arg("passes") = 100, py::arg("dropout_rate") = 0.1, py::arg("dropout_active") = true,
        py::arg("seed") = 0, py::arg("threads") = 1);
  m.def("grid_json", &run_grid, py::arg("backend"), py::arg("n_min") = 2, py::arg("n_max") = 5,
        py::arg("m_min") = 2, py::arg("m_max") = 5, py::arg("per_cell") = 10, py::arg("passes") = 100,
        py::arg("dropout_rate") = 0.1, py::arg("seed") = 0, py::arg("problem_seed") = 0, py::arg("threads") = 1);
  m.def("compare", &compare_grids, py::arg("grid_json"), py::arg("baselines"));
  m.def("verify_claims", &verify_claims, py::arg("baselines"));
  m.def("train", &train_model, py::arg("corpus_dir"), py::arg("config_text"), py::arg("out"));
  m.def("exact_match", &holdout_exact_match, py::arg("backend"), py::arg("corpus_dir"),
        py::arg("dropout_active") = false, py::arg("seed") = 0, py::arg("dropout_rate") = 0.1);
}
