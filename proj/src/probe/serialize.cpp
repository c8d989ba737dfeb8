#include "dprobe/probe/serialize.hpp"

#include <sstream>

#include "dprobe/errors.hpp"
#include "json.hpp"

namespace dprobe::probe {

using nlohmann::json;

namespace {

json histogram_json(const DigitHistogram& h) {
  json counts = json::object();
  for (std::size_t o = 0; o < kOutcomeCount; ++o) counts[outcome_label(o)] = h.counts[o];
  return {{"position", h.position}, {"passes", h.passes}, {"counts", counts}, {"mode", outcome_label(h.mode())}};
}

DigitHistogram histogram_from(const json& j) {
  DigitHistogram h;
  h.position = j.at("position").get<std::size_t>();
  for (const auto& [label, count] : j.at("counts").items()) h.counts[parse_outcome(label)] = count.get<std::uint64_t>();
  h.passes = j.at("passes").get<std::uint64_t>();
  std::uint64_t total = 0;
  for (auto c : h.counts) total += c;
  if (total != h.passes) {
    throw ConsistencyError("histogram at position " + std::to_string(h.position) + " counts " + std::to_string(total) +
                           " passes but declares " + std::to_string(h.passes));
  }
  return h;
}

json grid_json(const GridResult& g) {
  json cells = json::array();
  for (const auto& c : g.cells) {
    cells.push_back({{"n", c.n},
                     {"m", c.m},
                     {"mean", c.mean},
                     {"stddev", c.stddev},
                     {"count", c.count},
                     {"single_sample", c.single_sample},
                     {"values", c.values},
                     {"questions", c.questions}});
  }
  return {{"kind", grid_kind_name(g.kind)},
          {"passes", g.passes},
          {"problems_per_cell", g.problems_per_cell},
          {"cells", cells}};
}

GridResult grid_from(const json& j) {
  GridResult g;
  g.kind = parse_grid_kind(j.at("kind").get<std::string>());
  g.passes = j.at("passes").get<std::size_t>();
  g.problems_per_cell = j.at("problems_per_cell").get<std::size_t>();
  for (const auto& c : j.at("cells")) {
    GridCell cell;
    cell.n = c.at("n").get<std::size_t>();
    cell.m = c.at("m").get<std::size_t>();
    cell.mean = c.at("mean").get<double>();
    cell.stddev = c.at("stddev").get<double>();
    cell.count = c.at("count").get<std::size_t>();
    cell.single_sample = c.value("single_sample", cell.count == 1);
    cell.values = c.value("values", std::vector<double>{});
    cell.questions = c.value("questions", std::vector<std::string>{});
    g.cells.push_back(std::move(cell));
  }
  return g;
}

void check_schema(const json& j) {
  const int v = j.value("schema_version", -1);
  if (v != kSchemaVersion) {
    throw ConsistencyError("unsupported schema_version " + std::to_string(v) + " (expected " +
                           std::to_string(kSchemaVersion) + ")");
  }
}

json parse(std::string_view text) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw ConsistencyError(std::string("malformed JSON: ") + e.what());
  }
}

}  // namespace

std::string to_json(const ProbeResult& r) {
  json hs = json::array();
  for (const auto& h : r.histograms) hs.push_back(histogram_json(h));
  json j = {{"schema_version", kSchemaVersion},
            {"type", "probe"},
            {"mode", mode_name(r.mode)},
            {"question", taskgen::question_text(r.problem)},
            {"answer", r.problem.answer_digits},
            {"prompt", r.prompt},
            {"passes", r.passes},
            {"base_seed", r.base_seed},
            {"dropout_rate", r.dropout_rate},
            {"dropout_active", r.dropout_active},
            {"histograms", hs},
            {"correct_confidence", r.correct_confidence}};
  j["exact_match"] = r.exact_match ? json(*r.exact_match) : json(nullptr);
  return j.dump(2) + "\n";
}

std::string to_json(const GridResult& grid) {
  json j = grid_json(grid);
  j["schema_version"] = kSchemaVersion;
  j["type"] = "grid";
  return j.dump(2) + "\n";
}

std::string to_json(const std::array<GridResult, 3>& grids) {
  json arr = json::array();
  for (const auto& g : grids) arr.push_back(grid_json(g));
  json j = {{"schema_version", kSchemaVersion}, {"type", "grid-ablation"}, {"grids", arr}};
  return j.dump(2) + "\n";
}

ProbeResult probe_result_from_json(std::string_view text) {
  const json j = parse(text);
  check_schema(j);
  try {
    ProbeResult r;
    const auto question = j.at("question").get<std::string>();
    const auto star = question.find('*');
    if (star == std::string::npos) throw ConsistencyError("question \"" + question + "\" lacks '*'");
    r.problem = taskgen::make_problem(std::string_view(question).substr(0, star),
                                      std::string_view(question).substr(star + 1));
    if (r.problem.answer_digits != j.at("answer").get<std::string>()) {
      throw ConsistencyError("stored answer does not match " + question);
    }
    r.mode = j.at("mode").get<std::string>() == "unconditional" ? ProbeMode::kUnconditional : ProbeMode::kConditional;
    r.prompt = j.at("prompt").get<std::string>();
    r.passes = j.at("passes").get<std::size_t>();
    r.base_seed = j.at("base_seed").get<std::uint64_t>();
    r.dropout_rate = j.at("dropout_rate").get<double>();
    r.dropout_active = j.at("dropout_active").get<bool>();
    for (const auto& h : j.at("histograms")) r.histograms.push_back(histogram_from(h));
    r.correct_confidence = j.at("correct_confidence").get<std::vector<double>>();
    if (!j.at("exact_match").is_null()) r.exact_match = j.at("exact_match").get<double>();
    return r;
  } catch (const json::exception& e) {
    throw ConsistencyError(std::string("probe JSON: ") + e.what());
  }
}

std::vector<GridResult> grids_from_json(std::string_view text) {
  const json j = parse(text);
  check_schema(j);
  try {
    std::vector<GridResult> out;
    if (j.contains("grids")) {
      for (const auto& g : j.at("grids")) out.push_back(grid_from(g));
    } else {
      out.push_back(grid_from(j));
    }
    return out;
  } catch (const json::exception& e) {
    throw ConsistencyError(std::string("grid JSON: ") + e.what());
  }
}

std::string histogram_csv(std::span<const DigitHistogram> histograms) {
  std::ostringstream os;
  os << "position,outcome,count\n";
  for (const auto& h : histograms) {
    for (std::size_t o = 0; o < kOutcomeCount; ++o) os << h.position << ',' << outcome_label(o) << ',' << h.counts[o] << '\n';
  }
  return os.str();
}

}  // namespace dprobe::probe
