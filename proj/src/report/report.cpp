#include "dprobe/report/report.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "dprobe/errors.hpp"
#include "json.hpp"

namespace dprobe::report {

using nlohmann::json;

namespace {

constexpr std::string_view kPlusMinus = "\xC2\xB1";  // U+00B1
constexpr int kCanvasWidth = 640;
constexpr int kCanvasHeight = 480;

std::string fixed2(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string cell_text(double mean, std::optional<double> dev) {
  std::string s = fixed2(mean);
  if (dev) s += std::string(kPlusMinus) + " " + fixed2(*dev);
  return s;
}

std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    out.emplace_back(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

std::vector<std::string> lines_of(std::string_view text) {
  auto lines = split(text, '\n');
  if (!lines.empty() && lines.back().empty()) lines.pop_back();
  for (auto& l : lines) {
    if (!l.empty() && l.back() == '\r') l.pop_back();
  }
  return lines;
}

double parse_double(std::string_view s, std::string_view what) {
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw ConsistencyError(std::string(what) + ": cannot parse number \"" + std::string(s) + "\"");
  }
  return v;
}

std::size_t parse_size(std::string_view s, std::string_view what) {
  std::size_t v = 0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw ConsistencyError(std::string(what) + ": cannot parse integer \"" + std::string(s) + "\"");
  }
  return v;
}

std::string xml_escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

// White at 0 to deep blue at 1.
std::string shade(double v) {
  v = std::clamp(v, 0.0, 1.0);
  const int r = static_cast<int>(std::lround(255 - v * (255 - 8)));
  const int g = static_cast<int>(std::lround(255 - v * (255 - 48)));
  const int b = static_cast<int>(std::lround(255 - v * (255 - 107)));
  char buf[8];
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x", r, g, b);
  return buf;
}

std::ostringstream svg_open(std::string_view title) {
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kCanvasWidth << "\" height=\"" << kCanvasHeight
     << "\" viewBox=\"0 0 " << kCanvasWidth << ' ' << kCanvasHeight << "\" font-family=\"sans-serif\">\n"
     << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
     << "<text x=\"" << kCanvasWidth / 2 << "\" y=\"28\" text-anchor=\"middle\" font-size=\"18\">" << xml_escape(title)
     << "</text>\n";
  return os;
}

}  // namespace

Format parse_format(std::string_view name) {
  if (name == "csv") return Format::kCsv;
  if (name == "svg") return Format::kSvg;
  throw ParameterError("unsupported format \"" + std::string(name) + "\" (expected csv or svg)");
}

std::string render_grid_csv(const probe::GridResult& grid, bool with_deviation) {
  if (grid.cells.empty()) throw ParameterError("cannot render an empty grid");
  GridTable t;
  t.n_values = grid.n_values();
  t.m_values = grid.m_values();
  for (const auto& c : grid.cells) {
    t.mean[{c.n, c.m}] = c.mean;
    if (with_deviation) t.stddev[{c.n, c.m}] = c.stddev;
  }
  return render_grid_csv(t);
}

std::string render_grid_csv(const GridTable& t) {
  std::ostringstream os;
  os << "n\\m";
  for (auto m : t.m_values) os << ',' << m;
  os << '\n';
  for (auto n : t.n_values) {
    os << n;
    for (auto m : t.m_values) {
      os << ',';
      auto it = t.mean.find({n, m});
      if (it == t.mean.end()) continue;
      auto dev = t.stddev.find({n, m});
      os << cell_text(it->second, dev == t.stddev.end() ? std::nullopt : std::optional<double>(dev->second));
    }
    os << '\n';
  }
  return os.str();
}

GridTable parse_grid_csv(std::string_view csv) {
  const auto lines = lines_of(csv);
  if (lines.empty()) throw ConsistencyError("grid CSV is empty");
  const auto header = split(lines[0], ',');
  if (header.empty() || header[0] != "n\\m") throw ConsistencyError("grid CSV header must start with n\\m");
  GridTable t;
  for (std::size_t i = 1; i < header.size(); ++i) t.m_values.push_back(parse_size(header[i], "grid CSV header"));
  for (std::size_t li = 1; li < lines.size(); ++li) {
    const auto fields = split(lines[li], ',');
    if (fields.size() != header.size()) {
      throw ConsistencyError("grid CSV line " + std::to_string(li + 1) + " has " + std::to_string(fields.size()) +
                             " fields, header has " + std::to_string(header.size()));
    }
    const std::size_t n = parse_size(fields[0], "grid CSV row label");
    t.n_values.push_back(n);
    for (std::size_t j = 1; j < fields.size(); ++j) {
      const std::string& f = fields[j];
      if (f.empty()) continue;
      const std::size_t m = t.m_values[j - 1];
      const auto pm = f.find(kPlusMinus);
      if (pm == std::string::npos) {
        t.mean[{n, m}] = parse_double(f, "grid CSV cell");
      } else {
        t.mean[{n, m}] = parse_double(std::string_view(f).substr(0, pm), "grid CSV cell");
        auto dev = std::string_view(f).substr(pm + kPlusMinus.size());
        while (!dev.empty() && dev.front() == ' ') dev.remove_prefix(1);
        t.stddev[{n, m}] = parse_double(dev, "grid CSV deviation");
      }
    }
  }
  return t;
}

std::string render_grid_svg(const probe::GridResult& grid, std::string_view title) {
  if (grid.cells.empty()) throw ParameterError("cannot render an empty grid");
  const auto ns = grid.n_values();
  const auto ms = grid.m_values();
  auto os = svg_open(title);
  const int left = 90, top = 60, right = 90, bottom = 50;
  const double cw = static_cast<double>(kCanvasWidth - left - right) / static_cast<double>(ms.size());
  const double ch = static_cast<double>(kCanvasHeight - top - bottom) / static_cast<double>(ns.size());
  for (std::size_t j = 0; j < ms.size(); ++j) {
    os << "<text x=\"" << left + (static_cast<double>(j) + 0.5) * cw << "\" y=\"" << top - 8
       << "\" text-anchor=\"middle\" font-size=\"14\">m=" << ms[j] << "</text>\n";
  }
  for (std::size_t i = 0; i < ns.size(); ++i) {
    const double y = top + static_cast<double>(i) * ch;
    os << "<text x=\"" << left - 10 << "\" y=\"" << y + ch / 2 + 5 << "\" text-anchor=\"end\" font-size=\"14\">n="
       << ns[i] << "</text>\n";
    for (std::size_t j = 0; j < ms.size(); ++j) {
      const double x = left + static_cast<double>(j) * cw;
      const auto it = std::find_if(grid.cells.begin(), grid.cells.end(),
                                   [&](const probe::GridCell& c) { return c.n == ns[i] && c.m == ms[j]; });
      if (it == grid.cells.end()) continue;
      os << "<rect x=\"" << x << "\" y=\"" << y << "\" width=\"" << cw << "\" height=\"" << ch << "\" fill=\""
         << shade(it->mean) << "\" stroke=\"#444\"/>\n";
      os << "<text x=\"" << x + cw / 2 << "\" y=\"" << y + ch / 2 + 5 << "\" text-anchor=\"middle\" font-size=\"14\" fill=\""
         << (it->mean > 0.55 ? "white" : "black") << "\">" << fixed2(it->mean) << "</text>\n";
    }
  }
  // Color scale legend.
  const int lx = kCanvasWidth - right + 30, ly = top, lh = kCanvasHeight - top - bottom;
  for (int k = 0; k < 20; ++k) {
    const double v = 1.0 - (k + 0.5) / 20.0;
    os << "<rect x=\"" << lx << "\" y=\"" << ly + k * lh / 20.0 << "\" width=\"16\" height=\"" << lh / 20.0 + 0.5
       << "\" fill=\"" << shade(v) << "\"/>\n";
  }
  os << "<text x=\"" << lx + 20 << "\" y=\"" << ly + 10 << "\" font-size=\"12\">1</text>\n";
  os << "<text x=\"" << lx + 20 << "\" y=\"" << ly + lh << "\" font-size=\"12\">0</text>\n";
  os << "</svg>\n";
  return os.str();
}

std::string render_grid(const probe::GridResult& grid, Format format, bool with_deviation, std::string_view title) {
  return format == Format::kCsv ? render_grid_csv(grid, with_deviation) : render_grid_svg(grid, title);
}

std::string render_histogram_csv(const probe::DigitHistogram& h) {
  return probe::histogram_csv(std::span<const probe::DigitHistogram>(&h, 1));
}

std::string render_histogram_svg(const probe::DigitHistogram& h, std::string_view title) {
  if (h.passes == 0) throw ParameterError("cannot render an empty histogram");
  auto os = svg_open(title);
  const int left = 60, top = 50, right = 30, bottom = 50;
  const double plot_h = kCanvasHeight - top - bottom;
  const double slot = static_cast<double>(kCanvasWidth - left - right) / probe::kOutcomeCount;
  os << "<line x1=\"" << left << "\" y1=\"" << top + plot_h << "\" x2=\"" << kCanvasWidth - right << "\" y2=\""
     << top + plot_h << "\" stroke=\"black\"/>\n";
  for (int tick = 0; tick <= 4; ++tick) {
    const double v = tick / 4.0;
    const double y = top + plot_h * (1.0 - v);
    os << "<text x=\"" << left - 8 << "\" y=\"" << y + 4 << "\" text-anchor=\"end\" font-size=\"12\">" << fixed2(v)
       << "</text>\n";
  }
  for (std::size_t o = 0; o < probe::kOutcomeCount; ++o) {
    const double v = h.confidence(o);
    const double x = left + static_cast<double>(o) * slot + slot * 0.15;
    const double bh = plot_h * v;
    os << "<rect x=\"" << x << "\" y=\"" << top + plot_h - bh << "\" width=\"" << slot * 0.7 << "\" height=\"" << bh
       << "\" fill=\"#30507a\" data-outcome=\"" << probe::outcome_label(o) << "\" data-confidence=\"" << v
       << "\"/>\n";
    os << "<text x=\"" << x + slot * 0.35 << "\" y=\"" << top + plot_h + 18 << "\" text-anchor=\"middle\" font-size=\"12\">"
       << probe::outcome_label(o) << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

std::vector<probe::DigitHistogram> parse_histogram_csv(std::string_view csv) {
  const auto lines = lines_of(csv);
  if (lines.empty() || lines[0] != "position,outcome,count") {
    throw ConsistencyError("histogram CSV must start with position,outcome,count");
  }
  std::vector<probe::DigitHistogram> out;
  for (std::size_t li = 1; li < lines.size(); ++li) {
    const auto f = split(lines[li], ',');
    if (f.size() != 3) throw ConsistencyError("histogram CSV line " + std::to_string(li + 1) + " needs 3 fields");
    const std::size_t pos = parse_size(f[0], "histogram position");
    if (out.empty() || out.back().position != pos) {
      out.emplace_back();
      out.back().position = pos;
    }
    const std::size_t count = parse_size(f[2], "histogram count");
    out.back().counts[probe::parse_outcome(f[1])] += count;
    out.back().passes += count;
  }
  return out;
}

const BaselineCell& BaselineTable::cell(std::size_t n, std::size_t m) const {
  for (const auto& c : cells) {
    if (c.n == n && c.m == m) return c;
  }
  throw ConsistencyError("baseline " + model + " " + probe::grid_kind_name(kind) + " has no cell (" +
                         std::to_string(n) + ", " + std::to_string(m) + ")");
}

bool BaselineTable::has_deviation() const {
  return !cells.empty() && std::all_of(cells.begin(), cells.end(), [](const auto& c) { return c.stddev.has_value(); });
}

probe::GridResult BaselineTable::as_grid() const {
  probe::GridResult g;
  g.kind = kind;
  g.problems_per_cell = 10;
  for (const auto& c : cells) {
    probe::GridCell gc;
    gc.n = c.n;
    gc.m = c.m;
    gc.mean = c.mean;
    gc.stddev = c.stddev.value_or(0.0);
    gc.count = 10;
    g.cells.push_back(gc);
  }
  return g;
}

const BaselineTable& BaselineSet::table(std::string_view model, probe::GridKind kind) const {
  for (const auto& t : tables) {
    if (t.model == model && t.kind == kind) return t;
  }
  throw ConsistencyError("no baseline table for " + std::string(model) + " " + probe::grid_kind_name(kind));
}

std::vector<std::string> BaselineSet::models() const {
  std::vector<std::string> out;
  for (const auto& t : tables) {
    if (std::find(out.begin(), out.end(), t.model) == out.end()) out.push_back(t.model);
  }
  return out;
}

BaselineSet parse_baselines(std::string_view json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ConsistencyError(std::string("baseline file is not valid JSON: ") + e.what());
  }
  if (j.value("format", "") != "dprobe-baselines") throw ConsistencyError("baseline file has wrong format tag");
  BaselineSet set;
  try {
    for (const auto& t : j.at("tables")) {
      BaselineTable table;
      table.model = t.at("model").get<std::string>();
      table.kind = probe::parse_grid_kind(t.at("kind").get<std::string>());
      table.source = t.at("source").get<std::string>();
      for (const auto& c : t.at("cells")) {
        BaselineCell cell;
        cell.n = c.at("n").get<std::size_t>();
        cell.m = c.at("m").get<std::size_t>();
        cell.mean = c.at("mean").get<double>();
        if (c.contains("stddev")) cell.stddev = c.at("stddev").get<double>();
        cell.display = c.value("display", fixed2(cell.mean));
        cell.cite = c.value("cite", table.source);
        const bool in_range = cell.mean >= 0.0 && cell.mean <= 1.0 && (!cell.stddev || (*cell.stddev >= 0.0 && *cell.stddev <= 1.0));
        if (!in_range) throw ConsistencyError("baseline value outside [0, 1] at " + cell.cite);
        table.cells.push_back(std::move(cell));
      }
      for (std::size_t n = 2; n <= 5; ++n) {
        for (std::size_t m = 2; m <= 5; ++m) (void)table.cell(n, m);
      }
      set.tables.push_back(std::move(table));
    }
    for (const auto& c : j.value("claims", json::array())) {
      BaselineClaim claim;
      claim.model = c.at("model").get<std::string>();
      claim.n = c.at("n").get<std::size_t>();
      claim.m = c.at("m").get<std::size_t>();
      claim.from = c.at("from").get<double>();
      claim.to = c.at("to").get<double>();
      claim.quoted_percent = c.at("quoted_percent").get<int>();
      claim.qualifier = c.at("qualifier").get<std::string>();
      if (claim.qualifier != "over" && claim.qualifier != "exact") {
        throw ConsistencyError("claim qualifier must be over or exact, got " + claim.qualifier);
      }
      claim.from_source = c.value("from_source", "");
      claim.to_source = c.value("to_source", "");
      claim.cite = c.value("cite", "");
      set.claims.push_back(std::move(claim));
    }
  } catch (const json::exception& e) {
    throw ConsistencyError(std::string("baseline file: ") + e.what());
  }
  return set;
}

BaselineSet load_baselines(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read baselines " + path.string());
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_baselines(text);
}

std::optional<double> relative_change_percent(double from, double to) {
  if (!(from > 0.0)) return std::nullopt;
  return (to - from) / from * 100.0;
}

std::vector<ClaimCheck> verify_claims(const BaselineSet& set) {
  std::vector<ClaimCheck> out;
  for (const auto& claim : set.claims) {
    ClaimCheck check;
    check.claim = claim;
    check.table_from = set.table(claim.model, probe::GridKind::kLastDigitUnconditional).cell(claim.n, claim.m).mean;
    check.table_to = set.table(claim.model, probe::GridKind::kLastDigitConditional).cell(claim.n, claim.m).mean;
    const auto rel = relative_change_percent(check.table_from, check.table_to);
    check.recomputed_percent = rel.value_or(0.0);
    const bool values_agree =
        std::abs(check.table_from - claim.from) < 1e-12 && std::abs(check.table_to - claim.to) < 1e-12;
    const double q = claim.quoted_percent;
    const bool percent_agrees =
        rel && (claim.qualifier == "over" ? (*rel > q && *rel < q + 1.0) : std::abs(*rel - q) < 0.5);
    check.matches = values_agree && percent_agrees;
    out.push_back(check);
  }
  return out;
}

Comparison compare(std::span<const probe::GridResult> grids, const BaselineSet& baselines) {
  const probe::GridResult* uncond = nullptr;
  const probe::GridResult* cond = nullptr;
  for (const auto& g : grids) {
    if (g.kind == probe::GridKind::kLastDigitUnconditional) uncond = &g;
    if (g.kind == probe::GridKind::kLastDigitConditional) cond = &g;
  }
  if (!uncond || !cond) throw ParameterError("compare needs both last-digit grids");

  Comparison out;
  double total_u = 0.0, total_c = 0.0;
  for (const auto& cu : uncond->cells) {
    const auto& cc = cond->cell(cu.n, cu.m);
    ComparisonRow row;
    row.n = cu.n;
    row.m = cu.m;
    row.ours_unconditional = cu.mean;
    row.ours_conditional = cc.mean;
    row.ours_relative_change = relative_change_percent(cu.mean, cc.mean);
    for (const auto& model : baselines.models()) {
      ModelComparison mc;
      mc.model = model;
      mc.unconditional = baselines.table(model, probe::GridKind::kLastDigitUnconditional).cell(cu.n, cu.m).mean;
      mc.conditional = baselines.table(model, probe::GridKind::kLastDigitConditional).cell(cu.n, cu.m).mean;
      mc.relative_change = relative_change_percent(mc.unconditional, mc.conditional);
      row.baselines.push_back(std::move(mc));
    }
    out.rows.push_back(std::move(row));
    if (cu.values.size() != cc.values.size()) throw ConsistencyError("last-digit grids disagree on problem counts");
    if (cu.values.empty()) {
      total_u += cu.mean * static_cast<double>(cu.count);
      total_c += cc.mean * static_cast<double>(cc.count);
      out.summary.problems += cu.count;
    } else {
      for (double v : cu.values) total_u += v;
      for (double v : cc.values) total_c += v;
      out.summary.problems += cu.values.size();
    }
  }
  if (out.summary.problems > 0) {
    out.summary.mean_unconditional = total_u / static_cast<double>(out.summary.problems);
    out.summary.mean_conditional = total_c / static_cast<double>(out.summary.problems);
  }
  out.summary.delta = out.summary.mean_conditional - out.summary.mean_unconditional;
  out.claims = verify_claims(baselines);
  return out;
}

namespace {

std::string opt_percent(const std::optional<double>& v) {
  if (!v) return "undefined";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%+.1f%%", *v);
  return buf;
}

}  // namespace

std::string comparison_csv(const Comparison& c) {
  std::ostringstream os;
  os << "n,m,ours_unconditional,ours_conditional,ours_relative_change";
  std::vector<std::string> models;
  if (!c.rows.empty()) {
    for (const auto& b : c.rows.front().baselines) models.push_back(b.model);
  }
  for (const auto& m : models) os << ',' << m << " unconditional," << m << " conditional," << m << " relative_change";
  os << '\n';
  for (const auto& r : c.rows) {
    os << r.n << ',' << r.m << ',' << fixed2(r.ours_unconditional) << ',' << fixed2(r.ours_conditional) << ','
       << opt_percent(r.ours_relative_change);
    for (const auto& b : r.baselines) {
      os << ',' << fixed2(b.unconditional) << ',' << fixed2(b.conditional) << ',' << opt_percent(b.relative_change);
    }
    os << '\n';
  }
  return os.str();
}

std::string comparison_json(const Comparison& c) {
  auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
  json rows = json::array();
  for (const auto& r : c.rows) {
    json bs = json::array();
    for (const auto& b : r.baselines) {
      bs.push_back({{"model", b.model},
                    {"unconditional", b.unconditional},
                    {"conditional", b.conditional},
                    {"relative_change_percent", opt(b.relative_change)}});
    }
    rows.push_back({{"n", r.n},
                    {"m", r.m},
                    {"ours_unconditional", r.ours_unconditional},
                    {"ours_conditional", r.ours_conditional},
                    {"ours_relative_change_percent", opt(r.ours_relative_change)},
                    {"baselines", bs}});
  }
  json claims = json::array();
  for (const auto& k : c.claims) {
    claims.push_back({{"model", k.claim.model},
                      {"cell", {k.claim.n, k.claim.m}},
                      {"quoted", std::to_string(k.claim.quoted_percent) + "% (" + k.claim.qualifier + ")"},
                      {"table_from", k.table_from},
                      {"table_to", k.table_to},
                      {"recomputed_percent", k.recomputed_percent},
                      {"matches", k.matches},
                      {"cite", k.claim.cite}});
  }
  json j = {{"schema_version", probe::kSchemaVersion},
            {"type", "comparison"},
            {"summary",
             {{"mean_unconditional_last_digit", c.summary.mean_unconditional},
              {"mean_conditional_last_digit", c.summary.mean_conditional},
              {"delta", c.summary.delta},
              {"problems", c.summary.problems}}},
            {"rows", rows},
            {"claims", claims}};
  return j.dump(2) + "\n";
}

}  // namespace dprobe::report
