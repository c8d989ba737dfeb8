#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dprobe/probe/probe.hpp"
#include "dprobe/probe/serialize.hpp"

namespace dprobe::report {

enum class Format { kCsv, kSvg };
Format parse_format(std::string_view name);

// Header "n\m,<m values>", then one row per n. Cells print the mean with two
// decimals, followed by "± <dev>" when with_deviation is set.
std::string render_grid_csv(const probe::GridResult& grid, bool with_deviation);
// 640x480 heatmap, cells shaded by mean on a fixed [0, 1] scale.
std::string render_grid_svg(const probe::GridResult& grid, std::string_view title);
std::string render_grid(const probe::GridResult& grid, Format format, bool with_deviation, std::string_view title);

// A grid CSV read back: means and, where printed, deviations.
struct GridTable {
  std::vector<std::size_t> n_values;
  std::vector<std::size_t> m_values;
  std::map<std::pair<std::size_t, std::size_t>, double> mean;
  std::map<std::pair<std::size_t, std::size_t>, double> stddev;
};
GridTable parse_grid_csv(std::string_view csv);
std::string render_grid_csv(const GridTable& table);

std::string render_histogram_csv(const probe::DigitHistogram& h);
// Bars over 0..9, END, OTHER with heights counts / K.
std::string render_histogram_svg(const probe::DigitHistogram& h, std::string_view title);
std::vector<probe::DigitHistogram> parse_histogram_csv(std::string_view csv);

struct BaselineCell {
  std::size_t n = 0;
  std::size_t m = 0;
  double mean = 0.0;
  std::optional<double> stddev;
  std::string display;  // as printed in the source table
  std::string cite;
};

struct BaselineTable {
  std::string model;
  probe::GridKind kind = probe::GridKind::kFirstDigit;
  std::string source;
  std::vector<BaselineCell> cells;

  const BaselineCell& cell(std::size_t n, std::size_t m) const;
  bool has_deviation() const;
  // As a grid of 10-problem cells, for rendering.
  probe::GridResult as_grid() const;
};

// A quoted relative improvement that the tables must reproduce.
struct BaselineClaim {
  std::string model;
  std::size_t n = 0;
  std::size_t m = 0;
  double from = 0.0;
  double to = 0.0;
  int quoted_percent = 0;
  std::string qualifier;  // "over": true value lies in (q, q+1); "exact": rounds to q
  std::string from_source;
  std::string to_source;
  std::string cite;
};

struct BaselineSet {
  std::vector<BaselineTable> tables;
  std::vector<BaselineClaim> claims;

  const BaselineTable& table(std::string_view model, probe::GridKind kind) const;
  std::vector<std::string> models() const;
};

BaselineSet parse_baselines(std::string_view json_text);
BaselineSet load_baselines(const std::filesystem::path& path);

// Relative change in percent; empty when the base is not positive.
std::optional<double> relative_change_percent(double from, double to);

struct ClaimCheck {
  BaselineClaim claim;
  double table_from = 0.0;
  double table_to = 0.0;
  double recomputed_percent = 0.0;
  bool matches = false;
};
// Recomputes every claim from the table cells it cites.
std::vector<ClaimCheck> verify_claims(const BaselineSet& set);

struct ModelComparison {
  std::string model;
  double unconditional = 0.0;
  double conditional = 0.0;
  std::optional<double> relative_change;
};

struct ComparisonRow {
  std::size_t n = 0;
  std::size_t m = 0;
  double ours_unconditional = 0.0;
  double ours_conditional = 0.0;
  std::optional<double> ours_relative_change;
  std::vector<ModelComparison> baselines;
};

// Pooled over every probed problem of our grids.
struct ComparisonSummary {
  double mean_unconditional = 0.0;
  double mean_conditional = 0.0;
  double delta = 0.0;
  std::size_t problems = 0;
};

struct Comparison {
  std::vector<ComparisonRow> rows;
  ComparisonSummary summary;
  std::vector<ClaimCheck> claims;
};

// `grids` must include the two last-digit kinds. Every cell of ours must be
// present in every baseline table (ConsistencyError otherwise).
Comparison compare(std::span<const probe::GridResult> grids, const BaselineSet& baselines);
std::string comparison_csv(const Comparison& c);
std::string comparison_json(const Comparison& c);

}  // namespace dprobe::report
