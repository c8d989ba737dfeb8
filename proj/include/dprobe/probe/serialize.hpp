#pragma once

#include <array>
#include <string>

#include "dprobe/probe/probe.hpp"

namespace dprobe::probe {

inline constexpr int kSchemaVersion = 1;

std::string to_json(const ProbeResult& result);
std::string to_json(const std::array<GridResult, 3>& grids);
std::string to_json(const GridResult& grid);

ProbeResult probe_result_from_json(std::string_view text);
// Accepts either a single grid or the three-grid document written by to_json.
std::vector<GridResult> grids_from_json(std::string_view text);

// position,outcome,count with every outcome listed for every position.
std::string histogram_csv(std::span<const DigitHistogram> histograms);

}  // namespace dprobe::probe
