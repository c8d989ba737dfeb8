#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace dprobe::numerics {

// Inverted dropout settings for one call site.
struct DropoutSpec {
  double rate = 0.0;
  std::uint64_t seed = 0;
  bool active = false;

  // Throws ParameterError unless rate is in [0, 1).
  void validate() const;
};

// Mixes a seed with two stream coordinates into a new, well-spread seed.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) noexcept;

// keep[i] == 1 when element i survives. Pure function of (spec.seed, spec.rate, count).
std::vector<std::uint8_t> dropout_keep_mask(const DropoutSpec& spec, std::size_t count);

}  // namespace dprobe::numerics
