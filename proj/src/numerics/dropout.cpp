#include "dprobe/numerics/dropout.hpp"

#include <cmath>
#include <string>

#include "dprobe/errors.hpp"

namespace dprobe::numerics {

namespace {

// splitmix64 finalizer
std::uint64_t mix64(std::uint64_t z) noexcept {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace

void DropoutSpec::validate() const {
  if (!(rate >= 0.0 && rate < 1.0)) {
    throw ParameterError("dropout rate must lie in [0, 1), got " + std::to_string(rate));
  }
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) noexcept {
  return mix64(mix64(mix64(seed) ^ a) ^ (b * 0xd6e8feb86659fd93ULL));
}

std::vector<std::uint8_t> dropout_keep_mask(const DropoutSpec& spec, std::size_t count) {
  spec.validate();
  std::vector<std::uint8_t> keep(count, 1);
  if (!spec.active || spec.rate == 0.0) return keep;
  // Counter-based: element i draws mix64(stream + i), a 53-bit uniform in
  // [0, 1); it is dropped when u < rate.
  const std::uint64_t stream = derive_seed(spec.seed, count);
  const auto threshold = static_cast<std::uint64_t>(std::ceil(spec.rate * 0x1.0p53));
  for (std::size_t i = 0; i < count; ++i) keep[i] = (mix64(stream + i) >> 11) >= threshold ? 1 : 0;
  return keep;
}

}  // namespace dprobe::numerics
