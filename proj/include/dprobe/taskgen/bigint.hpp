#pragma once

#include <compare>
#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace dprobe::taskgen {

// Arbitrary-precision nonnegative integer, base 10^9 limbs, least significant first.
class BigUint {
 public:
  BigUint() = default;
  BigUint(std::uint64_t value);  // NOLINT: implicit from small integers is convenient in tests

  // Accepts a nonempty string of decimal digits; leading zeros allowed.
  static BigUint from_decimal(std::string_view digits);
  // Uniform over integers with exactly `digits` decimal digits and a nonzero leading digit.
  static BigUint random_with_digits(std::size_t digits, std::mt19937_64& rng);

  std::string to_decimal() const;
  std::size_t digit_count() const;
  bool is_zero() const noexcept { return limbs_.empty(); }
  unsigned last_digit() const noexcept { return limbs_.empty() ? 0u : limbs_.front() % 10u; }

  friend BigUint operator*(const BigUint& a, const BigUint& b);
  friend BigUint operator+(const BigUint& a, const BigUint& b);
  friend bool operator==(const BigUint& a, const BigUint& b) = default;
  friend std::strong_ordering operator<=>(const BigUint& a, const BigUint& b);

 private:
  static constexpr std::uint32_t kBase = 1'000'000'000;
  static constexpr std::size_t kLimbDigits = 9;

  void trim();

  std::vector<std::uint32_t> limbs_;
};

}  // namespace dprobe::taskgen
