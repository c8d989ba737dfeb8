#include "dprobe/taskgen/bigint.hpp"

#include <algorithm>

#include "dprobe/errors.hpp"

namespace dprobe::taskgen {

BigUint::BigUint(std::uint64_t value) {
  while (value) {
    limbs_.push_back(static_cast<std::uint32_t>(value % kBase));
    value /= kBase;
  }
}

BigUint BigUint::from_decimal(std::string_view digits) {
  if (digits.empty()) throw ParameterError("empty decimal string");
  for (std::size_t i = 0; i < digits.size(); ++i) {
    if (digits[i] < '0' || digits[i] > '9') {
      throw ParameterError("non-digit '" + std::string(1, digits[i]) + "' at offset " + std::to_string(i) +
                           " in \"" + std::string(digits) + "\"");
    }
  }
  BigUint out;
  for (std::size_t end = digits.size(); end > 0;) {
    const std::size_t begin = end >= kLimbDigits ? end - kLimbDigits : 0;
    std::uint32_t limb = 0;
    for (std::size_t i = begin; i < end; ++i) limb = limb * 10 + static_cast<std::uint32_t>(digits[i] - '0');
    out.limbs_.push_back(limb);
    end = begin;
  }
  out.trim();
  return out;
}

BigUint BigUint::random_with_digits(std::size_t digits, std::mt19937_64& rng) {
  if (digits == 0) throw ParameterError("operand needs at least one digit");
  std::uniform_int_distribution<int> lead(1, 9);
  std::uniform_int_distribution<int> rest(0, 9);
  std::string s(digits, '0');
  s[0] = static_cast<char>('0' + lead(rng));
  for (std::size_t i = 1; i < digits; ++i) s[i] = static_cast<char>('0' + rest(rng));
  return from_decimal(s);
}

std::string BigUint::to_decimal() const {
  if (limbs_.empty()) return "0";
  std::string out = std::to_string(limbs_.back());
  for (std::size_t i = limbs_.size() - 1; i-- > 0;) {
    std::string part = std::to_string(limbs_[i]);
    out.append(kLimbDigits - part.size(), '0');
    out += part;
  }
  return out;
}

std::size_t BigUint::digit_count() const {
  if (limbs_.empty()) return 1;
  return (limbs_.size() - 1) * kLimbDigits + std::to_string(limbs_.back()).size();
}

void BigUint::trim() {
  while (!limbs_.empty() && limbs_.back() == 0) limbs_.pop_back();
}

BigUint operator*(const BigUint& a, const BigUint& b) {
  BigUint out;
  if (a.is_zero() || b.is_zero()) return out;
  // Schoolbook; each partial sum stays below 2^64 because limbs are < 10^9.
  std::vector<std::uint64_t> acc(a.limbs_.size() + b.limbs_.size(), 0);
  for (std::size_t i = 0; i < a.limbs_.size(); ++i) {
    std::uint64_t carry = 0;
    for (std::size_t j = 0; j < b.limbs_.size(); ++j) {
      const std::uint64_t cur = acc[i + j] + static_cast<std::uint64_t>(a.limbs_[i]) * b.limbs_[j] + carry;
      acc[i + j] = cur % BigUint::kBase;
      carry = cur / BigUint::kBase;
    }
    std::size_t k = i + b.limbs_.size();
    while (carry) {
      const std::uint64_t cur = acc[k] + carry;
      acc[k] = cur % BigUint::kBase;
      carry = cur / BigUint::kBase;
      ++k;
    }
  }
  out.limbs_.assign(acc.begin(), acc.end());
  out.trim();
  return out;
}

BigUint operator+(const BigUint& a, const BigUint& b) {
  BigUint out;
  const std::size_t n = std::max(a.limbs_.size(), b.limbs_.size());
  out.limbs_.resize(n + 1, 0);
  std::uint32_t carry = 0;
  for (std::size_t i = 0; i < n; ++i) {
    std::uint64_t cur = carry;
    if (i < a.limbs_.size()) cur += a.limbs_[i];
    if (i < b.limbs_.size()) cur += b.limbs_[i];
    out.limbs_[i] = static_cast<std::uint32_t>(cur % BigUint::kBase);
    carry = static_cast<std::uint32_t>(cur / BigUint::kBase);
  }
  out.limbs_[n] = carry;
  out.trim();
  return out;
}

std::strong_ordering operator<=>(const BigUint& a, const BigUint& b) {
  if (a.limbs_.size() != b.limbs_.size()) return a.limbs_.size() <=> b.limbs_.size();
  for (std::size_t i = a.limbs_.size(); i-- > 0;) {
    if (a.limbs_[i] != b.limbs_[i]) return a.limbs_[i] <=> b.limbs_[i];
  }
  return std::strong_ordering::equal;
}

}  // namespace dprobe::taskgen
