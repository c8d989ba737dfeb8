#pragma once

// Reference implementations kept independent of the library code under test.

#include <algorithm>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace dprobe::testing {

// Long multiplication by digit convolution: c_k = sum a_i * b_{k-i}, then one
// carry sweep. Inputs and output are plain decimal strings.
inline std::string convolution_multiply(const std::string& a, const std::string& b) {
  std::vector<std::uint64_t> acc(a.size() + b.size(), 0);
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t j = 0; j < b.size(); ++j) {
      acc[(a.size() - 1 - i) + (b.size() - 1 - j)] +=
          static_cast<std::uint64_t>(a[i] - '0') * static_cast<std::uint64_t>(b[j] - '0');
    }
  }
  std::uint64_t carry = 0;
  for (auto& d : acc) {
    const std::uint64_t v = d + carry;
    d = v % 10;
    carry = v / 10;
  }
  while (carry) {
    acc.push_back(carry % 10);
    carry /= 10;
  }
  while (acc.size() > 1 && acc.back() == 0) acc.pop_back();
  std::string out;
  for (auto it = acc.rbegin(); it != acc.rend(); ++it) out.push_back(static_cast<char>('0' + *it));
  return out;
}

inline std::string random_digits(std::size_t n, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> lead(1, 9), rest(0, 9);
  std::string s(1, static_cast<char>('0' + lead(rng)));
  while (s.size() < n) s.push_back(static_cast<char>('0' + rest(rng)));
  return s;
}

}  // namespace dprobe::testing
