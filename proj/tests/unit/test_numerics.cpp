#include <boost/multiprecision/cpp_bin_float.hpp>
#include <cmath>
#include <random>

#include "../support/gradcheck.hpp"
#include "doctest.h"
#include "dprobe/errors.hpp"
#include "dprobe/numerics/ops.hpp"

using namespace dprobe;
using namespace dprobe::numerics;
using dprobe::testing::gradcheck;
using dprobe::testing::weighted_sum;
using BigFloat = boost::multiprecision::cpp_bin_float_50;

namespace {

Tensor random_tensor(Shape shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  std::mt19937_64 rng(seed);
  return Tensor::uniform(std::move(shape), lo, hi, rng);
}

}  // namespace

TEST_CASE("matmul hand examples") {
  Tape tape(false);
  auto eye = tape.constant(Tensor({2, 2}, {1, 0, 0, 1}));
  auto b = tape.constant(Tensor({2, 2}, {3, 1, 4, 1}));
  auto c = matmul(eye, b);
  CHECK(bitwise_equal(c.value(), b.value()));

  auto row = tape.constant(Tensor({1, 2}, {1, 2}));
  auto col = tape.constant(Tensor({2, 1}, {3, 4}));
  CHECK(matmul(row, col).value().item() == 11.0);
}

TEST_CASE("matmul gradient matches finite differences") {
  auto f = [](Tape&, const std::vector<Var>& v) { return sum(matmul(v[0], v[1])); };
  CHECK(gradcheck(f, {random_tensor({4, 5}, 1), random_tensor({5, 3}, 2)}) < 1e-6);

  // broadcast: batched lhs against a shared rhs
  auto g = [](Tape&, const std::vector<Var>& v) { return weighted_sum(matmul(v[0], v[1]), 9); };
  CHECK(gradcheck(g, {random_tensor({2, 3, 4}, 3), random_tensor({4, 2}, 4)}) < 1e-6);
  CHECK(gradcheck(g, {random_tensor({2, 1, 3, 4}, 5), random_tensor({3, 4, 2}, 6)}) < 1e-6);
}

TEST_CASE("matmul shape mismatch names both shapes") {
  Tape tape(false);
  auto a = tape.constant(Tensor({2, 3}));
  auto b = tape.constant(Tensor({4, 2}));
  try {
    matmul(a, b);
    FAIL("expected DimensionError");
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("[2, 3]") != std::string::npos);
    CHECK(msg.find("[4, 2]") != std::string::npos);
  }
}

TEST_CASE("softmax examples") {
  Tape tape(false);
  auto flat = softmax(tape.constant(Tensor({4}, {0, 0, 0, 0})), 0);
  for (double v : flat.value().data()) CHECK(v == doctest::Approx(0.25).epsilon(1e-15));

  auto big = softmax(tape.constant(Tensor({2}, {1000, 0})), -1);
  CHECK(std::abs(big.value()[0] - 1.0) < 1e-12);
  CHECK(std::abs(big.value()[1]) < 1e-12);
  CHECK(big.value().all_finite());

  // 50-digit oracle
  auto small = softmax(tape.constant(Tensor({3}, {1, 2, 3})), 0);
  BigFloat z = 0;
  for (int k = 1; k <= 3; ++k) z += boost::multiprecision::exp(BigFloat(k));
  for (int k = 1; k <= 3; ++k) {
    const double expected = static_cast<double>(boost::multiprecision::exp(BigFloat(k)) / z);
    CHECK(std::abs(small.value()[k - 1] - expected) < 1e-12);
  }
}

TEST_CASE("softmax rows sum to one for large inputs") {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Tape tape(false);
    auto y = softmax(tape.constant(random_tensor({6, 17}, seed, -1e4, 1e4)), 1);
    for (std::size_t r = 0; r < 6; ++r) {
      double s = 0.0;
      for (std::size_t c = 0; c < 17; ++c) {
        CHECK(y.value()[r * 17 + c] >= 0.0);
        s += y.value()[r * 17 + c];
      }
      CHECK(std::abs(s - 1.0) < 1e-12);
    }
  }
}

TEST_CASE("softmax rejects a bad axis") {
  Tape tape(false);
  auto x = tape.constant(Tensor({2, 3}));
  CHECK_THROWS_AS(softmax(x, 2), DimensionError);
  CHECK_THROWS_AS(softmax(x, -3), DimensionError);
}

TEST_CASE("layer_norm examples") {
  Tape tape(false);
  auto gain = tape.constant(Tensor({2}, 1.0));
  auto bias = tape.constant(Tensor({2}, 0.0));
  auto constant_row = layer_norm(tape.constant(Tensor({2}, {5, 5})), gain, bias, 1e-5);
  CHECK(constant_row.value()[0] == 0.0);
  CHECK(constant_row.value()[1] == 0.0);

  auto pair = layer_norm(tape.constant(Tensor({2}, {1, 3})), gain, bias, 1e-14);
  CHECK(pair.value()[0] == doctest::Approx(-1.0).epsilon(1e-12));
  CHECK(pair.value()[1] == doctest::Approx(1.0).epsilon(1e-12));

  CHECK_THROWS_AS(layer_norm(tape.constant(Tensor({3}, 1.0)), gain, bias, 1e-5), DimensionError);
  CHECK_THROWS_AS(layer_norm(tape.constant(Tensor({2}, 1.0)), gain, bias, 0.0), ParameterError);
}

TEST_CASE("layer_norm gradient matches finite differences") {
  auto f = [](Tape&, const std::vector<Var>& v) { return weighted_sum(layer_norm(v[0], v[1], v[2], 1e-5), 3); };
  CHECK(gradcheck(f, {random_tensor({3, 6}, 1), random_tensor({6}, 2), random_tensor({6}, 3)}) < 1e-5);
}

TEST_CASE("dropout degenerate settings are the identity") {
  Tape tape(false);
  auto x = tape.constant(random_tensor({7, 9}, 4));
  CHECK(bitwise_equal(dropout(x, {0.0, 42, true}).value(), x.value()));
  CHECK(bitwise_equal(dropout(x, {0.5, 42, false}).value(), x.value()));
}

TEST_CASE("dropout rejects rates outside [0, 1)") {
  Tape tape(false);
  auto x = tape.constant(Tensor({3}, 1.0));
  CHECK_THROWS_AS(dropout(x, {1.0, 1, true}), ParameterError);
  CHECK_THROWS_AS(dropout(x, {-0.1, 1, true}), ParameterError);
  CHECK_THROWS_AS(dropout(x, {1.0, 1, false}), ParameterError);
}

TEST_CASE("dropout of a million ones stays inside binomial bounds") {
  // zero count ~ Binomial(1e6, 0.1): sd = 300, so [0.095, 0.105] is > 16 sd wide.
  Tape tape(false);
  auto x = tape.constant(Tensor({1000, 1000}, 1.0));
  auto y = dropout(x, {0.1, 2024, true});
  double total = 0.0;
  std::size_t zeros = 0;
  for (double v : y.value().data()) {
    total += v;
    zeros += v == 0.0;
  }
  const double mean = total / 1e6;
  const double zero_fraction = static_cast<double>(zeros) / 1e6;
  CHECK(mean >= 0.99);
  CHECK(mean <= 1.01);
  CHECK(zero_fraction >= 0.095);
  CHECK(zero_fraction <= 0.105);
}

TEST_CASE("dropout mask is a pure function of seed and shape") {
  Tape tape(false);
  auto x = tape.constant(random_tensor({5, 8}, 7));
  auto a = dropout(x, {0.3, 99, true});
  auto b = dropout(x, {0.3, 99, true});
  auto c = dropout(x, {0.3, 100, true});
  CHECK(bitwise_equal(a.value(), b.value()));
  CHECK_FALSE(bitwise_equal(a.value(), c.value()));
  CHECK(dropout_keep_mask({0.3, 99, true}, 40) == dropout_keep_mask({0.3, 99, true}, 40));
}

TEST_CASE("cross_entropy examples") {
  Tape tape(false);
  std::vector<int> target{2};
  double previous = 1e300;
  for (double margin : {1.0, 5.0, 20.0, 60.0}) {
    auto loss = cross_entropy(tape.constant(Tensor({1, 4}, {0, 0, margin, 0})), target).value().item();
    CHECK(loss < previous);
    previous = loss;
  }
  CHECK(previous < 1e-25);

  std::vector<int> targets{3, 15, 0};
  auto uniform = cross_entropy(tape.constant(Tensor({3, 16}, 0.5)), targets).value().item();
  CHECK(uniform == doctest::Approx(std::log(16.0)).epsilon(1e-15));

  std::vector<int> bad{16};
  CHECK_THROWS_AS(cross_entropy(tape.constant(Tensor({1, 16})), bad), VocabularyError);
}

TEST_CASE("cross_entropy agrees with an extended-precision oracle") {
  const auto logits = random_tensor({5, 16}, 11, -4.0, 4.0);
  std::vector<int> targets{1, 7, kIgnoreTarget, 15, 0};
  Tape tape(false);
  const double loss = cross_entropy(tape.constant(logits), targets).value().item();

  BigFloat total = 0;
  int counted = 0;
  for (std::size_t p = 0; p < 5; ++p) {
    if (targets[p] == kIgnoreTarget) continue;
    BigFloat z = 0;
    for (std::size_t v = 0; v < 16; ++v) z += boost::multiprecision::exp(BigFloat(logits[p * 16 + v]));
    total += boost::multiprecision::log(z) - BigFloat(logits[p * 16 + static_cast<std::size_t>(targets[p])]);
    ++counted;
  }
  const double expected = static_cast<double>(total / counted);
  CHECK(std::abs(loss - expected) < 1e-10);
}

TEST_CASE("backward basics") {
  Tape tape;
  auto x = tape.variable(random_tensor({4}, 5));
  tape.backward(sum(x));
  const auto ones = tape.grad(x);
  for (double g : ones.data()) CHECK(g == 1.0);

  Tape sq;
  auto y = sq.variable(Tensor({3}, {1.5, -2.0, 0.25}));
  sq.backward(sum(mul(y, y)));
  const auto g = sq.grad(y);
  CHECK(g[0] == 3.0);
  CHECK(g[1] == -4.0);
  CHECK(g[2] == 0.5);

  CHECK_THROWS_AS(sq.backward(sum(y)), TapeError);
  sq.reset();
  auto z = sq.variable(Tensor({2}, 1.0));
  CHECK_NOTHROW(sq.backward(sum(z)));
}

TEST_CASE("parameters accumulate gradients") {
  Parameter w{"w", Tensor({2}, {1.0, 2.0}), Tensor{}};
  for (int pass = 0; pass < 2; ++pass) {
    Tape tape;
    tape.backward(sum(mul(tape.parameter(w), tape.parameter(w))));
  }
  CHECK(w.grad[0] == 4.0);
  CHECK(w.grad[1] == 8.0);
}

TEST_CASE("every op passes gradcheck on 100 seeds") {
  const std::vector<int> ids{3, 0, 3, 1};
  const std::vector<int> targets{2, kIgnoreTarget, 0, 4};
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    CAPTURE(seed);
    const std::uint64_t s = seed * 31 + 1;
    auto check = [&](const dprobe::testing::LossBuilder& f, std::vector<Tensor> in) {
      CHECK(gradcheck(f, in) < 1e-4);
    };
    check([&](Tape&, const std::vector<Var>& v) { return weighted_sum(matmul(v[0], v[1]), s); },
          {random_tensor({2, 3, 4}, s), random_tensor({2, 4, 3}, s + 1)});
    check([&](Tape&, const std::vector<Var>& v) { return weighted_sum(add(v[0], v[1]), s); },
          {random_tensor({3, 4}, s), random_tensor({4}, s + 1)});
    check([&](Tape&, const std::vector<Var>& v) { return weighted_sum(mul(v[0], v[1]), s); },
          {random_tensor({2, 1, 4}, s), random_tensor({3, 1}, s + 1)});
    check([&](Tape&, const std::vector<Var>& v) { return weighted_sum(scale(v[0], -1.7), s); },
          {random_tensor({5}, s)});
    check([&](Tape&, const std::vector<Var>& v) { return weighted_sum(gelu(v[0]), s); },
          {random_tensor({3, 5}, s, -3, 3)});
    check([&](Tape&, const std::vector<Var>& v) { return weighted_sum(softmax(v[0], 0), s); },
          {random_tensor({4, 3}, s, -3, 3)});
    check([&](Tape&, const std::vector<Var>& v) { return weighted_sum(layer_norm(v[0], v[1], v[2], 1e-5), s); },
          {random_tensor({2, 5}, s), random_tensor({5}, s + 1), random_tensor({5}, s + 2)});
    check([&](Tape&, const std::vector<Var>& v) { return weighted_sum(dropout(v[0], {0.25, s, true}), s); },
          {random_tensor({4, 4}, s)});
    check([&](Tape&, const std::vector<Var>& v) { return cross_entropy(v[0], targets); },
          {random_tensor({4, 6}, s, -2, 2)});
    check([&](Tape&, const std::vector<Var>& v) { return weighted_sum(embedding(v[0], ids), s); },
          {random_tensor({5, 3}, s)});
    check([&](Tape&, const std::vector<Var>& v) { return weighted_sum(reshape(v[0], {3, 4}), s); },
          {random_tensor({2, 6}, s)});
    check([&](Tape&, const std::vector<Var>& v) { return weighted_sum(permute(v[0], {2, 0, 1}), s); },
          {random_tensor({2, 3, 4}, s)});
    check([&](Tape&, const std::vector<Var>& v) { return weighted_sum(softmax(causal_mask(v[0]), -1), s); },
          {random_tensor({2, 4, 4}, s)});
  }
}

TEST_CASE("causal_mask hides future keys") {
  Tape tape(false);
  auto p = softmax(causal_mask(tape.constant(random_tensor({3, 3}, 1))), -1);
  CHECK(p.value()[1] == 0.0);
  CHECK(p.value()[2] == 0.0);
  CHECK(p.value()[5] == 0.0);
  CHECK(p.value()[0] == 1.0);
  CHECK(p.value().all_finite());
}
