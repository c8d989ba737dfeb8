#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace dprobe::numerics {

using Shape = std::vector<std::size_t>;

std::size_t element_count(const Shape& shape);
std::string shape_string(const Shape& shape);

// Dense row-major array of doubles. Value type; copies deep-copy the data.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor scalar(double value);
  static Tensor normal(Shape shape, double stddev, std::mt19937_64& rng);
  static Tensor uniform(Shape shape, double lo, double hi, std::mt19937_64& rng);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  // Negative axes count from the back.
  std::size_t dim(std::ptrdiff_t axis) const;
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }
  double* ptr() noexcept { return data_.data(); }
  const double* ptr() const noexcept { return data_.data(); }

  double& operator[](std::size_t i) noexcept { return data_[i]; }
  double operator[](std::size_t i) const noexcept { return data_[i]; }

  // Value of a single-element tensor.
  double item() const;
  Tensor reshaped(Shape shape) const;
  bool all_finite() const noexcept;

  void fill(double value) noexcept;
  Tensor& operator+=(const Tensor& other);

 private:
  Shape shape_;
  std::vector<double> data_;
};

bool bitwise_equal(const Tensor& a, const Tensor& b) noexcept;

// Resolves a possibly negative axis against a rank; throws DimensionError.
std::size_t normalize_axis(std::ptrdiff_t axis, std::size_t rank);

}  // namespace dprobe::numerics
