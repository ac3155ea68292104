#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace cnet {

using Shape = std::vector<std::size_t>;

std::string shape_string(const Shape& shape);

// Dense row-major tensor of rank 1 or 2. Scalars are rank-1 tensors of size 1.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor scalar(double value);
  static Tensor vector(std::vector<double> values);
  static Tensor matrix(std::size_t rows, std::size_t cols,
                       std::vector<double> values);
  static Tensor zeros_like(const Tensor& other);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }
  bool is_scalar() const { return data_.size() == 1; }

  std::size_t rows() const { return shape_.empty() ? 0 : shape_[0]; }
  std::size_t cols() const { return shape_.size() == 2 ? shape_[1] : 1; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& at(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
  double at(std::size_t r, std::size_t c) const {
    return data_[r * shape_[1] + c];
  }
  double item() const;

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  std::span<double> row(std::size_t r);
  std::span<const double> row(std::size_t r) const;

  void fill(double value);
  bool all_finite() const;

 private:
  Shape shape_;
  std::vector<double> data_;
};

// Exact equality of shapes and of the IEEE-754 bit patterns.
bool bit_identical(const Tensor& a, const Tensor& b);

double max_abs_difference(const Tensor& a, const Tensor& b);

// Named tensors in deterministic (lexicographic) order.
using TensorMap = std::map<std::string, Tensor>;

// FNV-1a over the raw bytes of every tensor (names included).
std::uint64_t checksum(const TensorMap& tensors);

}  // namespace cnet
