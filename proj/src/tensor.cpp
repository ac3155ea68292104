#include "cnet/tensor.hpp"

#include <cmath>
#include <cstdint>
#include <cstring>
#include <functional>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace cnet {
namespace {

std::size_t checked_numel(const Shape& shape) {
  if (shape.empty() || shape.size() > 2) {
    throw std::invalid_argument("tensor rank must be 1 or 2, got shape " +
                                shape_string(shape));
  }
  std::size_t n = 1;
  for (std::size_t d : shape) {
    if (d == 0) {
      throw std::invalid_argument("tensor dimensions must be positive: " +
                                  shape_string(shape));
    }
    n *= d;
  }
  return n;
}

constexpr std::uint64_t kFnvOffset = 1469598103934665603ULL;
constexpr std::uint64_t kFnvPrime = 1099511628211ULL;

void fnv_mix(std::uint64_t& h, const void* bytes, std::size_t n) {
  const auto* p = static_cast<const unsigned char*>(bytes);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= kFnvPrime;
  }
}

}  // namespace

std::string shape_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << 'x';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

Tensor::Tensor(Shape shape, double fill)
    : shape_(std::move(shape)), data_(checked_numel(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (checked_numel(shape_) != data_.size()) {
    throw std::invalid_argument("tensor data length " +
                                std::to_string(data_.size()) +
                                " does not match shape " + shape_string(shape_));
  }
}

Tensor Tensor::scalar(double value) { return Tensor({1}, {value}); }

Tensor Tensor::vector(std::vector<double> values) {
  const std::size_t n = values.size();
  return Tensor({n}, std::move(values));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols,
                      std::vector<double> values) {
  return Tensor({rows, cols}, std::move(values));
}

Tensor Tensor::zeros_like(const Tensor& other) { return Tensor(other.shape_); }

double Tensor::item() const {
  if (!is_scalar()) {
    throw std::logic_error("item() on non-scalar tensor " +
                           shape_string(shape_));
  }
  return data_[0];
}

std::span<double> Tensor::row(std::size_t r) {
  const std::size_t c = cols();
  return std::span<double>(data_).subspan(r * c, c);
}

std::span<const double> Tensor::row(std::size_t r) const {
  const std::size_t c = cols();
  return std::span<const double>(data_).subspan(r * c, c);
}

void Tensor::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

bool Tensor::all_finite() const {
  for (double v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

bool bit_identical(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) return false;
  return std::memcmp(a.data().data(), b.data().data(),
                     a.size() * sizeof(double)) == 0;
}

double max_abs_difference(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw std::invalid_argument("max_abs_difference: shape mismatch " +
                                shape_string(a.shape()) + " vs " +
                                shape_string(b.shape()));
  }
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    worst = std::max(worst, std::abs(a[i] - b[i]));
  }
  return worst;
}

std::uint64_t checksum(const TensorMap& tensors) {
  std::uint64_t h = kFnvOffset;
  for (const auto& [name, t] : tensors) {
    fnv_mix(h, name.data(), name.size());
    for (std::size_t d : t.shape()) fnv_mix(h, &d, sizeof(d));
    fnv_mix(h, t.data().data(), t.size() * sizeof(double));
  }
  return h;
}

}  // namespace cnet
