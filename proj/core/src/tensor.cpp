#include "bflm/tensor.hpp"

#include <cmath>
#include <sstream>

#include "bflm/errors.hpp"

namespace bflm {

namespace {
std::size_t checked_product(const std::vector<std::size_t>& dims) {
  if (dims.empty()) throw ContractViolation("tensor must have at least one dimension");
  std::size_t n = 1;
  for (std::size_t d : dims) {
    if (d == 0) throw ContractViolation("tensor dimensions must be positive");
    n *= d;
  }
  return n;
}
}  // namespace

Tensor::Tensor(std::vector<std::size_t> dims)
    : dims_(std::move(dims)), data_(checked_product(dims_), 0.0) {}

Tensor::Tensor(std::vector<std::size_t> dims, std::vector<double> data) : dims_(std::move(dims)) {
  if (checked_product(dims_) != data.size())
    throw ContractViolation("tensor data length does not match dimensions");
  data_ = std::move(data);
}

std::span<double> Tensor::row(std::size_t i) {
  std::size_t cols = dims_.back();
  return {data_.data() + i * cols, cols};
}

std::span<const double> Tensor::row(std::size_t i) const {
  std::size_t cols = dims_.back();
  return {data_.data() + i * cols, cols};
}

void Tensor::fill(double v) {
  for (double& x : data_) x = v;
}

bool Tensor::all_finite() const {
  for (double x : data_)
    if (!std::isfinite(x)) return false;
  return true;
}

std::string Tensor::shape_str() const {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < dims_.size(); ++i) {
    if (i) os << 'x';
    os << dims_[i];
  }
  os << ']';
  return os.str();
}

}  // namespace bflm
