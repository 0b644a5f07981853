#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace bflm {

// Dense row-major tensor of doubles. Value type; cheap to move.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> dims);
  Tensor(std::vector<std::size_t> dims, std::vector<double> data);

  static Tensor zeros(std::vector<std::size_t> dims) { return Tensor(std::move(dims)); }
  static Tensor vector(std::size_t n) { return Tensor({n}); }

  const std::vector<std::size_t>& dims() const { return dims_; }
  std::size_t rank() const { return dims_.size(); }
  std::size_t size() const { return data_.size(); }
  std::size_t dim(std::size_t i) const { return dims_[i]; }
  bool empty() const { return data_.empty(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  // 2-D accessors; valid only for rank-2 tensors.
  double& at(std::size_t i, std::size_t j) { return data_[i * dims_[1] + j]; }
  double at(std::size_t i, std::size_t j) const { return data_[i * dims_[1] + j]; }

  std::span<double> row(std::size_t i);
  std::span<const double> row(std::size_t i) const;

  std::span<double> flat() { return {data_.data(), data_.size()}; }
  std::span<const double> flat() const { return {data_.data(), data_.size()}; }

  void fill(double v);
  void zero() { fill(0.0); }
  bool all_finite() const;
  bool same_shape(const Tensor& other) const { return dims_ == other.dims_; }
  std::string shape_str() const;

 private:
  std::vector<std::size_t> dims_;
  std::vector<double> data_;
};

}  // namespace bflm
