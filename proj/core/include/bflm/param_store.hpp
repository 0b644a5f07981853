#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "bflm/tensor.hpp"

namespace bflm {

// Named, shaped parameter tensors with a shape-aligned gradient per entry.
// Iteration order is insertion order, which fixes initialization and
// serialization order.
class ParamStore {
 public:
  enum class Tag { Dense, EmbeddingRows };

  struct Entry {
    std::string name;
    Tensor value;
    Tensor grad;
    Tag tag = Tag::Dense;
  };

  std::size_t add(std::string name, std::vector<std::size_t> dims, Tag tag = Tag::Dense);

  std::size_t size() const { return entries_.size(); }
  Entry& entry(std::size_t i) { return entries_[i]; }
  const Entry& entry(std::size_t i) const { return entries_[i]; }

  Tensor& value(std::size_t i) { return entries_[i].value; }
  const Tensor& value(std::size_t i) const { return entries_[i].value; }
  Tensor& grad(std::size_t i) { return entries_[i].grad; }
  const Tensor& grad(std::size_t i) const { return entries_[i].grad; }

  // Index lookup; throws ContractViolation when the name is unknown.
  std::size_t index_of(const std::string& name) const;
  bool contains(const std::string& name) const { return by_name_.count(name) != 0; }

  void zero_grads();
  std::size_t total_parameters() const;

  // Uniform fill on [-range, range] for matrices and embeddings; rank-1
  // entries are biases and stay zero. Draw order is insertion order.
  void init_uniform(double range, std::uint64_t seed);

 private:
  std::vector<Entry> entries_;
  std::unordered_map<std::string, std::size_t> by_name_;
};

}  // namespace bflm
