#include "bflm/param_store.hpp"

#include "bflm/errors.hpp"
#include "bflm/rng.hpp"

namespace bflm {

std::size_t ParamStore::add(std::string name, std::vector<std::size_t> dims, Tag tag) {
  if (by_name_.count(name)) throw ContractViolation("duplicate parameter name: " + name);
  Entry e;
  e.name = std::move(name);
  e.value = Tensor(dims);
  e.grad = Tensor(std::move(dims));
  e.tag = tag;
  by_name_.emplace(e.name, entries_.size());
  entries_.push_back(std::move(e));
  return entries_.size() - 1;
}

std::size_t ParamStore::index_of(const std::string& name) const {
  auto it = by_name_.find(name);
  if (it == by_name_.end()) throw ContractViolation("unknown parameter: " + name);
  return it->second;
}

void ParamStore::zero_grads() {
  for (Entry& e : entries_) e.grad.zero();
}

std::size_t ParamStore::total_parameters() const {
  std::size_t n = 0;
  for (const Entry& e : entries_) n += e.value.size();
  return n;
}

void ParamStore::init_uniform(double range, std::uint64_t seed) {
  DetRng rng(seed);
  for (Entry& e : entries_) {
    if (e.value.rank() == 1) {
      e.value.zero();  // biases
    } else {
      for (double& x : e.value.flat()) x = rng.uniform(-range, range);
    }
    e.grad.zero();
  }
}

}  // namespace bflm
