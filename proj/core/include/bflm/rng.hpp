#pragma once

#include <cstdint>
#include <random>
#include <string>

namespace bflm {

// Deterministic random stream. All draws are derived from raw mt19937_64
// output with fixed arithmetic, so the state string alone reproduces the
// stream exactly (std::*_distribution objects keep hidden state and are
// avoided on purpose).
class DetRng {
 public:
  explicit DetRng(std::uint64_t seed = 0) : engine_(seed) {}

  std::uint64_t raw() { return engine_(); }

  // Uniform in [0, 1).
  double uniform01() { return static_cast<double>(raw() >> 11) * 0x1.0p-53; }

  // Uniform in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // Uniform integer in [0, n); n must be positive. Rejection sampling keeps
  // the draw exactly uniform.
  std::size_t below(std::size_t n);

  // Fisher-Yates shuffle driven by this stream.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = below(i);
      std::swap(v[i - 1], v[j]);
    }
  }

  std::string save_state() const;
  void load_state(const std::string& state);

 private:
  std::mt19937_64 engine_;
};

}  // namespace bflm
