#include "bflm/rng.hpp"

#include <limits>
#include <sstream>

#include "bflm/errors.hpp"

namespace bflm {

std::size_t DetRng::below(std::size_t n) {
  if (n == 0) throw ContractViolation("DetRng::below requires n > 0");
  const std::uint64_t span = std::numeric_limits<std::uint64_t>::max() / n * n;
  std::uint64_t r;
  do {
    r = raw();
  } while (r >= span);
  return static_cast<std::size_t>(r % n);
}

std::string DetRng::save_state() const {
  std::ostringstream os;
  os << engine_;
  return os.str();
}

void DetRng::load_state(const std::string& state) {
  std::istringstream is(state);
  is >> engine_;
  if (is.fail()) throw DataError("malformed RNG state string");
}

}  // namespace bflm
