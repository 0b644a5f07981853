#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace bflm {

// Bidirectional token<->id map with reserved ids 0=<eos>, 1=<unk>, 2=<bos>.
class Vocabulary {
 public:
  static constexpr int kEos = 0;
  static constexpr int kUnk = 1;
  static constexpr int kBos = 2;
  static constexpr std::size_t kReserved = 3;

  Vocabulary();

  // Appends the token if absent; returns its id either way.
  int add(const std::string& token);
  // Maps unknown tokens to <unk>.
  int id_of(const std::string& token) const;
  std::optional<int> find(const std::string& token) const;
  const std::string& token_of(int id) const;

  std::size_t size() const { return id_to_token_.size(); }

  // FNV-1a over the ordered token list; used to pair checkpoints with the
  // vocabulary they were trained against.
  std::uint64_t hash() const;
  std::string hash_hex() const;

  void save(std::ostream& out) const;
  void save_file(const std::string& path) const;
  static Vocabulary load(std::istream& in);
  static Vocabulary load_file(const std::string& path);

  std::size_t min_count = 0;  // threshold the vocabulary was built with

 private:
  std::vector<std::string> id_to_token_;
  std::unordered_map<std::string, int> token_to_id_;
};

}  // namespace bflm
