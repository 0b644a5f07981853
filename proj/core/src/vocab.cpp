#include "bflm/vocab.hpp"

#include <fstream>
#include <sstream>

#include "bflm/errors.hpp"

namespace bflm {

Vocabulary::Vocabulary() {
  id_to_token_ = {"<eos>", "<unk>", "<bos>"};
  for (std::size_t i = 0; i < id_to_token_.size(); ++i)
    token_to_id_.emplace(id_to_token_[i], static_cast<int>(i));
}

int Vocabulary::add(const std::string& token) {
  auto it = token_to_id_.find(token);
  if (it != token_to_id_.end()) return it->second;
  int id = static_cast<int>(id_to_token_.size());
  id_to_token_.push_back(token);
  token_to_id_.emplace(token, id);
  return id;
}

int Vocabulary::id_of(const std::string& token) const {
  auto it = token_to_id_.find(token);
  return it == token_to_id_.end() ? kUnk : it->second;
}

std::optional<int> Vocabulary::find(const std::string& token) const {
  auto it = token_to_id_.find(token);
  if (it == token_to_id_.end()) return std::nullopt;
  return it->second;
}

const std::string& Vocabulary::token_of(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= id_to_token_.size())
    throw ContractViolation("token id out of range");
  return id_to_token_[static_cast<std::size_t>(id)];
}

std::uint64_t Vocabulary::hash() const {
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&h](const char* s, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
      h ^= static_cast<unsigned char>(s[i]);
      h *= 1099511628211ull;
    }
  };
  for (const std::string& t : id_to_token_) {
    mix(t.data(), t.size());
    mix("\n", 1);
  }
  return h;
}

std::string Vocabulary::hash_hex() const {
  std::ostringstream os;
  os << std::hex << hash();
  return os.str();
}

void Vocabulary::save(std::ostream& out) const {
  out << "#eos 0\n#unk 1\n#bos 2\n";
  for (std::size_t i = kReserved; i < id_to_token_.size(); ++i) out << id_to_token_[i] << '\n';
}

void Vocabulary::save_file(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write vocabulary file: " + path);
  save(out);
  if (!out.good()) throw IoError("write failure on vocabulary file: " + path);
}

Vocabulary Vocabulary::load(std::istream& in) {
  Vocabulary v;
  std::string line;
  const char* expected[] = {"#eos 0", "#unk 1", "#bos 2"};
  for (const char* header : expected) {
    if (!std::getline(in, line) || line != header)
      throw DataError(std::string("vocabulary file missing header line '") + header + "'");
  }
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (v.token_to_id_.count(line)) throw DataError("duplicate vocabulary token: " + line);
    v.add(line);
  }
  return v;
}

Vocabulary Vocabulary::load_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read vocabulary file: " + path);
  return load(in);
}

}  // namespace bflm
