#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "bflm/rng.hpp"
#include "bflm/vocab.hpp"

namespace bflm {

// Token-id sequence with a 1-based split index s in [1, m]. The backward
// chain runs (w_s .. w_1), the forward chain (w_s .. w_m); both start at w_s.
struct SplitSentence {
  std::vector<int> tokens;
  std::size_t split = 1;

  SplitSentence(std::vector<int> toks, std::size_t s);
  std::size_t length() const { return tokens.size(); }
  std::vector<int> backward_chain() const;
  std::vector<int> forward_chain() const;
};

// A tokenized sentence, possibly carrying an annotated split index.
struct Sentence {
  std::vector<int> ids;
  std::optional<std::size_t> annotated_split;
};

std::string ascii_lower(std::string s);
std::vector<std::string> tokenize(const std::string& line);
std::string detokenize(const Vocabulary& vocab, const std::vector<int>& ids);

struct PreprocessOptions {
  std::size_t min_count = 10;  // frequency <= min_count becomes <unk>
  std::size_t max_unk = 3;     // sentences with more <unk>s are dropped
  // Hook for corpus-specific filtering (e.g. language id); default keeps all.
  std::function<bool(const std::string&)> line_filter;
};

struct PreprocessResult {
  Vocabulary vocab;
  std::vector<Sentence> sentences;
  std::size_t lines_read = 0;
  std::size_t kept = 0;
  std::size_t dropped_unk = 0;
  std::size_t dropped_empty = 0;
  std::size_t dropped_filtered = 0;
};

// Lowercase, whitespace-tokenize, replace rare tokens with <unk>, drop
// sentences with too many <unk>s, and build the vocabulary over the kept
// sentences (first-appearance order).
PreprocessResult preprocess(std::istream& lines, const PreprocessOptions& opts = {});
PreprocessResult preprocess_file(const std::string& path, const PreprocessOptions& opts = {});

struct TsvRecord {
  std::optional<std::size_t> split;  // 1-based, validated against token count
  std::vector<std::string> tokens;
};

// Lines are either "s<TAB>tok tok ..." or plain "tok tok ...". Malformed
// lines and out-of-range indices raise DataError naming the line number.
std::vector<TsvRecord> load_tsv(std::istream& in, const std::string& origin = "<stream>");
std::vector<TsvRecord> load_tsv_file(const std::string& path);

// Maps a corpus file (plain or TSV) onto an existing vocabulary. Tokens are
// lowercased and unknowns become <unk>; empty lines are skipped.
std::vector<Sentence> load_corpus_file(const std::string& path, const Vocabulary& vocab);

struct SplitPolicy {
  enum class Kind { Random, Fixed, Annotated };
  Kind kind = Kind::Random;
  std::size_t fixed_index = 1;

  static SplitPolicy random() { return {Kind::Random, 1}; }
  static SplitPolicy fixed(std::size_t index) { return {Kind::Fixed, index}; }
  static SplitPolicy annotated() { return {Kind::Annotated, 1}; }
};

// Chooses the split index for a sentence. Random draws uniformly from
// [1, m] using the supplied stream; Annotated requires the sentence to carry
// an index (falls back to Random draw when absent only if `rng` is given).
SplitSentence assign_split(const Sentence& sentence, const SplitPolicy& policy, DetRng* rng);

// Train/validation/test partitions kept disjoint by construction.
struct CorpusSplits {
  std::vector<Sentence> train;
  std::vector<Sentence> validation;
  std::vector<Sentence> test;
  std::string source;
  std::uint64_t seed = 0;
  std::string vocab_hash;
};

}  // namespace bflm
