#include "bflm/corpus.hpp"

#include <cctype>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include "bflm/errors.hpp"

namespace bflm {

SplitSentence::SplitSentence(std::vector<int> toks, std::size_t s)
    : tokens(std::move(toks)), split(s) {
  if (tokens.empty()) throw ContractViolation("SplitSentence: empty sentence");
  if (split < 1 || split > tokens.size())
    throw ContractViolation("SplitSentence: split index out of [1, m]");
}

std::vector<int> SplitSentence::backward_chain() const {
  std::vector<int> out;
  out.reserve(split);
  for (std::size_t i = split; i >= 1; --i) out.push_back(tokens[i - 1]);
  return out;
}

std::vector<int> SplitSentence::forward_chain() const {
  std::vector<int> out;
  out.reserve(tokens.size() - split + 1);
  for (std::size_t i = split; i <= tokens.size(); ++i) out.push_back(tokens[i - 1]);
  return out;
}

std::string ascii_lower(std::string s) {
  for (char& c : s)
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  return s;
}

std::vector<std::string> tokenize(const std::string& line) {
  std::vector<std::string> out;
  std::istringstream is(line);
  std::string tok;
  while (is >> tok) out.push_back(tok);
  return out;
}

std::string detokenize(const Vocabulary& vocab, const std::vector<int>& ids) {
  std::string out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i) out += ' ';
    out += vocab.token_of(ids[i]);
  }
  return out;
}

PreprocessResult preprocess(std::istream& lines, const PreprocessOptions& opts) {
  PreprocessResult res;
  std::vector<std::vector<std::string>> raw;
  std::unordered_map<std::string, std::size_t> freq;

  std::string line;
  while (std::getline(lines, line)) {
    ++res.lines_read;
    if (opts.line_filter && !opts.line_filter(line)) {
      ++res.dropped_filtered;
      continue;
    }
    std::vector<std::string> toks = tokenize(ascii_lower(line));
    if (toks.empty()) {
      ++res.dropped_empty;
      continue;
    }
    for (const std::string& t : toks) ++freq[t];
    raw.push_back(std::move(toks));
  }
  if (lines.bad()) throw IoError("read failure while preprocessing corpus");

  res.vocab.min_count = opts.min_count;
  for (const auto& toks : raw) {
    std::vector<int> ids;
    ids.reserve(toks.size());
    std::size_t unks = 0;
    for (const std::string& t : toks) {
      if (freq[t] <= opts.min_count) {
        ids.push_back(Vocabulary::kUnk);
        ++unks;
      } else {
        ids.push_back(-1);  // resolved below, after the drop decision
      }
    }
    if (unks > opts.max_unk) {
      ++res.dropped_unk;
      continue;
    }
    for (std::size_t i = 0; i < toks.size(); ++i)
      if (ids[i] == -1) ids[i] = res.vocab.add(toks[i]);
    res.sentences.push_back(Sentence{std::move(ids), std::nullopt});
    ++res.kept;
  }
  return res;
}

PreprocessResult preprocess_file(const std::string& path, const PreprocessOptions& opts) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read corpus file: " + path);
  return preprocess(in, opts);
}

std::vector<TsvRecord> load_tsv(std::istream& in, const std::string& origin) {
  std::vector<TsvRecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    TsvRecord rec;
    std::string body = line;
    auto tab = line.find('\t');
    if (tab != std::string::npos) {
      const std::string head = line.substr(0, tab);
      std::size_t pos = 0;
      unsigned long long idx = 0;
      try {
        idx = std::stoull(head, &pos);
      } catch (const std::exception&) {
        pos = 0;
      }
      if (pos != head.size() || head.empty())
        throw DataError(origin + ":" + std::to_string(lineno) + ": malformed split index '" +
                        head + "'");
      rec.split = static_cast<std::size_t>(idx);
      body = line.substr(tab + 1);
    }
    rec.tokens = tokenize(body);
    if (rec.tokens.empty())
      throw DataError(origin + ":" + std::to_string(lineno) + ": no tokens");
    if (rec.split && (*rec.split < 1 || *rec.split > rec.tokens.size()))
      throw DataError(origin + ":" + std::to_string(lineno) + ": split index " +
                      std::to_string(*rec.split) + " out of range for " +
                      std::to_string(rec.tokens.size()) + " tokens");
    out.push_back(std::move(rec));
  }
  if (in.bad()) throw IoError("read failure: " + origin);
  return out;
}

std::vector<TsvRecord> load_tsv_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read file: " + path);
  return load_tsv(in, path);
}

std::vector<Sentence> load_corpus_file(const std::string& path, const Vocabulary& vocab) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read corpus file: " + path);
  std::vector<Sentence> out;
  for (TsvRecord& rec : load_tsv(in, path)) {
    Sentence s;
    s.annotated_split = rec.split;
    s.ids.reserve(rec.tokens.size());
    for (const std::string& t : rec.tokens) s.ids.push_back(vocab.id_of(ascii_lower(t)));
    out.push_back(std::move(s));
  }
  return out;
}

SplitSentence assign_split(const Sentence& sentence, const SplitPolicy& policy, DetRng* rng) {
  if (sentence.ids.empty()) throw ContractViolation("assign_split: empty sentence");
  const std::size_t m = sentence.ids.size();
  switch (policy.kind) {
    case SplitPolicy::Kind::Fixed:
      if (policy.fixed_index < 1 || policy.fixed_index > m)
        throw ContractViolation("assign_split: fixed index out of range");
      return SplitSentence(sentence.ids, policy.fixed_index);
    case SplitPolicy::Kind::Annotated:
      if (sentence.annotated_split) {
        if (*sentence.annotated_split < 1 || *sentence.annotated_split > m)
          throw DataError("annotated split index out of range");
        return SplitSentence(sentence.ids, *sentence.annotated_split);
      }
      [[fallthrough]];  // unannotated records fall back to a random draw
    case SplitPolicy::Kind::Random:
    default:
      if (!rng) throw ContractViolation("assign_split: random policy needs an RNG");
      return SplitSentence(sentence.ids, 1 + rng->below(m));
  }
}

}  // namespace bflm
