#pragma once

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "bflm/corpus.hpp"
#include "bflm/model.hpp"
#include "bflm/rng.hpp"

namespace bflm {

struct PositionBucket {
  int t = 0;
  double sum_neg_log2 = 0.0;
  std::size_t count = 0;
  double ppl() const;
};

// Per-position and aggregate perplexity accounting. <eos> and pad factors
// never enter a bucket; real words are bucketed by their distance from the
// first word (sequential family) or the split word (B/F family), the split
// word itself sitting at t = 0. "First word" is the bucket at t = 1, i.e.
// the first generated word of the sentence or of each chain.
struct EvalReport {
  double overall_ppl = 0.0;
  double first_word_ppl = 0.0;
  double subsequent_ppl = 0.0;
  double oracle_overall_ppl = 0.0;
  std::vector<PositionBucket> curve;  // ascending t, empty buckets omitted
  std::size_t tokens_total = 0;
  std::size_t tokens_first = 0;
  std::size_t tokens_subsequent = 0;
  std::size_t sentences = 0;
  bool oracle_mode = false;
};

// 2^(-mean) of the given per-token base-2 log probabilities. Any -inf entry
// makes the result +inf. Empty input is a contract violation.
double perplexity(std::span<const double> log2_probs);

// Scores every sentence under the given split policy and buckets each real
// word factor. Both the plain overall PPL and the oracle overall PPL
// (p(w_s) = 1) are always computed; `oracle` selects the accounting used
// for the first/subsequent buckets and the position curve.
EvalReport evaluate(const Model& model, std::span<const Sentence> corpus, bool oracle,
                    const SplitPolicy& policy, DetRng* rng);

// CSV with header "t,ppl,count", ascending t.
void position_curve_csv(const EvalReport& report, std::ostream& out);
void position_curve_csv_file(const EvalReport& report, const std::string& path);

// Line-oriented key=value rendering of the report.
std::string report_text(const EvalReport& report);

}  // namespace bflm
