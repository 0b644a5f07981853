#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "bflm/model.hpp"
#include "bflm/rng.hpp"
#include "bflm/vocab.hpp"

namespace bflm {

struct DecodeConfig {
  enum class Strategy { Greedy, Sample, Beam };
  Strategy strategy = Strategy::Greedy;
  double temperature = 1.0;
  std::uint64_t seed = 0;
  std::size_t beam_width = 1;
  std::size_t max_len_per_chain = 20;
  std::set<int> banned;  // ids never chosen (<eos> is exempt)

  void validate() const;
};

// One generated sentence. Generation always conditions on the wanted word
// (p(w_s) = 1); the split-word factor is therefore never part of the score.
// For the sequential/info baselines `split` is the wanted word's 1-based
// position when it happens to appear, and 0 otherwise.
struct GenerationRecord {
  std::vector<int> tokens;
  std::size_t split = 0;
  double logprob = 0.0;
  bool bw_terminated = true;  // chain reached <eos> before the length cap
  bool fw_terminated = true;
  bool contains_wanted = false;
};

GenerationRecord generate(const Model& model, int wanted, const DecodeConfig& cfg, DetRng& rng);

// Top-`width` hypotheses, scores non-increasing. width == 1 reproduces
// greedy exactly.
std::vector<GenerationRecord> beam_decode(const Model& model, int wanted, std::size_t width,
                                          const DecodeConfig& cfg);

GenerationRecord sample_decode(const Model& model, int wanted, double temperature,
                               std::uint64_t seed, const DecodeConfig& cfg);

// One machine-parseable line per sample; the space-joined text comes last.
std::string format_record(const Vocabulary& vocab, const GenerationRecord& rec);

}  // namespace bflm
