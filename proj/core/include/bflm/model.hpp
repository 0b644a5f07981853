#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "bflm/corpus.hpp"
#include "bflm/gru.hpp"
#include "bflm/param_store.hpp"
#include "bflm/tensor.hpp"

namespace bflm {

enum class Variant { Seq, InfoInit, InfoAll, SepBf, SynBf, AsynBf };

std::string to_string(Variant v);
Variant variant_from_string(const std::string& name);

struct ModelConfig {
  Variant variant = Variant::Seq;
  std::size_t hidden = 0;  // 0 selects the variant default (100; 200 for syn)
  std::size_t embedding = 50;
  std::size_t vocab = 0;
  std::uint64_t seed = 1;

  std::size_t resolved_hidden() const {
    if (hidden != 0) return hidden;
    return variant == Variant::SynBf ? 200 : 100;
  }
};

// One probability factor of a sentence's factorization under a variant.
struct TermInfo {
  enum class Kind { Word, ChainEos, PadEos };
  enum class Chain { Seq, Backward, Forward };

  Kind kind = Kind::Word;
  Chain chain = Chain::Seq;
  bool is_split = false;  // the single split-word factor
  int position = 0;       // distance from the first/split word (0 = split word)
  int target = -1;
  double logp = 0.0;  // natural log
};

// Teacher-forced pass with everything retained for backprop.
struct TraceStep {
  std::array<int, 2> in = {-1, -1};  // token per input piece; -1 = zero block
  int pieces = 1;
  GruStepCache cache;
};

struct TraceEmission {
  int run = 0;
  int step = 0;
  int head = 0;  // 0 = forward head, 1 = backward head
  TermInfo info;
  Tensor probs;
};

struct ForwardTrace {
  std::vector<std::vector<TraceStep>> runs;
  std::vector<TraceEmission> terms;
  double sum_nll = 0.0;  // over all terms, split word included

  std::size_t term_count() const { return terms.size(); }
  double mean_nll() const { return terms.empty() ? 0.0 : sum_nll / double(terms.size()); }
};

struct JointBreakdown {
  double total = 0.0;
  std::vector<TermInfo> terms;
  int zero_term = -1;  // index of the first zero-probability factor, if any
};

// A B/F language model (or one of the baselines). Owns its parameters.
class Model {
 public:
  explicit Model(ModelConfig cfg);

  const ModelConfig& config() const { return config_; }
  ParamStore& params() { return store_; }
  const ParamStore& params() const { return store_; }

  // Uniform [-0.08, 0.08] weights, zero biases.
  void init_params(std::uint64_t seed);

  ForwardTrace forward(const SplitSentence& sentence) const;
  // Gradients of loss_scale * mean_nll(trace), accumulated into the store.
  void backward(const ForwardTrace& trace, double loss_scale);

  JointBreakdown joint_logprob(const SplitSentence& sentence, bool oracle) const;
  static JointBreakdown joint_from_trace(const ForwardTrace& trace, bool oracle);

  // log sum_s exp(joint(s)); the split prior is the model's own split-word
  // factor, or uniform 1/m when `uniform_prior` is set. Sentences longer
  // than `cap` are refused (cost grows as m forward passes).
  double marginal_logprob(const std::vector<int>& tokens, std::size_t cap = 32,
                          bool uniform_prior = false) const;

  // --- incremental stepping (decoding) ---------------------------------
  // Single-RNN stream: Main serves seq/info; BackwardChain/ForwardChain
  // serve the two half-LMs of sep and asyn.
  enum class Stream { Main, BackwardChain, ForwardChain };
  struct StreamState {
    Tensor h;
    std::size_t fed = 0;
  };
  StreamState stream_start(Stream which) const;
  // `wanted` is the conditioning word for the info variants (ignored
  // elsewhere); pass the split word on every call.
  void stream_feed(Stream which, StreamState& st, int token, int wanted = -1) const;
  Tensor stream_logits(Stream which, const StreamState& st) const;

  // Shared-state pair stream (syn): start() performs the <bos> step, whose
  // forward head carries the split-word distribution.
  struct SynState {
    Tensor h;
  };
  SynState syn_start() const;
  void syn_feed(SynState& st, int prev_fw, int prev_bw) const;
  Tensor syn_logits_bw(const SynState& st) const;
  Tensor syn_logits_fw(const SynState& st) const;

 private:
  struct Head {
    SoftmaxHead fw;
    std::optional<SoftmaxHead> bw;
  };
  struct Bundle {
    GruCell cell;
    EmbeddingTable emb;
    Head head;
  };

  struct RunSpec {
    int bundle = 0;
    int pieces = 1;
    std::vector<std::array<int, 2>> inputs;
    struct Emit {
      int step;
      int head;  // 0 fw, 1 bw
      TermInfo info;
    };
    std::vector<Emit> emits;
  };

  std::vector<RunSpec> plan(const SplitSentence& sentence) const;
  void execute(const RunSpec& spec, ForwardTrace& out, int run_index) const;
  Tensor build_input(const Bundle& b, const std::array<int, 2>& tokens, int pieces) const;

  const Bundle& stream_bundle(Stream which) const;

  ModelConfig config_;
  ParamStore store_;
  std::vector<Bundle> bundles_;
};

}  // namespace bflm
