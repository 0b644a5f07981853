#include "bflm/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "bflm/errors.hpp"
#include "bflm/nn.hpp"

namespace bflm {

namespace {
constexpr int kEos = Vocabulary::kEos;
constexpr int kBos = Vocabulary::kBos;
}  // namespace

std::string to_string(Variant v) {
  switch (v) {
    case Variant::Seq: return "seq";
    case Variant::InfoInit: return "info_init";
    case Variant::InfoAll: return "info_all";
    case Variant::SepBf: return "sep_bf";
    case Variant::SynBf: return "syn_bf";
    case Variant::AsynBf: return "asyn_bf";
  }
  return "?";
}

Variant variant_from_string(const std::string& name) {
  if (name == "seq") return Variant::Seq;
  if (name == "info_init") return Variant::InfoInit;
  if (name == "info_all") return Variant::InfoAll;
  if (name == "sep_bf") return Variant::SepBf;
  if (name == "syn_bf") return Variant::SynBf;
  if (name == "asyn_bf") return Variant::AsynBf;
  throw DataError("unknown model variant: " + name);
}

Model::Model(ModelConfig cfg) : config_(cfg) {
  if (config_.vocab < Vocabulary::kReserved)
    throw ContractViolation("model vocab must include the reserved symbols");
  if (config_.embedding == 0) throw ContractViolation("embedding size must be positive");

  const std::size_t V = config_.vocab;
  const std::size_t d = config_.embedding;
  const std::size_t H = config_.resolved_hidden();

  auto make_bundle = [&](const std::string& prefix, std::size_t input, bool two_heads) {
    Bundle b;
    b.cell = GruCell::create(store_, prefix + "gru", input, H);
    b.emb = EmbeddingTable::create(store_, prefix + "emb.E", V, d);
    b.head.fw = SoftmaxHead::create(store_, prefix + (two_heads ? "out_fw" : "out"), V, H);
    if (two_heads) b.head.bw = SoftmaxHead::create(store_, prefix + "out_bw", V, H);
    return b;
  };

  switch (config_.variant) {
    case Variant::Seq:
      bundles_.push_back(make_bundle("", d, false));
      break;
    case Variant::InfoInit:
    case Variant::InfoAll:
      // step input is [emb(prev); emb(wanted) or zeros]
      bundles_.push_back(make_bundle("", 2 * d, false));
      break;
    case Variant::SynBf:
      // step input is [x_fw; x_bw], one shared state, two output heads
      bundles_.push_back(make_bundle("", 2 * d, true));
      break;
    case Variant::SepBf:
    case Variant::AsynBf:
      bundles_.push_back(make_bundle("bw.", d, false));
      bundles_.push_back(make_bundle("fw.", d, false));
      break;
  }
}

void Model::init_params(std::uint64_t seed) { store_.init_uniform(0.08, seed); }

Tensor Model::build_input(const Bundle& b, const std::array<int, 2>& tokens, int pieces) const {
  const std::size_t d = config_.embedding;
  Tensor x({static_cast<std::size_t>(pieces) * d});
  for (int p = 0; p < pieces; ++p) {
    if (tokens[static_cast<std::size_t>(p)] < 0) continue;  // zero block
    auto src = b.emb.row(store_, tokens[static_cast<std::size_t>(p)]);
    std::copy(src.begin(), src.end(), x.data() + static_cast<std::size_t>(p) * d);
  }
  return x;
}

std::vector<Model::RunSpec> Model::plan(const SplitSentence& sentence) const {
  const std::vector<int>& w = sentence.tokens;
  const std::size_t m = w.size();
  const std::size_t s = sentence.split;
  const int ws = w[s - 1];

  auto word = [](TermInfo::Chain chain, int pos, int target, bool split = false) {
    TermInfo t;
    t.kind = TermInfo::Kind::Word;
    t.chain = chain;
    t.position = pos;
    t.target = target;
    t.is_split = split;
    return t;
  };
  auto eos_term = [](TermInfo::Chain chain, int pos, bool pad = false) {
    TermInfo t;
    t.kind = pad ? TermInfo::Kind::PadEos : TermInfo::Kind::ChainEos;
    t.chain = chain;
    t.position = pos;
    t.target = kEos;
    return t;
  };

  std::vector<RunSpec> specs;
  switch (config_.variant) {
    case Variant::Seq:
    case Variant::InfoInit:
    case Variant::InfoAll: {
      RunSpec r;
      r.bundle = 0;
      r.pieces = config_.variant == Variant::Seq ? 1 : 2;
      for (std::size_t t = 1; t <= m + 1; ++t) {
        const int prev = t == 1 ? kBos : w[t - 2];
        int aug = -1;
        if (config_.variant == Variant::InfoAll) aug = ws;
        if (config_.variant == Variant::InfoInit) aug = t == 1 ? ws : -1;
        r.inputs.push_back({prev, aug});
        const int step = static_cast<int>(t) - 1;
        if (t <= m)
          r.emits.push_back({step, 0, word(TermInfo::Chain::Seq, static_cast<int>(t), w[t - 1],
                                           t == s)});
        else
          r.emits.push_back({step, 0, eos_term(TermInfo::Chain::Seq, static_cast<int>(t))});
      }
      specs.push_back(std::move(r));
      break;
    }

    case Variant::SynBf: {
      // Step 0 conditions on [<bos>; <bos>]; the forward head alone carries
      // the split-word factor. Joint steps then run until the longer chain
      // has emitted <eos>, the exhausted chain being pad-forced to <eos>.
      const std::size_t T = std::max(s, m - s + 1);
      RunSpec r;
      r.bundle = 0;
      r.pieces = 2;
      r.inputs.push_back({kBos, kBos});
      r.emits.push_back({0, 0, word(TermInfo::Chain::Forward, 0, ws, true)});
      for (std::size_t t = 1; t <= T; ++t) {
        const int fw_in = (t <= m - s + 1) ? w[s + t - 2] : kEos;
        const int bw_in = (t <= s) ? w[s - t] : kEos;
        r.inputs.push_back({fw_in, bw_in});
        const int step = static_cast<int>(t);
        // backward head first, mirroring the per-step factor order
        if (t <= s - 1)
          r.emits.push_back({step, 1, word(TermInfo::Chain::Backward, step, w[s - t - 1])});
        else
          r.emits.push_back({step, 1, eos_term(TermInfo::Chain::Backward, step, t > s)});
        if (t <= m - s)
          r.emits.push_back({step, 0, word(TermInfo::Chain::Forward, step, w[s + t - 1])});
        else
          r.emits.push_back({step, 0, eos_term(TermInfo::Chain::Forward, step, t > m - s + 1)});
      }
      specs.push_back(std::move(r));
      break;
    }

    case Variant::SepBf: {
      // Backward half-LM: <bos>, w_s, w_{s-1}, ..., w_1; its <bos>-step
      // output is unused (the forward model owns the split-word factor).
      RunSpec bw;
      bw.bundle = 0;
      bw.inputs.push_back({kBos, -1});
      for (std::size_t i = s; i >= 1; --i) bw.inputs.push_back({w[i - 1], -1});
      for (std::size_t k = 1; k <= s; ++k) {
        if (k <= s - 1)
          bw.emits.push_back({static_cast<int>(k), 0,
                              word(TermInfo::Chain::Backward, static_cast<int>(k), w[s - k - 1])});
        else
          bw.emits.push_back(
              {static_cast<int>(k), 0, eos_term(TermInfo::Chain::Backward, static_cast<int>(k))});
      }
      specs.push_back(std::move(bw));

      RunSpec fw;
      fw.bundle = 1;
      fw.inputs.push_back({kBos, -1});
      for (std::size_t i = s; i <= m; ++i) fw.inputs.push_back({w[i - 1], -1});
      fw.emits.push_back({0, 0, word(TermInfo::Chain::Forward, 0, ws, true)});
      for (std::size_t k = 1; k <= m - s + 1; ++k) {
        if (k <= m - s)
          fw.emits.push_back({static_cast<int>(k), 0,
                              word(TermInfo::Chain::Forward, static_cast<int>(k), w[s + k - 1])});
        else
          fw.emits.push_back(
              {static_cast<int>(k), 0, eos_term(TermInfo::Chain::Forward, static_cast<int>(k))});
      }
      specs.push_back(std::move(fw));
      break;
    }

    case Variant::AsynBf: {
      // Phase 1: backward half-LM starting from <bos>, owning the
      // split-word factor (it is the first thing generated).
      RunSpec bw;
      bw.bundle = 0;
      bw.inputs.push_back({kBos, -1});
      for (std::size_t i = s; i >= 1; --i) bw.inputs.push_back({w[i - 1], -1});
      bw.emits.push_back({0, 0, word(TermInfo::Chain::Backward, 0, ws, true)});
      for (std::size_t k = 1; k <= s; ++k) {
        if (k <= s - 1)
          bw.emits.push_back({static_cast<int>(k), 0,
                              word(TermInfo::Chain::Backward, static_cast<int>(k), w[s - k - 1])});
        else
          bw.emits.push_back(
              {static_cast<int>(k), 0, eos_term(TermInfo::Chain::Backward, static_cast<int>(k))});
      }
      specs.push_back(std::move(bw));

      // Phase 2: a separate forward RNN re-reads w_1..w_s from a zero
      // state, then predicts the future words.
      RunSpec fw;
      fw.bundle = 1;
      for (std::size_t i = 1; i <= m; ++i) fw.inputs.push_back({w[i - 1], -1});
      for (std::size_t j = s - 1; j <= m - 1; ++j) {
        if (j + 2 <= m)
          fw.emits.push_back({static_cast<int>(j), 0,
                              word(TermInfo::Chain::Forward, static_cast<int>(j + 2 - s),
                                   w[j + 1])});
        else
          fw.emits.push_back({static_cast<int>(j), 0,
                              eos_term(TermInfo::Chain::Forward, static_cast<int>(m - s + 1))});
      }
      specs.push_back(std::move(fw));
      break;
    }
  }
  return specs;
}

void Model::execute(const RunSpec& spec, ForwardTrace& out, int run_index) const {
  const Bundle& b = bundles_[static_cast<std::size_t>(spec.bundle)];
  std::vector<TraceStep>& steps = out.runs[static_cast<std::size_t>(run_index)];
  steps.resize(spec.inputs.size());

  Tensor h({b.cell.hidden_size()});
  for (std::size_t t = 0; t < spec.inputs.size(); ++t) {
    TraceStep& ts = steps[t];
    ts.in = spec.inputs[t];
    ts.pieces = spec.pieces;
    Tensor x = build_input(b, ts.in, ts.pieces);
    h = b.cell.step(store_, x.flat(), h, &ts.cache);
  }

  for (const RunSpec::Emit& e : spec.emits) {
    const SoftmaxHead& head = e.head == 0 ? b.head.fw : *b.head.bw;
    TraceEmission em;
    em.run = run_index;
    em.step = e.step;
    em.head = e.head;
    em.info = e.info;
    em.probs = head.distribution(store_, steps[static_cast<std::size_t>(e.step)].cache.h);
    const double p = em.probs[static_cast<std::size_t>(em.info.target)];
    em.info.logp = p > 0.0 ? std::log(p) : -std::numeric_limits<double>::infinity();
    out.sum_nll -= em.info.logp;
    out.terms.push_back(std::move(em));
  }
}

ForwardTrace Model::forward(const SplitSentence& sentence) const {
  std::vector<RunSpec> specs = plan(sentence);
  ForwardTrace trace;
  trace.runs.resize(specs.size());
  for (std::size_t i = 0; i < specs.size(); ++i) execute(specs[i], trace, static_cast<int>(i));
  return trace;
}

void Model::backward(const ForwardTrace& trace, double loss_scale) {
  if (trace.terms.empty()) return;
  const double term_w = loss_scale / double(trace.terms.size());

  for (std::size_t run = 0; run < trace.runs.size(); ++run) {
    const std::vector<TraceStep>& steps = trace.runs[run];
    if (steps.empty()) continue;
    const Bundle& b = [&]() -> const Bundle& {
      // one bundle per run for sep/asyn, otherwise bundle 0
      if (bundles_.size() == 2) return bundles_[run];
      return bundles_[0];
    }();

    const std::size_t H = b.cell.hidden_size();
    Tensor dh({H}), dh_prev({H});
    Tensor dx({b.cell.input_size()});
    const std::size_t d = config_.embedding;

    for (std::size_t t = steps.size(); t-- > 0;) {
      // head contributions at this step
      for (const TraceEmission& e : trace.terms) {
        if (static_cast<std::size_t>(e.run) != run || static_cast<std::size_t>(e.step) != t)
          continue;
        const SoftmaxHead& head = e.head == 0 ? b.head.fw : *b.head.bw;
        head.backward(store_, steps[t].cache.h, e.probs, e.info.target, term_w, dh);
      }
      b.cell.backward(store_, steps[t].cache, dh, dx.flat(), dh_prev);
      for (int p = 0; p < steps[t].pieces; ++p) {
        const int tok = steps[t].in[static_cast<std::size_t>(p)];
        if (tok < 0) continue;
        b.emb.add_grad_row(store_, tok,
                           std::span<const double>(dx.data() + static_cast<std::size_t>(p) * d, d));
      }
      dh = dh_prev;
    }
  }
}

JointBreakdown Model::joint_from_trace(const ForwardTrace& trace, bool oracle) {
  JointBreakdown jb;
  jb.terms.reserve(trace.terms.size());
  for (std::size_t i = 0; i < trace.terms.size(); ++i) {
    TermInfo info = trace.terms[i].info;
    if (oracle && info.is_split) info.logp = 0.0;  // p(w_s) = 1
    if (info.logp == -std::numeric_limits<double>::infinity() && jb.zero_term < 0)
      jb.zero_term = static_cast<int>(i);
    jb.total += info.logp;
    jb.terms.push_back(info);
  }
  return jb;
}

JointBreakdown Model::joint_logprob(const SplitSentence& sentence, bool oracle) const {
  return joint_from_trace(forward(sentence), oracle);
}

double Model::marginal_logprob(const std::vector<int>& tokens, std::size_t cap,
                               bool uniform_prior) const {
  if (tokens.empty()) throw ContractViolation("marginal_logprob: empty sentence");
  if (tokens.size() > cap)
    throw DataError("marginal_logprob: sentence length " + std::to_string(tokens.size()) +
                    " exceeds cap " + std::to_string(cap));
  const std::size_t m = tokens.size();
  std::vector<double> totals;
  totals.reserve(m);
  for (std::size_t s = 1; s <= m; ++s) {
    JointBreakdown jb = joint_logprob(SplitSentence(tokens, s), uniform_prior);
    double v = jb.total;
    if (uniform_prior) v += std::log(1.0 / double(m));
    totals.push_back(v);
  }
  return log_sum_exp(totals);
}

// --- decoding surface ----------------------------------------------------

const Model::Bundle& Model::stream_bundle(Stream which) const {
  switch (config_.variant) {
    case Variant::Seq:
    case Variant::InfoInit:
    case Variant::InfoAll:
      if (which != Stream::Main)
        throw ContractViolation("this variant exposes only the Main stream");
      return bundles_[0];
    case Variant::SepBf:
    case Variant::AsynBf:
      if (which == Stream::BackwardChain) return bundles_[0];
      if (which == Stream::ForwardChain) return bundles_[1];
      throw ContractViolation("sep/asyn expose BackwardChain and ForwardChain streams");
    case Variant::SynBf:
    default:
      throw ContractViolation("syn-B/F uses the paired stream interface");
  }
}

Model::StreamState Model::stream_start(Stream which) const {
  const Bundle& b = stream_bundle(which);
  StreamState st;
  st.h = Tensor({b.cell.hidden_size()});
  return st;
}

void Model::stream_feed(Stream which, StreamState& st, int token, int wanted) const {
  const Bundle& b = stream_bundle(which);
  std::array<int, 2> in = {token, -1};
  int pieces = 1;
  if (config_.variant == Variant::InfoAll) {
    in[1] = wanted;
    pieces = 2;
  } else if (config_.variant == Variant::InfoInit) {
    in[1] = st.fed == 0 ? wanted : -1;
    pieces = 2;
  }
  if (pieces == 2 && in[1] == -1 && config_.variant == Variant::InfoAll)
    throw ContractViolation("info_all requires the wanted token at every step");
  Tensor x = build_input(b, in, pieces);
  st.h = b.cell.step(store_, x.flat(), st.h, nullptr);
  ++st.fed;
}

Tensor Model::stream_logits(Stream which, const StreamState& st) const {
  const Bundle& b = stream_bundle(which);
  return b.head.fw.logits(store_, st.h);
}

Model::SynState Model::syn_start() const {
  if (config_.variant != Variant::SynBf)
    throw ContractViolation("syn stream is only available on syn-B/F");
  SynState st;
  st.h = Tensor({bundles_[0].cell.hidden_size()});
  syn_feed(st, kBos, kBos);
  return st;
}

void Model::syn_feed(SynState& st, int prev_fw, int prev_bw) const {
  const Bundle& b = bundles_[0];
  Tensor x = build_input(b, {prev_fw, prev_bw}, 2);
  st.h = b.cell.step(store_, x.flat(), st.h, nullptr);
}

Tensor Model::syn_logits_bw(const SynState& st) const {
  return bundles_[0].head.bw->logits(store_, st.h);
}

Tensor Model::syn_logits_fw(const SynState& st) const {
  return bundles_[0].head.fw.logits(store_, st.h);
}

}  // namespace bflm
