#include "bflm/decoding.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "bflm/errors.hpp"
#include "bflm/nn.hpp"

namespace bflm {

namespace {

constexpr int kEos = Vocabulary::kEos;
constexpr int kBos = Vocabulary::kBos;

std::vector<double> log_softmax(const Tensor& logits) {
  double m = logits[0];
  for (double v : logits.flat()) m = std::max(m, v);
  double sum = 0.0;
  for (double v : logits.flat()) sum += std::exp(v - m);
  const double lse = m + std::log(sum);
  std::vector<double> out(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] = logits[i] - lse;
  return out;
}

bool allowed(int tok, const std::set<int>& banned) {
  return tok == kEos || banned.find(tok) == banned.end();
}

// Picks one token. The returned log-probability is always the model's own
// (untempered, unrestricted) value so that decoder scores recompose into
// the joint probability.
struct Chooser {
  DecodeConfig::Strategy strategy;
  double temperature = 1.0;
  DetRng* rng = nullptr;
  const std::set<int>* banned = nullptr;

  std::pair<int, double> pick(const Tensor& logits) const {
    const std::vector<double> logp = log_softmax(logits);
    if (strategy == DecodeConfig::Strategy::Sample) {
      // tempered distribution over the allowed tokens
      double m = -std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < logits.size(); ++i)
        if (allowed(static_cast<int>(i), *banned)) m = std::max(m, logits[i] / temperature);
      std::vector<double> w(logits.size(), 0.0);
      double total = 0.0;
      for (std::size_t i = 0; i < logits.size(); ++i) {
        if (!allowed(static_cast<int>(i), *banned)) continue;
        w[i] = std::exp(logits[i] / temperature - m);
        total += w[i];
      }
      double u = rng->uniform01() * total;
      std::size_t pickidx = 0;
      for (std::size_t i = 0; i < w.size(); ++i) {
        if (w[i] == 0.0) continue;
        pickidx = i;
        if (u < w[i]) break;
        u -= w[i];
      }
      return {static_cast<int>(pickidx), logp[pickidx]};
    }
    // greedy: argmax over allowed tokens, lowest index on ties
    std::size_t best = 0;
    bool have = false;
    for (std::size_t i = 0; i < logits.size(); ++i) {
      if (!allowed(static_cast<int>(i), *banned)) continue;
      if (!have || logits[i] > logits[best]) {
        best = i;
        have = true;
      }
    }
    return {static_cast<int>(best), logp[best]};
  }
};

struct ChainResult {
  std::vector<int> tokens;
  double logp = 0.0;
  bool terminated = true;
};

ChainResult decode_chain(const Model& model, Model::Stream which, Model::StreamState st,
                         int wanted, const Chooser& chooser, std::size_t max_len) {
  ChainResult res;
  for (;;) {
    const Tensor logits = model.stream_logits(which, st);
    auto [tok, lp] = chooser.pick(logits);
    res.logp += lp;
    if (tok == kEos) {
      res.terminated = true;
      break;
    }
    res.tokens.push_back(tok);
    if (res.tokens.size() >= max_len) {
      res.terminated = false;
      break;
    }
    model.stream_feed(which, st, tok, wanted);
  }
  return res;
}

std::size_t find_wanted(const std::vector<int>& tokens, int wanted) {
  for (std::size_t i = 0; i < tokens.size(); ++i)
    if (tokens[i] == wanted) return i + 1;
  return 0;
}

GenerationRecord decode_once(const Model& model, int wanted, const DecodeConfig& cfg,
                             DetRng& rng) {
  Chooser chooser{cfg.strategy, cfg.temperature, &rng, &cfg.banned};
  GenerationRecord rec;

  switch (model.config().variant) {
    case Variant::Seq:
    case Variant::InfoInit:
    case Variant::InfoAll: {
      Model::StreamState st = model.stream_start(Model::Stream::Main);
      model.stream_feed(Model::Stream::Main, st, kBos, wanted);
      ChainResult chain = decode_chain(model, Model::Stream::Main, std::move(st), wanted, chooser,
                                       cfg.max_len_per_chain);
      rec.tokens = std::move(chain.tokens);
      rec.logprob = chain.logp;
      rec.fw_terminated = chain.terminated;
      rec.split = find_wanted(rec.tokens, wanted);
      rec.contains_wanted = rec.split != 0;
      return rec;
    }

    case Variant::SepBf:
    case Variant::AsynBf: {
      Model::StreamState bw_st = model.stream_start(Model::Stream::BackwardChain);
      model.stream_feed(Model::Stream::BackwardChain, bw_st, kBos);
      model.stream_feed(Model::Stream::BackwardChain, bw_st, wanted);
      ChainResult bw = decode_chain(model, Model::Stream::BackwardChain, std::move(bw_st), -1,
                                    chooser, cfg.max_len_per_chain);

      Model::StreamState fw_st = model.stream_start(Model::Stream::ForwardChain);
      if (model.config().variant == Variant::SepBf) {
        model.stream_feed(Model::Stream::ForwardChain, fw_st, kBos);
        model.stream_feed(Model::Stream::ForwardChain, fw_st, wanted);
      } else {
        // asyn phase 2 re-reads the generated backward text left to right
        for (std::size_t i = bw.tokens.size(); i-- > 0;)
          model.stream_feed(Model::Stream::ForwardChain, fw_st, bw.tokens[i]);
        model.stream_feed(Model::Stream::ForwardChain, fw_st, wanted);
      }
      ChainResult fw = decode_chain(model, Model::Stream::ForwardChain, std::move(fw_st), -1,
                                    chooser, cfg.max_len_per_chain);

      rec.tokens.assign(bw.tokens.rbegin(), bw.tokens.rend());
      rec.tokens.push_back(wanted);
      rec.tokens.insert(rec.tokens.end(), fw.tokens.begin(), fw.tokens.end());
      rec.split = bw.tokens.size() + 1;
      rec.logprob = bw.logp + fw.logp;
      rec.bw_terminated = bw.terminated;
      rec.fw_terminated = fw.terminated;
      rec.contains_wanted = true;
      return rec;
    }

    case Variant::SynBf:
    default: {
      Model::SynState st = model.syn_start();
      int prev_fw = wanted, prev_bw = wanted;
      bool bw_done = false, fw_done = false;
      rec.bw_terminated = rec.fw_terminated = true;
      std::vector<int> bw, fw;
      while (!(bw_done && fw_done)) {
        model.syn_feed(st, prev_fw, prev_bw);
        const Tensor lb = model.syn_logits_bw(st);
        const Tensor lf = model.syn_logits_fw(st);

        int tb, tf;
        double pb, pf;
        if (bw_done) {  // pad: the finished chain keeps emitting <eos>
          tb = kEos;
          pb = log_softmax(lb)[kEos];
        } else {
          std::tie(tb, pb) = chooser.pick(lb);
        }
        if (fw_done) {
          tf = kEos;
          pf = log_softmax(lf)[kEos];
        } else {
          std::tie(tf, pf) = chooser.pick(lf);
        }
        rec.logprob += pb + pf;

        if (!bw_done) {
          if (tb == kEos) {
            bw_done = true;
          } else {
            bw.push_back(tb);
            if (bw.size() >= cfg.max_len_per_chain) {
              bw_done = true;
              rec.bw_terminated = false;
            }
          }
        }
        if (!fw_done) {
          if (tf == kEos) {
            fw_done = true;
          } else {
            fw.push_back(tf);
            if (fw.size() >= cfg.max_len_per_chain) {
              fw_done = true;
              rec.fw_terminated = false;
            }
          }
        }
        prev_bw = tb;
        prev_fw = tf;
      }
      rec.tokens.assign(bw.rbegin(), bw.rend());
      rec.tokens.push_back(wanted);
      rec.tokens.insert(rec.tokens.end(), fw.begin(), fw.end());
      rec.split = bw.size() + 1;
      rec.contains_wanted = true;
      return rec;
    }
  }
}

// --- beam search ----------------------------------------------------------

struct ChainHyp {
  Model::StreamState st;
  std::vector<int> tokens;
  double logp = 0.0;
  bool terminated = true;
};

std::vector<ChainHyp> beam_chain(const Model& model, Model::Stream which,
                                 const Model::StreamState& init, int wanted, std::size_t width,
                                 const DecodeConfig& cfg) {
  struct Live {
    Model::StreamState st;
    std::vector<int> tokens;
    double logp = 0.0;
  };
  std::vector<Live> live;
  live.push_back({init, {}, 0.0});
  std::vector<ChainHyp> finished;

  while (!live.empty()) {
    struct Cand {
      std::size_t parent;
      int tok;
      double logp;
    };
    std::vector<Cand> cands;
    std::vector<std::vector<double>> logps(live.size());
    for (std::size_t p = 0; p < live.size(); ++p) {
      logps[p] = log_softmax(model.stream_logits(which, live[p].st));
      for (std::size_t t = 0; t < logps[p].size(); ++t) {
        if (!allowed(static_cast<int>(t), cfg.banned)) continue;
        cands.push_back({p, static_cast<int>(t), live[p].logp + logps[p][t]});
      }
    }
    std::stable_sort(cands.begin(), cands.end(),
                     [](const Cand& a, const Cand& b) { return a.logp > b.logp; });
    if (cands.size() > width) cands.resize(width);

    std::vector<Live> next;
    for (const Cand& c : cands) {
      const Live& parent = live[c.parent];
      if (c.tok == kEos) {
        finished.push_back({Model::StreamState{}, parent.tokens, c.logp, true});
        continue;
      }
      std::vector<int> toks = parent.tokens;
      toks.push_back(c.tok);
      if (toks.size() >= cfg.max_len_per_chain) {
        finished.push_back({Model::StreamState{}, std::move(toks), c.logp, false});
        continue;
      }
      Model::StreamState st = parent.st;
      model.stream_feed(which, st, c.tok, wanted);
      next.push_back({std::move(st), std::move(toks), c.logp});
    }
    live = std::move(next);
  }

  std::stable_sort(finished.begin(), finished.end(),
                   [](const ChainHyp& a, const ChainHyp& b) { return a.logp > b.logp; });
  if (finished.size() > width) finished.resize(width);
  return finished;
}

GenerationRecord make_bf_record(int wanted, const std::vector<int>& bw_tokens,
                                const std::vector<int>& fw_tokens, double logp, bool bw_term,
                                bool fw_term) {
  GenerationRecord rec;
  rec.tokens.assign(bw_tokens.rbegin(), bw_tokens.rend());
  rec.tokens.push_back(wanted);
  rec.tokens.insert(rec.tokens.end(), fw_tokens.begin(), fw_tokens.end());
  rec.split = bw_tokens.size() + 1;
  rec.logprob = logp;
  rec.bw_terminated = bw_term;
  rec.fw_terminated = fw_term;
  rec.contains_wanted = true;
  return rec;
}

std::vector<GenerationRecord> beam_syn(const Model& model, int wanted, std::size_t width,
                                       const DecodeConfig& cfg) {
  struct Hyp {
    Model::SynState st;
    int prev_bw, prev_fw;
    std::vector<int> bw, fw;
    bool bw_done = false, fw_done = false;
    bool bw_term = true, fw_term = true;
    double logp = 0.0;
  };
  std::vector<Hyp> live;
  live.push_back({model.syn_start(), wanted, wanted, {}, {}, false, false, true, true, 0.0});
  std::vector<Hyp> finished;

  while (!live.empty()) {
    struct Cand {
      std::size_t parent;
      int tb, tf;
      double logp;
    };
    std::vector<Cand> cands;
    std::vector<Model::SynState> advanced(live.size());
    std::vector<std::vector<double>> lb(live.size()), lf(live.size());
    for (std::size_t p = 0; p < live.size(); ++p) {
      advanced[p] = live[p].st;
      model.syn_feed(advanced[p], live[p].prev_fw, live[p].prev_bw);
      lb[p] = log_softmax(model.syn_logits_bw(advanced[p]));
      lf[p] = log_softmax(model.syn_logits_fw(advanced[p]));

      std::vector<int> bw_opts, fw_opts;
      if (live[p].bw_done) {
        bw_opts.push_back(kEos);
      } else {
        for (std::size_t t = 0; t < lb[p].size(); ++t)
          if (allowed(static_cast<int>(t), cfg.banned)) bw_opts.push_back(static_cast<int>(t));
      }
      if (live[p].fw_done) {
        fw_opts.push_back(kEos);
      } else {
        for (std::size_t t = 0; t < lf[p].size(); ++t)
          if (allowed(static_cast<int>(t), cfg.banned)) fw_opts.push_back(static_cast<int>(t));
      }
      for (int tb : bw_opts)
        for (int tf : fw_opts)
          cands.push_back({p, tb, tf,
                           live[p].logp + lb[p][static_cast<std::size_t>(tb)] +
                               lf[p][static_cast<std::size_t>(tf)]});
    }
    std::stable_sort(cands.begin(), cands.end(),
                     [](const Cand& a, const Cand& b) { return a.logp > b.logp; });
    if (cands.size() > width) cands.resize(width);

    std::vector<Hyp> next;
    for (const Cand& c : cands) {
      Hyp h = live[c.parent];
      h.st = advanced[c.parent];
      h.logp = c.logp;
      if (!h.bw_done) {
        if (c.tb == kEos) {
          h.bw_done = true;
        } else {
          h.bw.push_back(c.tb);
          if (h.bw.size() >= cfg.max_len_per_chain) {
            h.bw_done = true;
            h.bw_term = false;
          }
        }
      }
      if (!h.fw_done) {
        if (c.tf == kEos) {
          h.fw_done = true;
        } else {
          h.fw.push_back(c.tf);
          if (h.fw.size() >= cfg.max_len_per_chain) {
            h.fw_done = true;
            h.fw_term = false;
          }
        }
      }
      h.prev_bw = c.tb;
      h.prev_fw = c.tf;
      if (h.bw_done && h.fw_done)
        finished.push_back(std::move(h));
      else
        next.push_back(std::move(h));
    }
    live = std::move(next);
  }

  std::stable_sort(finished.begin(), finished.end(),
                   [](const Hyp& a, const Hyp& b) { return a.logp > b.logp; });
  if (finished.size() > width) finished.resize(width);

  std::vector<GenerationRecord> out;
  out.reserve(finished.size());
  for (const Hyp& h : finished) {
    GenerationRecord rec = make_bf_record(wanted, h.bw, h.fw, h.logp, h.bw_term, h.fw_term);
    out.push_back(std::move(rec));
  }
  return out;
}

}  // namespace

void DecodeConfig::validate() const {
  if (!(temperature > 0.0)) throw ContractViolation("temperature must be positive");
  if (beam_width < 1) throw ContractViolation("beam width must be at least 1");
  if (max_len_per_chain < 1) throw ContractViolation("max length must be at least 1");
}

GenerationRecord generate(const Model& model, int wanted, const DecodeConfig& cfg, DetRng& rng) {
  cfg.validate();
  if (wanted < 0 || static_cast<std::size_t>(wanted) >= model.config().vocab)
    throw ContractViolation("generate: wanted token outside the vocabulary");
  if (cfg.strategy == DecodeConfig::Strategy::Beam)
    return beam_decode(model, wanted, cfg.beam_width, cfg).front();
  return decode_once(model, wanted, cfg, rng);
}

std::vector<GenerationRecord> beam_decode(const Model& model, int wanted, std::size_t width,
                                          const DecodeConfig& cfg) {
  DecodeConfig local = cfg;
  local.strategy = DecodeConfig::Strategy::Beam;
  local.beam_width = width;
  local.validate();
  if (wanted < 0 || static_cast<std::size_t>(wanted) >= model.config().vocab)
    throw ContractViolation("beam_decode: wanted token outside the vocabulary");

  switch (model.config().variant) {
    case Variant::Seq:
    case Variant::InfoInit:
    case Variant::InfoAll: {
      Model::StreamState st = model.stream_start(Model::Stream::Main);
      model.stream_feed(Model::Stream::Main, st, kBos, wanted);
      std::vector<ChainHyp> hyps = beam_chain(model, Model::Stream::Main, st, wanted, width, local);
      std::vector<GenerationRecord> out;
      for (const ChainHyp& h : hyps) {
        GenerationRecord rec;
        rec.tokens = h.tokens;
        rec.logprob = h.logp;
        rec.fw_terminated = h.terminated;
        rec.split = find_wanted(rec.tokens, wanted);
        rec.contains_wanted = rec.split != 0;
        out.push_back(std::move(rec));
      }
      return out;
    }

    case Variant::SepBf: {
      Model::StreamState bw_st = model.stream_start(Model::Stream::BackwardChain);
      model.stream_feed(Model::Stream::BackwardChain, bw_st, kBos);
      model.stream_feed(Model::Stream::BackwardChain, bw_st, wanted);
      std::vector<ChainHyp> bw =
          beam_chain(model, Model::Stream::BackwardChain, bw_st, -1, width, local);

      Model::StreamState fw_st = model.stream_start(Model::Stream::ForwardChain);
      model.stream_feed(Model::Stream::ForwardChain, fw_st, kBos);
      model.stream_feed(Model::Stream::ForwardChain, fw_st, wanted);
      std::vector<ChainHyp> fw =
          beam_chain(model, Model::Stream::ForwardChain, fw_st, -1, width, local);

      std::vector<GenerationRecord> out;
      for (const ChainHyp& b : bw)
        for (const ChainHyp& f : fw)
          out.push_back(make_bf_record(wanted, b.tokens, f.tokens, b.logp + f.logp, b.terminated,
                                       f.terminated));
      std::stable_sort(out.begin(), out.end(), [](const GenerationRecord& a,
                                                  const GenerationRecord& b) {
        return a.logprob > b.logprob;
      });
      if (out.size() > width) out.resize(width);
      return out;
    }

    case Variant::AsynBf: {
      Model::StreamState bw_st = model.stream_start(Model::Stream::BackwardChain);
      model.stream_feed(Model::Stream::BackwardChain, bw_st, kBos);
      model.stream_feed(Model::Stream::BackwardChain, bw_st, wanted);
      std::vector<ChainHyp> bw =
          beam_chain(model, Model::Stream::BackwardChain, bw_st, -1, width, local);

      std::vector<GenerationRecord> out;
      for (const ChainHyp& b : bw) {
        Model::StreamState fw_st = model.stream_start(Model::Stream::ForwardChain);
        for (std::size_t i = b.tokens.size(); i-- > 0;)
          model.stream_feed(Model::Stream::ForwardChain, fw_st, b.tokens[i]);
        model.stream_feed(Model::Stream::ForwardChain, fw_st, wanted);
        std::vector<ChainHyp> fw =
            beam_chain(model, Model::Stream::ForwardChain, fw_st, -1, width, local);
        for (const ChainHyp& f : fw)
          out.push_back(make_bf_record(wanted, b.tokens, f.tokens, b.logp + f.logp, b.terminated,
                                       f.terminated));
      }
      std::stable_sort(out.begin(), out.end(), [](const GenerationRecord& a,
                                                  const GenerationRecord& b) {
        return a.logprob > b.logprob;
      });
      if (out.size() > width) out.resize(width);
      return out;
    }

    case Variant::SynBf:
    default:
      return beam_syn(model, wanted, width, local);
  }
}

GenerationRecord sample_decode(const Model& model, int wanted, double temperature,
                               std::uint64_t seed, const DecodeConfig& cfg) {
  DecodeConfig local = cfg;
  local.strategy = DecodeConfig::Strategy::Sample;
  local.temperature = temperature;
  local.seed = seed;
  DetRng rng(seed);
  return generate(model, wanted, local, rng);
}

std::string format_record(const Vocabulary& vocab, const GenerationRecord& rec) {
  std::ostringstream os;
  os.precision(10);
  os << "split=" << rec.split << " logprob=" << rec.logprob
     << " bw_terminated=" << (rec.bw_terminated ? 1 : 0)
     << " fw_terminated=" << (rec.fw_terminated ? 1 : 0)
     << " contains=" << (rec.contains_wanted ? 1 : 0) << " text=";
  for (std::size_t i = 0; i < rec.tokens.size(); ++i) {
    if (i) os << ' ';
    os << vocab.token_of(rec.tokens[i]);
  }
  return os.str();
}

}  // namespace bflm
